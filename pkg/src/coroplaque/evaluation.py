"""Labels, patient-level cross-validation splits and classification metrics."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

METRIC_NAMES = ("AUC", "Acc", "F1", "PPV", "NPV", "Sens", "Spec", "MCC")


def propagate_revascularization(branch_positive, degrees) -> list[int]:
    """Push a branch-level decision onto its worst segment only.

    Ties in stenosis degree go to the lowest segment index.
    """
    degrees = list(degrees)
    if not degrees:
        raise ValueError("need at least one segment")
    labels = [0] * len(degrees)
    if branch_positive:
        labels[int(np.argmax(np.asarray(degrees, dtype=np.float64)))] = 1
    return labels


def stenosis_binary_label(degree: float) -> int:
    """1 for a stenosis strictly above 50 %, else 0."""
    if not 0.0 <= degree <= 1.0:
        raise ValueError(f"stenosis degree {degree} outside [0, 1]")
    return int(degree > 0.5)


def prevalence(labels) -> float:
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValueError("prevalence of an empty label set")
    return float(np.count_nonzero(labels)) / labels.size


@dataclass
class Fold:
    index: int
    test: list
    train: list
    val: list

    def check_disjoint(self):
        t, tr, va = set(self.test), set(self.train), set(self.val)
        if t & tr or t & va or tr & va:
            raise AssertionError(f"patient leakage in fold {self.index}: "
                                 f"{sorted((t & tr) | (t & va) | (tr & va))}")


def stratified_patient_kfold(patient_ids, positive_flags, k: int = 10, seed: int = 0,
                             val_fraction: float = 0.2) -> list[Fold]:
    """Patient-wise stratified k-fold split with a validation hold-out per fold.

    Positive and negative patients are shuffled separately and dealt
    round-robin into the folds (negatives continue where positives stopped),
    so per-fold positive counts differ by at most one. From each fold's
    training patients, ``round(val_fraction * n)`` are held out for
    validation, stratified the same way.
    """
    ids = list(patient_ids)
    flags = [bool(f) for f in positive_flags]
    if len(ids) != len(flags):
        raise ValueError("patient_ids and positive_flags differ in length")
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate patient ids")
    if k < 2:
        raise ValueError("k must be >= 2")
    if len(ids) < k:
        raise ValueError(f"cannot split {len(ids)} patients into {k} folds")
    rng = np.random.default_rng(seed)
    pos = [p for p, f in zip(ids, flags) if f]
    neg = [p for p, f in zip(ids, flags) if not f]
    pos = [pos[i] for i in rng.permutation(len(pos))]
    neg = [neg[i] for i in rng.permutation(len(neg))]
    buckets = [[] for _ in range(k)]
    for j, pid in enumerate(pos + neg):
        buckets[j % k].append(pid)
    flag_of = dict(zip(ids, flags))
    folds = []
    for i in range(k):
        test = sorted(buckets[i])
        rest = [p for p in ids if p not in set(test)]
        train, val = _holdout(rest, flag_of, val_fraction, rng)
        fold = Fold(i, test, sorted(train), sorted(val))
        fold.check_disjoint()
        folds.append(fold)
    return folds


def _holdout(ids, flag_of, fraction, rng):
    n_val = int(round(fraction * len(ids)))
    if n_val == 0:
        return list(ids), []
    pos = [p for p in ids if flag_of[p]]
    neg = [p for p in ids if not flag_of[p]]
    pos = [pos[i] for i in rng.permutation(len(pos))]
    neg = [neg[i] for i in rng.permutation(len(neg))]
    n_pos = int(round(fraction * len(pos)))
    if pos and n_pos == 0 and n_val >= 2:
        n_pos = 1
    n_pos = min(n_pos, len(pos), n_val)
    n_neg = min(n_val - n_pos, len(neg))
    val = pos[:n_pos] + neg[:n_neg]
    train = pos[n_pos:] + neg[n_neg:]
    return train, val


def roc_auc(scores, labels) -> float:
    """Mann-Whitney AUC: P(score_pos > score_neg) + 0.5 * P(tie)."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in shape")
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes")
    order = np.argsort(s, kind="mergesort")
    s_sorted = s[order]
    ranks = np.empty(s.size, dtype=np.float64)
    # Mid-ranks for tied scores.
    _, first, counts = np.unique(s_sorted, return_index=True, return_counts=True)
    mid = first + (counts - 1) / 2.0 + 1.0
    ranks[order] = np.repeat(mid, counts)
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def threshold_scores(scores, labels, threshold: float = 0.5) -> ConfusionCounts:
    """Predict positive when ``score > threshold``."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(int)
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be binary")
    pred = s > threshold
    truth = y == 1
    return ConfusionCounts(int(np.sum(pred & truth)), int(np.sum(pred & ~truth)),
                           int(np.sum(~pred & ~truth)), int(np.sum(~pred & truth)))


def _ratio(num, den, name, degenerate):
    if den == 0:
        degenerate.append(name)
        return 0.0
    return num / den


def classification_metrics(c: ConfusionCounts) -> tuple[dict, list]:
    """Threshold metrics from confusion counts.

    Any ratio with a zero denominator is reported as 0 and its name is
    returned in the second element (the degenerate list).
    """
    if c.total == 0:
        raise ValueError("all-zero confusion counts")
    deg: list[str] = []
    tp, fp, tn, fn = c.tp, c.fp, c.tn, c.fn
    out = {
        "Acc": (tp + tn) / c.total,
        "Sens": _ratio(tp, tp + fn, "Sens", deg),
        "Spec": _ratio(tn, tn + fp, "Spec", deg),
        "PPV": _ratio(tp, tp + fp, "PPV", deg),
        "NPV": _ratio(tn, tn + fn, "NPV", deg),
    }
    out["F1"] = _ratio(2 * out["PPV"] * out["Sens"], out["PPV"] + out["Sens"], "F1", deg)
    den = math.sqrt(float(tp + fp) * (tp + fn) * (tn + fp) * (tn + fn))
    out["MCC"] = _ratio(tp * tn - fp * fn, den, "MCC", deg)
    return out, deg


@dataclass
class MetricsReport:
    AUC: float
    Acc: float
    F1: float
    PPV: float
    NPV: float
    Sens: float
    Spec: float
    MCC: float
    threshold: float = 0.5
    n: int = 0
    n_positive: int = 0
    degenerate: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return asdict(self)

    def row(self) -> list[float]:
        return [getattr(self, m) for m in METRIC_NAMES]


def metrics_report(scores, labels, threshold: float = 0.5) -> MetricsReport:
    labels = np.asarray(labels).astype(int)
    counts = threshold_scores(scores, labels, threshold)
    vals, deg = classification_metrics(counts)
    try:
        auc = roc_auc(scores, labels)
    except ValueError:
        auc = float("nan")
        deg.append("AUC")
    return MetricsReport(AUC=auc, threshold=threshold, n=int(labels.size),
                         n_positive=int(labels.sum()), degenerate=deg, **vals)
