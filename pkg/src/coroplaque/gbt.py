"""Second-order gradient-boosted decision trees with logistic loss.

Exact greedy split search: for every candidate feature, thresholds are the
midpoints between consecutive distinct values present in the node, rows
with ``x < threshold`` go left. Equal gains (within a relative 1e-12)
resolve to the lowest feature index, then the lowest threshold.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

MODEL_VERSION = "coroplaque-gbt/1"
TIE_TOLERANCE = 1e-12


@dataclass
class BoostConfig:
    rounds: int = 200
    max_depth: int = 3
    learning_rate: float = 0.1
    reg_lambda: float = 1.0
    gamma: float = 0.0
    min_child_hessian: float = 1.0
    colsample: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if self.rounds < 0 or self.max_depth < 0:
            raise ValueError("rounds and max_depth must be non-negative")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must be in (0, 1]")
        if self.reg_lambda < 0 or self.gamma < 0 or self.min_child_hessian < 0:
            raise ValueError("reg_lambda, gamma and min_child_hessian must be >= 0")
        if not 0 < self.colsample <= 1:
            raise ValueError("colsample must be in (0, 1]")


@dataclass
class Tree:
    """Flat binary tree; node 0 is the root, ``feature == -1`` marks a leaf."""

    feature: list = field(default_factory=list)
    threshold: list = field(default_factory=list)
    left: list = field(default_factory=list)
    right: list = field(default_factory=list)
    default_left: list = field(default_factory=list)
    value: list = field(default_factory=list)

    def add_node(self) -> int:
        for lst, v in ((self.feature, -1), (self.threshold, 0.0), (self.left, -1),
                       (self.right, -1), (self.default_left, True), (self.value, 0.0)):
            lst.append(v)
        return len(self.feature) - 1

    def leaf_index(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        feat = np.asarray(self.feature)
        thr = np.asarray(self.threshold)
        left = np.asarray(self.left)
        right = np.asarray(self.right)
        dleft = np.asarray(self.default_left, dtype=bool)
        rows = np.arange(len(X))
        while True:
            f = feat[node]
            active = f >= 0
            if not active.any():
                return node
            r = rows[active]
            n = node[active]
            x = X[r, f[active]]
            go_left = np.where(np.isnan(x), dleft[n], x < thr[n])
            node[active] = np.where(go_left, left[n], right[n])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(self.value)[self.leaf_index(X)]

    def n_leaves(self) -> int:
        return sum(1 for f in self.feature if f < 0)


@dataclass
class TreeEnsemble:
    base_score: float
    trees: list
    n_features: int
    config: BoostConfig = field(default_factory=BoostConfig)

    def decision_function(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        out = np.full(len(X), self.base_score)
        for t in self.trees:
            out += t.predict(X)
        return out


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def split_gain(g_left, h_left, g_right, h_right, reg_lambda, gamma):
    """Loss reduction of a split under the second-order approximation."""
    return 0.5 * (g_left ** 2 / (h_left + reg_lambda) + g_right ** 2 / (h_right + reg_lambda)
                  - (g_left + g_right) ** 2 / (h_left + h_right + reg_lambda)) - gamma


def log_loss(y, p) -> float:
    p = np.clip(p, 1e-15, 1 - 1e-15)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


def best_split(X, g, h, features, cfg: BoostConfig):
    """Best (gain, feature, threshold) over ``features`` for one node, or None.

    ``X`` holds only the node's rows. Missing values are routed left.
    """
    features = np.asarray(features)
    if len(X) < 2 or features.size == 0:
        return None
    Xf = X[:, features]
    nan = np.isnan(Xf)
    order = np.argsort(Xf, axis=0, kind="mergesort")  # NaN sorts last
    xs = np.take_along_axis(Xf, order, axis=0)
    valid = ~np.take_along_axis(nan, order, axis=0)
    gs = np.where(valid, g[order], 0.0)
    hs = np.where(valid, h[order], 0.0)
    g_nan = np.where(nan, g[:, None], 0.0).sum(axis=0)
    h_nan = np.where(nan, h[:, None], 0.0).sum(axis=0)
    gl = np.cumsum(gs, axis=0)[:-1] + g_nan
    hl = np.cumsum(hs, axis=0)[:-1] + h_nan
    gt, ht = g.sum(), h.sum()
    gr, hr = gt - gl, ht - hl
    with np.errstate(invalid="ignore"):
        distinct = xs[1:] > xs[:-1]
    ok = distinct & (hl >= cfg.min_child_hessian) & (hr >= cfg.min_child_hessian)
    gain = np.where(ok, split_gain(gl, hl, gr, hr, cfg.reg_lambda, cfg.gamma), -np.inf)
    # Feature-major flattening: the first maximum has the lowest feature index,
    # then the lowest threshold. Gains within rounding of the best count as ties,
    # so the choice does not depend on summation order.
    flat = gain.T.ravel()
    best = flat.max()
    if not best > 0:
        return None
    k = int(np.argmax(flat >= best - TIE_TOLERANCE * max(1.0, abs(best))))
    fi, pos = divmod(k, gain.shape[0])
    thr = (xs[pos, fi] + xs[pos + 1, fi]) / 2.0
    return float(flat[k]), int(features[fi]), float(thr)


def grow_tree(X, g, h, features, cfg: BoostConfig) -> Tree:
    tree = Tree()

    def build(rows, depth):
        node = tree.add_node()
        G, H = g[rows].sum(), h[rows].sum()
        split = None
        if depth < cfg.max_depth and len(rows) >= 2:
            split = best_split(X[rows], g[rows], h[rows], features, cfg)
        if split is None:
            tree.value[node] = float(-G / (H + cfg.reg_lambda) * cfg.learning_rate)
            return node
        _, f, thr = split
        x = X[rows, f]
        go_left = np.isnan(x) | (x < thr)
        tree.feature[node] = f
        tree.threshold[node] = thr
        tree.left[node] = build(rows[go_left], depth + 1)
        tree.right[node] = build(rows[~go_left], depth + 1)
        return node

    build(np.arange(len(X)), 0)
    return tree


def train(X, y, cfg: BoostConfig | None = None, callback=None) -> TreeEnsemble:
    """Fit an ensemble; ``callback(round, ensemble, probabilities)`` runs after each round."""
    cfg = cfg or BoostConfig()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("X must be (n_samples, n_features) matching y")
    if len(y) < 2:
        raise ValueError("need at least two samples")
    prior = y.mean()
    if prior <= 0 or prior >= 1:
        raise ValueError("training labels must contain both classes")
    base = float(np.log(prior / (1 - prior)))
    n_feat = X.shape[1]
    ens = TreeEnsemble(base, [], n_feat, cfg)
    margin = np.full(len(y), base)
    rng = np.random.default_rng(cfg.seed)
    n_sub = max(1, int(round(cfg.colsample * n_feat)))
    for r in range(cfg.rounds):
        p = sigmoid(margin)
        g = p - y
        h = p * (1 - p)
        if n_sub < n_feat:
            features = np.sort(rng.choice(n_feat, size=n_sub, replace=False))
        else:
            features = np.arange(n_feat)
        tree = grow_tree(X, g, h, features, cfg)
        ens.trees.append(tree)
        margin += tree.predict(X)
        if callback is not None:
            callback(r, ens, sigmoid(margin))
    return ens


def predict_proba(model: TreeEnsemble, X) -> np.ndarray:
    return sigmoid(model.decision_function(X))


def save_model(model: TreeEnsemble, path) -> None:
    doc = {
        "format": MODEL_VERSION,
        "config": asdict(model.config),
        "base_score": model.base_score,
        "n_features": model.n_features,
        "trees": [asdict(t) for t in model.trees],
    }
    Path(path).write_text(json.dumps(doc) + "\n")


def load_model(path) -> TreeEnsemble:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != MODEL_VERSION:
        raise ValueError(f"unsupported model format {doc.get('format')!r}")
    trees = [Tree(**t) for t in doc["trees"]]
    return TreeEnsemble(float(doc["base_score"]), trees, int(doc["n_features"]),
                        BoostConfig(**doc["config"]))
