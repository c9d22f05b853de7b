"""Slow, independent reference implementations used as test oracles.

Everything here is written with plain loops or exact arithmetic and shares
no code with the package beyond the published conventions (direction list,
tie-break rules).
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np

# Same offset set as the package, enumerated independently.
ORACLE_DIRECTIONS = sorted(
    d for d in itertools.product((-1, 0, 1), repeat=3) if d > (0, 0, 0)
)


def _inside(shape, p):
    return all(0 <= c < n for c, n in zip(p, shape))


def brute_glcm(levels, mask, ng, d):
    """Symmetric co-occurrence counts for one offset by visiting every voxel."""
    P = [[0] * ng for _ in range(ng)]
    shape = levels.shape
    for v in itertools.product(*map(range, shape)):
        if not mask[v]:
            continue
        w = tuple(a + b for a, b in zip(v, d))
        if not _inside(shape, w) or not mask[w]:
            continue
        i, j = int(levels[v]) - 1, int(levels[w]) - 1
        P[i][j] += 1
        P[j][i] += 1
    return np.array(P, dtype=np.int64)


def brute_glrlm(levels, mask, ng, d):
    """Run-length counts for one direction by walking each run from its first voxel."""
    shape = levels.shape
    R = np.zeros((ng, max(shape)), dtype=np.int64)
    for v in itertools.product(*map(range, shape)):
        if not mask[v]:
            continue
        lv = levels[v]
        prev = tuple(a - b for a, b in zip(v, d))
        if _inside(shape, prev) and mask[prev] and levels[prev] == lv:
            continue  # not the start of a run
        length = 0
        w = v
        while _inside(shape, w) and mask[w] and levels[w] == lv:
            length += 1
            w = tuple(a + b for a, b in zip(w, d))
        R[int(lv) - 1, length - 1] += 1
    return R


def brute_auc(scores, labels) -> Fraction:
    """Mann-Whitney statistic in exact rational arithmetic."""
    pos = [Fraction(s) for s, y in zip(scores, labels) if y == 1]
    neg = [Fraction(s) for s, y in zip(scores, labels) if y == 0]
    total = Fraction(0)
    for p in pos:
        for n in neg:
            if p > n:
                total += 1
            elif p == n:
                total += Fraction(1, 2)
    return total / (len(pos) * len(neg))


def brute_confusion(scores, labels, threshold):
    tp = fp = tn = fn = 0
    for s, y in zip(scores, labels):
        pred = s > threshold
        if pred and y == 1:
            tp += 1
        elif pred:
            fp += 1
        elif y == 1:
            fn += 1
        else:
            tn += 1
    return tp, fp, tn, fn


def _gain(gl, hl, gr, hr, lam, gamma):
    return 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam)
                  - (gl + gr) ** 2 / (hl + hr + lam)) - gamma


def exhaustive_split(X, g, h, rows, lam, gamma, min_child_hessian, rel_tol=1e-12):
    """Enumerate every (feature, midpoint threshold); return the best or None.

    Gains within ``rel_tol`` of the maximum count as ties and resolve to the
    lowest feature, then the lowest threshold.
    """
    candidates = []
    for f in range(X.shape[1]):
        values = sorted({float(X[r, f]) for r in rows})
        for a, b in zip(values, values[1:]):
            thr = (a + b) / 2.0
            left = [r for r in rows if X[r, f] < thr]
            right = [r for r in rows if not X[r, f] < thr]
            gl = sum(g[r] for r in left)
            hl = sum(h[r] for r in left)
            gr = sum(g[r] for r in right)
            hr = sum(h[r] for r in right)
            if hl < min_child_hessian or hr < min_child_hessian:
                continue
            candidates.append((_gain(gl, hl, gr, hr, lam, gamma), f, thr))
    if not candidates:
        return None
    best = max(c[0] for c in candidates)
    if not best > 0:
        return None
    tied = [c for c in candidates if c[0] >= best - rel_tol * max(1.0, abs(best))]
    return min(tied, key=lambda c: (c[1], c[2]))


def exhaustive_tree(X, g, h, max_depth, lam, gamma, min_child_hessian, eta):
    """Nested-dict tree grown by exhaustive enumeration at every node."""

    def build(rows, depth):
        split = None
        if depth < max_depth and len(rows) >= 2:
            split = exhaustive_split(X, g, h, rows, lam, gamma, min_child_hessian)
        if split is None:
            G = sum(g[r] for r in rows)
            H = sum(h[r] for r in rows)
            return {"leaf": -G / (H + lam) * eta}
        _, f, thr = split
        left = [r for r in rows if X[r, f] < thr]
        right = [r for r in rows if not X[r, f] < thr]
        return {"feature": f, "threshold": thr,
                "left": build(left, depth + 1), "right": build(right, depth + 1)}

    return build(list(range(len(X))), 0)


def tree_as_nested(tree, node=0):
    """Convert the package's flat tree to the oracle's nested form."""
    if tree.feature[node] < 0:
        return {"leaf": tree.value[node]}
    return {"feature": tree.feature[node], "threshold": tree.threshold[node],
            "left": tree_as_nested(tree, tree.left[node]),
            "right": tree_as_nested(tree, tree.right[node])}


def nested_equal(a, b, tol=1e-12):
    if "leaf" in a or "leaf" in b:
        return "leaf" in a and "leaf" in b and abs(a["leaf"] - b["leaf"]) <= tol
    return (a["feature"] == b["feature"] and abs(a["threshold"] - b["threshold"]) <= tol
            and nested_equal(a["left"], b["left"], tol)
            and nested_equal(a["right"], b["right"], tol))


def cdf_map(values, lo, hi, bins):
    """Equalize a 1D multiset value by value: each maps to the fraction at or below its bin."""
    def bin_of(x):
        x = min(max(x, lo), hi)
        return min(max(math.floor((x - lo) / (hi - lo) * bins), 0), bins - 1)

    b = [bin_of(float(v)) for v in values]
    n = len(b)
    return [lo + (hi - lo) * sum(1 for c in b if c <= bi) / n for bi in b]


def dense_correlate3d(data, kernel):
    """Direct 3D correlation with reflective ('symmetric') padding."""
    r = [k // 2 for k in kernel.shape]
    padded = np.pad(data, [(ri, ri) for ri in r], mode="symmetric")
    out = np.zeros_like(data, dtype=np.float64)
    for off in itertools.product(*map(range, kernel.shape)):
        w = kernel[off]
        if w == 0:
            continue
        sl = tuple(slice(o, o + n) for o, n in zip(off, data.shape))
        out += w * padded[sl]
    return out


def numeric_gradient(f, x, eps=1e-5):
    """Central differences of scalar ``f()`` with respect to array ``x`` (modified in place)."""
    grad = np.zeros_like(x, dtype=np.float64)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + eps
        fp = f()
        x[i] = old - eps
        fm = f()
        x[i] = old
        grad[i] = (fp - fm) / (2 * eps)
    return grad


def relative_error(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0), 1e-12)
    return float(np.abs(a - b).max(initial=0.0) / denom)
