"""Gray-level co-occurrence and run-length matrices and their features.

Both operate on an integer level map (levels 1..Ng inside the mask) and use
the 13 unique neighbour directions of the 26-neighbourhood at distance 1.
"""

from __future__ import annotations

import numpy as np

# 13 unique 26-neighbourhood offsets; the other 13 are their negatives.
DIRECTIONS = tuple(
    (dx, dy, dz)
    for dx in (-1, 0, 1) for dy in (-1, 0, 1) for dz in (-1, 0, 1)
    if (dx, dy, dz) > (0, 0, 0)
)

GLCM_FEATURES = ("Contrast", "Dissimilarity", "JointEnergy", "JointEntropy", "Homogeneity",
                 "Correlation", "ClusterShade", "ClusterProminence", "MaximumProbability",
                 "Autocorrelation", "SumAverage", "DifferenceEntropy")
GLRLM_FEATURES = ("ShortRunEmphasis", "LongRunEmphasis", "GrayLevelNonUniformity",
                  "RunLengthNonUniformity", "RunPercentage", "LowGrayLevelRunEmphasis",
                  "HighGrayLevelRunEmphasis", "ShortRunLowGrayLevelEmphasis",
                  "ShortRunHighGrayLevelEmphasis", "LongRunLowGrayLevelEmphasis",
                  "LongRunHighGrayLevelEmphasis")


def _pair_slices(shape, d):
    a, b = [], []
    for n, o in zip(shape, d):
        if o >= 0:
            a.append(slice(0, n - o))
            b.append(slice(o, n))
        else:
            a.append(slice(-o, n))
            b.append(slice(0, n + o))
    return tuple(a), tuple(b)


def _levels_in_mask(levels, mask):
    lev = np.asarray(levels, dtype=np.int64)
    m = np.asarray(mask).astype(bool)
    if lev.shape != m.shape:
        raise ValueError("level map and mask differ in shape")
    if m.any() and lev[m].min() < 1:
        raise ValueError("levels inside the mask must be >= 1")
    return np.where(m, lev, 0), m


def glcm_matrices(levels, mask, ng: int, directions=DIRECTIONS) -> np.ndarray:
    """Symmetric co-occurrence counts, shape (n_directions, Ng, Ng).

    Entry ``[d, i-1, j-1]`` counts ordered in-mask neighbour pairs
    ``(v, v + d)`` and ``(v + d, v)`` with levels ``(i, j)``.
    """
    if ng < 1:
        raise ValueError("Ng must be >= 1")
    lev, m = _levels_in_mask(levels, mask)
    if m.any() and lev.max() > ng:
        raise ValueError("level exceeds Ng")
    out = np.zeros((len(directions), ng, ng), dtype=np.int64)
    for k, d in enumerate(directions):
        sa, sb = _pair_slices(lev.shape, d)
        la, lb = lev[sa], lev[sb]
        both = (la > 0) & (lb > 0)
        flat = (la[both] - 1) * ng + (lb[both] - 1)
        p = np.bincount(flat, minlength=ng * ng).reshape(ng, ng)
        out[k] = p + p.T
    return out


def _entropy(p):
    p = p[p > 0]
    return float(-np.sum(p * np.log2(p))) + 0.0


def glcm_features(levels, mask, ng: int, directions=DIRECTIONS) -> dict[str, float]:
    """Features of the direction-averaged normalized GLCM.

    Each direction's symmetric matrix is normalized to sum 1; directions
    without any in-mask pair are skipped and the rest averaged.
    """
    mats = glcm_matrices(levels, mask, ng, directions).astype(np.float64)
    sums = mats.sum(axis=(1, 2))
    ok = sums > 0
    if not ok.any():
        raise ValueError("no in-mask voxel pairs for any direction")
    p = (mats[ok] / sums[ok, None, None]).mean(axis=0)
    return glcm_features_from_matrix(p)


def glcm_features_from_matrix(p: np.ndarray) -> dict[str, float]:
    ng = p.shape[0]
    i = np.arange(1, ng + 1, dtype=np.float64)[:, None]
    j = np.arange(1, ng + 1, dtype=np.float64)[None, :]
    px = p.sum(axis=1)
    py = p.sum(axis=0)
    mux = float(np.sum(px * i[:, 0]))
    muy = float(np.sum(py * j[0]))
    sx = np.sqrt(np.sum(px * (i[:, 0] - mux) ** 2))
    sy = np.sqrt(np.sum(py * (j[0] - muy) ** 2))
    diff = np.abs(i - j)
    k_diff = diff.astype(np.int64)
    p_diff = np.bincount(k_diff.ravel(), weights=p.ravel(), minlength=ng)
    k_sum = (i + j).astype(np.int64)
    p_sum = np.bincount(k_sum.ravel(), weights=p.ravel(), minlength=2 * ng + 1)
    cross = float(np.sum(p * i * j))
    if sx * sy > 0:
        corr = (cross - mux * muy) / (sx * sy)
    else:
        # Flat marginals: perfectly self-correlated by convention.
        corr = 1.0
    dev = i + j - mux - muy
    return {
        "Contrast": float(np.sum(p * diff ** 2)),
        "Dissimilarity": float(np.sum(p * diff)),
        "JointEnergy": float(np.sum(p ** 2)),
        "JointEntropy": _entropy(p),
        "Homogeneity": float(np.sum(p / (1.0 + diff ** 2))),
        "Correlation": float(corr),
        "ClusterShade": float(np.sum(p * dev ** 3)),
        "ClusterProminence": float(np.sum(p * dev ** 4)),
        "MaximumProbability": float(p.max()),
        "Autocorrelation": cross,
        "SumAverage": float(np.sum(np.arange(p_sum.size) * p_sum)),
        "DifferenceEntropy": _entropy(p_diff),
    }


def _lines(shape, d):
    """Voxel index tracks through the grid along direction ``d``.

    Returns ``(tracks, valid)`` with tracks of shape (n_lines, K, 3).
    """
    shape = np.asarray(shape)
    d = np.asarray(d)
    grid = np.stack(np.meshgrid(*[np.arange(n) for n in shape], indexing="ij"), -1).reshape(-1, 3)
    prev = grid - d
    starts = grid[np.any((prev < 0) | (prev >= shape), axis=1)]
    k = int(shape.max())
    tracks = starts[:, None, :] + np.arange(k)[None, :, None] * d[None, None, :]
    valid = np.all((tracks >= 0) & (tracks < shape), axis=2)
    return np.where(valid[..., None], tracks, 0), valid


def glrlm_matrices(levels, mask, ng: int, directions=DIRECTIONS) -> list[np.ndarray]:
    """Run-length counts per direction; matrix ``[i-1, l-1]`` counts runs of level i, length l."""
    if ng < 1:
        raise ValueError("Ng must be >= 1")
    lev, m = _levels_in_mask(levels, mask)
    if not m.any():
        raise ValueError("empty mask")
    if lev.max() > ng:
        raise ValueError("level exceeds Ng")
    out = []
    max_len = max(lev.shape)
    for d in directions:
        tracks, valid = _lines(lev.shape, d)
        seq = np.where(valid, lev[tracks[..., 0], tracks[..., 1], tracks[..., 2]], 0)
        seq = np.concatenate([seq, np.zeros((seq.shape[0], 1), dtype=seq.dtype)], axis=1).ravel()
        seq = np.concatenate([[0], seq])
        change = np.flatnonzero(seq[1:] != seq[:-1]) + 1
        bounds = np.concatenate([change, [seq.size]])
        run_level = seq[bounds[:-1]]
        run_len = np.diff(bounds)
        keep = run_level > 0
        run_level, run_len = run_level[keep], run_len[keep]
        mat = np.zeros((ng, max_len), dtype=np.int64)
        np.add.at(mat, (run_level - 1, run_len - 1), 1)
        out.append(mat)
    return out


def glrlm_features_from_matrix(r: np.ndarray, n_voxels: int) -> dict[str, float]:
    r = r.astype(np.float64)
    nr = r.sum()
    i2 = (np.arange(1, r.shape[0] + 1, dtype=np.float64) ** 2)[:, None]
    l2 = (np.arange(1, r.shape[1] + 1, dtype=np.float64) ** 2)[None, :]
    return {
        "ShortRunEmphasis": float(np.sum(r / l2) / nr),
        "LongRunEmphasis": float(np.sum(r * l2) / nr),
        "GrayLevelNonUniformity": float(np.sum(r.sum(axis=1) ** 2) / nr),
        "RunLengthNonUniformity": float(np.sum(r.sum(axis=0) ** 2) / nr),
        "RunPercentage": float(nr / n_voxels),
        "LowGrayLevelRunEmphasis": float(np.sum(r / i2) / nr),
        "HighGrayLevelRunEmphasis": float(np.sum(r * i2) / nr),
        "ShortRunLowGrayLevelEmphasis": float(np.sum(r / (i2 * l2)) / nr),
        "ShortRunHighGrayLevelEmphasis": float(np.sum(r * i2 / l2) / nr),
        "LongRunLowGrayLevelEmphasis": float(np.sum(r * l2 / i2) / nr),
        "LongRunHighGrayLevelEmphasis": float(np.sum(r * i2 * l2) / nr),
    }


def glrlm_features(levels, mask, ng: int, directions=DIRECTIONS) -> dict[str, float]:
    """Run-length features computed per direction and averaged over directions."""
    mats = glrlm_matrices(levels, mask, ng, directions)
    n_vox = int(np.count_nonzero(mask))
    per_dir = [glrlm_features_from_matrix(r, n_vox) for r in mats]
    return {k: float(np.mean([f[k] for f in per_dir])) for k in GLRLM_FEATURES}
