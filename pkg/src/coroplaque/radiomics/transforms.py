"""Image transforms feeding the feature bank: Laplacian of Gaussian and a one-level 3D Haar wavelet."""

from __future__ import annotations

import itertools

import numpy as np
from scipy.ndimage import convolve1d

from ..volume import Volume

HAAR_BANDS = tuple("".join(b) for b in itertools.product("LH", repeat=3))


def log_kernels(sigma_vox: float):
    """Sampled Gaussian and second-derivative kernels truncated at 4 sigma.

    The derivative kernel is corrected to have zero sum and a second moment
    of exactly 2, so it annihilates constants and ramps and maps ``x**2`` to 2.
    """
    radius = int(np.ceil(4.0 * sigma_vox))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-0.5 * (x / sigma_vox) ** 2)
    g /= g.sum()
    d2 = (x ** 2 / sigma_vox ** 4 - 1.0 / sigma_vox ** 2) * g
    d2 -= g * d2.sum()
    d2 *= 2.0 / np.sum(x ** 2 * d2)
    return g, d2


def log_kernel_radius(sigma_mm: float, spacing) -> tuple[int, int, int]:
    return tuple(int(np.ceil(4.0 * sigma_mm / s)) for s in spacing)


def log_filter(data: np.ndarray, spacing, sigma_mm: float) -> np.ndarray:
    """Scale-normalized LoG, ``sigma**2 * laplacian(G_sigma * I)``, reflective boundaries."""
    if sigma_mm <= 0:
        raise ValueError("sigma must be positive")
    data = np.asarray(data, dtype=np.float64)
    radius = log_kernel_radius(sigma_mm, spacing)
    for n, r in zip(data.shape, radius):
        if 2 * r + 1 > n:
            raise ValueError(f"LoG kernel ({2 * r + 1} voxels) exceeds the volume extent ({n})")
    return _log_response(data, spacing, sigma_mm)


def _log_response(data, spacing, sigma_mm):
    # No extent check: callers filtering a crop validate against the full volume.
    kernels = [log_kernels(sigma_mm / s) for s in spacing]
    out = np.zeros_like(data)
    for axis in range(3):
        acc = data
        for other in range(3):
            g, d2 = kernels[other]
            k = d2 / spacing[other] ** 2 if other == axis else g
            acc = convolve1d(acc, k, axis=other, mode="reflect")
        out += acc
    return sigma_mm ** 2 * out


def log_transform(vol: Volume, sigma_mm: float) -> Volume:
    return vol.with_data(log_filter(vol.data, vol.spacing, sigma_mm))


def _pad_even(data: np.ndarray) -> np.ndarray:
    pad = [(0, n % 2) for n in data.shape]
    return np.pad(data, pad, mode="edge") if any(p for _, p in pad) else data


def haar_bands(data: np.ndarray) -> dict[str, np.ndarray]:
    """Single-level separable Haar with the averaging convention.

    Per axis ``L = (a + b) / 2`` and ``H = (a - b) / 2`` over consecutive
    pairs; odd extents are padded by edge replication. Band names list the
    filter per axis in (x, y, z) order.
    """
    bands = {"": _pad_even(np.asarray(data, dtype=np.float64))}
    for axis in range(3):
        nxt = {}
        for name, arr in bands.items():
            a = np.take(arr, np.arange(0, arr.shape[axis], 2), axis=axis)
            b = np.take(arr, np.arange(1, arr.shape[axis], 2), axis=axis)
            nxt[name + "L"] = (a + b) / 2.0
            nxt[name + "H"] = (a - b) / 2.0
        bands = nxt
    return {k: bands[k] for k in HAAR_BANDS}


def inverse_haar_bands(bands: dict[str, np.ndarray]) -> np.ndarray:
    cur = dict(bands)
    for axis in (2, 1, 0):
        nxt = {}
        for prefix in {k[:axis] for k in cur}:
            lo, hi = cur[prefix + "L"], cur[prefix + "H"]
            shape = list(lo.shape)
            shape[axis] *= 2
            out = np.empty(shape, dtype=np.float64)
            sl_a = [slice(None)] * 3
            sl_b = [slice(None)] * 3
            sl_a[axis] = slice(0, None, 2)
            sl_b[axis] = slice(1, None, 2)
            out[tuple(sl_a)] = lo + hi
            out[tuple(sl_b)] = lo - hi
            nxt[prefix] = out
        cur = nxt
    return cur[""]


def haar_wavelet_3d(vol: Volume) -> dict[str, Volume]:
    """Eight half-resolution sub-band volumes keyed ``LLL`` .. ``HHH``."""
    sp = np.asarray(vol.spacing)
    origin = tuple(np.asarray(vol.origin) + sp / 2.0)
    return {k: Volume(v, tuple(2 * sp), origin) for k, v in haar_bands(vol.data).items()}
