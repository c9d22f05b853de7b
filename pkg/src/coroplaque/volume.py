"""Regular 3D scalar volumes, binary masks, sampling and intensity normalization.

Index convention: ``data[i, j, k]`` is the voxel whose center sits at
``origin + (i * sx, j * sy, k * sz)`` in world millimetres. No direction
cosines; every volume in the package is axis aligned.

On disk a volume is a raw little-endian float32 stream in x-fastest order
(``<stem>.raw``) next to a JSON header (``<stem>.json``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

FORMAT_VERSION = "coroplaque-volume/1"


class OutsideVolumeError(ValueError):
    """A sample point lies outside the volume's voxel-center bounding box."""


@dataclass
class Volume:
    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 3 or min(self.data.shape) < 1:
            raise ValueError(f"volume data must be 3D and non-empty, got {self.data.shape}")
        self.spacing = tuple(float(s) for s in self.spacing)
        self.origin = tuple(float(o) for o in self.origin)
        if len(self.spacing) != 3 or min(self.spacing) <= 0:
            raise ValueError(f"spacing must be three positive values, got {self.spacing}")
        if len(self.origin) != 3:
            raise ValueError("origin must have three components")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("volume intensities must be finite")

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.data.shape)

    def world_to_index(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        return (p - np.asarray(self.origin)) / np.asarray(self.spacing)

    def index_to_world(self, idx) -> np.ndarray:
        i = np.asarray(idx, dtype=np.float64)
        return np.asarray(self.origin) + i * np.asarray(self.spacing)

    def with_data(self, data) -> "Volume":
        return Volume(data, self.spacing, self.origin)


@dataclass
class Mask:
    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 3:
            raise ValueError("mask data must be 3D")
        if not np.all((arr == 0) | (arr == 1)):
            raise ValueError("mask values must be 0 or 1")
        self.data = arr.astype(np.uint8)
        self.spacing = tuple(float(s) for s in self.spacing)
        self.origin = tuple(float(o) for o in self.origin)

    @classmethod
    def like(cls, vol: Volume, data) -> "Mask":
        data = np.asarray(data)
        if data.shape != vol.dims:
            raise ValueError(f"mask shape {data.shape} does not match volume {vol.dims}")
        return cls(data, vol.spacing, vol.origin)

    def matches(self, vol: Volume) -> bool:
        return (self.data.shape == vol.dims and np.allclose(self.spacing, vol.spacing)
                and np.allclose(self.origin, vol.origin))


def _trilinear(data: np.ndarray, idx: np.ndarray) -> np.ndarray:
    # idx: (..., 3) fractional indices, all within [0, n-1] per axis.
    shape = np.asarray(data.shape)
    base = np.floor(idx).astype(np.int64)
    base = np.minimum(base, np.maximum(shape - 2, 0))
    frac = idx - base
    out = np.zeros(idx.shape[:-1], dtype=np.float64)
    for dx in (0, 1):
        wx = frac[..., 0] if dx else 1.0 - frac[..., 0]
        ix = np.minimum(base[..., 0] + dx, shape[0] - 1)
        for dy in (0, 1):
            wy = frac[..., 1] if dy else 1.0 - frac[..., 1]
            iy = np.minimum(base[..., 1] + dy, shape[1] - 1)
            for dz in (0, 1):
                wz = frac[..., 2] if dz else 1.0 - frac[..., 2]
                iz = np.minimum(base[..., 2] + dz, shape[2] - 1)
                out += wx * wy * wz * data[ix, iy, iz]
    return out


def sample_trilinear(vol: Volume, point) -> float:
    """Trilinear interpolation at one world point.

    Raises OutsideVolumeError when the point is outside the box spanned by
    the voxel centers; callers decide how to pad.
    """
    idx = vol.world_to_index(point)
    upper = np.asarray(vol.dims) - 1
    tol = 1e-9
    if np.any(idx < -tol) or np.any(idx > upper + tol):
        raise OutsideVolumeError(f"point {tuple(point)} is outside the volume")
    idx = np.clip(idx, 0, upper)
    return float(_trilinear(vol.data, idx[None, :])[0])


def sample_points(vol: Volume, points, pad: float = -1024.0) -> np.ndarray:
    """Vectorized trilinear sampling; points outside the volume get ``pad``."""
    pts = np.asarray(points, dtype=np.float64)
    idx = vol.world_to_index(pts)
    upper = np.asarray(vol.dims) - 1
    tol = 1e-9
    inside = np.all((idx >= -tol) & (idx <= upper + tol), axis=-1)
    out = _trilinear(vol.data, np.clip(idx, 0, upper))
    out[~inside] = pad
    return out


def histogram_equalize(vol: Volume, bins: int = 256, clip=(-200.0, 1000.0),
                       mask: Mask | np.ndarray | None = None) -> Volume:
    """Histogram equalization onto the clip window.

    Intensities are clipped to ``[lo, hi]`` and binned into ``bins`` equal
    bins; a voxel in bin ``b`` maps to ``lo + (hi - lo) * cdf[b]``. When
    ``mask`` is given, the cumulative histogram is estimated from the masked
    voxels only and the mapping is applied to the whole volume.
    """
    lo, hi = float(clip[0]), float(clip[1])
    if bins < 2:
        raise ValueError("bins must be >= 2")
    if not lo < hi:
        raise ValueError("clip range must satisfy lo < hi")
    x = np.clip(vol.data.astype(np.float64), lo, hi)
    b = _bin_index(x, lo, hi, bins)
    ref = b
    if mask is not None:
        m = mask.data if isinstance(mask, Mask) else np.asarray(mask)
        ref = b[m.astype(bool)]
        if ref.size == 0:
            raise ValueError("equalization mask is empty")
    counts = np.bincount(ref.ravel(), minlength=bins).astype(np.float64)
    cdf = np.cumsum(counts) / counts.sum()
    out = lo + (hi - lo) * cdf[b]
    return vol.with_data(out)


def _bin_index(x: np.ndarray, lo: float, hi: float, bins: int) -> np.ndarray:
    b = np.floor((x - lo) / (hi - lo) * bins).astype(np.int64)
    return np.clip(b, 0, bins - 1)


def save_volume(path, vol: Volume | Mask, kind: str | None = None) -> None:
    """Write ``<path>.raw`` + ``<path>.json``; ``path`` is the stem."""
    stem = Path(path)
    stem.parent.mkdir(parents=True, exist_ok=True)
    kind = kind or ("mask" if isinstance(vol, Mask) else "volume")
    header = {
        "format": FORMAT_VERSION,
        "kind": kind,
        "dims": list(vol.data.shape),
        "spacing": list(vol.spacing),
        "origin": list(vol.origin),
        "dtype": "<f4",
        "order": "x-fastest",
    }
    stem.with_suffix(".json").write_text(json.dumps(header, indent=2) + "\n")
    raw = np.asarray(vol.data, dtype="<f4").ravel(order="F")
    stem.with_suffix(".raw").write_bytes(raw.tobytes())


def load_volume(path) -> Volume | Mask:
    stem = Path(path)
    header = json.loads(stem.with_suffix(".json").read_text())
    if header.get("format") != FORMAT_VERSION:
        raise ValueError(f"unsupported volume format {header.get('format')!r}")
    dims = tuple(header["dims"])
    raw = np.frombuffer(stem.with_suffix(".raw").read_bytes(), dtype="<f4")
    if raw.size != int(np.prod(dims)):
        raise ValueError(f"{stem}: expected {np.prod(dims)} voxels, found {raw.size}")
    data = raw.reshape(dims, order="F")
    if header["kind"] == "mask":
        return Mask(data, header["spacing"], header["origin"])
    return Volume(data.astype(np.float64), header["spacing"], header["origin"])
