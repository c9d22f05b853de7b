"""Centerline geometry, orthogonal reformation, cube cutting and the polar transform.

Slice ``i`` of an MPR stack is the plane through centerline point ``i``
spanned by the frame normals ``(u_i, v_i)``. Pixel ``(p, q)`` of an
``S x S`` slice samples ``c_i + (p - h) * sp * u_i + (q - h) * sp * v_i``
with ``h = (S - 1) / 2``, so the first in-plane axis follows ``u``.

Polar cubes are laid out ``(slices, angles, radii)``; angle index ``a``
is ``2*pi*a/A`` measured from ``+u`` towards ``+v`` and radius index ``r``
is ``r * r_max / (R - 1)`` millimetres.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .volume import Volume, sample_points


@dataclass
class Centerline:
    points: np.ndarray
    step: float

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim != 2 or self.points.shape[1] != 3 or len(self.points) < 2:
            raise ValueError("a centerline needs at least two 3D points")

    def __len__(self):
        return len(self.points)


@dataclass
class FrameSet:
    tangents: np.ndarray
    u: np.ndarray
    v: np.ndarray

    def __len__(self):
        return len(self.tangents)

    def subset(self, start: int, stop: int) -> "FrameSet":
        return FrameSet(self.tangents[start:stop], self.u[start:stop], self.v[start:stop])


@dataclass
class MprStack:
    slices: np.ndarray  # (L, S, S)
    spacing: float
    frames: FrameSet
    points: np.ndarray  # (L, 3) slice centers


def resample_centerline(points, step: float) -> Centerline:
    """Arclength-uniform linear resampling of a polyline.

    Points sit at arclength ``0, step, 2*step, ...``; the input end point is
    always kept, so the last interval is shorter whenever the length is not
    a multiple of ``step``.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) < 2:
        raise ValueError("need at least two 3D points")
    if step <= 0:
        raise ValueError("step must be positive")
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    keep = np.concatenate([[True], seg > 0])
    pts = pts[keep]
    seg = seg[seg > 0]
    if len(pts) < 2:
        raise ValueError("degenerate centerline: zero total length")
    s = np.concatenate([[0.0], np.cumsum(seg)])
    total = s[-1]
    n = int(np.floor(total / step + 1e-9))
    targets = np.arange(n + 1) * step
    if total - targets[-1] > 1e-9 * max(1.0, total):
        targets = np.append(targets, total)
    else:
        targets[-1] = total
    out = np.column_stack([np.interp(targets, s, pts[:, d]) for d in range(3)])
    return Centerline(out, float(step))


def _tangents(points: np.ndarray) -> np.ndarray:
    t = np.empty_like(points)
    t[1:-1] = points[2:] - points[:-2]
    t[0] = points[1] - points[0]
    t[-1] = points[-1] - points[-2]
    return t / np.linalg.norm(t, axis=1, keepdims=True)


def _orthonormalize(t, u):
    u = u - np.dot(u, t) * t
    u = u / np.linalg.norm(u)
    return u, np.cross(t, u)


def rotation_minimizing_frames(cl: Centerline) -> FrameSet:
    """Double-reflection rotation-minimizing frames along the centerline.

    The first normal is the world axis with the smallest absolute component
    in ``t_0`` (lowest axis index on ties), projected orthogonal to ``t_0``.
    """
    x = cl.points
    t = _tangents(x)
    n = len(x)
    u = np.empty_like(x)
    v = np.empty_like(x)
    axis = np.zeros(3)
    axis[int(np.argmin(np.abs(t[0])))] = 1.0
    u[0], v[0] = _orthonormalize(t[0], axis)
    for i in range(n - 1):
        v1 = x[i + 1] - x[i]
        c1 = v1 @ v1
        r_l = u[i] - (2.0 / c1) * (v1 @ u[i]) * v1
        t_l = t[i] - (2.0 / c1) * (v1 @ t[i]) * v1
        v2 = t[i + 1] - t_l
        c2 = v2 @ v2
        r_next = r_l if c2 < 1e-300 else r_l - (2.0 / c2) * (v2 @ r_l) * v2
        u[i + 1], v[i + 1] = _orthonormalize(t[i + 1], r_next)
    return FrameSet(t, u, v)


def slice_points(center, u, v, size: int, spacing: float) -> np.ndarray:
    """World coordinates of an ``size x size`` slice grid, shape (..., S, S, 3)."""
    h = (size - 1) / 2.0
    off = (np.arange(size) - h) * spacing
    center = np.asarray(center)[..., None, None, :]
    u = np.asarray(u)[..., None, None, :]
    v = np.asarray(v)[..., None, None, :]
    return center + off[:, None, None] * u + off[None, :, None] * v


def extract_mpr_stack(vol: Volume, cl: Centerline, frames: FrameSet, size: int = 33,
                      spacing: float = 0.3, pad: float = -1024.0,
                      start: int = 0, stop: int | None = None) -> MprStack:
    """Orthogonal slices for centerline points ``start .. stop-1``."""
    if size % 2 != 1:
        raise ValueError("slice size must be odd so the center pixel lies on the centerline")
    stop = len(cl) if stop is None else stop
    sub = frames.subset(start, stop)
    pts = cl.points[start:stop]
    grid = slice_points(pts, sub.u, sub.v, size, spacing)
    slices = sample_points(vol, grid.reshape(-1, 3), pad=pad).reshape(len(pts), size, size)
    return MprStack(slices, float(spacing), sub, pts.copy())


def cube_starts(length: int, cube_len: int, stride: int) -> list[int]:
    """Start indices of overlapping cubes along a stack of ``length`` slices.

    Regular starts ``0, stride, 2*stride, ...`` while a full cube fits, plus
    one end-aligned cube when the tail would otherwise be left uncovered.
    """
    if cube_len < 1 or not 1 <= stride <= cube_len:
        raise ValueError("need cube_len >= 1 and 1 <= stride <= cube_len")
    if length <= cube_len:
        return [0]
    starts = list(range(0, length - cube_len + 1, stride))
    if starts[-1] + cube_len < length:
        starts.append(length - cube_len)
    return starts


def cut_cubes(stack, cube_len: int = 16, stride: int = 8) -> list[np.ndarray]:
    """Cut an ``(L, ...)`` array (or MprStack) into overlapping cubes.

    Stacks shorter than ``cube_len`` give one cube padded by replicating the
    last slice.
    """
    arr = stack.slices if isinstance(stack, MprStack) else np.asarray(stack)
    n = arr.shape[0]
    if n < cube_len:
        reps = np.concatenate([np.arange(n), np.full(cube_len - n, n - 1)])
        return [arr[reps].copy()]
    return [arr[s:s + cube_len].copy() for s in cube_starts(n, cube_len, stride)]


def _bilinear(img: np.ndarray, p: np.ndarray, q: np.ndarray) -> np.ndarray:
    # img: (..., S, S); p, q: fractional pixel coords broadcastable to the grid.
    s0, s1 = img.shape[-2:]
    p = np.clip(p, 0, s0 - 1)
    q = np.clip(q, 0, s1 - 1)
    p0 = np.minimum(np.floor(p).astype(np.int64), s0 - 2)
    q0 = np.minimum(np.floor(q).astype(np.int64), s1 - 2)
    fp = p - p0
    fq = q - q0
    return ((1 - fp) * (1 - fq) * img[..., p0, q0] + fp * (1 - fq) * img[..., p0 + 1, q0]
            + (1 - fp) * fq * img[..., p0, q0 + 1] + fp * fq * img[..., p0 + 1, q0 + 1])


def polar_grid(n_angles: int, n_radii: int, r_max: float):
    theta = 2.0 * np.pi * np.arange(n_angles) / n_angles
    rho = np.arange(n_radii) * (r_max / (n_radii - 1))
    return theta, rho


def to_polar(cube, n_angles: int = 16, n_radii: int = 12, r_max: float = 4.5,
             spacing: float = 0.3, center_shift=(0.0, 0.0)) -> np.ndarray:
    """Resample each Cartesian slice of ``cube`` onto an (angle, radius) grid.

    ``center_shift`` moves the polar origin by the given number of pixels
    along (p, q); sampling around ``center - t`` is the same as translating
    the image by ``+t`` first.
    """
    cube = np.asarray(cube, dtype=np.float64)
    size = cube.shape[-1]
    if cube.shape[-2] != size:
        raise ValueError("slices must be square")
    if n_angles < 2 or n_radii < 2:
        raise ValueError("need at least 2 angles and 2 radii")
    if r_max > (size - 1) / 2 * spacing + 1e-9:
        raise ValueError(f"r_max {r_max} mm exceeds the slice half-width")
    theta, rho = polar_grid(n_angles, n_radii, r_max)
    h = (size - 1) / 2.0
    p = h - center_shift[0] + (rho[None, :] * np.cos(theta)[:, None]) / spacing
    q = h - center_shift[1] + (rho[None, :] * np.sin(theta)[:, None]) / spacing
    return _bilinear(cube, p, q)


def from_polar(polar, size: int, r_max: float, spacing: float = 0.3,
               fill: float = 0.0) -> np.ndarray:
    """Inverse of :func:`to_polar` on the disc of radius ``r_max``.

    Uses bilinear interpolation with periodic angles; pixels outside the
    disc get ``fill``.
    """
    polar = np.asarray(polar, dtype=np.float64)
    n_angles, n_radii = polar.shape[-2:]
    h = (size - 1) / 2.0
    off = (np.arange(size) - h) * spacing
    x, y = np.meshgrid(off, off, indexing="ij")
    rho = np.hypot(x, y)
    theta = np.mod(np.arctan2(y, x), 2 * np.pi)
    a = theta / (2 * np.pi) * n_angles
    r = rho / r_max * (n_radii - 1)
    a0 = np.floor(a).astype(np.int64) % n_angles
    a1 = (a0 + 1) % n_angles
    fa = a - np.floor(a)
    r_c = np.clip(r, 0, n_radii - 1)
    r0 = np.minimum(np.floor(r_c).astype(np.int64), n_radii - 2)
    fr = r_c - r0
    out = ((1 - fa) * (1 - fr) * polar[..., a0, r0] + fa * (1 - fr) * polar[..., a1, r0]
           + (1 - fa) * fr * polar[..., a0, r0 + 1] + fa * fr * polar[..., a1, r0 + 1])
    out = np.where(rho <= r_max + 1e-12, out, fill)
    return out


def nearest_centerline_index(cl: Centerline, world_points) -> np.ndarray:
    _, idx = cKDTree(cl.points).query(np.asarray(world_points, dtype=np.float64))
    return idx
