"""Layers with explicit forward and backward passes.

Every layer keeps the cache of its last forward call and accumulates
parameter gradients into ``self.grads`` during ``backward``. Arrays follow
the dtype of the parameters (float64 for gradient checks, float32 for
training).
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class Layer:
    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def zero_grad(self):
        for k, v in self.params.items():
            self.grads[k] = np.zeros_like(v)

    def _acc(self, name, g):
        if name in self.grads:
            self.grads[name] += g
        else:
            self.grads[name] = g.astype(self.params[name].dtype, copy=True)


def he_normal(rng, shape, fan_in, dtype):
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


def sigmoid(x):
    # Two-sided form avoids overflow in exp for large |x|.
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype, copy=False)


class ReLU(Layer):
    def forward(self, x, train=False):
        self.mask = x > 0
        return x * self.mask

    def backward(self, dout):
        return dout * self.mask


class Dense(Layer):
    """``y = x @ W + b`` over the last axis."""

    def __init__(self, n_in, n_out, rng, dtype=np.float64, init="he"):
        super().__init__()
        if init == "zeros":
            w = np.zeros((n_in, n_out), dtype=dtype)
        else:
            w = he_normal(rng, (n_in, n_out), n_in, dtype)
        self.params = {"W": w, "b": np.zeros(n_out, dtype=dtype)}

    def forward(self, x, train=False):
        self.x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dout):
        x2 = self.x.reshape(-1, self.x.shape[-1])
        d2 = dout.reshape(-1, dout.shape[-1])
        self._acc("W", x2.T @ d2)
        self._acc("b", d2.sum(axis=0))
        return dout @ self.params["W"].T


class _ConvNd(Layer):
    """3-wide cross-correlation over ``nd`` spatial axes, zero padding 1, stride 1.

    Channel-last layout: input (N, *spatial, C_in), kernels (3,)*nd + (C_in, C_out).
    ``input_grad=False`` skips the input gradient (first layer of a network).
    """

    nd = 2

    def __init__(self, c_in, c_out, rng, dtype=np.float64, input_grad=True):
        super().__init__()
        k = 3 ** self.nd
        self.params = {"W": he_normal(rng, (3,) * self.nd + (c_in, c_out), c_in * k, dtype),
                       "b": np.zeros(c_out, dtype=dtype)}
        self.input_grad = input_grad

    def forward(self, x, train=False):
        nd = self.nd
        w_ = self.params["W"]
        if x.ndim != nd + 2 or x.shape[-1] != w_.shape[-2]:
            raise ValueError(f"conv expects (N, {nd} spatial axes, {w_.shape[-2]}), got {x.shape}")
        sp = x.shape[1:-1]
        xp = np.pad(x, [(0, 0)] + [(1, 1)] * nd + [(0, 0)])
        win = sliding_window_view(xp, (3,) * nd, axis=tuple(range(1, nd + 1)))
        # (N, *sp, C, 3..) -> (N, *sp, 3.., C) so rows match the kernel layout
        order = (0,) + tuple(range(1, nd + 1)) + tuple(range(nd + 2, 2 * nd + 2)) + (nd + 1,)
        cols = win.transpose(order).reshape(-1, w_[..., 0].size)
        self.cols, self.shape = cols, x.shape
        out = cols @ w_.reshape(-1, w_.shape[-1]) + self.params["b"]
        return out.reshape(x.shape[:-1] + (w_.shape[-1],))

    def backward(self, dout):
        nd = self.nd
        w_ = self.params["W"]
        d2 = dout.reshape(-1, w_.shape[-1])
        self._acc("W", (self.cols.T @ d2).reshape(w_.shape))
        self._acc("b", d2.sum(axis=0))
        self.cols = None
        if not self.input_grad:
            return None
        n, sp, c = self.shape[0], self.shape[1:-1], self.shape[-1]
        dcols = (d2 @ w_.reshape(-1, w_.shape[-1]).T).reshape((n,) + sp + (3,) * nd + (c,))
        dxp = np.zeros((n,) + tuple(s + 2 for s in sp) + (c,), dtype=dout.dtype)
        for off in np.ndindex(*(3,) * nd):
            dst = (slice(None),) + tuple(slice(o, o + s) for o, s in zip(off, sp))
            dxp[dst] += dcols[(Ellipsis,) + off + (slice(None),)]
        return dxp[(slice(None),) + (slice(1, -1),) * nd]


class Conv2d(_ConvNd):
    """3x3 convolution on (N, H, W, C) tensors."""

    nd = 2


class Conv3d(_ConvNd):
    """3x3x3 convolution on (N, D, H, W, C) tensors."""

    nd = 3


def _pair_max(x, axis, i0, i1):
    """Elementwise max of ``x`` taken at indices ``i0`` and ``i1`` along ``axis``.

    Returns the max and a flag that is True where the ``i1`` entry won
    (ties keep ``i0``).
    """
    a = np.take(x, i0, axis=axis)
    b = np.take(x, i1, axis=axis)
    sel = b > a
    return np.where(sel, b, a), sel


def _pair_max_backward(d, sel, axis, i0, i1, n_in):
    # Intervals are disjoint, so every input position has at most one owning
    # output; gathering through that owner map avoids a scatter.
    owner = np.full(n_in, -1, dtype=np.int64)
    owner[i1] = np.arange(len(i1))
    owner[i0] = np.arange(len(i0))
    first = np.zeros(n_in, dtype=bool)
    first[i0] = True
    zero = np.zeros((), dtype=d.dtype)
    src = np.where(sel, zero, d), np.where(sel, d, zero)
    bshape = [1] * d.ndim
    bshape[axis] = n_in
    idx = np.maximum(owner, 0)
    dx = np.where(first.reshape(bshape), np.take(src[0], idx, axis=axis),
                  np.take(src[1], idx, axis=axis))
    if np.any(owner < 0):
        dx *= (owner >= 0).reshape(bshape)
    return dx


class MaxPool3d(Layer):
    """2x2x2 max pooling, stride 2, on (N, D, H, W, C); trailing odd planes are dropped.

    Pools one axis at a time; ties keep the lower index.
    """

    def forward(self, x, train=False):
        self.shape = x.shape
        self.sel = []
        for ax in (1, 2, 3):
            n = x.shape[ax] // 2
            if n < 1:
                raise ValueError("input too small for 2x pooling")
            lo = [slice(None)] * x.ndim
            hi = [slice(None)] * x.ndim
            lo[ax] = slice(0, 2 * n, 2)
            hi[ax] = slice(1, 2 * n, 2)
            a, b = x[tuple(lo)], x[tuple(hi)]
            sel = b > a
            x = np.where(sel, b, a)
            self.sel.append(sel)
        return x

    def backward(self, dout):
        d = dout
        zero = np.zeros((), dtype=dout.dtype)
        for ax, sel in zip((3, 2, 1), reversed(self.sel)):
            n = d.shape[ax]
            shape = list(d.shape)
            shape[ax] = self.shape[ax]
            dx = np.zeros(shape, dtype=d.dtype)
            lo = [slice(None)] * d.ndim
            hi = [slice(None)] * d.ndim
            lo[ax] = slice(0, 2 * n, 2)
            hi[ax] = slice(1, 2 * n, 2)
            dx[tuple(lo)] = np.where(sel, zero, d)
            dx[tuple(hi)] = np.where(sel, d, zero)
            d = dx
        return d


def fmp_intervals(n_in: int, ratio: float, rng) -> tuple[np.ndarray, np.ndarray]:
    """Disjoint pooling intervals covering ``[0, n_in)``.

    ``floor(n_in / ratio)`` intervals whose lengths are 1s and 2s in a
    pseudorandom order. Returns (starts, lengths). When even all-2 intervals
    cannot reach ``n_in`` (odd sizes near ratio 2) the trailing cells are left
    out, as in ordinary stride-2 pooling.
    """
    if not 1.0 < ratio <= 2.0:
        raise ValueError("fractional pooling ratio must be in (1, 2]")
    n_out = int(np.floor(n_in / ratio))
    if n_out < 1:
        raise ValueError(f"input of size {n_in} too small for ratio {ratio}")
    n_two = min(n_in - n_out, n_out)
    n_one = n_out - n_two
    inc = np.array([1] * n_one + [2] * n_two, dtype=np.int64)
    inc = inc[rng.permutation(n_out)]
    starts = np.concatenate([[0], np.cumsum(inc)[:-1]]).astype(np.int64)
    return starts, inc


def _fmp_forward(x, rows, cols, axes):
    r0, c0 = rows[0], cols[0]
    r1, c1 = r0 + rows[1] - 1, c0 + cols[1] - 1
    part, rsel = _pair_max(x, axes[0], r0, r1)
    out, csel = _pair_max(part, axes[1], c0, c1)
    return out, (rsel, csel)


def _fmp_backward(dout, sels, rows, cols, axes, in_shape):
    r0, c0 = rows[0], cols[0]
    r1, c1 = r0 + rows[1] - 1, c0 + cols[1] - 1
    rsel, csel = sels
    d = _pair_max_backward(dout, csel, axes[1], c0, c1, in_shape[axes[1]])
    return _pair_max_backward(d, rsel, axes[0], r0, r1, in_shape[axes[0]])


def fractional_max_pool(x, ratio, seed):
    """Pseudorandom disjoint fractional max pooling over the last two axes.

    Returns ``(out, (rows, cols))`` where rows/cols give the input position
    of each output's maximum.
    """
    rng = np.random.default_rng(seed)
    rows = fmp_intervals(x.shape[-2], ratio, rng)
    cols = fmp_intervals(x.shape[-1], ratio, rng)
    out, (rsel, csel) = _fmp_forward(x, rows, cols, (-2, -1))
    r0, c0 = rows[0], cols[0]
    r1, c1 = r0 + rows[1] - 1, c0 + cols[1] - 1
    ac = np.where(csel, c1, c0)
    picked = np.take_along_axis(rsel, ac, axis=-1)
    ar = np.where(picked, r1[:, None], r0[:, None])
    return out, (ar, ac)


def fractional_max_pool_backward(dout, argmax, in_shape):
    ar, ac = argmax
    dx = np.zeros(in_shape, dtype=dout.dtype)
    lead = np.indices(dout.shape[:-2]).reshape(len(dout.shape) - 2, -1)
    lead = [li.reshape(dout.shape[:-2] + (1, 1)) for li in lead]
    # Pooling regions are disjoint, so each input cell receives at most one gradient.
    dx[tuple(lead) + (ar, ac)] = dout
    return dx


class FractionalMaxPool2d(Layer):
    """Fractional max pooling of (N, H, W, C) tensors over H and W.

    Training draws fresh intervals on every call; evaluation always uses the
    intervals generated from ``seed``.
    """

    axes = (1, 2)

    def __init__(self, ratio, seed=0):
        super().__init__()
        self.ratio = float(ratio)
        self.seed = int(seed)
        self.rng = np.random.default_rng(seed)

    def forward(self, x, train=False):
        rng = np.random.default_rng(int(self.rng.integers(2 ** 62)) if train else self.seed)
        self.rows = fmp_intervals(x.shape[self.axes[0]], self.ratio, rng)
        self.cols = fmp_intervals(x.shape[self.axes[1]], self.ratio, rng)
        out, self.sels = _fmp_forward(x, self.rows, self.cols, self.axes)
        self.shape = x.shape
        return out

    def backward(self, dout):
        return _fmp_backward(dout, self.sels, self.rows, self.cols, self.axes, self.shape)


class SliceFuse(Layer):
    """1x1 fusion along the slice axis: ``y = mean_s(W_s x_s) + b``.

    Input (M, L, F) with one (F_out, F) kernel per slice position.
    """

    def __init__(self, n_slices, f_in, f_out, rng, dtype=np.float64):
        super().__init__()
        self.params = {"W": he_normal(rng, (n_slices, f_out, f_in), f_in, dtype),
                       "b": np.zeros(f_out, dtype=dtype)}

    def forward(self, x, train=False):
        if x.shape[1:] != (self.params["W"].shape[0], self.params["W"].shape[2]):
            raise ValueError(f"fuse expects (M, {self.params['W'].shape[0]}, "
                             f"{self.params['W'].shape[2]}), got {x.shape}")
        self.x = x
        n = x.shape[1]
        return np.einsum("msf,sof->mo", x, self.params["W"], optimize=True) / n + self.params["b"]

    def backward(self, dout):
        n = self.x.shape[1]
        self._acc("W", np.einsum("mo,msf->sof", dout, self.x, optimize=True) / n)
        self._acc("b", dout.sum(axis=0))
        return np.einsum("mo,sof->msf", dout, self.params["W"], optimize=True) / n


class GRU(Layer):
    """Single-direction GRU over padded batches.

    ``z = s(x W_z + h U_z + b_z)``, ``r = s(x W_r + h U_r + b_r)``,
    ``n = tanh(x W_n + (r * h) U_n + b_n)``, ``h' = (1 - z) h + z n``,
    ``h_0 = 0``. Steps beyond a sequence's length leave its state unchanged.
    With ``reverse=True`` each sequence is read back to front and the outputs
    are returned in original order.
    """

    def __init__(self, n_in, hidden, rng, dtype=np.float64, reverse=False):
        super().__init__()
        s_in = 1.0 / np.sqrt(n_in)
        s_h = 1.0 / np.sqrt(hidden)
        self.hidden = hidden
        self.reverse = reverse
        self.params = {
            "W": rng.uniform(-s_in, s_in, (n_in, 3 * hidden)).astype(dtype),
            "U": rng.uniform(-s_h, s_h, (hidden, 3 * hidden)).astype(dtype),
            "b": np.zeros(3 * hidden, dtype=dtype),
        }

    @staticmethod
    def _reverse_index(lengths, t_max):
        t = np.arange(t_max)[None, :]
        lens = np.asarray(lengths)[:, None]
        return np.where(t < lens, lens - 1 - t, t)

    def forward(self, x, lengths=None, train=False):
        b, t_max, _ = x.shape
        hd = self.hidden
        lengths = np.full(b, t_max) if lengths is None else np.asarray(lengths)
        if np.any(lengths < 1) or np.any(lengths > t_max):
            raise ValueError("sequence lengths must be in [1, T]")
        if self.reverse:
            self.rev = self._reverse_index(lengths, t_max)
            x = np.take_along_axis(x, self.rev[..., None], axis=1)
        mask = (np.arange(t_max)[None, :] < lengths[:, None]).astype(x.dtype)
        W, U, bias = self.params["W"], self.params["U"], self.params["b"]
        ax = x @ W + bias  # (B, T, 3H)
        h = np.zeros((b, hd), dtype=x.dtype)
        hs = np.empty((b, t_max, hd), dtype=x.dtype)
        cache = []
        for t in range(t_max):
            a = ax[:, t]
            hu = h @ U[:, :2 * hd]
            z = sigmoid(a[:, :hd] + hu[:, :hd])
            r = sigmoid(a[:, hd:2 * hd] + hu[:, hd:])
            rh = r * h
            n = np.tanh(a[:, 2 * hd:] + rh @ U[:, 2 * hd:])
            h_new = (1 - z) * h + z * n
            m = mask[:, t:t + 1]
            cache.append((h, z, r, rh, n))
            h = m * h_new + (1 - m) * h
            hs[:, t] = h
        self.x, self.mask, self.cache = x, mask, cache
        if self.reverse:
            hs = np.take_along_axis(hs, self.rev[..., None], axis=1)
        return hs

    def backward(self, dhs):
        hd = self.hidden
        if self.reverse:
            dhs = np.take_along_axis(dhs, self.rev[..., None], axis=1)
        U = self.params["U"]
        b, t_max, _ = dhs.shape
        da_all = np.zeros((b, t_max, 3 * hd), dtype=dhs.dtype)
        dU = np.zeros_like(U)
        dh = np.zeros((b, hd), dtype=dhs.dtype)
        for t in range(t_max - 1, -1, -1):
            h_prev, z, r, rh, n = self.cache[t]
            m = self.mask[:, t:t + 1]
            dh = dh + dhs[:, t]
            dh_new = m * dh
            dh_prev = (1 - m) * dh + dh_new * (1 - z)
            dz = dh_new * (n - h_prev)
            dn = dh_new * z
            dan = dn * (1 - n * n)
            dU[:, 2 * hd:] += rh.T @ dan
            drh = dan @ U[:, 2 * hd:].T
            dr = drh * h_prev
            dh_prev += drh * r
            daz = dz * z * (1 - z)
            dar = dr * r * (1 - r)
            dazr = np.concatenate([daz, dar], axis=1)
            dU[:, :2 * hd] += h_prev.T @ dazr
            dh_prev += dazr @ U[:, :2 * hd].T
            da_all[:, t, :2 * hd] = dazr
            da_all[:, t, 2 * hd:] = dan
            dh = dh_prev
        x2 = self.x.reshape(-1, self.x.shape[-1])
        da2 = da_all.reshape(-1, 3 * hd)
        self._acc("W", x2.T @ da2)
        self._acc("U", dU)
        self._acc("b", da2.sum(axis=0))
        dx = da_all @ self.params["W"].T
        if self.reverse:
            dx = np.take_along_axis(dx, self.rev[..., None], axis=1)
        return dx


def bce_with_logits(logits, targets):
    """Mean binary cross-entropy in the stable logit form and its logit gradient."""
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    loss = np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))
    p = sigmoid(z)
    return float(loss.mean()), (p - y) / z.size
