"""Sequence classifiers built from the layer set.

All models take a list of per-lesion payloads and return one logit per
lesion. Payload layouts:

* ``PolarRCNN``: ``(n_cubes, slices, angles, radii)``
* ``CartesianRCNN``: ``(n_cubes, slices, size, size)``
* ``FeatureGRU``: ``(n_cubes, n_features)``
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .layers import (GRU, Conv2d, Conv3d, Dense, FractionalMaxPool2d, MaxPool3d, ReLU,
                     SliceFuse, sigmoid)


@dataclass
class ArchitectureConfig:
    conv2d_channels: tuple = (16, 32)
    fmp_ratio: float = math.sqrt(2.0)
    slice_features: int = 64
    fuse_features: int = 64
    conv3d_channels: tuple = (16, 32, 64)
    cube_features: int = 64
    gru_hidden: int = 64
    gru_layers: int = 2
    bidirectional: bool = True
    mlp_widths: tuple = (64, 64, 64)

    def __post_init__(self):
        self.conv2d_channels = tuple(int(c) for c in self.conv2d_channels)
        self.conv3d_channels = tuple(int(c) for c in self.conv3d_channels)
        self.mlp_widths = tuple(int(w) for w in self.mlp_widths)
        if not self.conv2d_channels or not self.conv3d_channels:
            raise ValueError("need at least one conv block per path")
        if min(self.conv2d_channels + self.conv3d_channels + self.mlp_widths) < 1:
            raise ValueError("layer widths must be positive")
        if not 1.0 < self.fmp_ratio <= 2.0:
            raise ValueError("fmp_ratio must be in (1, 2]")
        if self.gru_layers < 1 or self.gru_hidden < 1:
            raise ValueError("GRU needs >= 1 layer and a positive hidden size")
        if len(self.mlp_widths) < 1:
            raise ValueError("MLP needs at least one layer")

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("conv2d_channels", "conv3d_channels", "mlp_widths"):
            d[k] = list(d[k])
        return d


class Sequential:
    def __init__(self, layers):
        self.layers = list(layers)

    def forward(self, x, train=False):
        for layer in self.layers:
            x = layer.forward(x, train=train)
        return x

    def backward(self, d):
        for layer in reversed(self.layers):
            d = layer.backward(d)
        return d


def mlp(widths, n_in, rng, dtype):
    """Dense chain with ReLU after every layer except the last."""
    layers = []
    for i, w in enumerate(widths):
        layers.append(Dense(n_in, w, rng, dtype))
        if i < len(widths) - 1:
            layers.append(ReLU())
        n_in = w
    return Sequential(layers)


class BiGRUStack:
    """Stacked (optionally bidirectional) GRU layers over padded sequences.

    ``forward`` returns the top layer's last forward state concatenated
    with the backward direction's state after reading the whole sequence.
    """

    def __init__(self, n_in, hidden, n_layers, bidirectional, rng, dtype):
        self.layers = []
        self.bidirectional = bidirectional
        self.hidden = hidden
        for _ in range(n_layers):
            pair = [GRU(n_in, hidden, rng, dtype)]
            if bidirectional:
                pair.append(GRU(n_in, hidden, rng, dtype, reverse=True))
            self.layers.append(pair)
            n_in = hidden * len(pair)
        self.out_features = n_in

    def forward(self, x, lengths, train=False):
        for pair in self.layers:
            x = np.concatenate([g.forward(x, lengths, train) for g in pair], axis=-1)
        self.lengths = np.asarray(lengths)
        self.t_max = x.shape[1]
        rows = np.arange(len(x))
        out = [x[rows, self.lengths - 1, :self.hidden]]
        if self.bidirectional:
            out.append(x[:, 0, self.hidden:])
        return np.concatenate(out, axis=-1)

    def backward(self, dfinal):
        b = len(dfinal)
        h = self.hidden
        d = np.zeros((b, self.t_max, self.out_features), dtype=dfinal.dtype)
        d[np.arange(b), self.lengths - 1, :h] = dfinal[:, :h]
        if self.bidirectional:
            d[:, 0, h:] += dfinal[:, h:]
        for pair in reversed(self.layers):
            parts = np.split(d, len(pair), axis=-1)
            d = sum(g.backward(p) for g, p in zip(pair, parts))
        return d


def pad_sequences(items, lengths):
    t_max = int(max(lengths))
    out = np.zeros((len(lengths), t_max) + items.shape[1:], dtype=items.dtype)
    offs = np.concatenate([[0], np.cumsum(lengths)])
    for i, n in enumerate(lengths):
        out[i, :n] = items[offs[i]:offs[i + 1]]
    return out


def unpad_sequences(padded, lengths):
    return np.concatenate([padded[i, :n] for i, n in enumerate(lengths)], axis=0)


class SequenceModel:
    """Per-element encoder, then GRU stack, then a dense head producing one logit."""

    encoder: Sequential

    def _init_head(self, n_in, arch, rng, dtype):
        self.gru = BiGRUStack(n_in, arch.gru_hidden, arch.gru_layers, arch.bidirectional, rng, dtype)
        self.head = Dense(self.gru.out_features, 1, rng, dtype)

    def parameter_layers(self):
        layers = [l for l in self.encoder.layers if getattr(l, "params", None)]
        for pair in self.gru.layers:
            layers += pair
        layers.append(self.head)
        return layers

    def named_parameters(self):
        out = []
        for i, layer in enumerate(self.parameter_layers()):
            for k in sorted(layer.params):
                out.append((f"{i}.{type(layer).__name__}.{k}", layer, k))
        return out

    def zero_grad(self):
        for layer in self.parameter_layers():
            layer.zero_grad()

    def get_state(self):
        return [layer.params[k].copy() for _, layer, k in self.named_parameters()]

    def set_state(self, state):
        named = self.named_parameters()
        if len(state) != len(named):
            raise ValueError("parameter count mismatch")
        for (_, layer, k), v in zip(named, state):
            if layer.params[k].shape != v.shape:
                raise ValueError(f"shape mismatch for {k}")
            layer.params[k] = np.array(v, dtype=layer.params[k].dtype)

    def _encode_input(self, payloads):
        raise NotImplementedError

    def forward(self, payloads, train=False):
        x, lengths = self._encode_input(payloads)
        feats = self.encoder.forward(x, train=train)
        feats = feats.reshape(len(feats), -1)
        self.lengths = lengths
        seq = pad_sequences(feats, lengths)
        final = self.gru.forward(seq, lengths, train=train)
        return self.head.forward(final, train=train)[:, 0]

    def backward(self, dlogits):
        dlogits = np.asarray(dlogits, dtype=self.dtype)[:, None]
        dfinal = self.head.backward(dlogits)
        dseq = self.gru.backward(dfinal)
        dfeats = unpad_sequences(dseq, self.lengths)
        return self.encoder.backward(dfeats)

    def predict(self, payloads, batch_size=32):
        out = []
        for i in range(0, len(payloads), batch_size):
            out.append(sigmoid(self.forward(payloads[i:i + batch_size], train=False)
                               .astype(np.float64)))
        return np.concatenate(out) if out else np.zeros(0)


class _Flatten:
    def forward(self, x, train=False):
        self.shape = x.shape
        return x.reshape(len(x), -1)

    def backward(self, d):
        return d.reshape(self.shape)


class _SlicesToCubes:
    """(cubes*slices, F) -> (cubes, slices, F)."""

    def __init__(self, n_slices):
        self.n = n_slices

    def forward(self, x, train=False):
        return x.reshape(-1, self.n, x.shape[-1])

    def backward(self, d):
        return d.reshape(-1, d.shape[-1])


def fmp_size(n, ratio, blocks):
    for _ in range(blocks):
        n = int(math.floor(n / ratio))
    return n


class PolarRCNN(SequenceModel):
    """Slice-wise 2D CNN on polar cubes, 1x1 slice fusion, GRU head."""

    def __init__(self, arch: ArchitectureConfig, n_slices, n_angles, n_radii, seed=0,
                 dtype=np.float32):
        rng = np.random.default_rng(seed)
        self.dtype = dtype
        self.input_shape = (n_slices, n_angles, n_radii)
        layers, c_in = [], 1
        for i, c in enumerate(arch.conv2d_channels):
            layers += [Conv2d(c_in, c, rng, dtype, input_grad=i > 0), ReLU(),
                       FractionalMaxPool2d(arch.fmp_ratio, seed=int(rng.integers(2 ** 31)) + i)]
            c_in = c
        nb = len(arch.conv2d_channels)
        ha, hr = fmp_size(n_angles, arch.fmp_ratio, nb), fmp_size(n_radii, arch.fmp_ratio, nb)
        if min(ha, hr) < 1:
            raise ValueError("polar grid too small for the pooling schedule")
        layers += [_Flatten(), Dense(c_in * ha * hr, arch.slice_features, rng, dtype), ReLU(),
                   _SlicesToCubes(n_slices),
                   SliceFuse(n_slices, arch.slice_features, arch.fuse_features, rng, dtype), ReLU()]
        self.encoder = Sequential(layers)
        self._init_head(arch.fuse_features, arch, rng, dtype)

    def _encode_input(self, payloads):
        lengths = [len(p) for p in payloads]
        for p in payloads:
            if p.shape[1:] != self.input_shape:
                raise ValueError(f"expected cubes of shape {self.input_shape}, got {p.shape[1:]}")
        x = np.concatenate(payloads, axis=0).astype(self.dtype, copy=False)
        return x.reshape((-1,) + self.input_shape[1:] + (1,)), lengths


class CartesianRCNN(SequenceModel):
    """3D CNN on Cartesian cubes, GRU head."""

    def __init__(self, arch: ArchitectureConfig, n_slices, size, seed=0, dtype=np.float32):
        rng = np.random.default_rng(seed)
        self.dtype = dtype
        self.input_shape = (n_slices, size, size)
        layers, c_in = [], 1
        dims = np.asarray(self.input_shape)
        for i, c in enumerate(arch.conv3d_channels):
            layers += [Conv3d(c_in, c, rng, dtype, input_grad=i > 0), ReLU(), MaxPool3d()]
            c_in = c
            dims = dims // 2
        if dims.min() < 1:
            raise ValueError("cube too small for the pooling schedule")
        layers += [_Flatten(), Dense(c_in * int(np.prod(dims)), arch.cube_features, rng, dtype),
                   ReLU()]
        self.encoder = Sequential(layers)
        self._init_head(arch.cube_features, arch, rng, dtype)

    def _encode_input(self, payloads):
        lengths = [len(p) for p in payloads]
        for p in payloads:
            if p.shape[1:] != self.input_shape:
                raise ValueError(f"expected cubes of shape {self.input_shape}, got {p.shape[1:]}")
        x = np.concatenate(payloads, axis=0).astype(self.dtype, copy=False)
        return x[..., None], lengths


class FeatureGRU(SequenceModel):
    """Per-cube feature vectors through a dense chain, GRU head."""

    def __init__(self, arch: ArchitectureConfig, n_features, seed=0, dtype=np.float32):
        rng = np.random.default_rng(seed)
        self.dtype = dtype
        self.n_features = n_features
        self.encoder = mlp(arch.mlp_widths, n_features, rng, dtype)
        self._init_head(arch.mlp_widths[-1], arch, rng, dtype)

    def _encode_input(self, payloads):
        lengths = [len(p) for p in payloads]
        x = np.concatenate(payloads, axis=0).astype(self.dtype, copy=False)
        if x.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {x.shape[1]}")
        return x, lengths
