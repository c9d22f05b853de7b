"""Optimizer, training loop with best-validation selection, checkpoint I/O."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..evaluation import roc_auc
from .layers import bce_with_logits

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "coroplaque-params/1"


class Adam:
    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: list | None = None
        self.v: list | None = None

    def step(self, named):
        """Update every ``(name, layer, key)`` parameter from ``layer.grads[key]``."""
        if self.m is None:
            self.m = [np.zeros_like(layer.params[k]) for _, layer, k in named]
            self.v = [np.zeros_like(layer.params[k]) for _, layer, k in named]
        self.t += 1
        c1 = 1 - self.beta1 ** self.t
        c2 = 1 - self.beta2 ** self.t
        for i, (_, layer, k) in enumerate(named):
            g = layer.grads[k]
            self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * g * g
            upd = self.lr * (self.m[i] / c1) / (np.sqrt(self.v[i] / c2) + self.eps)
            layer.params[k] -= upd.astype(layer.params[k].dtype, copy=False)


def shuffled_batches(targets, batch_size, rng):
    order = rng.permutation(len(targets))
    return [order[i:i + batch_size] for i in range(0, len(order), batch_size)]


@dataclass
class TrainResult:
    best_epoch: int
    best_score: float
    history: list = field(default_factory=list)  # (epoch, train loss, val AUC)


def _val_score(model, payloads, targets):
    p = model.predict(payloads)
    y = np.asarray(targets)
    if 0 < y.sum() < len(y):
        return roc_auc(p, y), True
    # Single-class validation: rank epochs by negative loss instead.
    z = np.log(np.clip(p, 1e-12, 1)) - np.log(np.clip(1 - p, 1e-12, 1))
    return -bce_with_logits(z, y)[0], False


def train_loop(model, train_set, val_set, epochs=50, batch_size=16, lr=1e-3, seed=0,
               batcher=None, augment=None, log_path=None) -> TrainResult:
    """Mini-batch training; leaves ``model`` holding the best-validation parameters.

    ``train_set``/``val_set`` are sequences of ``(payload, target)``.
    ``batcher(targets, batch_size, rng)`` yields index arrays for one epoch;
    ``augment(payload, rng)`` is applied to training payloads only.
    Ties in validation score keep the earliest epoch.
    """
    if not train_set or not val_set:
        raise ValueError("training and validation sets must be nonempty")
    rng = np.random.default_rng(seed)
    batcher = batcher or shuffled_batches
    opt = Adam(lr=lr)
    named = model.named_parameters()
    t_pay = [p for p, _ in train_set]
    t_y = np.asarray([y for _, y in train_set], dtype=np.float64)
    v_pay = [p for p, _ in val_set]
    v_y = [y for _, y in val_set]
    best_state = model.get_state()
    best_score, best_epoch = -np.inf, 0
    history = []
    for epoch in range(1, epochs + 1):
        losses = []
        for idx in batcher(t_y, batch_size, rng):
            batch = [t_pay[i] for i in idx]
            if augment is not None:
                batch = [augment(p, rng) for p in batch]
            model.zero_grad()
            logits = model.forward(batch, train=True)
            loss, dlogits = bce_with_logits(logits, t_y[idx])
            model.backward(dlogits)
            opt.step(named)
            losses.append(loss)
        score, is_auc = _val_score(model, v_pay, v_y)
        train_loss = float(np.mean(losses)) if losses else float("nan")
        history.append((epoch, train_loss, score if is_auc else float("nan")))
        if score > best_score:
            best_score, best_epoch = score, epoch
            best_state = model.get_state()
        log.debug("epoch %d loss %.4f val %.4f", epoch, train_loss, score)
    model.set_state(best_state)
    if log_path is not None:
        write_training_log(log_path, history)
    return TrainResult(best_epoch, float(best_score), history)


def write_training_log(path, history):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "val_auc"])
        for e, loss, auc in history:
            w.writerow([e, repr(float(loss)), repr(float(auc))])


def save_checkpoint(path, model, architecture: dict | None = None):
    """JSON header line, then the parameters as one little-endian float block."""
    named = model.named_parameters()
    header = {
        "format": CHECKPOINT_FORMAT,
        "architecture": architecture or {},
        "dtype": "<f8",
        "tensors": [{"name": n, "shape": list(layer.params[k].shape)} for n, layer, k in named],
    }
    block = b"".join(np.ascontiguousarray(layer.params[k], dtype="<f8").tobytes()
                     for _, layer, k in named)
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode() + b"\n")
        fh.write(block)


def load_checkpoint(path, model) -> dict:
    raw = Path(path).read_bytes()
    nl = raw.index(b"\n")
    header = json.loads(raw[:nl])
    if header.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"unsupported checkpoint format {header.get('format')!r}")
    data = np.frombuffer(raw[nl + 1:], dtype="<f8")
    state, off = [], 0
    for t in header["tensors"]:
        n = int(np.prod(t["shape"]))
        state.append(data[off:off + n].reshape(t["shape"]))
        off += n
    if off != data.size:
        raise ValueError("checkpoint size does not match its header")
    model.set_state(state)
    return header
