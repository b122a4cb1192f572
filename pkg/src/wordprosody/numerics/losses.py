from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import NumericsError, Tensor, _make, _push, as_tensor


@dataclass(frozen=True)
class HuberConfig:
    rho: float = 1.0

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError(f"Huber rho must be positive, got {self.rho}")


def _check(pred: Tensor, target: Tensor, weight):
    if pred.shape != target.shape:
        raise NumericsError(f"loss shape mismatch: pred {pred.shape} vs target {target.shape}")
    if weight is None:
        return np.ones(pred.shape), float(pred.data.size)
    w = np.broadcast_to(np.asarray(weight, dtype=np.float64), pred.shape)
    total = float(w.sum())
    if total <= 0:
        raise NumericsError("loss weight mask selects no elements")
    return w, total


def l1_loss(pred, target, weight=None) -> Tensor:
    """Mean absolute error; with ``weight`` (broadcastable 0/1 mask) a masked mean."""
    pred, target = as_tensor(pred), as_tensor(target)
    w, total = _check(pred, target, weight)
    r = pred.data - target.data
    value = np.sum(w * np.abs(r)) / total

    def bw(g, grads):
        d = g * w * np.sign(r) / total
        _push(grads, pred, d)
        _push(grads, target, -d)

    return _make(np.asarray(value), (pred, target), bw)


def huber_loss(pred, target, cfg: HuberConfig = HuberConfig(), weight=None) -> Tensor:
    pred, target = as_tensor(pred), as_tensor(target)
    w, total = _check(pred, target, weight)
    rho = cfg.rho
    r = pred.data - target.data
    a = np.abs(r)
    quad = a <= rho
    per = np.where(quad, 0.5 * r * r, rho * (a - 0.5 * rho))
    value = np.sum(w * per) / total

    def bw(g, grads):
        d = g * w * np.where(quad, r, rho * np.sign(r)) / total
        _push(grads, pred, d)
        _push(grads, target, -d)

    return _make(np.asarray(value), (pred, target), bw)
