"""Minimal reverse-mode autodiff over float64 numpy arrays.

Each op builds a node holding its parents and a closure that pushes the
upstream gradient into them. ``Tensor.backward`` walks the graph in reverse
topological order. Heavy layers (LSTM scans, convolutions) are fused ops with
hand-written backward passes so the Python overhead stays per-layer rather
than per-element.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

DTYPE = np.float64

# When set, every op result is scanned for NaN/Inf.
DEBUG_FINITE = False


class NumericsError(ValueError):
    """Raised on shape mismatches and other invalid tensor arguments."""


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self.name = name

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __len__(self) -> int:
        return len(self.data)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    # -- graph -------------------------------------------------------------
    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=DTYPE, copy=True)
        else:
            self.grad += g

    def backward(self, grad: np.ndarray | None = None) -> None:
        if not self.requires_grad:
            raise NumericsError("backward() on a tensor that does not require grad")
        if grad is None:
            if self.data.size != 1:
                raise NumericsError("backward() without grad needs a scalar output")
            grad = np.ones_like(self.data)
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        grads: dict[int, np.ndarray] = {id(self): np.asarray(grad, dtype=DTYPE)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node._accumulate(g)
                continue
            node._backward(g, grads)  # type: ignore[call-arg]

    # -- operators ---------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self, axis=None):
        return tmean(self, axis)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


def _make(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    if DEBUG_FINITE and not np.all(np.isfinite(data)):
        raise NumericsError("non-finite value produced by op")
    out = Tensor(data)
    live = tuple(p for p in parents if p.requires_grad)
    if live:
        out.requires_grad = True
        out._parents = live
        out._backward = backward
    return out


def _push(grads: dict, t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    key = id(t)
    if key in grads:
        grads[key] = grads[key] + g
    else:
        grads[key] = g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# -- elementwise -------------------------------------------------------------
def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g, grads):
        _push(grads, a, _unbroadcast(g, a.shape))
        _push(grads, b, _unbroadcast(g, b.shape))

    return _make(a.data + b.data, (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g, grads):
        _push(grads, a, _unbroadcast(g, a.shape))
        _push(grads, b, _unbroadcast(-g, b.shape))

    return _make(a.data - b.data, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g, grads):
        if a.requires_grad:
            _push(grads, a, _unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            _push(grads, b, _unbroadcast(g * a.data, b.shape))

    return _make(a.data * b.data, (a, b), bw)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[-1] != b.shape[0] or b.ndim != 2:
        raise NumericsError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def bw(g, grads):
        if a.requires_grad:
            _push(grads, a, g @ b.data.T)
        if b.requires_grad:
            a2 = a.data.reshape(-1, a.shape[-1])
            _push(grads, b, a2.T @ g.reshape(-1, g.shape[-1]))

    return _make(a.data @ b.data, (a, b), bw)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def bw(g, grads):
        _push(grads, x, g * mask)

    return _make(x.data * mask, (x,), bw)


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)

    def bw(g, grads):
        _push(grads, x, g * (1.0 - y * y))

    return _make(y, (x,), bw)


def sigmoid(x: Tensor) -> Tensor:
    y = expit(x.data)

    def bw(g, grads):
        _push(grads, x, g * y * (1.0 - y))

    return _make(y, (x,), bw)


def softplus(x: Tensor) -> Tensor:
    y = np.logaddexp(0.0, x.data)

    def bw(g, grads):
        _push(grads, x, g * expit(x.data))

    return _make(y, (x,), bw)


def tabs(x: Tensor) -> Tensor:
    # subgradient at 0 is 0
    s = np.sign(x.data)

    def bw(g, grads):
        _push(grads, x, g * s)

    return _make(np.abs(x.data), (x,), bw)


# -- reductions and shape ops -----------------------------------------------
def tsum(x: Tensor, axis=None) -> Tensor:
    def bw(g, grads):
        if axis is None:
            _push(grads, x, np.broadcast_to(g, x.shape).copy())
        else:
            _push(grads, x, np.broadcast_to(np.expand_dims(g, axis), x.shape).copy())

    return _make(np.sum(x.data, axis=axis), (x,), bw)


def tmean(x: Tensor, axis=None) -> Tensor:
    n = x.data.size if axis is None else x.shape[axis]
    return mul(tsum(x, axis), 1.0 / n)


def reshape(x: Tensor, shape) -> Tensor:
    def bw(g, grads):
        _push(grads, x, g.reshape(x.shape))

    return _make(x.data.reshape(shape), (x,), bw)


def getitem(x: Tensor, idx) -> Tensor:
    def bw(g, grads):
        full = np.zeros_like(x.data)
        np.add.at(full, idx, g)
        _push(grads, x, full)

    return _make(x.data[idx], (x,), bw)


def concat(xs: Sequence[Tensor], axis: int = -1) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    sizes = [x.shape[axis] for x in xs]
    cuts = np.cumsum(sizes)[:-1]

    def bw(g, grads):
        for x, piece in zip(xs, np.split(g, cuts, axis=axis)):
            _push(grads, x, piece)

    return _make(np.concatenate([x.data for x in xs], axis=axis), xs, bw)


def gather_rows(x: Tensor, index: np.ndarray) -> Tensor:
    """Per-batch row gather: ``out[b, j] = x[b, index[b, j]]`` for x of shape (B, N, C)."""
    index = np.asarray(index, dtype=np.int64)
    bidx = np.arange(x.shape[0])[:, None]

    def bw(g, grads):
        full = np.zeros_like(x.data)
        np.add.at(full, (bidx, index), g)
        _push(grads, x, full)

    return _make(x.data[bidx, index], (x,), bw)
