"""Reverse-mode automatic differentiation over NumPy arrays.

A small tape: every operation returns a :class:`Tensor` holding its value,
its parents, and a closure that routes the output gradient to the parents.
``backward`` walks the graph once in reverse topological order. Dtype follows
the operands — float32 for training, float64 when checking gradients against
finite differences.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

Array = np.ndarray


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backprop")

    def __init__(self, data, requires_grad: bool = False):
        self.data: Array = np.asarray(data)
        self.requires_grad = requires_grad
        self.grad: Array | None = None
        self._parents: tuple["Tensor", ...] = ()
        self._backprop: Callable[[Array], None] | None = None

    # -- introspection -------------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, grad={self.requires_grad})"

    # -- operator sugar ------------------------------------------------------
    def __add__(self, other):
        return add(self, _wrap(other, self))

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, _wrap(other, self))

    __rmul__ = __mul__

    def __sub__(self, other):
        return add(self, neg(_wrap(other, self)))

    def __rsub__(self, other):
        return add(_wrap(other, self), neg(self))

    def __neg__(self):
        return neg(self)

    def __truediv__(self, other):
        return div(self, _wrap(other, self))

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    # -- gradient flow -------------------------------------------------------
    def _accumulate(self, g: Array):
        if not (self.requires_grad or self._parents):
            return
        g = _unbroadcast(g, self.data.shape)
        if self.grad is None:
            self.grad = g.astype(self.data.dtype, copy=True)
        else:
            self.grad = self.grad + g.astype(self.data.dtype, copy=False)

    def backward(self, grad: Array | None = None):
        if grad is None:
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
                if id(p) not in seen:
                    stack.append((p, False))
        self._accumulate(np.asarray(grad))
        for node in reversed(order):
            if node._backprop is not None and node.grad is not None:
                node._backprop(node.grad)


def _wrap(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.data.dtype))


def _unbroadcast(g: Array, shape: tuple[int, ...]) -> Array:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _make(data: Array, parents: Sequence[Tensor], backprop: Callable[[Array], None]) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad or p._parents for p in parents):
        out._parents = tuple(parents)
        out._backprop = backprop
    return out


def parameter(data, dtype=np.float32) -> Tensor:
    return Tensor(np.asarray(data, dtype=dtype), requires_grad=True)


def constant(data, dtype=None) -> Tensor:
    arr = np.asarray(data) if dtype is None else np.asarray(data, dtype=dtype)
    return Tensor(arr)


# ---------------------------------------------------------------------------
# Elementwise arithmetic

def add(a: Tensor, b: Tensor) -> Tensor:
    def backprop(g: Array):
        a._accumulate(g)
        b._accumulate(g)

    return _make(a.data + b.data, (a, b), backprop)


def neg(a: Tensor) -> Tensor:
    def backprop(g: Array):
        a._accumulate(-g)

    return _make(-a.data, (a,), backprop)


def mul(a: Tensor, b: Tensor) -> Tensor:
    def backprop(g: Array):
        a._accumulate(g * b.data)
        b._accumulate(g * a.data)

    return _make(a.data * b.data, (a, b), backprop)


def div(a: Tensor, b: Tensor) -> Tensor:
    def backprop(g: Array):
        a._accumulate(g / b.data)
        b._accumulate(-g * a.data / (b.data * b.data))

    return _make(a.data / b.data, (a, b), backprop)


# ---------------------------------------------------------------------------
# Linear algebra and shape

def matmul(a: Tensor, b: Tensor) -> Tensor:
    def backprop(g: Array):
        a._accumulate(np.matmul(g, np.swapaxes(b.data, -1, -2)))
        b._accumulate(np.matmul(np.swapaxes(a.data, -1, -2), g))

    return _make(np.matmul(a.data, b.data), (a, b), backprop)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    old = a.data.shape

    def backprop(g: Array):
        a._accumulate(g.reshape(old))

    return _make(a.data.reshape(shape), (a,), backprop)


def swapaxes(a: Tensor, ax1: int, ax2: int) -> Tensor:
    def backprop(g: Array):
        a._accumulate(np.swapaxes(g, ax1, ax2))

    return _make(np.swapaxes(a.data, ax1, ax2), (a,), backprop)


def concat(parts: Sequence[Tensor], axis: int = -1) -> Tensor:
    sizes = [p.data.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def backprop(g: Array):
        for p, piece in zip(parts, np.split(g, splits, axis=axis)):
            p._accumulate(piece)

    return _make(np.concatenate([p.data for p in parts], axis=axis), tuple(parts), backprop)


def getitem(a: Tensor, key) -> Tensor:
    def backprop(g: Array):
        full = np.zeros_like(a.data)
        full[key] = g
        a._accumulate(full)

    return _make(a.data[key], (a,), backprop)


def gather_rows(table: Tensor, idx: Array) -> Tensor:
    """table[idx] for a 2-D table; duplicate indices accumulate on backward."""
    idx = np.asarray(idx)

    def backprop(g: Array):
        full = np.zeros_like(table.data)
        np.add.at(full, idx.reshape(-1), g.reshape(-1, table.data.shape[-1]))
        table._accumulate(full)

    return _make(table.data[idx], (table,), backprop)


def segment_sum(a: Tensor, seg_ids: Array, num_segments: int) -> Tensor:
    """Sum rows of ``a`` into ``num_segments`` buckets along axis 0."""
    seg_ids = np.asarray(seg_ids)
    out = np.zeros((num_segments,) + a.data.shape[1:], dtype=a.data.dtype)
    np.add.at(out, seg_ids, a.data)

    def backprop(g: Array):
        a._accumulate(g[seg_ids])

    return _make(out, (a,), backprop)


# ---------------------------------------------------------------------------
# Reductions

def tsum(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    def backprop(g: Array):
        if axis is None:
            a._accumulate(np.broadcast_to(g, a.data.shape))
        else:
            ge = g if keepdims else np.expand_dims(g, axis)
            a._accumulate(np.broadcast_to(ge, a.data.shape))

    return _make(a.data.sum(axis=axis, keepdims=keepdims), (a,), backprop)


def tmean(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    count = a.data.size if axis is None else a.data.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), Tensor(np.asarray(1.0 / count, dtype=a.data.dtype)))


def tmax(a: Tensor, axis: int, keepdims: bool = False) -> Tensor:
    """Max along one axis; gradient routes to the first maximal entry."""
    arg = np.argmax(a.data, axis=axis)
    data = np.take_along_axis(a.data, np.expand_dims(arg, axis), axis=axis)

    def backprop(g: Array):
        ge = g if keepdims else np.expand_dims(g, axis)
        full = np.zeros_like(a.data)
        np.put_along_axis(full, np.expand_dims(arg, axis), ge, axis=axis)
        a._accumulate(full)

    out = data if keepdims else np.squeeze(data, axis=axis)
    return _make(out, (a,), backprop)


# ---------------------------------------------------------------------------
# Nonlinearities

def exp(a: Tensor) -> Tensor:
    e = np.exp(a.data)

    def backprop(g: Array):
        a._accumulate(g * e)

    return _make(e, (a,), backprop)


def log(a: Tensor) -> Tensor:
    def backprop(g: Array):
        a._accumulate(g / a.data)

    return _make(np.log(a.data), (a,), backprop)


def sqrt(a: Tensor) -> Tensor:
    r = np.sqrt(a.data)

    def backprop(g: Array):
        a._accumulate(g * (0.5 / r))

    return _make(r, (a,), backprop)


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.data)

    def backprop(g: Array):
        a._accumulate(g * (1.0 - t * t))

    return _make(t, (a,), backprop)


def sigmoid(a: Tensor) -> Tensor:
    s = 1.0 / (1.0 + np.exp(-np.clip(a.data, -60.0, 60.0)))
    s = s.astype(a.data.dtype, copy=False)

    def backprop(g: Array):
        a._accumulate(g * s * (1.0 - s))

    return _make(s, (a,), backprop)


def relu(a: Tensor) -> Tensor:
    pos = a.data > 0

    def backprop(g: Array):
        a._accumulate(g * pos)

    return _make(np.where(pos, a.data, 0.0).astype(a.data.dtype, copy=False), (a,), backprop)


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    pos = a.data > 0
    scale = np.where(pos, 1.0, slope).astype(a.data.dtype, copy=False)

    def backprop(g: Array):
        a._accumulate(g * scale)

    return _make(a.data * scale, (a,), backprop)


def elu(a: Tensor, alpha: float = 1.0) -> Tensor:
    neg_part = alpha * (np.exp(np.minimum(a.data, 0.0)) - 1.0)
    pos = a.data > 0
    data = np.where(pos, a.data, neg_part).astype(a.data.dtype, copy=False)

    def backprop(g: Array):
        a._accumulate(g * np.where(pos, 1.0, neg_part + alpha).astype(a.data.dtype, copy=False))

    return _make(data, (a,), backprop)
