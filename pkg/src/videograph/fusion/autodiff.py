"""Minimal reverse-mode automatic differentiation over numpy arrays.

Every primitive builds a `Var` holding its value, its parents and a closure
that routes the incoming cotangent to those parents. `backward(root)` runs
the closures in reverse topological order. The primitive set is exactly what
the fusion stack needs: broadcasting arithmetic, matmul, row/segment softmax,
gather/scatter by row index, and a few pointwise nonlinearities.

All values are float64; gradients have the shape of their variable.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from ..errors import ShapeMismatchError


class Var:
    """A node in the computation graph."""

    __slots__ = ("value", "grad", "_parents", "_vjp")

    def __init__(
        self,
        value,
        parents: tuple["Var", ...] = (),
        vjp: Callable[[np.ndarray], None] | None = None,
    ):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self._parents = parents
        self._vjp = vjp

    @property
    def shape(self):
        return self.value.shape

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Var(shape={self.value.shape})"


def as_var(x) -> Var:
    return x if isinstance(x, Var) else Var(x)


def _accumulate(var: Var, grad: np.ndarray) -> None:
    if var.grad is None:
        var.grad = grad
    else:
        var.grad = var.grad + grad


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcasted cotangent back down to `shape`."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _topological(root: Var) -> list[Var]:
    order: list[Var] = []
    visited: set[int] = set()
    stack: list[tuple[Var, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(root: Var) -> None:
    """Populate .grad on every ancestor of `root` (seeded with ones)."""
    order = _topological(root)
    for node in order:
        node.grad = None
    root.grad = np.ones_like(root.value)
    for node in reversed(order):
        if node._vjp is not None and node.grad is not None:
            node._vjp(node.grad)


# -- arithmetic -----------------------------------------------------------------


def add(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    value = a.value + b.value

    def vjp(g):
        _accumulate(a, _unbroadcast(g, a.value.shape))
        _accumulate(b, _unbroadcast(g, b.value.shape))

    return Var(value, (a, b), vjp)


def sub(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    value = a.value - b.value

    def vjp(g):
        _accumulate(a, _unbroadcast(g, a.value.shape))
        _accumulate(b, _unbroadcast(-g, b.value.shape))

    return Var(value, (a, b), vjp)


def mul(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    value = a.value * b.value

    def vjp(g):
        _accumulate(a, _unbroadcast(g * b.value, a.value.shape))
        _accumulate(b, _unbroadcast(g * a.value, b.value.shape))

    return Var(value, (a, b), vjp)


def matmul(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    if a.value.ndim != 2 or b.value.ndim != 2:
        raise ShapeMismatchError(
            f"matmul expects 2-D operands, got {a.value.shape} @ {b.value.shape}"
        )
    if a.value.shape[1] != b.value.shape[0]:
        raise ShapeMismatchError(f"matmul mismatch {a.value.shape} @ {b.value.shape}")
    value = a.value @ b.value

    def vjp(g):
        _accumulate(a, g @ b.value.T)
        _accumulate(b, a.value.T @ g)

    return Var(value, (a, b), vjp)


def transpose(a) -> Var:
    a = as_var(a)

    def vjp(g):
        _accumulate(a, g.T)

    return Var(a.value.T, (a,), vjp)


def reshape(a, shape) -> Var:
    a = as_var(a)
    old_shape = a.value.shape

    def vjp(g):
        _accumulate(a, g.reshape(old_shape))

    return Var(a.value.reshape(shape), (a,), vjp)


def power(a, exponent: float) -> Var:
    a = as_var(a)
    value = a.value**exponent

    def vjp(g):
        _accumulate(a, g * exponent * a.value ** (exponent - 1))

    return Var(value, (a,), vjp)


def sum_(a, axis=None, keepdims: bool = False) -> Var:
    a = as_var(a)
    value = a.value.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(a, np.broadcast_to(g, a.value.shape).copy())

    return Var(value, (a,), vjp)


# -- pointwise nonlinearities -----------------------------------------------------


def sigmoid(a) -> Var:
    a = as_var(a)
    value = 1.0 / (1.0 + np.exp(-a.value))

    def vjp(g):
        _accumulate(a, g * value * (1.0 - value))

    return Var(value, (a,), vjp)


def leaky_relu(a, slope: float) -> Var:
    a = as_var(a)
    value = np.where(a.value > 0, a.value, slope * a.value)

    def vjp(g):
        _accumulate(a, g * np.where(a.value > 0, 1.0, slope))

    return Var(value, (a,), vjp)


# -- indexing and segments ---------------------------------------------------------


def take_rows(a, index: np.ndarray) -> Var:
    """Gather rows (axis 0); the adjoint scatter-adds back."""
    a = as_var(a)
    index = np.asarray(index, dtype=np.intp)
    value = a.value[index]

    def vjp(g):
        out = np.zeros_like(a.value)
        np.add.at(out, index, g)
        _accumulate(a, out)

    return Var(value, (a,), vjp)


def segment_sum(a, segments: np.ndarray, segment_count: int) -> Var:
    """Sum rows of `a` into `segment_count` buckets given per-row bucket ids."""
    a = as_var(a)
    segments = np.asarray(segments, dtype=np.intp)
    value = np.zeros((segment_count,) + a.value.shape[1:])
    np.add.at(value, segments, a.value)

    def vjp(g):
        _accumulate(a, g[segments])

    return Var(value, (a,), vjp)


def segment_softmax(scores, segments: np.ndarray, segment_count: int) -> Var:
    """Softmax of a 1-D score vector within each segment (max-shifted)."""
    scores = as_var(scores)
    segments = np.asarray(segments, dtype=np.intp)
    s = scores.value
    maxes = np.full(segment_count, -np.inf)
    np.maximum.at(maxes, segments, s)
    shifted = np.exp(s - maxes[segments]) if len(s) else np.zeros(0)
    denom = np.bincount(segments, weights=shifted, minlength=segment_count)
    value = shifted / denom[segments] if len(s) else np.zeros(0)

    def vjp(g):
        inner = np.bincount(segments, weights=value * g, minlength=segment_count)
        _accumulate(scores, value * (g - inner[segments]))

    return Var(value, (scores,), vjp)


def row_softmax(a) -> Var:
    """Softmax along the last axis of a 2-D matrix."""
    a = as_var(a)
    shifted = np.exp(a.value - a.value.max(axis=1, keepdims=True)) if a.value.size else np.zeros_like(a.value)
    value = shifted / shifted.sum(axis=1, keepdims=True) if a.value.size else np.zeros_like(a.value)

    def vjp(g):
        inner = (value * g).sum(axis=1, keepdims=True)
        _accumulate(a, value * (g - inner))

    return Var(value, (a,), vjp)


def concat_rows(parts: Sequence[Var]) -> Var:
    """Concatenate along axis 0."""
    parts = [as_var(p) for p in parts]
    if not parts:
        raise ValueError("concat_rows needs at least one part")
    value = np.concatenate([p.value for p in parts], axis=0)
    offsets = np.cumsum([0] + [p.value.shape[0] for p in parts])

    def vjp(g):
        for part, lo, hi in zip(parts, offsets, offsets[1:]):
            _accumulate(part, g[lo:hi])

    return Var(value, tuple(parts), vjp)


def narrow(a, start: int, stop: int) -> Var:
    """Slice along axis 0; the adjoint pads with zeros."""
    a = as_var(a)

    def vjp(g):
        out = np.zeros_like(a.value)
        out[start:stop] = g
        _accumulate(a, out)

    return Var(a.value[start:stop], (a,), vjp)


def narrow_cols(a, start: int, stop: int) -> Var:
    """Slice along axis 1; the adjoint pads with zeros."""
    a = as_var(a)

    def vjp(g):
        out = np.zeros_like(a.value)
        out[:, start:stop] = g
        _accumulate(a, out)

    return Var(a.value[:, start:stop], (a,), vjp)


def concat_cols(parts: Sequence[Var]) -> Var:
    """Concatenate along axis 1."""
    parts = [as_var(p) for p in parts]
    if not parts:
        raise ValueError("concat_cols needs at least one part")
    value = np.concatenate([p.value for p in parts], axis=1)
    offsets = np.cumsum([0] + [p.value.shape[1] for p in parts])

    def vjp(g):
        for part, lo, hi in zip(parts, offsets, offsets[1:]):
            _accumulate(part, g[:, lo:hi])

    return Var(value, tuple(parts), vjp)
