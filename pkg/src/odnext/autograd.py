"""Minimal reverse-mode autodiff over dense float64 numpy arrays.

Only the operations the recommendation model needs are provided; there is
no general broadcasting machinery beyond what those operations require.
Gradient correctness is enforced by finite-difference checks in the test
suite rather than by construction.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

# Graph construction can be switched off for inference / finite differences.
_grad_enabled = True


class no_grad:
    """Context manager that disables graph construction."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    """A node in the computation graph holding a float64 array."""

    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward")

    def __init__(
        self,
        value,
        requires_grad: bool = False,
        parents: tuple = (),
        backward: Callable[[np.ndarray], None] | None = None,
    ):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward

    @property
    def shape(self) -> tuple:
        return self.value.shape

    def accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def item(self) -> float:
        return float(self.value)

    def backward(self) -> None:
        """Backpropagate from this (scalar) tensor through the graph."""
        if self.value.ndim != 0:
            raise ValueError("backward() requires a scalar tensor")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.accumulate(np.ones_like(self.value))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # Operator sugar used throughout the model code.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __getitem__(self, key):
        return index(self, key)

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, requires_grad={self.requires_grad})"


def parameter(value) -> Tensor:
    """A trainable leaf tensor."""
    return Tensor(value, requires_grad=True)


def constant(value) -> Tensor:
    """A non-trainable leaf tensor."""
    return Tensor(value)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _track(a: Tensor, *rest: Tensor) -> bool:
    if not _grad_enabled:
        return False
    if a.requires_grad or a._parents:
        return True
    return any(t.requires_grad or t._parents for t in rest)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `g` down to `shape` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out_val = a.value + b.value
    if not _track(a, b):
        return Tensor(out_val)

    def backward(g):
        if a.requires_grad or a._parents:
            a.accumulate(_unbroadcast(g, a.value.shape))
        if b.requires_grad or b._parents:
            b.accumulate(_unbroadcast(g, b.value.shape))

    return Tensor(out_val, parents=(a, b), backward=backward)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out_val = a.value - b.value
    if not _track(a, b):
        return Tensor(out_val)

    def backward(g):
        if a.requires_grad or a._parents:
            a.accumulate(_unbroadcast(g, a.value.shape))
        if b.requires_grad or b._parents:
            b.accumulate(-_unbroadcast(g, b.value.shape))

    return Tensor(out_val, parents=(a, b), backward=backward)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out_val = a.value * b.value
    if not _track(a, b):
        return Tensor(out_val)

    def backward(g):
        if a.requires_grad or a._parents:
            a.accumulate(_unbroadcast(g * b.value, a.value.shape))
        if b.requires_grad or b._parents:
            b.accumulate(_unbroadcast(g * a.value, b.value.shape))

    return Tensor(out_val, parents=(a, b), backward=backward)


def scale(a, c: float) -> Tensor:
    a = _as_tensor(a)
    out_val = a.value * c
    if not _track(a):
        return Tensor(out_val)

    def backward(g):
        a.accumulate(g * c)

    return Tensor(out_val, parents=(a,), backward=backward)


def matmul(a, b) -> Tensor:
    """Matrix product: numpy @ semantics for 1-D/2-D operands plus a
    batched n-D left operand against a 2-D right operand."""
    a, b = _as_tensor(a), _as_tensor(b)
    out_val = a.value @ b.value
    if not _track(a, b):
        return Tensor(out_val)
    av, bv = a.value, b.value

    def backward(g):
        if a.requires_grad or a._parents:
            if bv.ndim == 1:
                a.accumulate(g * bv if av.ndim == 1 else g[..., None] * bv)
            else:
                a.accumulate(g @ bv.T)
        if b.requires_grad or b._parents:
            if av.ndim == 1:
                b.accumulate(g * av if bv.ndim == 1 else np.outer(av, g))
            elif av.ndim == 2:
                b.accumulate(av.T @ g)
            else:
                # batched: contract every axis but the last
                axes = tuple(range(av.ndim - 1))
                b.accumulate(np.tensordot(av, g, axes=(axes, axes)))

    return Tensor(out_val, parents=(a, b), backward=backward)


def index(a: Tensor, key) -> Tensor:
    """Basic slicing / integer indexing (views become copies)."""
    out_val = a.value[key]
    if not _track(a):
        return Tensor(np.array(out_val, copy=True))

    def backward(g):
        ga = np.zeros_like(a.value)
        np.add.at(ga, key, g)
        a.accumulate(ga)

    return Tensor(np.array(out_val, copy=True), parents=(a,), backward=backward)


def take_rows(a: Tensor, idx) -> Tensor:
    """Row gather; gradients accumulate additively into repeated rows."""
    idx = np.asarray(idx)
    out_val = a.value[idx]
    if not _track(a):
        return Tensor(out_val)

    def backward(g):
        ga = np.zeros_like(a.value)
        np.add.at(ga, idx, g)
        a.accumulate(ga)

    return Tensor(out_val, parents=(a,), backward=backward)


def take_per_row(a: Tensor, cols) -> Tensor:
    """out[i] = a[i, cols[i]] for a 2-D tensor."""
    cols = np.asarray(cols)
    rows = np.arange(a.value.shape[0])
    out_val = a.value[rows, cols]
    if not _track(a):
        return Tensor(out_val)

    def backward(g):
        ga = np.zeros_like(a.value)
        ga[rows, cols] = g
        a.accumulate(ga)

    return Tensor(out_val, parents=(a,), backward=backward)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    out_val = np.concatenate([t.value for t in tensors], axis=axis)
    if not _track(*tensors):
        return Tensor(out_val)
    sizes = [t.value.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad or t._parents:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                t.accumulate(g[tuple(sl)])

    return Tensor(out_val, parents=tuple(tensors), backward=backward)


def stack(tensors: Sequence[Tensor]) -> Tensor:
    """Stack equal-shape tensors along a new leading axis."""
    tensors = [_as_tensor(t) for t in tensors]
    out_val = np.stack([t.value for t in tensors])
    if not _track(*tensors):
        return Tensor(out_val)

    def backward(g):
        for i, t in enumerate(tensors):
            if t.requires_grad or t._parents:
                t.accumulate(g[i])

    return Tensor(out_val, parents=tuple(tensors), backward=backward)


def reshape(a: Tensor, shape) -> Tensor:
    out_val = a.value.reshape(shape)
    if not _track(a):
        return Tensor(out_val)
    orig = a.value.shape

    def backward(g):
        a.accumulate(g.reshape(orig))

    return Tensor(out_val, parents=(a,), backward=backward)


def sum_axis(a: Tensor, axis: int) -> Tensor:
    out_val = a.value.sum(axis=axis)
    if not _track(a):
        return Tensor(out_val)

    def backward(g):
        a.accumulate(np.expand_dims(g, axis) * np.ones_like(a.value))

    return Tensor(out_val, parents=(a,), backward=backward)


def mean_all(a: Tensor) -> Tensor:
    out_val = np.asarray(a.value.mean())
    if not _track(a):
        return Tensor(out_val)
    n = a.value.size

    def backward(g):
        a.accumulate(np.full_like(a.value, g / n))

    return Tensor(out_val, parents=(a,), backward=backward)


def sigmoid(a: Tensor) -> Tensor:
    out_val = 1.0 / (1.0 + np.exp(-a.value))
    if not _track(a):
        return Tensor(out_val)

    def backward(g):
        a.accumulate(g * out_val * (1.0 - out_val))

    return Tensor(out_val, parents=(a,), backward=backward)


def tanh(a: Tensor) -> Tensor:
    out_val = np.tanh(a.value)
    if not _track(a):
        return Tensor(out_val)

    def backward(g):
        a.accumulate(g * (1.0 - out_val * out_val))

    return Tensor(out_val, parents=(a,), backward=backward)


def leaky_relu(a: Tensor, slope: float = 0.01) -> Tensor:
    mask = a.value >= 0
    out_val = np.where(mask, a.value, slope * a.value)
    if not _track(a):
        return Tensor(out_val)

    def backward(g):
        a.accumulate(g * np.where(mask, 1.0, slope))

    return Tensor(out_val, parents=(a,), backward=backward)


def exp(a: Tensor) -> Tensor:
    out_val = np.exp(a.value)
    if not _track(a):
        return Tensor(out_val)

    def backward(g):
        a.accumulate(g * out_val)

    return Tensor(out_val, parents=(a,), backward=backward)


def log(a: Tensor) -> Tensor:
    out_val = np.log(a.value)
    if not _track(a):
        return Tensor(out_val)

    def backward(g):
        a.accumulate(g / a.value)

    return Tensor(out_val, parents=(a,), backward=backward)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable softmax (max subtraction along `axis`)."""
    shifted = a.value - a.value.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_val = e / e.sum(axis=axis, keepdims=True)
    if not _track(a):
        return Tensor(out_val)

    def backward(g):
        dot = (g * out_val).sum(axis=axis, keepdims=True)
        a.accumulate(out_val * (g - dot))

    return Tensor(out_val, parents=(a,), backward=backward)


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.value - a.value.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out_val = shifted - lse
    if not _track(a):
        return Tensor(out_val)
    sm = np.exp(out_val)

    def backward(g):
        a.accumulate(g - sm * g.sum(axis=axis, keepdims=True))

    return Tensor(out_val, parents=(a,), backward=backward)
