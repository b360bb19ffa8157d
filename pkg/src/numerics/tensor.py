"""
Reverse-mode differentiation over float64 numpy arrays.

A ``Tensor`` records the operation that produced it together with a closure
that pushes its gradient back to its parents. ``backward`` on a scalar output
walks the recorded graph in reverse topological order.
"""
from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from src.common.exceptions import NonFiniteError, ShapeError
from src.core.config import settings


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        _parents: tuple["Tensor", ...] = (),
        op: str = "",
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.op = op
        self._parents = _parents
        self._backward: Callable[[], None] = lambda: None

    # ------------------------------------------------------------------
    # Basic properties
    # ------------------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    # ------------------------------------------------------------------
    # Graph bookkeeping
    # ------------------------------------------------------------------

    def _accumulate(self, grad: np.ndarray) -> None:
        if not self.requires_grad:
            return
        grad = _unbroadcast(grad, self.data.shape)
        if self.grad is None:
            self.grad = grad.copy()
        else:
            self.grad = self.grad + grad

    def backward(self) -> None:
        """
        Fill ``grad`` of every reachable tensor that requires it with
        d(self)/d(tensor). Gradients accumulate across calls.
        """
        if self.data.size != 1:
            raise ShapeError(f"backward needs a scalar output, got shape {self.shape}")
        if not self.requires_grad:
            return

        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
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
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))

        self._accumulate(np.ones_like(self.data))
        for node in reversed(order):
            node._backward()

    # ------------------------------------------------------------------
    # Operators
    # ------------------------------------------------------------------

    def __add__(self, other) -> "Tensor":
        return add(self, other)

    def __radd__(self, other) -> "Tensor":
        return add(other, self)

    def __sub__(self, other) -> "Tensor":
        return sub(self, other)

    def __rsub__(self, other) -> "Tensor":
        return sub(other, self)

    def __mul__(self, other) -> "Tensor":
        return mul(self, other)

    def __rmul__(self, other) -> "Tensor":
        return mul(other, self)

    def __truediv__(self, other) -> "Tensor":
        return div(self, other)

    def __rtruediv__(self, other) -> "Tensor":
        return div(other, self)

    def __neg__(self) -> "Tensor":
        return mul(self, -1.0)

    def __matmul__(self, other) -> "Tensor":
        return matmul(self, other)

    def __getitem__(self, index) -> "Tensor":
        return take(self, index)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Tensor":
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)


# ----------------------------------------------------------------------
# Helpers
# ----------------------------------------------------------------------

def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _make(data: np.ndarray, parents: Sequence[Tensor], op: str) -> Tensor:
    if settings.FINITE_CHECKS and not np.all(np.isfinite(data)):
        raise NonFiniteError(f"non-finite value produced by '{op}'")
    requires_grad = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=requires_grad, _parents=tuple(parents) if requires_grad else (), op=op)


# ----------------------------------------------------------------------
# Elementwise arithmetic
# ----------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = _make(a.data + b.data, (a, b), "add")

    def _backward():
        a._accumulate(out.grad)
        b._accumulate(out.grad)

    out._backward = _backward
    return out


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = _make(a.data - b.data, (a, b), "sub")

    def _backward():
        a._accumulate(out.grad)
        b._accumulate(-out.grad)

    out._backward = _backward
    return out


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = _make(a.data * b.data, (a, b), "mul")

    def _backward():
        a._accumulate(out.grad * b.data)
        b._accumulate(out.grad * a.data)

    out._backward = _backward
    return out


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = _make(a.data / b.data, (a, b), "div")

    def _backward():
        a._accumulate(out.grad / b.data)
        b._accumulate(-out.grad * a.data / (b.data * b.data))

    out._backward = _backward
    return out


def square(a) -> Tensor:
    a = as_tensor(a)
    out = _make(a.data * a.data, (a,), "square")

    def _backward():
        a._accumulate(out.grad * 2.0 * a.data)

    out._backward = _backward
    return out


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out = _make(a.data @ b.data, (a, b), "matmul")

    def _backward():
        a._accumulate(out.grad @ b.data.T)
        b._accumulate(a.data.T @ out.grad)

    out._backward = _backward
    return out


# ----------------------------------------------------------------------
# Nonlinearities
# ----------------------------------------------------------------------

def exp(a) -> Tensor:
    a = as_tensor(a)
    value = np.exp(a.data)
    out = _make(value, (a,), "exp")

    def _backward():
        a._accumulate(out.grad * value)

    out._backward = _backward
    return out


def log(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        value = np.log(a.data)
    out = _make(value, (a,), "log")

    def _backward():
        a._accumulate(out.grad / a.data)

    out._backward = _backward
    return out


def tanh(a) -> Tensor:
    a = as_tensor(a)
    value = np.tanh(a.data)
    out = _make(value, (a,), "tanh")

    def _backward():
        a._accumulate(out.grad * (1.0 - value * value))

    out._backward = _backward
    return out


def atanh(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        value = np.arctanh(a.data)
    out = _make(value, (a,), "atanh")

    def _backward():
        a._accumulate(out.grad / (1.0 - a.data * a.data))

    out._backward = _backward
    return out


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so neither branch overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    value = _sigmoid(a.data)
    out = _make(value, (a,), "sigmoid")

    def _backward():
        a._accumulate(out.grad * value * (1.0 - value))

    out._backward = _backward
    return out


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    out = _make(a.data * mask, (a,), "relu")

    def _backward():
        a._accumulate(out.grad * mask)

    out._backward = _backward
    return out


def silu(a) -> Tensor:
    a = as_tensor(a)
    sig = _sigmoid(a.data)
    out = _make(a.data * sig, (a,), "silu")

    def _backward():
        a._accumulate(out.grad * (sig + a.data * sig * (1.0 - sig)))

    out._backward = _backward
    return out


def identity(a) -> Tensor:
    return as_tensor(a)


ACTIVATIONS: dict[str, Callable[[Tensor], Tensor]] = {
    "tanh": tanh,
    "relu": relu,
    "silu": silu,
    "sigmoid": sigmoid,
    "identity": identity,
}


# ----------------------------------------------------------------------
# Reductions and shape ops
# ----------------------------------------------------------------------

def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = _make(np.sum(a.data, axis=axis, keepdims=keepdims), (a,), "sum")

    def _backward():
        grad = out.grad
        if axis is not None and not keepdims:
            grad = np.expand_dims(grad, axis)
        a._accumulate(np.broadcast_to(grad, a.data.shape))

    out._backward = _backward
    return out


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = a.data.size if axis is None else np.prod([a.data.shape[ax] for ax in np.atleast_1d(axis)])
    return tsum(a, axis=axis, keepdims=keepdims) * (1.0 / float(count))


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out = _make(a.data.reshape(shape), (a,), "reshape")

    def _backward():
        a._accumulate(out.grad.reshape(a.data.shape))

    out._backward = _backward
    return out


def take(a, index) -> Tensor:
    a = as_tensor(a)
    out = _make(a.data[index], (a,), "index")

    def _backward():
        grad = np.zeros_like(a.data)
        np.add.at(grad, index, out.grad)
        a._accumulate(grad)

    out._backward = _backward
    return out


def concat(tensors: Iterable, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = _make(np.concatenate([t.data for t in tensors], axis=axis), tensors, "concat")
    bounds = np.cumsum([t.data.shape[axis] for t in tensors])[:-1]

    def _backward():
        for t, piece in zip(tensors, np.split(out.grad, bounds, axis=axis)):
            t._accumulate(piece)

    out._backward = _backward
    return out


def log_softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    # the shift is a constant; log-sum-exp is invariant to it
    shift = Tensor(np.max(a.data, axis=axis, keepdims=True))
    shifted = a - shift
    return shifted - log(tsum(exp(shifted), axis=axis, keepdims=True))
