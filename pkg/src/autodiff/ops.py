"""
Differentiable primitives over Tensor.

Every primitive validates shapes, checks its output is finite and, when a
tape is active and an input requires gradients, records a backward closure.
Broadcasting is limited to adding a bias vector to every row of a matrix.
"""

from typing import Optional, Sequence

import numpy as np

from .tensor import Tensor, active_tape
from ..errors import DomainError, NonFiniteError, ParameterError, ShapeError


def _emit(op: str, inputs: Sequence[Tensor], data: np.ndarray, backward) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(op)
    requires_grad = any(t.requires_grad for t in inputs)
    out = Tensor.__new__(Tensor)
    out.data = np.asarray(data, dtype=np.float64)
    out.requires_grad = requires_grad
    out.name = op
    tape = active_tape()
    if tape is not None and requires_grad:
        tape.record(op, inputs, out, backward)
    return out


def _require_2d(op: str, t: Tensor) -> None:
    if t.ndim != 2:
        raise ShapeError(f"{op} expects a matrix, got shape {t.shape}")


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    _require_2d("matmul", a)
    _require_2d("matmul", b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} x {b.shape}")
    a_data, b_data = a.data, b.data

    def backward(g):
        return g @ b_data.T, a_data.T @ g

    return _emit("matmul", (a, b), a_data @ b_data, backward)


def transpose(a: Tensor) -> Tensor:
    _require_2d("transpose", a)
    return _emit("transpose", (a,), a.data.T.copy(), lambda g: (g.T,))


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape == b.shape:
        return _emit("add", (a, b), a.data + b.data, lambda g: (g, g))
    if a.ndim == 2 and b.ndim == 1 and a.shape[1] == b.shape[0]:
        return _emit("add", (a, b), a.data + b.data, lambda g: (g, g.sum(axis=0)))
    raise ShapeError(f"add: cannot combine shapes {a.shape} and {b.shape}")


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("sub", a, b)
    return _emit("sub", (a, b), a.data - b.data, lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("mul", a, b)
    a_data, b_data = a.data, b.data
    return _emit("mul", (a, b), a_data * b_data, lambda g: (g * b_data, g * a_data))


def scale(a: Tensor, factor: float) -> Tensor:
    factor = float(factor)
    return _emit("scale", (a,), a.data * factor, lambda g: (g * factor,))


def shift(a: Tensor, offset: float) -> Tensor:
    """a + offset for a scalar constant offset."""
    offset = float(offset)
    return _emit("shift", (a,), a.data + offset, lambda g: (g,))


def relu(a: Tensor) -> Tensor:
    # derivative at exactly zero is 0
    mask = (a.data > 0).astype(np.float64)
    return _emit("relu", (a,), a.data * mask, lambda g: (g * mask,))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _emit("exp", (a,), out, lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0):
        raise DomainError("log requires strictly positive input")
    a_data = a.data
    return _emit("log", (a,), np.log(a_data), lambda g: (g / a_data,))


def sigmoid(a: Tensor) -> Tensor:
    out = np.where(
        a.data >= 0,
        1.0 / (1.0 + np.exp(-np.abs(a.data))),
        np.exp(-np.abs(a.data)) / (1.0 + np.exp(-np.abs(a.data))),
    )
    return _emit("sigmoid", (a,), out, lambda g: (g * out * (1.0 - out),))


def clamp(a: Tensor, low: float, high: float) -> Tensor:
    if low > high:
        raise ParameterError(f"clamp: low {low} exceeds high {high}")
    inside = ((a.data >= low) & (a.data <= high)).astype(np.float64)
    return _emit("clamp", (a,), np.clip(a.data, low, high), lambda g: (g * inside,))


def softmax(a: Tensor, temperature: float = 1.0) -> Tensor:
    """Softmax over the last axis of a vector or of every row of a matrix."""
    if not temperature > 0:
        raise ParameterError(f"softmax temperature must be positive, got {temperature}")
    if a.ndim not in (1, 2):
        raise ShapeError(f"softmax expects a vector or matrix, got shape {a.shape}")
    scaled = a.data / temperature
    shifted = np.exp(scaled - scaled.max(axis=-1, keepdims=True))
    out = shifted / shifted.sum(axis=-1, keepdims=True)

    def backward(g):
        inner = (g * out).sum(axis=-1, keepdims=True)
        return (out * (g - inner) / temperature,)

    return _emit("softmax", (a,), out, backward)


def total(a: Tensor, axis: Optional[int] = None) -> Tensor:
    """Sum over all entries (axis=None) or along one axis."""
    shape = a.shape
    if axis is None:
        return _emit("sum", (a,), np.array(a.data.sum()), lambda g: (np.full(shape, float(g)),))
    if axis not in range(a.ndim):
        raise ShapeError(f"sum: axis {axis} out of range for shape {shape}")

    def backward(g):
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return _emit("sum", (a,), a.data.sum(axis=axis), backward)


def mean(a: Tensor, axis: Optional[int] = None) -> Tensor:
    count = a.size if axis is None else a.shape[axis]
    return scale(total(a, axis), 1.0 / count)


def row_norm(a: Tensor) -> Tensor:
    """Euclidean norm of every row; the gradient of a zero row is zero."""
    _require_2d("row_norm", a)
    a_data = a.data
    norms = np.sqrt((a_data ** 2).sum(axis=1))

    def backward(g):
        safe = np.where(norms > 0, norms, 1.0)
        unit = np.where(norms[:, None] > 0, a_data / safe[:, None], 0.0)
        return (unit * g[:, None],)

    return _emit("row_norm", (a,), norms, backward)


def take_columns(a: Tensor, start: int, stop: int) -> Tensor:
    _require_2d("take_columns", a)
    if not 0 <= start < stop <= a.shape[1]:
        raise ShapeError(f"take_columns: [{start}, {stop}) outside {a.shape[1]} columns")
    shape = a.shape

    def backward(g):
        full = np.zeros(shape)
        full[:, start:stop] = g
        return (full,)

    return _emit("take_columns", (a,), a.data[:, start:stop].copy(), backward)
