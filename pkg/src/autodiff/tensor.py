"""
Dense float64 tensors and the gradient tape
- Tensor: numpy-backed value with shape metadata and a requires_grad flag
- GradTape: ordered record of primitive operations, replayed backward
- GradientMap: gradients of a scalar loss keyed by leaf tensor
"""

import threading
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import NonFiniteError, ShapeError

BackwardFn = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]

_state = threading.local()


def _tape_stack() -> List["GradTape"]:
    stack = getattr(_state, "tapes", None)
    if stack is None:
        stack = []
        _state.tapes = stack
    return stack


def active_tape() -> Optional["GradTape"]:
    """Innermost tape entered on the calling thread, if any."""
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """A dense array of 64-bit floats that can take part in a GradTape."""

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        array = np.array(data, dtype=np.float64)
        if any(dim <= 0 for dim in array.shape):
            raise ShapeError(f"tensor dimensions must be positive, got {array.shape}")
        if not np.all(np.isfinite(array)):
            raise NonFiniteError("tensor", "tensor data must be finite")
        self.data = array
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single value, tensor has shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, name=self.name)

    def clone(self) -> "Tensor":
        return Tensor(self.data, requires_grad=self.requires_grad, name=self.name)

    # Operator sugar; the primitives live in ops.py.
    def __add__(self, other: "Tensor") -> "Tensor":
        from . import ops
        return ops.add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        from . import ops
        return ops.sub(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        from . import ops
        return ops.mul(self, other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        from . import ops
        return ops.matmul(self, other)

    def __neg__(self) -> "Tensor":
        from . import ops
        return ops.scale(self, -1.0)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"


def constant(data, name: str = "") -> Tensor:
    return Tensor(data, requires_grad=False, name=name)


def parameter(data, name: str = "") -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


@dataclass
class TapeRecord:
    op: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    backward: BackwardFn


class GradientMap(dict):
    """Gradients keyed by leaf tensor (identity), values are numpy arrays."""

    def of(self, tensor: Tensor) -> np.ndarray:
        grad = self.get(tensor)
        return np.zeros_like(tensor.data) if grad is None else grad

    def for_params(self, params: Iterable[Tensor]) -> List[np.ndarray]:
        return [self.of(p) for p in params]


@dataclass
class GradTape:
    """
    Ordered record of primitive operations executed while the tape is active.

    Use as a context manager; ops executed on the same thread inside the
    block are recorded. backward() replays the records in exact reverse order.
    """

    records: List[TapeRecord] = field(default_factory=list)
    visited: List[int] = field(default_factory=list)

    def __enter__(self) -> "GradTape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()
        else:
            stack.remove(self)

    def record(self, op: str, inputs: Sequence[Tensor], output: Tensor, backward: BackwardFn) -> None:
        self.records.append(TapeRecord(op, tuple(inputs), output, backward))

    def backward(self, loss: Tensor) -> GradientMap:
        if loss.size != 1:
            raise ShapeError(f"backward() needs a scalar loss, got shape {loss.shape}")

        produced = {id(r.output) for r in self.records}
        grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        leaves: Dict[int, Tensor] = {}
        if loss.requires_grad and id(loss) not in produced:
            leaves[id(loss)] = loss

        self.visited = []
        for index in range(len(self.records) - 1, -1, -1):
            record = self.records[index]
            out_grad = grads.get(id(record.output))
            if out_grad is None:
                continue
            self.visited.append(index)
            input_grads = record.backward(out_grad)
            for tensor, grad in zip(record.inputs, input_grads):
                if grad is None or not tensor.requires_grad:
                    continue
                key = id(tensor)
                # a tensor used on several paths sums their contributions
                if key in grads:
                    grads[key] = grads[key] + grad
                else:
                    grads[key] = grad
                if key not in produced:
                    leaves[key] = tensor

        result = GradientMap()
        for key, tensor in leaves.items():
            result[tensor] = grads[key]
        return result
