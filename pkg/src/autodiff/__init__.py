"""
Reverse-mode autodiff over dense float64 tensors
"""

from .tensor import (
    Tensor,
    GradTape,
    GradientMap,
    TapeRecord,
    active_tape,
    constant,
    parameter,
)
from .ops import (
    matmul,
    transpose,
    add,
    sub,
    mul,
    scale,
    shift,
    relu,
    exp,
    log,
    sigmoid,
    clamp,
    softmax,
    total,
    mean,
    row_norm,
    take_columns,
)

__all__ = [
    'Tensor',
    'GradTape',
    'GradientMap',
    'TapeRecord',
    'active_tape',
    'constant',
    'parameter',
    'matmul',
    'transpose',
    'add',
    'sub',
    'mul',
    'scale',
    'shift',
    'relu',
    'exp',
    'log',
    'sigmoid',
    'clamp',
    'softmax',
    'total',
    'mean',
    'row_norm',
    'take_columns',
]
