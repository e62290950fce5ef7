"""
SGD with momentum and a single step decay of the learning rate.
"""

import logging
from typing import Dict, List

import numpy as np

from ..autodiff import GradientMap, Tensor
from ..errors import NonFiniteError

logger = logging.getLogger(__name__)


class SGD:
    """
    v <- momentum * v + g ;  p <- p - lr * v

    Parameters the loss never reached keep their value and velocity.
    """

    def __init__(self, params: List[Tensor], lr: float, momentum: float = 0.9,
                 decay: float = 0.1, decay_epoch: int = 0):
        self.params = params
        self.base_lr = lr
        self.lr = lr
        self.momentum = momentum
        self.decay = decay
        self.decay_epoch = decay_epoch
        self._velocity: Dict[int, np.ndarray] = {}

    def set_epoch(self, epoch: int) -> float:
        self.lr = self.base_lr * (self.decay if 0 < self.decay_epoch <= epoch else 1.0)
        return self.lr

    def step(self, grads: GradientMap) -> None:
        for p in self.params:
            grad = grads.get(p)
            if grad is None:
                continue
            key = id(p)
            velocity = self._velocity.get(key)
            velocity = grad if velocity is None else self.momentum * velocity + grad
            self._velocity[key] = velocity
            updated = p.data - self.lr * velocity
            if not np.all(np.isfinite(updated)):
                raise NonFiniteError("sgd", f"update of '{p.name}' produced non-finite values")
            p.data = updated
