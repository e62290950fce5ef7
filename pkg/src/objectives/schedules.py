"""
Ramp-up weights for the discovery objective.
"""

import math
from dataclasses import dataclass

from ..errors import ParameterError

DEFAULT_MSE_WEIGHT = 5.0
DEFAULT_SELF_WEIGHT = 0.05
DEFAULT_RAMP_LENGTH = 50


@dataclass(frozen=True)
class RampUpSchedule:
    """gamma * exp(-5 (1 - min(t, T) / T)^2), reaching gamma exactly at t >= T."""
    weight: float
    length: int

    def __post_init__(self):
        if self.weight < 0:
            raise ParameterError(f"ramp-up weight must be non-negative, got {self.weight}")
        if self.length < 1:
            raise ParameterError(f"ramp-up length must be a positive epoch count, got {self.length}")

    def __call__(self, t: float) -> float:
        return ramp_up(self, t)

    def to_dict(self) -> dict:
        return {"weight": self.weight, "length": self.length}


def ramp_up(s: RampUpSchedule, t: float) -> float:
    if t < 0:
        raise ParameterError(f"epoch must be non-negative, got {t}")
    if t >= s.length:
        return float(s.weight)
    phase = 1.0 - t / s.length
    return float(s.weight * math.exp(-5.0 * phase * phase))
