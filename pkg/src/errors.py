"""
Exception hierarchy shared by every package under src/.

Library code raises these; only app.py turns them into exit codes.
"""

from typing import Optional


class FrostError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(FrostError):
    """Operand shapes do not satisfy an operation's contract."""


class ParameterError(FrostError):
    """A scalar parameter is outside its valid range."""


class DomainError(FrostError):
    """An input lies outside the mathematical domain of an operation."""


class NonFiniteError(FrostError):
    """An operation produced NaN or Inf."""

    def __init__(self, op: str, message: Optional[str] = None):
        self.op = op
        super().__init__(message or f"non-finite values produced by '{op}'")


class ValidationError(FrostError):
    """Data or labels violate a documented contract."""


class ParseError(FrostError):
    """A document or CSV file could not be parsed."""

    def __init__(self, message: str, row: Optional[int] = None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class LookupFailure(FrostError, KeyError):
    """A requested key (class id, arm name, artifact) does not exist."""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


class ConfigurationError(FrostError):
    """Invalid configuration, naming the offending field or switch."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class DivergenceError(FrostError):
    """Training produced a non-finite loss term."""

    def __init__(self, term: str, stage: str = "", epoch: Optional[int] = None):
        self.term = term
        self.stage = stage
        self.epoch = epoch
        where = f" during {stage}" if stage else ""
        when = f" at epoch {epoch}" if epoch is not None else ""
        super().__init__(f"loss term '{term}' became non-finite{where}{when}")
