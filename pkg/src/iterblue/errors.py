"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class IterBlueError(Exception):
    """Base class for every error raised by the package."""


class DimensionError(IterBlueError, ValueError):
    """Operand shapes do not conform."""


class ContractError(IterBlueError, ValueError):
    """An input violates a documented precondition (symmetry, sign, finiteness)."""


class NotPositiveDefiniteError(ContractError):
    """A Cholesky factorization met a non-positive pivot."""


class RankError(IterBlueError, ValueError):
    """A least-squares design matrix is numerically rank deficient."""


class EstimationError(IterBlueError):
    """An iterative estimate failed part way; ``trace`` holds the iterates so far."""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace


class DivergenceError(EstimationError):
    """An iterate became non-finite or exploded in norm."""


class ConfigError(IterBlueError, ValueError):
    """Malformed or invalid experiment configuration text."""

    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        where = []
        if key is not None:
            where.append(f"key {key!r}")
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.key = key
        self.line = line
