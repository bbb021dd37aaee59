"""
Domain Exceptions.

Every failure kind raised by the lab modules.  The CLI maps any
``FairDGError`` (and pydantic validation failures) to exit code 2.
"""

from __future__ import annotations

__all__ = [
    "BandwidthError",
    "ConfigurationError",
    "ContractError",
    "DegenerateBatchError",
    "DegenerateConditioningError",
    "DegenerateEvaluationError",
    "DegeneratePartitionError",
    "FairDGError",
    "InputValidationError",
]


class FairDGError(Exception):
    """Base class for all lab errors."""


class InputValidationError(FairDGError):
    """Malformed input: shape mismatch, non-normalized distribution, non-finite values."""


class DegenerateConditioningError(FairDGError):
    """A conditioning event has zero probability mass."""


class DegeneratePartitionError(FairDGError):
    """Every partition cell is too small for a dependence estimate."""


class DegenerateBatchError(DegeneratePartitionError):
    """A training batch leaves no usable partition cell."""


class DegenerateEvaluationError(FairDGError):
    """No (y, g, g') triple has both cells populated."""


class ContractError(FairDGError):
    """A documented precondition of the called operation does not hold."""


class ConfigurationError(FairDGError):
    """Configuration values that cannot produce a valid computation."""


class BandwidthError(FairDGError):
    """The kernel bandwidth heuristic degenerated to zero."""
