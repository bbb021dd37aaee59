"""
Bound Verification Models.

Report envelope for one theorem or lemma instance, the bounded loss
definition, and the typed inputs of the four lemma checks.
"""

from __future__ import annotations

from typing import Any, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.errors import InputValidationError
from app.models.enums import LossKind

__all__ = [
    "BoundReport",
    "BoundedLoss",
    "Lemma1Instance",
    "Lemma2Instance",
    "Lemma3Instance",
    "Lemma4Instance",
    "LemmaInstance",
]

# Reported terms must add up to rhs within this tolerance.
_TERM_SUM_TOL: float = 1e-10

MetadataValue = Union[float, int, str, bool, None]


class BoundReport(BaseModel):
    """LHS, RHS, per-term decomposition and slack of one bound instance."""

    model_config = ConfigDict(frozen=True)

    name: str
    lhs: float
    rhs: float
    terms: dict[str, float]
    slack: float
    seed: Optional[int] = None
    metadata: dict[str, MetadataValue] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check_decomposition(self) -> "BoundReport":
        if abs(sum(self.terms.values()) - self.rhs) > _TERM_SUM_TOL:
            raise InputValidationError(f"{self.name}: terms do not sum to rhs.")
        if abs((self.rhs - self.lhs) - self.slack) > _TERM_SUM_TOL:
            raise InputValidationError(f"{self.name}: slack must equal rhs - lhs.")
        return self

    @classmethod
    def build(
        cls,
        name: str,
        lhs: float,
        terms: dict[str, float],
        seed: Optional[int] = None,
        metadata: Optional[dict[str, MetadataValue]] = None,
    ) -> "BoundReport":
        """Assemble a report, deriving rhs and slack from the terms."""
        rhs = float(sum(terms.values()))
        return cls(
            name=name,
            lhs=float(lhs),
            rhs=rhs,
            terms={k: float(v) for k, v in terms.items()},
            slack=rhs - float(lhs),
            seed=seed,
            metadata=metadata or {},
        )

    def holds(self, tol: float = 1e-9) -> bool:
        return self.slack >= -tol


class BoundedLoss(BaseModel):
    """A loss with values in [0, cap]."""

    model_config = ConfigDict(frozen=True)

    cap: float = Field(gt=0)
    kind: LossKind = LossKind.BOUNDED_CROSS_ENTROPY

    @model_validator(mode="after")
    def _check_cap(self) -> "BoundedLoss":
        if self.kind == LossKind.ZERO_ONE and self.cap < 1.0:
            raise InputValidationError("zero_one loss takes values up to 1; cap must be >= 1.")
        return self


class _ArrayModel(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @field_validator("*", mode="before")
    @classmethod
    def _as_array(cls, value: Any) -> Any:
        if isinstance(value, (list, tuple, np.ndarray)):
            return np.array(value, dtype=np.float64)
        return value


class Lemma1Instance(_ArrayModel):
    """Bounded function *f* on a finite space and two laws *p*, *q* over it."""

    f: np.ndarray
    p: np.ndarray
    q: np.ndarray
    cap: float = Field(gt=0)


class Lemma2Instance(_ArrayModel):
    """Joint p(x, y) as an |X|×|Y| table."""

    joint: np.ndarray


class Lemma3Instance(_ArrayModel):
    """Two pairs of laws: (P_j, P'_j) on one domain and (P_i, P'_i) on another."""

    p_j: np.ndarray
    p_j_prime: np.ndarray
    p_i: np.ndarray
    p_i_prime: np.ndarray


class Lemma4Instance(_ArrayModel):
    """Joint p(x, y, d, g) as a 4-way table."""

    joint: np.ndarray


LemmaInstance = Union[Lemma1Instance, Lemma2Instance, Lemma3Instance, Lemma4Instance]
