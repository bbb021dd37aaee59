"""
Exact Probability Models.

``FiniteJoint`` is a dense joint law over (input, label, domain, group)
with designated source and target domains; ``Channel`` is a predictor
given as a row-stochastic table p(ŷ | x).
"""

from __future__ import annotations

import json
from typing import Any, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from app.config import get_config
from app.errors import InputValidationError

__all__ = ["Channel", "FiniteJoint"]

# Exact-table tolerance for normalization (tighter than user-facing checks).
_TABLE_TOL: float = 1e-12


class FiniteJoint(BaseModel):
    """Joint law p(x, y, d, g) with source domains D_S and one target d_T."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    probs: np.ndarray
    source_domains: tuple[int, ...]
    target_domain: int

    @field_validator("probs", mode="before")
    @classmethod
    def _as_array(cls, value: Any) -> np.ndarray:
        arr = np.array(value, dtype=np.float64)
        arr.setflags(write=False)
        return arr

    @model_validator(mode="after")
    def _check_law(self) -> "FiniteJoint":
        p = self.probs
        if p.ndim != 4:
            raise InputValidationError(f"probs must be a 4-way table, got {p.ndim} axes.")
        max_cells = get_config().MAX_JOINT_CELLS
        if p.size > max_cells:
            raise InputValidationError(
                f"joint has {p.size} cells; at most {max_cells} are enumerated."
            )
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise InputValidationError("probs must be finite and non-negative.")
        total = float(p.sum())
        if abs(total - 1.0) > _TABLE_TOL:
            raise InputValidationError(f"probs sum to {total!r}, expected 1 within 1e-12.")
        n_d = p.shape[2]
        if len(self.source_domains) < 2:
            raise InputValidationError("at least two source domains are required.")
        if len(set(self.source_domains)) != len(self.source_domains):
            raise InputValidationError("source_domains must be distinct.")
        if any(d < 0 or d >= n_d for d in self.source_domains):
            raise InputValidationError(f"source_domains must lie in [0, {n_d}).")
        if self.target_domain < 0 or self.target_domain >= n_d:
            raise InputValidationError(f"target_domain must lie in [0, {n_d}).")
        if self.target_domain in self.source_domains:
            raise InputValidationError("target_domain must not be a source domain.")
        return self

    # -- Shape accessors -------------------------------------------------------

    @property
    def sizes(self) -> tuple[int, int, int, int]:
        """(|X|, |Y|, |D|, |G|)."""
        n_x, n_y, n_d, n_g = self.probs.shape
        return int(n_x), int(n_y), int(n_d), int(n_g)

    @property
    def n_x(self) -> int:
        return self.sizes[0]

    @property
    def n_y(self) -> int:
        return self.sizes[1]

    @property
    def n_d(self) -> int:
        return self.sizes[2]

    @property
    def n_g(self) -> int:
        return self.sizes[3]

    # -- Serialization ---------------------------------------------------------

    def to_json(self) -> dict[str, object]:
        """JSON object with flat row-major probabilities at full precision."""
        return {
            "sizes": list(self.sizes),
            "probs": self.probs.ravel().tolist(),
            "source_domains": list(self.source_domains),
            "target_domain": self.target_domain,
        }

    @classmethod
    def from_json(cls, document: Union[str, dict[str, Any]]) -> "FiniteJoint":
        """Inverse of :meth:`to_json`; accepts the object or its JSON text."""
        data = json.loads(document) if isinstance(document, str) else document
        try:
            sizes = tuple(int(s) for s in data["sizes"])
            flat = np.asarray(data["probs"], dtype=np.float64)
            source = tuple(int(d) for d in data["source_domains"])
            target = int(data["target_domain"])
        except (KeyError, TypeError, ValueError) as exc:
            raise InputValidationError(f"malformed FiniteJoint document: {exc}") from exc
        if len(sizes) != 4 or any(s < 1 for s in sizes):
            raise InputValidationError("sizes must be four positive integers.")
        if flat.size != int(np.prod(sizes)):
            raise InputValidationError(
                f"probs has {flat.size} entries, sizes imply {int(np.prod(sizes))}."
            )
        return cls(probs=flat.reshape(sizes), source_domains=source, target_domain=target)


class Channel(BaseModel):
    """Predictor p(ŷ | x) as an |X|×|Y| row-stochastic table."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    cond_probs: np.ndarray
    deterministic: bool = False

    @field_validator("cond_probs", mode="before")
    @classmethod
    def _as_array(cls, value: Any) -> np.ndarray:
        arr = np.array(value, dtype=np.float64)
        arr.setflags(write=False)
        return arr

    @model_validator(mode="after")
    def _check_rows(self) -> "Channel":
        c = self.cond_probs
        if c.ndim != 2 or c.size == 0:
            raise InputValidationError(f"cond_probs must be a non-empty matrix, got {c.shape}.")
        if not np.all(np.isfinite(c)) or np.any(c < 0):
            raise InputValidationError("cond_probs must be finite and non-negative.")
        if np.any(np.abs(c.sum(axis=1) - 1.0) > _TABLE_TOL):
            raise InputValidationError("every cond_probs row must sum to 1 within 1e-12.")
        if self.deterministic and not np.all((c == 0.0) | (c == 1.0)):
            raise InputValidationError("a deterministic channel must have one-hot rows.")
        return self

    @property
    def n_x(self) -> int:
        return int(self.cond_probs.shape[0])

    @property
    def n_y(self) -> int:
        return int(self.cond_probs.shape[1])

    @classmethod
    def from_labels(cls, labels: list[int], n_y: int) -> "Channel":
        """Deterministic channel predicting ``labels[x]`` for each input x."""
        table = np.zeros((len(labels), n_y))
        table[np.arange(len(labels)), labels] = 1.0
        return cls(cond_probs=table, deterministic=True)

    @classmethod
    def identity(cls, n: int) -> "Channel":
        """ŷ = x, for |X| = |Y| = n."""
        return cls.from_labels(list(range(n)), n)

    @classmethod
    def constant(cls, n_x: int, n_y: int, label: int = 0) -> "Channel":
        """Always predicts *label*."""
        return cls.from_labels([label] * n_x, n_y)
