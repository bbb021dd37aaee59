"""
Sample Batch Models.

Finite samples consumed by the empirical estimators, the fairness
metrics and the trainer, plus the result envelopes those estimators
return.
"""

from __future__ import annotations

from typing import Any, Optional

import numpy as np
from numpy.typing import ArrayLike
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.errors import InputValidationError
from app.utils.math_utils import as_finite_matrix, as_label_vector

__all__ = [
    "ConditionalDcorResult",
    "EvalBatch",
    "FairnessReport",
    "PartitionLabels",
    "PredictionTable",
    "RepBatch",
    "SampleBatch",
]


class RepBatch(BaseModel):
    """n×k matrix of real-valued representations."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    values: np.ndarray

    @field_validator("values", mode="before")
    @classmethod
    def _as_matrix(cls, value: Any) -> np.ndarray:
        return as_finite_matrix(value, "values")

    @property
    def rows(self) -> int:
        return int(self.values.shape[0])

    @property
    def dim(self) -> int:
        return int(self.values.shape[1])

    @classmethod
    def of(cls, data: "RepBatch | ArrayLike") -> "RepBatch":
        """Wrap raw arrays; existing batches pass through."""
        return data if isinstance(data, RepBatch) else cls(values=data)


class PartitionLabels(BaseModel):
    """Label ids y (and optionally domain ids d) defining the cells I_y or I_{y,d}."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    y: np.ndarray
    d: Optional[np.ndarray] = None

    @field_validator("y", "d", mode="before")
    @classmethod
    def _as_ids(cls, value: Any) -> Optional[np.ndarray]:
        if value is None:
            return None
        return as_label_vector(value, name="partition labels")

    @model_validator(mode="after")
    def _check_lengths(self) -> "PartitionLabels":
        if self.d is not None and self.d.shape != self.y.shape:
            raise InputValidationError("y and d must have equal length.")
        return self

    @property
    def rows(self) -> int:
        return int(self.y.shape[0])

    def cells(self) -> list[np.ndarray]:
        """Row indices of every non-empty cell, ordered by (y) or (y, d)."""
        if self.d is None:
            keys = self.y
        else:
            keys = self.y * (int(self.d.max()) + 1 if self.d.size else 1) + self.d
        return [np.flatnonzero(keys == k) for k in np.unique(keys)]


class EvalBatch(BaseModel):
    """Predicted and true labels with group (and optional domain) annotations."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    y_true: np.ndarray
    y_pred: np.ndarray
    g: np.ndarray
    d: Optional[np.ndarray] = None
    n_labels: Optional[int] = Field(default=None, ge=1)
    n_groups: Optional[int] = Field(default=None, ge=1)

    @field_validator("y_true", "y_pred", "g", "d", mode="before")
    @classmethod
    def _as_ids(cls, value: Any) -> Optional[np.ndarray]:
        if value is None:
            return None
        return as_label_vector(value, name="evaluation ids")

    @model_validator(mode="after")
    def _check_shapes(self) -> "EvalBatch":
        n = self.y_true.shape[0]
        for name, arr in (("y_pred", self.y_pred), ("g", self.g), ("d", self.d)):
            if arr is not None and arr.shape[0] != n:
                raise InputValidationError(f"{name} has length {arr.shape[0]}, expected {n}.")
        labels_seen = int(max(self.y_true.max(initial=-1), self.y_pred.max(initial=-1))) + 1
        groups_seen = int(self.g.max(initial=-1)) + 1
        if self.n_labels is None:
            object.__setattr__(self, "n_labels", max(labels_seen, 1))
        elif labels_seen > self.n_labels:
            raise InputValidationError("a label id exceeds the declared |Y|.")
        if self.n_groups is None:
            object.__setattr__(self, "n_groups", max(groups_seen, 1))
        elif groups_seen > self.n_groups:
            raise InputValidationError("a group id exceeds the declared |G|.")
        return self

    @property
    def n(self) -> int:
        return int(self.y_true.shape[0])


class SampleBatch(BaseModel):
    """n rows of (features, label, domain id, group id)."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    x: np.ndarray
    y: np.ndarray
    d: np.ndarray
    g: np.ndarray

    @field_validator("x", mode="before")
    @classmethod
    def _as_features(cls, value: Any) -> np.ndarray:
        return as_finite_matrix(value, "x")

    @field_validator("y", "d", "g", mode="before")
    @classmethod
    def _as_ids(cls, value: Any) -> np.ndarray:
        return as_label_vector(value, name="sample ids")

    @model_validator(mode="after")
    def _check_rows(self) -> "SampleBatch":
        n = self.x.shape[0]
        if not (self.y.shape[0] == self.d.shape[0] == self.g.shape[0] == n):
            raise InputValidationError("x, y, d and g must have the same number of rows.")
        return self

    @property
    def n(self) -> int:
        return int(self.x.shape[0])

    def take(self, rows: ArrayLike) -> "SampleBatch":
        idx = np.asarray(rows, dtype=np.int64)
        return SampleBatch(x=self.x[idx], y=self.y[idx], d=self.d[idx], g=self.g[idx])

    @classmethod
    def concat(cls, batches: list["SampleBatch"]) -> "SampleBatch":
        return cls(
            x=np.concatenate([b.x for b in batches]),
            y=np.concatenate([b.y for b in batches]),
            d=np.concatenate([b.d for b in batches]),
            g=np.concatenate([b.g for b in batches]),
        )


class ConditionalDcorResult(BaseModel):
    """Conditional dCor with partition coverage diagnostics."""

    value: float = Field(ge=0.0, le=1.0)
    dcov2: float
    dvar2_a: float
    dvar2_b: float
    cells_used: int = Field(ge=0)
    cells_skipped: int = Field(ge=0)


class PredictionTable(BaseModel):
    """Empirical p̂(ŷ | y, g) indexed ``probs[y, g, ŷ]`` with empty-cell mask."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    probs: np.ndarray
    counts: np.ndarray
    empty: np.ndarray


class FairnessReport(BaseModel):
    """Accuracy and fairness violations of one evaluation batch."""

    n: int
    accuracy: float
    eod: float
    eo: float
    eod_percent: float
    eo_percent: float
    pairs_used: int
    pairs_skipped: int
