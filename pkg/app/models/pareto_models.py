"""
Trade-off Front Models.

Points of a (fairness violation V, utility U) solution set, the
reference/utopia configuration of the hypervolume indicator, optional
fixed normalization bounds, and the report of one front.
"""

from __future__ import annotations

import math
from typing import Sequence

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.errors import InputValidationError
from app.models.enums import FairnessMetric

__all__ = ["FrontBounds", "FrontConfig", "FrontReport", "TradeoffPoint"]


class TradeoffPoint(BaseModel):
    """One solution: fairness violation *v* (minimized), utility *u* (maximized), weight λ."""

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    v: float
    u: float
    lam: float = Field(default=0.0, ge=0.0, lt=1.0, alias="lambda")

    @model_validator(mode="after")
    def _check_finite(self) -> "TradeoffPoint":
        if not (math.isfinite(self.v) and math.isfinite(self.u)):
            raise InputValidationError("V and U must be finite.")
        return self

    def as_row(self) -> dict[str, float]:
        return {"lambda": self.lam, "V": self.v, "U": self.u}


class FrontConfig(BaseModel):
    """Reference and utopia points of the normalized (V, U) plane."""

    model_config = ConfigDict(frozen=True)

    ref_point: tuple[float, float] = (1.1, -0.1)
    utopia: tuple[float, float] = (0.0, 1.0)

    @model_validator(mode="after")
    def _check_reference(self) -> "FrontConfig":
        v_ref, u_ref = self.ref_point
        if not (v_ref > 1.0 and u_ref < 0.0):
            raise InputValidationError("ref_point must satisfy v_ref > 1 and u_ref < 0.")
        v_star, u_star = self.utopia
        if not (v_star < v_ref and u_star > u_ref):
            raise InputValidationError("utopia must lie strictly inside the reference box.")
        return self

    @property
    def box_area(self) -> float:
        """Area between utopia and reference point; HVI percent is relative to it."""
        return (self.ref_point[0] - self.utopia[0]) * (self.utopia[1] - self.ref_point[1])


class FrontBounds(BaseModel):
    """Per-coordinate normalization range (v_min, v_max, u_min, u_max)."""

    model_config = ConfigDict(frozen=True)

    v_min: float
    v_max: float
    u_min: float
    u_max: float

    @model_validator(mode="after")
    def _check_order(self) -> "FrontBounds":
        if self.v_max < self.v_min or self.u_max < self.u_min:
            raise InputValidationError("bounds must satisfy min <= max per coordinate.")
        return self

    @classmethod
    def of(cls, points: Sequence[TradeoffPoint]) -> "FrontBounds":
        """Extremes of a solution set."""
        if not points:
            raise InputValidationError("cannot derive bounds from an empty solution set.")
        vs = [p.v for p in points]
        us = [p.u for p in points]
        return cls(v_min=min(vs), v_max=max(vs), u_min=min(us), u_max=max(us))


class FrontReport(BaseModel):
    """Front, normalized front, hypervolume and the selected compromise solution."""

    metric: FairnessMetric = FairnessMetric.EOD
    front: list[TradeoffPoint]
    normalized: list[TradeoffPoint]
    bounds: FrontBounds
    hvi_raw: float
    hvi_percent: float
    selected_index: int
    selected: TradeoffPoint

    def summary(self) -> dict[str, object]:
        """Output document: front rows, hvi raw/percent and the selected point."""
        return {
            "metric": str(self.metric),
            "front": [p.as_row() for p in self.front],
            "hvi_raw": self.hvi_raw,
            "hvi_percent": self.hvi_percent,
            "selected": self.selected.as_row(),
        }
