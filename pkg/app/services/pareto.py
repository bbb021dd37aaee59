"""
Pareto Fronts and the Hypervolume Indicator.

Non-dominated filtering of (V, U) solution sets (V minimized, U
maximized), min-max normalization, the two-objective hypervolume against
a reference point and compromise selection by distance to the utopia
point.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np

from app.errors import ContractError, InputValidationError
from app.models.enums import FairnessMetric
from app.models.pareto_models import FrontBounds, FrontConfig, FrontReport, TradeoffPoint

__all__ = [
    "dominates",
    "front_report",
    "hvi",
    "normalize_front",
    "pareto_front",
    "select_global_criterion",
]

# Distances closer than this are treated as tied in the compromise selection.
_TIE_TOL: float = 1e-12


def dominates(a: TradeoffPoint, b: TradeoffPoint) -> bool:
    """Weak domination: *a* is no worse on both axes and differs from *b*."""
    no_worse = a.v <= b.v and a.u >= b.u
    return no_worse and (a.v, a.u) != (b.v, b.u)


def _deduplicate(points: Sequence[TradeoffPoint]) -> list[TradeoffPoint]:
    """One representative per (V, U) value, the one with the smallest λ."""
    best: dict[tuple[float, float], TradeoffPoint] = {}
    for point in points:
        key = (point.v, point.u)
        if key not in best or point.lam < best[key].lam:
            best[key] = point
    return list(best.values())


def pareto_front(points: Sequence[TradeoffPoint]) -> list[TradeoffPoint]:
    """Non-dominated subset sorted by ascending V (and therefore ascending U)."""
    if not points:
        raise InputValidationError("pareto_front needs at least one point.")
    candidates = _deduplicate(points)
    v = np.array([p.v for p in candidates])
    u = np.array([p.u for p in candidates])
    # dominated[i] is True when some j is no worse on both axes and better on one
    no_worse = (v[:, None] <= v[None, :]) & (u[:, None] >= u[None, :])
    strictly = (v[:, None] < v[None, :]) | (u[:, None] > u[None, :])
    dominated = np.any(no_worse & strictly, axis=0)
    front = [p for p, out in zip(candidates, dominated) if not out]
    return sorted(front, key=lambda p: (p.v, p.u))


def normalize_front(
    front: Sequence[TradeoffPoint], bounds: Optional[FrontBounds] = None
) -> list[TradeoffPoint]:
    """Affine map of each coordinate onto [0, 1]; a zero range maps to 0."""
    if not front:
        return []
    b = bounds if bounds is not None else FrontBounds.of(front)
    dv = b.v_max - b.v_min
    du = b.u_max - b.u_min
    return [
        TradeoffPoint(
            v=(p.v - b.v_min) / dv if dv > 0 else 0.0,
            u=(p.u - b.u_min) / du if du > 0 else 0.0,
            lam=p.lam,
        )
        for p in front
    ]


def hvi(norm_front: Sequence[TradeoffPoint], cfg: FrontConfig) -> tuple[float, float]:
    """Dominated area up to the reference point, raw and as a percentage of the box.

    Sums the rectangles (V_{i+1} − V_i)(U_i − U_ref) with V_{n+1} = V_ref.
    The input must be ascending in V and in U.
    """
    v_ref, u_ref = cfg.ref_point
    if not norm_front:
        return 0.0, 0.0
    for prev, cur in zip(norm_front, norm_front[1:]):
        if not (cur.v > prev.v and cur.u >= prev.u):
            raise ContractError("hvi expects a front sorted by ascending V and U.")
    raw = 0.0
    edges = [p.v for p in norm_front[1:]] + [v_ref]
    for point, right in zip(norm_front, edges):
        width = min(right, v_ref) - min(point.v, v_ref)
        height = point.u - u_ref
        if width > 0 and height > 0:
            raw += width * height
    return raw, raw * 100.0 / cfg.box_area


def select_global_criterion(norm_front: Sequence[TradeoffPoint], cfg: FrontConfig) -> int:
    """Index of the point closest to the utopia point in L2 distance.

    Ties go to the smaller V, then to the smaller index.
    """
    if not norm_front:
        raise InputValidationError("cannot select from an empty front.")
    v_star, u_star = cfg.utopia
    best = 0
    best_dist = math.hypot(norm_front[0].v - v_star, u_star - norm_front[0].u)
    for i, point in enumerate(norm_front[1:], start=1):
        dist = math.hypot(point.v - v_star, u_star - point.u)
        if math.isclose(dist, best_dist, rel_tol=0.0, abs_tol=_TIE_TOL):
            if point.v < norm_front[best].v:
                best, best_dist = i, dist
        elif dist < best_dist:
            best, best_dist = i, dist
    return best


def front_report(
    points: Sequence[TradeoffPoint],
    cfg: Optional[FrontConfig] = None,
    bounds: Optional[FrontBounds] = None,
    metric: FairnessMetric = FairnessMetric.EOD,
) -> FrontReport:
    """Front, HVI and selected solution of a solution set.

    Without explicit *bounds* the normalization range is the extremes of
    the whole solution set, not only of its front.
    """
    cfg = cfg or FrontConfig()
    front = pareto_front(points)
    used_bounds = bounds if bounds is not None else FrontBounds.of(list(points))
    normalized = normalize_front(front, used_bounds)
    raw, percent = hvi(normalized, cfg)
    index = select_global_criterion(normalized, cfg)
    return FrontReport(
        metric=metric,
        front=front,
        normalized=normalized,
        bounds=used_bounds,
        hvi_raw=raw,
        hvi_percent=percent,
        selected_index=index,
        selected=front[index],
    )
