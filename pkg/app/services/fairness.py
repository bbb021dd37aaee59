"""
Group Fairness Metrics.

Empirical Equalized Odds (EOD) and Equal Opportunity (EO) violations and
accuracy over hard predictions with group annotations.  Both violations
use the normalization C^D = 2 / (|Y| |G| (|G| − 1)) over unordered group
pairs; a pair is skipped when either of its (y, g) cells is empty.
"""

from __future__ import annotations

import numpy as np
from numpy.typing import NDArray

from app.errors import DegenerateEvaluationError
from app.models.batch_models import EvalBatch, FairnessReport, PredictionTable

__all__ = [
    "accuracy",
    "argmax_predictions",
    "conditional_pred_dists",
    "eo",
    "eo_from_conditionals",
    "eod",
    "eod_from_conditionals",
    "fairness_report",
    "pair_normalizer",
]


def pair_normalizer(n_labels: int, n_groups: int) -> float:
    """C^D = 2 / (|Y| |G| (|G| − 1)); zero when there is a single group."""
    if n_groups < 2:
        return 0.0
    return 2.0 / (n_labels * n_groups * (n_groups - 1))


def argmax_predictions(scores: NDArray[np.float64]) -> NDArray[np.int64]:
    """Row-wise argmax; ties go to the lowest label id."""
    return np.argmax(scores, axis=1).astype(np.int64)


# --- 1. Conditional prediction tables ---

def conditional_pred_dists(batch: EvalBatch) -> PredictionTable:
    """Empirical p̂(ŷ | y, g) per cell, with a mask of empty cells."""
    n_labels = int(batch.n_labels)
    n_groups = int(batch.n_groups)
    counts = np.zeros((n_labels, n_groups, n_labels), dtype=np.float64)
    np.add.at(counts, (batch.y_true, batch.g, batch.y_pred), 1.0)
    cell_counts = counts.sum(axis=2)
    empty = cell_counts == 0
    probs = np.divide(
        counts,
        cell_counts[:, :, None],
        out=np.zeros_like(counts),
        where=~empty[:, :, None],
    )
    return PredictionTable(probs=probs, counts=cell_counts, empty=empty)


def eod_from_conditionals(
    cond: NDArray[np.float64], present: NDArray[np.bool_]
) -> tuple[float, int, int]:
    """C^D Σ_y Σ_{g<g'} TV(P(ŷ|y,g), P(ŷ|y,g')) over present pairs.

    *cond* is indexed ``[y, g, ŷ]``.  Returns (value, pairs_used, pairs_skipped).
    """
    n_labels, n_groups = present.shape
    total = 0.0
    used = skipped = 0
    for y in range(n_labels):
        for g in range(n_groups):
            for h in range(g + 1, n_groups):
                if not (present[y, g] and present[y, h]):
                    skipped += 1
                    continue
                total += 0.5 * float(np.abs(cond[y, g] - cond[y, h]).sum())
                used += 1
    return pair_normalizer(n_labels, n_groups) * total, used, skipped


def eo_from_conditionals(
    cond: NDArray[np.float64], present: NDArray[np.bool_]
) -> tuple[float, int, int]:
    """C^D Σ_y Σ_{g<g'} |TPR_{y,g} − TPR_{y,g'}| with TPR_{y,g} = P(ŷ=y | y, g)."""
    n_labels, n_groups = present.shape
    total = 0.0
    used = skipped = 0
    for y in range(n_labels):
        for g in range(n_groups):
            for h in range(g + 1, n_groups):
                if not (present[y, g] and present[y, h]):
                    skipped += 1
                    continue
                total += abs(float(cond[y, g, y]) - float(cond[y, h, y]))
                used += 1
    return pair_normalizer(n_labels, n_groups) * total, used, skipped


# --- 2. Metrics ---

def _violation(batch: EvalBatch, which: str) -> tuple[float, int, int]:
    table = conditional_pred_dists(batch)
    compute = eod_from_conditionals if which == "eod" else eo_from_conditionals
    value, used, skipped = compute(table.probs, ~table.empty)
    if used == 0:
        raise DegenerateEvaluationError(
            f"{which}: no (y, g, g') triple has both cells populated."
        )
    return min(1.0, value), used, skipped


def eod(batch: EvalBatch) -> float:
    """Empirical Equalized Odds violation in [0, 1]."""
    return _violation(batch, "eod")[0]


def eo(batch: EvalBatch) -> float:
    """Empirical Equal Opportunity violation (TPR gaps) in [0, 1]."""
    return _violation(batch, "eo")[0]


def accuracy(batch: EvalBatch) -> float:
    """Fraction of rows with y_pred == y_true."""
    if batch.n == 0:
        return 0.0
    return float(np.mean(batch.y_pred == batch.y_true))


def fairness_report(batch: EvalBatch) -> FairnessReport:
    """Accuracy, EOD and EO (raw and ×100) with pair coverage diagnostics."""
    eod_value, used, skipped = _violation(batch, "eod")
    eo_value, _, _ = _violation(batch, "eo")
    return FairnessReport(
        n=batch.n,
        accuracy=accuracy(batch),
        eod=eod_value,
        eo=eo_value,
        eod_percent=100.0 * eod_value,
        eo_percent=100.0 * eo_value,
        pairs_used=used,
        pairs_skipped=skipped,
    )
