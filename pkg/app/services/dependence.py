"""
Dependence Estimators.

Empirical distance correlation (plain and conditioned on a label
partition) and the biased HSIC V-statistic with Gaussian kernels.

Conditional estimators compute doubly-centred distance matrices inside
each partition cell, weight the per-cell sums by the squared empirical
cell probability and form the correlation ratio from the aggregates.
Cells with fewer than two rows are skipped and counted.
"""

from __future__ import annotations

import math
from typing import Union

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.spatial.distance import pdist, squareform

from app.errors import BandwidthError, DegeneratePartitionError, InputValidationError
from app.models.batch_models import ConditionalDcorResult, PartitionLabels, RepBatch
from app.utils.math_utils import as_finite_matrix

__all__ = [
    "conditional_dcor",
    "conditional_hsic",
    "dcor",
    "dcor_given_y",
    "dcor_given_y_d",
    "double_center",
    "hsic",
    "pairwise_distances",
]

# A side whose centered energy is at or below this fraction of its raw
# distance energy is treated as constant (denominator rule). Scale-free.
_DVAR_REL_TOL: float = 1e-24

# Smallest cell the HSIC estimator accepts.
_HSIC_MIN_ROWS: int = 4

Bandwidth = Union[float, str]


# --- 1. Distance matrices ---

def pairwise_distances(a: RepBatch | ArrayLike) -> NDArray[np.float64]:
    """Euclidean distance matrix of the rows of *a*."""
    values = RepBatch.of(a).values
    if values.shape[0] < 1:
        raise InputValidationError("a batch needs at least one row.")
    if values.shape[0] == 1:
        return np.zeros((1, 1))
    return squareform(pdist(values, metric="euclidean"))


def double_center(dist: ArrayLike) -> NDArray[np.float64]:
    """A_ij = a_ij − mean_i. − mean_.j + mean_..; rows and columns then sum to 0."""
    a = as_finite_matrix(dist, "dist")
    if a.shape[0] != a.shape[1]:
        raise InputValidationError(f"dist must be square, got {a.shape}.")
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-12):
        raise InputValidationError("dist must be symmetric.")
    return a - a.mean(axis=0)[None, :] - a.mean(axis=1)[:, None] + a.mean()


# --- 2. Distance correlation ---

def _paired(a: RepBatch | ArrayLike, b: RepBatch | ArrayLike) -> tuple[RepBatch, RepBatch]:
    ra, rb = RepBatch.of(a), RepBatch.of(b)
    if ra.rows != rb.rows:
        raise InputValidationError(f"batches have {ra.rows} and {rb.rows} rows.")
    return ra, rb


def _ratio_to_dcor(
    dcov2: float, dvar2_a: float, dvar2_b: float, ref_a: float, ref_b: float
) -> float:
    if dvar2_a <= _DVAR_REL_TOL * ref_a or dvar2_b <= _DVAR_REL_TOL * ref_b:
        return 0.0
    ratio = dcov2 / math.sqrt(dvar2_a * dvar2_b)
    return math.sqrt(min(max(ratio, 0.0), 1.0))


def conditional_dcor(
    za: RepBatch | ArrayLike, zb: RepBatch | ArrayLike, labels: PartitionLabels
) -> ConditionalDcorResult:
    """Distance correlation of *za* and *zb* within the cells of *labels*.

    Each cell c contributes p̂_c² · Σ(A_c ∘ B_c) / n_c², which equals
    Σ(A_c ∘ B_c) / n²; the variances aggregate the same way.
    """
    ra, rb = _paired(za, zb)
    if labels.rows != ra.rows:
        raise InputValidationError(f"labels have {labels.rows} rows, batches have {ra.rows}.")
    n = ra.rows
    s_ab = s_aa = s_bb = 0.0
    ref_a = ref_b = 0.0
    used = skipped = 0
    for rows in labels.cells():
        if rows.size < 2:
            skipped += 1
            continue
        dist_a = pairwise_distances(ra.values[rows])
        dist_b = pairwise_distances(rb.values[rows])
        a_c, b_c = double_center(dist_a), double_center(dist_b)
        ref_a += float((dist_a * dist_a).sum())
        ref_b += float((dist_b * dist_b).sum())
        s_ab += float((a_c * b_c).sum())
        s_aa += float((a_c * a_c).sum())
        s_bb += float((b_c * b_c).sum())
        used += 1
    if used == 0:
        raise DegeneratePartitionError("every partition cell has fewer than two rows.")
    dcov2, dvar2_a, dvar2_b = s_ab / n**2, s_aa / n**2, s_bb / n**2
    return ConditionalDcorResult(
        value=_ratio_to_dcor(dcov2, dvar2_a, dvar2_b, ref_a / n**2, ref_b / n**2),
        dcov2=dcov2,
        dvar2_a=dvar2_a,
        dvar2_b=dvar2_b,
        cells_used=used,
        cells_skipped=skipped,
    )


def dcor(a: RepBatch | ArrayLike, b: RepBatch | ArrayLike) -> float:
    """Empirical distance correlation in [0, 1]; 0 if either batch is constant."""
    ra, rb = _paired(a, b)
    if ra.rows < 2:
        raise InputValidationError("distance correlation needs at least two rows.")
    return conditional_dcor(ra, rb, PartitionLabels(y=np.zeros(ra.rows, dtype=np.int64))).value


def dcor_given_y(
    zd: RepBatch | ArrayLike, ze: RepBatch | ArrayLike, labels: PartitionLabels
) -> float:
    """dCor(Z_D, Z_E | Y) over the label cells I_y."""
    if labels.d is not None:
        labels = PartitionLabels(y=labels.y)
    return conditional_dcor(zd, ze, labels).value


def dcor_given_y_d(
    zg: RepBatch | ArrayLike, ze: RepBatch | ArrayLike, labels: PartitionLabels
) -> float:
    """dCor(Z_G, Z_E | Y, D) over the joint cells I_{y,d}."""
    if labels.d is None:
        raise InputValidationError("dcor_given_y_d needs domain ids in the partition labels.")
    return conditional_dcor(zg, ze, labels).value


# --- 3. HSIC ---

def _gaussian_gram(values: NDArray[np.float64], bandwidth: Bandwidth) -> NDArray[np.float64]:
    sq = squareform(pdist(values, metric="sqeuclidean"))
    if bandwidth == "median":
        off_diagonal = np.sqrt(sq[np.triu_indices_from(sq, k=1)])
        sigma = float(np.median(off_diagonal))
        if sigma <= 0.0:
            raise BandwidthError("median pairwise distance is zero; pass an explicit bandwidth.")
    elif isinstance(bandwidth, (int, float)) and bandwidth > 0:
        sigma = float(bandwidth)
    else:
        raise InputValidationError(f"bandwidth must be positive or 'median', got {bandwidth!r}.")
    return np.exp(-sq / (2.0 * sigma**2))


def _hsic_values(
    a: NDArray[np.float64], b: NDArray[np.float64], bandwidth: Bandwidth
) -> float:
    n = a.shape[0]
    k = _gaussian_gram(a, bandwidth)
    l = _gaussian_gram(b, bandwidth)
    h = np.eye(n) - np.full((n, n), 1.0 / n)
    # trace(K H L H) = Σ (H K H) ∘ L
    return max(0.0, float(((h @ k @ h) * l).sum()) / n**2)


def hsic(
    a: RepBatch | ArrayLike, b: RepBatch | ArrayLike, bandwidth: Bandwidth = "median"
) -> float:
    """Biased HSIC V-statistic trace(K H L H) / n² with Gaussian kernels."""
    ra, rb = _paired(a, b)
    if ra.rows < _HSIC_MIN_ROWS:
        raise InputValidationError(f"HSIC needs at least {_HSIC_MIN_ROWS} rows.")
    return _hsic_values(ra.values, rb.values, bandwidth)


def conditional_hsic(
    a: RepBatch | ArrayLike,
    b: RepBatch | ArrayLike,
    labels: PartitionLabels,
    bandwidth: Bandwidth = "median",
) -> float:
    """Σ_c p̂_c² HSIC_c over the cells of *labels*; cells under four rows are skipped."""
    ra, rb = _paired(a, b)
    if labels.rows != ra.rows:
        raise InputValidationError(f"labels have {labels.rows} rows, batches have {ra.rows}.")
    n = ra.rows
    total = 0.0
    used = 0
    for rows in labels.cells():
        if rows.size < _HSIC_MIN_ROWS:
            continue
        weight = (rows.size / n) ** 2
        total += weight * _hsic_values(ra.values[rows], rb.values[rows], bandwidth)
        used += 1
    if used == 0:
        raise DegeneratePartitionError(
            f"every partition cell has fewer than {_HSIC_MIN_ROWS} rows."
        )
    return total
