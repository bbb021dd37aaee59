"""
Exact Discrete Information Theory.

Total variation, entropy, (conditional) mutual information and the
channel push-forward over small dense tables.  Natural logarithms
throughout; ``0 ln 0 = 0``.  Pure Math: input tables -> output numbers,
no side effects, safe to call from any thread.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import stats

from app.config import get_config
from app.errors import ContractError, DegenerateConditioningError, InputValidationError
from app.models.probability import Channel, FiniteJoint
from app.utils.math_utils import as_distribution, as_probability_table

__all__ = [
    "cmi_of",
    "condition_on_domains",
    "conditional_entropy",
    "conditional_mutual_information",
    "entropy",
    "kl_divergence",
    "marginal",
    "mi_of",
    "mutual_information",
    "push_channel",
    "tv_distance",
]

# Tolerance used when tables are produced internally (sums of products).
_INTERNAL_TOL: float = 1e-9


def _h(table: NDArray[np.float64]) -> float:
    """Entropy of an already-validated table, flattened."""
    flat = table.ravel()
    if flat.sum() <= 0:
        return 0.0
    return float(stats.entropy(flat))


def _clamp_mi(value: float) -> float:
    """Round-off within MI_CLAMP below zero becomes 0; anything lower is a broken table."""
    clamp = get_config().MI_CLAMP
    if value < -clamp:
        raise ContractError(f"information value {value!r} is below -{clamp:g}.")
    return max(0.0, value)


# --- 1. Distances ---

def tv_distance(p: ArrayLike, q: ArrayLike) -> float:
    """Total variation ½ Σ|p_i − q_i| between two distributions of equal length."""
    p_arr = as_distribution(p, "p")
    q_arr = as_distribution(q, "q")
    if p_arr.shape != q_arr.shape:
        raise InputValidationError(
            f"distributions must have equal length, got {p_arr.size} and {q_arr.size}."
        )
    return float(min(1.0, 0.5 * np.abs(p_arr - q_arr).sum()))


def kl_divergence(p: ArrayLike, q: ArrayLike) -> float:
    """KL(p‖q) in nats; *q* must be positive wherever *p* is."""
    p_arr = as_distribution(p, "p")
    q_arr = as_distribution(q, "q")
    if p_arr.shape != q_arr.shape:
        raise InputValidationError("distributions must have equal length.")
    if np.any((p_arr > 0) & (q_arr <= 0)):
        raise InputValidationError("q must be strictly positive on the support of p.")
    return float(max(0.0, stats.entropy(p_arr, q_arr)))


# --- 2. Entropies ---

def entropy(p: ArrayLike) -> float:
    """Shannon entropy −Σ p_i ln p_i of a distribution."""
    return _h(as_distribution(p, "p"))


def conditional_entropy(joint: ArrayLike) -> float:
    """H(A | C) for a 2-way table indexed ``joint[a, c]``."""
    table = as_probability_table(joint, 2, "joint", tol=_INTERNAL_TOL)
    return max(0.0, _h(table) - _h(table.sum(axis=0)))


# --- 3. Mutual information ---

def mutual_information(joint: ArrayLike) -> float:
    """I(A; B) = H(A) + H(B) − H(A, B) for a 2-way table ``joint[a, b]``."""
    table = as_probability_table(joint, 2, "joint", tol=_INTERNAL_TOL)
    value = _h(table.sum(axis=1)) + _h(table.sum(axis=0)) - _h(table)
    return _clamp_mi(value)


def conditional_mutual_information(joint: ArrayLike) -> float:
    """I(A; B | C) for a 3-way table ``joint[a, b, c]``.

    Computed as H(A,C) + H(B,C) − H(A,B,C) − H(C), which equals
    Σ_c p(c) I(A; B | C=c).
    """
    table = as_probability_table(joint, 3, "joint", tol=_INTERNAL_TOL)
    value = (
        _h(table.sum(axis=1))
        + _h(table.sum(axis=0))
        - _h(table)
        - _h(table.sum(axis=(0, 1)))
    )
    return _clamp_mi(value)


# --- 4. Table plumbing ---

def marginal(table: NDArray[np.float64], keep: Sequence[int]) -> NDArray[np.float64]:
    """Sum out every axis not in *keep*, returning axes in the order given."""
    keep = list(keep)
    drop = tuple(ax for ax in range(table.ndim) if ax not in keep)
    reduced = table.sum(axis=drop) if drop else table
    remaining = [ax for ax in range(table.ndim) if ax in keep]
    return np.transpose(reduced, [remaining.index(ax) for ax in keep])


def _group(table: NDArray[np.float64], groups: Sequence[Sequence[int]]) -> NDArray[np.float64]:
    axes = [ax for grp in groups for ax in grp]
    if len(set(axes)) != len(axes):
        raise InputValidationError("variable groups must not share axes.")
    reduced = marginal(table, axes)
    shape = []
    offset = 0
    for grp in groups:
        size = int(np.prod(reduced.shape[offset : offset + len(grp)])) if grp else 1
        shape.append(size)
        offset += len(grp)
    return reduced.reshape(shape)


def mi_of(table: NDArray[np.float64], a: Sequence[int], b: Sequence[int]) -> float:
    """I(A; B) where A and B are tuples of axes of a joint *table*."""
    return mutual_information(_group(table, [a, b]))


def cmi_of(
    table: NDArray[np.float64], a: Sequence[int], b: Sequence[int], c: Sequence[int]
) -> float:
    """I(A; B | C) where A, B, C are tuples of axes of a joint *table*."""
    return conditional_mutual_information(_group(table, [a, b, c]))


def condition_on_domains(
    table: NDArray[np.float64], domains: Sequence[int], domain_axis: int = 2
) -> NDArray[np.float64]:
    """Conditional law given D ∈ *domains*, keeping only those domain slices.

    The returned table has the domain axis restricted to *domains* (in the
    given order) and sums to 1.
    """
    if len(domains) == 0:
        raise DegenerateConditioningError("domain filter is empty.")
    sliced = np.take(table, list(domains), axis=domain_axis)
    mass = float(sliced.sum())
    if mass <= 0.0:
        raise DegenerateConditioningError(
            f"domains {list(domains)} carry zero probability mass."
        )
    return sliced / mass


# --- 5. Channel push-forward ---

def push_channel(joint: FiniteJoint, ch: Channel) -> NDArray[np.float64]:
    """Joint law of (Ŷ, Y, D, G): p(ŷ,y,d,g) = Σ_x p(ŷ|x) p(x,y,d,g)."""
    if ch.n_x != joint.n_x:
        raise InputValidationError(
            f"channel has {ch.n_x} input rows but the joint has |X| = {joint.n_x}."
        )
    return np.einsum("xh,xydg->hydg", ch.cond_probs, joint.probs)
