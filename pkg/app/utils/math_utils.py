"""
Numerical Validation Utilities.

Shared guards for probability vectors, tables and real-valued batches.
Every helper raises ``InputValidationError`` with a message naming the
offending argument.
"""

from __future__ import annotations

import numpy as np
from numpy.typing import ArrayLike, NDArray

from app.errors import InputValidationError

__all__: list[str] = [
    "as_distribution",
    "as_finite_matrix",
    "as_label_vector",
    "as_probability_table",
    "validate_finite",
]

# Default tolerance for "sums to one" checks on user-supplied distributions.
_NORMALIZATION_TOL: float = 1e-9


def validate_finite(values: NDArray[np.float64], name: str) -> None:
    """Raise ``InputValidationError`` if *values* holds NaN or +/-Inf."""
    if not np.all(np.isfinite(values)):
        raise InputValidationError(f"{name} must contain only finite numbers.")


def as_distribution(
    p: ArrayLike, name: str = "p", tol: float = _NORMALIZATION_TOL
) -> NDArray[np.float64]:
    """Return *p* as a 1-d float array after checking it is a distribution."""
    arr = np.asarray(p, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise InputValidationError(f"{name} must be a non-empty 1-d vector, got shape {arr.shape}.")
    validate_finite(arr, name)
    if np.any(arr < 0):
        raise InputValidationError(f"{name} has negative entries.")
    total = float(arr.sum())
    if abs(total - 1.0) > tol:
        raise InputValidationError(f"{name} sums to {total!r}, expected 1 within {tol:g}.")
    return arr


def as_probability_table(
    table: ArrayLike, ndim: int, name: str = "joint", tol: float = _NORMALIZATION_TOL
) -> NDArray[np.float64]:
    """Return *table* as an *ndim*-way float array after checking it is a joint law."""
    arr = np.asarray(table, dtype=np.float64)
    if arr.ndim != ndim:
        raise InputValidationError(f"{name} must be a {ndim}-way table, got {arr.ndim} axes.")
    if arr.size == 0:
        raise InputValidationError(f"{name} must not be empty.")
    validate_finite(arr, name)
    if np.any(arr < 0):
        raise InputValidationError(f"{name} has negative entries.")
    total = float(arr.sum())
    if abs(total - 1.0) > tol:
        raise InputValidationError(f"{name} sums to {total!r}, expected 1 within {tol:g}.")
    return arr


def as_finite_matrix(values: ArrayLike, name: str = "values") -> NDArray[np.float64]:
    """Return *values* as an n×k float matrix; 1-d input becomes a single column."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise InputValidationError(f"{name} must be a matrix, got shape {arr.shape}.")
    validate_finite(arr, name)
    return arr


def as_label_vector(
    labels: ArrayLike, n_values: int | None = None, name: str = "labels"
) -> NDArray[np.int64]:
    """Return integer ids in ``[0, n_values)`` as a 1-d int array."""
    arr = np.asarray(labels)
    if arr.ndim != 1:
        raise InputValidationError(f"{name} must be a 1-d vector, got shape {arr.shape}.")
    if arr.size and not np.all(np.equal(np.mod(arr, 1), 0)):
        raise InputValidationError(f"{name} must hold integer ids.")
    ids = arr.astype(np.int64)
    if ids.size and ids.min() < 0:
        raise InputValidationError(f"{name} has negative ids.")
    if n_values is not None and ids.size and ids.max() >= n_values:
        raise InputValidationError(
            f"{name} has id {int(ids.max())} outside the declared range [0, {n_values})."
        )
    return ids

