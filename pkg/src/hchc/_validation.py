"""Input checks used by the estimators and the functional API."""

import numpy as np

from .exceptions import InvalidInputError

PROB_SUM_TOL = 1e-9


def as_matrix(X, name="X", min_rows=1):
    """Return ``X`` as a finite 2-D float64 array or raise InvalidInputError."""
    try:
        arr = np.asarray(X, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise InvalidInputError(f"{name} is not numeric: {exc}") from exc
    if arr.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < min_rows:
        raise InvalidInputError(f"{name} needs at least {min_rows} rows, got {arr.shape[0]}")
    if arr.shape[1] < 1:
        raise InvalidInputError(f"{name} has no columns")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains NaN or Inf")
    return arr


def check_probability_matrix(P, name="P", atol=PROB_SUM_TOL):
    """Validate a row-stochastic matrix (nonnegative rows summing to one)."""
    P = as_matrix(P, name)
    if np.any(P < 0):
        raise InvalidInputError(f"{name} has negative entries")
    sums = P.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > atol)
    if bad.size:
        raise InvalidInputError(
            f"{name} row {bad[0]} sums to {sums[bad[0]]!r}, expected 1"
        )
    return P


def check_dissimilarity(D, name="D"):
    """Validate a square, symmetric, nonnegative matrix with zero diagonal."""
    D = as_matrix(D, name)
    c = D.shape[0]
    if D.shape != (c, c):
        raise InvalidInputError(f"{name} must be square, got {D.shape}")
    if np.any(D < 0):
        raise InvalidInputError(f"{name} has negative entries")
    if np.any(np.diag(D) != 0):
        raise InvalidInputError(f"{name} must have a zero diagonal")
    if not np.allclose(D, D.T, rtol=0, atol=1e-12):
        raise InvalidInputError(f"{name} must be symmetric")
    return D


def check_labels(labels, name="labels"):
    arr = np.asarray(labels)
    if arr.ndim != 1:
        raise InvalidInputError(f"{name} must be 1-D, got shape {arr.shape}")
    if arr.size and not np.issubdtype(arr.dtype, np.integer):
        as_int = arr.astype(np.int64)
        if not np.array_equal(as_int, arr):
            raise InvalidInputError(f"{name} must be integer cluster ids")
        arr = as_int
    if arr.size and arr.min() < 0:
        raise InvalidInputError(f"{name} must be nonnegative")
    return arr.astype(np.int64)
