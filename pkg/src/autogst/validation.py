"""Input validation helpers shared by the estimator and the public functions."""

from __future__ import annotations

import numbers

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import DimensionMismatch

__all__ = ["check_vector", "check_perturbations", "check_positive", "check_int", "check_choice"]


def check_vector(x, n: int, name: str = "vector") -> np.ndarray:
    """Return ``x`` as a finite float vector of length ``n``."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 2 and 1 in arr.shape:
        arr = arr.ravel()
    if arr.shape != (n,):
        raise DimensionMismatch(f"{name} must have {n} entries, got shape {np.shape(x)}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or infinity")
    return arr


def check_perturbations(X, n: int, name: str = "X") -> np.ndarray:
    """2-D array of perturbations, one per row, each of length ``n``."""
    X = check_array(X, dtype=float, ensure_2d=False)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != n:
        raise DimensionMismatch(f"{name} has {X.shape[1]} columns; the model has {n} dofs")
    return X


def check_positive(value, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, numbers.Real) or not value > 0:
        raise ValueError(f"{name} must be a positive number, got {value!r}")
    return float(value)


def check_int(value, name: str, minimum: int = 0) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def check_choice(value, name: str, choices) -> object:
    if value not in choices:
        raise ValueError(f"{name} must be one of {sorted(choices)}, got {value!r}")
    return value
