"""Input validation helpers shared across the package."""

from __future__ import annotations

import numpy as np


class ValidationError(ValueError):
    """Raised when an input violates a documented invariant."""


def as_float_array(x, name: str, ndim: int | None = None) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if ndim is not None and arr.ndim != ndim:
        raise ValidationError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite entries")
    return arr


def check_probability_vector(p, name: str = "probability vector", tol: float = 1e-12) -> np.ndarray:
    """Validate a vector as a probability distribution and return it as float64."""
    p = as_float_array(p, name, ndim=1)
    if np.any(p < 0):
        raise ValidationError(f"{name} has negative entries")
    s = p.sum()
    if abs(s - 1.0) > tol:
        raise ValidationError(f"{name} sums to {s!r}, expected 1 within {tol}")
    return p


def check_stochastic_matrix(A, name: str = "stochastic matrix", tol: float = 1e-12) -> np.ndarray:
    """Validate a row-stochastic matrix and return it as float64."""
    A = as_float_array(A, name, ndim=2)
    if np.any(A < 0):
        raise ValidationError(f"{name} has negative entries")
    sums = A.sum(axis=1)
    bad = np.where(np.abs(sums - 1.0) > tol)[0]
    if bad.size:
        raise ValidationError(
            f"row {bad[0]} of {name} sums to {sums[bad[0]]!r}, expected 1 within {tol}"
        )
    return A


def check_belief(pi, S: int | None = None, tol: float = 1e-10) -> np.ndarray:
    """Validate a belief vector (nonnegative, sums to one within tol)."""
    pi = check_probability_vector(pi, "belief", tol=tol)
    if S is not None and pi.shape[0] != S:
        raise ValidationError(f"belief has {pi.shape[0]} entries, model has {S} states")
    return pi


def check_in_range(x, name: str, low=None, high=None, low_open=False, high_open=False):
    if low is not None and (x <= low if low_open else x < low):
        op = ">" if low_open else ">="
        raise ValidationError(f"{name} must be {op} {low}, got {x}")
    if high is not None and (x >= high if high_open else x > high):
        op = "<" if high_open else "<="
        raise ValidationError(f"{name} must be {op} {high}, got {x}")
    return x
