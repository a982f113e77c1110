"""Small input-checking helpers shared across the package."""

from __future__ import annotations

import numbers

import numpy as np


class ContractError(ValueError):
    """Raised when an argument violates a documented precondition."""


def check_probability(value, name):
    if not isinstance(value, numbers.Real) or not 0.0 <= float(value) <= 1.0:
        raise ContractError(f"{name} must be a probability in [0, 1], got {value!r}")
    return float(value)


def check_nonnegative(value, name):
    if not isinstance(value, numbers.Real) or not np.isfinite(value) or value < 0:
        raise ContractError(f"{name} must be finite and >= 0, got {value!r}")
    return float(value)


def check_positive(value, name):
    if not isinstance(value, numbers.Real) or not np.isfinite(value) or value <= 0:
        raise ContractError(f"{name} must be finite and > 0, got {value!r}")
    return float(value)


def check_interval(interval, name):
    lo, hi = (float(x) for x in interval)
    if not (np.isfinite(lo) and np.isfinite(hi)) or lo >= hi:
        raise ContractError(f"{name} must be a non-empty interval [lo, hi], got {interval!r}")
    return lo, hi


def check_covariance(P, name, *, strict=True):
    """Return ``P`` as a symmetric float array, raising if it is not (semi)definite."""
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ContractError(f"{name} must be a square matrix, got shape {P.shape}")
    if not np.allclose(P, P.T, atol=1e-12):
        raise ContractError(f"{name} must be symmetric")
    eig = np.linalg.eigvalsh(P)
    if strict and np.any(eig <= 0):
        raise ContractError(f"{name} must be positive definite")
    if not strict and np.any(eig < -1e-12):
        raise ContractError(f"{name} must be positive semi-definite")
    return 0.5 * (P + P.T)


def as_points(points, name="points"):
    """Coerce a collection of (range, speed) pairs to an ``(n, 2)`` float array."""
    arr = np.asarray(points, dtype=float)
    if arr.size == 0:
        return np.zeros((0, 2))
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] < 2:
        raise ContractError(f"{name} must be an (n, 2) array of (range, speed)")
    arr = arr[:, :2]
    if not np.all(np.isfinite(arr)):
        raise ContractError(f"{name} must be finite")
    return arr
