"""Input validation helpers used across the package."""

import numpy as np
from sklearn.utils import check_array

from .exceptions import InvalidArgumentError

SYMMETRY_RTOL = 1e-12


def check_square(A, name="A"):
    A = check_array(A, dtype=np.float64, ensure_all_finite=True,
                    ensure_min_samples=0, ensure_min_features=0)
    if A.shape[0] != A.shape[1]:
        raise InvalidArgumentError(
            f"{name} must be square, got shape {A.shape}")
    return A


def check_symmetric(A, name="A", tol=SYMMETRY_RTOL):
    """Return `A` as a float array after checking it is symmetric.

    The check is entrywise, ``|A_ij - A_ji| <= tol * (1 + |A_ij|)``.
    """
    A = check_square(A, name)
    if not np.all(np.abs(A - A.T) <= tol * (1.0 + np.abs(A))):
        raise InvalidArgumentError(f"{name} must be symmetric")
    return A


def check_same_shape(A, B, names=("A", "B")):
    if np.shape(A) != np.shape(B):
        raise InvalidArgumentError(
            f"shape mismatch: {names[0]} {np.shape(A)} vs "
            f"{names[1]} {np.shape(B)}")


def check_samples(X, name="X", min_samples=2):
    """Validate an ``(n_samples, n_features)`` observation matrix."""
    X = check_array(X, dtype=np.float64, ensure_min_samples=1)
    if X.shape[0] < min_samples:
        raise InvalidArgumentError(
            f"{name} needs at least {min_samples} observations, "
            f"got {X.shape[0]}")
    return X


def check_positive(value, name, strict=True):
    value = float(value)
    if not np.isfinite(value) or value < 0 or (strict and value == 0):
        bound = "> 0" if strict else ">= 0"
        raise InvalidArgumentError(f"{name} must be {bound}, got {value}")
    return value
