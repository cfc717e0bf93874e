"""Input validation helpers shared by the estimators."""

from __future__ import annotations

import numpy as np


class ValidationError(ValueError):
    pass


def check_array_2d(X, name: str = "X") -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.size == 0:
        raise ValidationError(f"{name} must be a non-empty 2-D array, "
                              f"got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValidationError(f"{name} contains non-finite values")
    return X


def check_state_derivative_pair(X, Xdot):
    X = check_array_2d(X, "X")
    Xdot = check_array_2d(Xdot, "Xdot")
    if X.shape != Xdot.shape:
        raise ValidationError(
            f"X and Xdot must align, got {X.shape} vs {Xdot.shape}")
    return X, Xdot


def check_vector(x, name: str = "x") -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size == 0 or not np.all(np.isfinite(x)):
        raise ValidationError(f"{name} must be a finite non-empty vector")
    return x
