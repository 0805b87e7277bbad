"""Small input-validation helpers shared by the public entry points."""

from __future__ import annotations

import numpy as np


class ValidationError(ValueError):
    """Raised when a configuration or an input array is malformed."""


class NumericalError(RuntimeError):
    """Raised when a solve, factorization or optimizer step breaks down."""


def check_field(x, n: int, name: str = "field", *, bounded: bool = True) -> np.ndarray:
    """Return ``x`` as a 1-D float array of length ``n``.

    With ``bounded`` the values must also lie in [0, 1] (small round-off
    outside the box is clipped).
    """
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        arr = arr.ravel()
    if arr.shape[0] != n:
        raise ValidationError(f"{name}: expected {n} values, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name}: contains NaN or inf")
    if bounded:
        if arr.min() < -1e-12 or arr.max() > 1 + 1e-12:
            raise ValidationError(f"{name}: values must lie in [0, 1]")
        arr = np.clip(arr, 0.0, 1.0)
    return arr


def check_positive(value: float, name: str) -> float:
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise ValidationError(f"{name} must be positive, got {value}")
    return value


def check_open_unit(value: float, name: str) -> float:
    value = float(value)
    if not 0.0 < value < 1.0:
        raise ValidationError(f"{name} must lie in (0, 1), got {value}")
    return value
