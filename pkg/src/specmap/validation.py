"""Input validation helpers shared by the estimators and core routines."""

import numpy as np

from .errors import ConfigError, NotFittedError, NumericError, ShapeError


def check_finite(x: np.ndarray, name: str = "array") -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NumericError(f"{name} contains non-finite values")
    return x


def as_float_matrix(x, name: str = "array") -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    return check_finite(arr, name)


def as_float_vector(x, name: str = "array") -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {arr.shape}")
    return check_finite(arr, name)


def as_complex_matrix(x, name: str = "array") -> np.ndarray:
    arr = np.asarray(x, dtype=np.complex128)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    return check_finite(arr, name)


def check_same_shape(a: np.ndarray, b: np.ndarray, what: str = "arrays") -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{what} must have equal shapes: {a.shape} vs {b.shape}")


def check_positive(value, name: str) -> None:
    if not value > 0:
        raise ConfigError(f"{name} must be > 0, got {value!r}")


def check_nonnegative(value, name: str) -> None:
    if not value >= 0:
        raise ConfigError(f"{name} must be >= 0, got {value!r}")


def check_choice(value, options, name: str) -> None:
    if value not in options:
        raise ConfigError(f"{name} must be one of {sorted(options)}, got {value!r}")


def check_fitted(obj, attributes) -> None:
    """Raise NotFittedError if any trailing-underscore attribute is missing."""
    missing = [a for a in attributes if getattr(obj, a, None) is None]
    if missing:
        raise NotFittedError(
            f"{type(obj).__name__} is not fitted yet; call fit() first "
            f"(missing {', '.join(missing)})"
        )
