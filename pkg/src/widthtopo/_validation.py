"""Input validation helpers shared by the functional API and the estimators."""

import numbers

import numpy as np

SIMPLEX_ATOL = 1e-9


class SimplexViolationError(ValueError):
    """Raised when a soft segmentation leaves the probability simplex."""


def check_field(field, name="field", *, unit_interval=False, copy=False):
    """Return ``field`` as a finite 2D float64 array.

    Parameters
    ----------
    field : array_like of shape (H, W)
    name : str
        Used in error messages.
    unit_interval : bool
        Also require every value to lie in [0, 1].
    copy : bool
        Force a copy even when no conversion is needed.
    """
    arr = np.array(field, dtype=np.float64) if copy else np.asarray(field, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2D, got shape {arr.shape}")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ValueError(f"{name} must be non-empty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    if unit_interval and (arr.min() < 0.0 or arr.max() > 1.0):
        raise ValueError(f"{name} must take values in [0, 1]")
    return arr


def check_channels(channels, name="channels", *, min_channels=2):
    """Return ``channels`` as a finite (L, H, W) float64 array."""
    arr = np.asarray(channels, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"{name} must have shape (L, H, W), got {arr.shape}")
    if arr.shape[0] < min_channels:
        raise ValueError(f"{name} needs at least {min_channels} channels, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_simplex(u, atol=SIMPLEX_ATOL):
    """Raise :class:`SimplexViolationError` unless ``u`` is a valid soft segmentation."""
    u = np.asarray(u)
    if u.ndim != 3 or u.shape[0] < 2:
        raise SimplexViolationError(f"soft segmentation must have shape (L>=2, H, W), got {u.shape}")
    if not np.all(np.isfinite(u)):
        raise SimplexViolationError("soft segmentation contains non-finite values")
    if u.min() < 0.0 or u.max() > 1.0:
        raise SimplexViolationError("soft segmentation values must lie in [0, 1]")
    err = np.abs(u.sum(axis=0) - 1.0).max()
    if err > atol:
        raise SimplexViolationError(f"simplex violated: channel sums deviate from 1 by {err:.3e}")
    return u


def check_same_shape(a, b, names=("a", "b")):
    if np.shape(a) != np.shape(b):
        raise ValueError(f"shape mismatch: {names[0]} {np.shape(a)} vs {names[1]} {np.shape(b)}")


def check_positive(value, name, *, strict=True):
    if isinstance(value, bool) or not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise ValueError(f"{name} must be a finite real number, got {value!r}")
    if strict and value <= 0:
        raise ValueError(f"{name} must be > 0, got {value}")
    if not strict and value < 0:
        raise ValueError(f"{name} must be >= 0, got {value}")
    return float(value)
