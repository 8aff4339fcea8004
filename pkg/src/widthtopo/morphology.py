"""Flat grayscale morphology and its entropy-smoothed counterpart.

The smooth dilation at ``x`` is the entropy-regularized maximum over the
clipped window ``B(x, r)``::

    D_eps(u)(x) = <k_M, u> - eps * <k_M, ln k_M>,   k_M = softmax(u / eps) on B(x, r)

which equals ``eps * log(sum(exp(u / eps)))`` and lies within
``eps * ln |B(x, r)|`` above the hard maximum. The smooth erosion uses the
softmin kernel and the opposite entropy sign, so that
``E_eps(u) == -D_eps(-u)`` holds bit for bit.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from ._validation import check_field
from .grid import NeighborhoodSpec, PixelIndex, window_stack

__all__ = [
    "SmoothParams",
    "erode",
    "dilate",
    "internal_gradient",
    "external_gradient",
    "smooth_kernel",
    "smooth_dilation_value",
    "smooth_erosion_value",
    "smooth_dilation",
    "smooth_erosion",
    "smooth_external_gradient",
    "smooth_internal_gradient",
]


@dataclass(frozen=True)
class SmoothParams:
    eps: float = 0.0625
    nb: NeighborhoodSpec = field(default_factory=lambda: NeighborhoodSpec("square", 2))

    def __post_init__(self):
        if not (self.eps > 0 and np.isfinite(self.eps)):
            raise ValueError(f"eps must be a positive finite number, got {self.eps!r}")


def erode(field, nb):
    """Per-pixel minimum over the clipped structuring element."""
    vals, mask = window_stack(check_field(field), nb)
    return np.where(mask, vals, np.inf).min(axis=0)


def dilate(field, nb):
    """Per-pixel maximum over the clipped structuring element."""
    vals, mask = window_stack(check_field(field), nb)
    return np.where(mask, vals, -np.inf).max(axis=0)


def internal_gradient(field, nb):
    field = check_field(field)
    return field - erode(field, nb)


def external_gradient(field, nb):
    field = check_field(field)
    return dilate(field, nb) - field


# ---------------------------------------------------------------- smooth kernels

@lru_cache(maxsize=None)
def _offset_array(nb):
    return np.array(nb.offsets(), dtype=np.intp).reshape(-1, 2)


def window_indices(x, nb, height, width):
    """Row and column arrays of the clipped window B(x, r), in linear-index order."""
    row, col = x
    if not (0 <= row < height and 0 <= col < width):
        raise IndexError(f"pixel {tuple(x)} outside {height}x{width} grid")
    offs = _offset_array(nb)
    rows = row + offs[:, 0]
    cols = col + offs[:, 1]
    keep = (rows >= 0) & (rows < height) & (cols >= 0) & (cols < width)
    return rows[keep], cols[keep]


def _log_softmax(z):
    zmax = z.max()
    shifted = z - zmax
    return shifted - np.log(np.exp(shifted).sum())


def _soft_extremum(values, eps, sign):
    # sign=+1: smooth max; sign=-1: smooth min. Returns (value, kernel).
    log_k = _log_softmax((sign * values) / eps)
    k = np.exp(log_k)
    inner = np.sum(k * values)
    entropy = np.sum(k * log_k)  # 0 * ln 0 = 0: log_k stays finite when k underflows
    return inner - (sign * eps) * entropy, k


def _mode_sign(mode):
    if mode == "max":
        return 1.0
    if mode == "min":
        return -1.0
    raise ValueError(f"mode must be 'min' or 'max', got {mode!r}")


def smooth_kernel(field, x, params, mode="max"):
    """Softmax (``mode='max'``) or softmin (``mode='min'``) weights of ``u / eps`` on B(x, r).

    Returns
    -------
    pixels : list of PixelIndex
        The clipped window, sorted by linear index.
    weights : ndarray
        Nonnegative weights summing to one, aligned with ``pixels``.
    """
    field = check_field(field)
    rows, cols = window_indices(x, params.nb, *field.shape)
    sign = _mode_sign(mode)
    k = np.exp(_log_softmax((sign * field[rows, cols]) / params.eps))
    return [PixelIndex(int(r), int(c)) for r, c in zip(rows, cols)], k


def smooth_dilation_value(field, x, params):
    field = check_field(field)
    rows, cols = window_indices(x, params.nb, *field.shape)
    return float(_soft_extremum(field[rows, cols], params.eps, 1.0)[0])


def smooth_erosion_value(field, x, params):
    field = check_field(field)
    rows, cols = window_indices(x, params.nb, *field.shape)
    return float(_soft_extremum(field[rows, cols], params.eps, -1.0)[0])


def _smooth_extremum_field(field, params, sign):
    vals, mask = window_stack(field, params.nb)
    z = np.where(mask, (sign * vals) / params.eps, -np.inf)
    zmax = z.max(axis=0)
    shifted = z - zmax
    e = np.exp(shifted)
    log_k = np.where(mask, shifted - np.log(e.sum(axis=0)), 0.0)
    k = np.where(mask, np.exp(log_k), 0.0)
    inner = np.sum(k * vals, axis=0)
    entropy = np.sum(k * log_k, axis=0)
    return inner - (sign * params.eps) * entropy


def smooth_dilation(field, params):
    """Smooth dilation evaluated at every pixel."""
    return _smooth_extremum_field(check_field(field), params, 1.0)


def smooth_erosion(field, params):
    """Smooth erosion evaluated at every pixel."""
    return _smooth_extremum_field(check_field(field), params, -1.0)


def smooth_external_gradient(field, params):
    field = check_field(field)
    return smooth_dilation(field, params) - field


def smooth_internal_gradient(field, params):
    field = check_field(field)
    return field - smooth_erosion(field, params)
