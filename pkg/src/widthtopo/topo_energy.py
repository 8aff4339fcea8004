"""Persistence-based topological energies and the width-aware (WT) variant.

For a target Betti number ``beta_k`` the finite bars of dimension ``k`` are
split into the kept (encouraged) features and the rest (penalized). The plain
energy is::

    T(u) = sum_k mu_k * (2 B(u, beta_k) - B(u, 0))
         = sum_k mu_k * (sum_penalized (b - d) - sum_encouraged (b - d))

The width-aware energy replaces ``u(y)`` at a birth pixel by the smooth
dilation at ``y`` and ``u(z)`` at a death pixel by the smooth erosion at
``z``. Freezing the critical pixels of a reference field gives a smooth
surrogate whose gradient spreads the softmax / softmin kernels over each
critical pixel's neighborhood.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_field
from .morphology import SmoothParams, _offset_array
from .persistence import CSV_HEADER, compute_superlevel_persistence, critical_sets, pair_to_row

__all__ = [
    "TopoParams",
    "FrozenCriticalSets",
    "bar_energy",
    "ph_energy",
    "ph_gradient",
    "surrogate_energy",
    "surrogate_gradient",
    "wt_energy",
]


@dataclass(frozen=True)
class TopoParams:
    """Topological prior: dimension weights ``mu``, target Betti numbers ``beta``, smoothing."""

    mu0: float = 1.0
    mu1: float = 0.0
    beta0: int = 1
    beta1: int = 0
    smooth: SmoothParams = field(default_factory=SmoothParams)
    count_essential: bool = True

    def __post_init__(self):
        if self.mu0 < 0 or self.mu1 < 0:
            raise ValueError("mu0 and mu1 must be nonnegative")
        for name in ("beta0", "beta1"):
            b = getattr(self, name)
            if b < 0 or int(b) != b:
                raise ValueError(f"{name} must be a nonnegative integer, got {b!r}")

    @property
    def mu(self):
        return (self.mu0, self.mu1)

    @property
    def beta(self):
        return (int(self.beta0), int(self.beta1))

    @property
    def active(self):
        return self.mu0 + self.mu1 > 0


@dataclass(frozen=True)
class FrozenCriticalSets:
    """Critical pairs of a reference field, split per dimension.

    ``encouraged[k]`` and ``penalized[k]`` are tuples of persistence pairs;
    only their birth and death pixels are used by the surrogate.
    """

    shape: tuple
    encouraged: tuple = ((), ())
    penalized: tuple = ((), ())

    @classmethod
    def from_diagram(cls, diagram, params):
        enc, pen = [], []
        for k in (0, 1):
            split = critical_sets(diagram, k, params.beta[k], count_essential=params.count_essential)
            enc.append(tuple(split.encouraged))
            pen.append(tuple(split.penalized))
        return cls(tuple(diagram.shape), tuple(enc), tuple(pen))

    @classmethod
    def empty(cls, shape):
        return cls(tuple(shape))

    def __len__(self):
        return sum(len(x) for x in self.encouraged) + sum(len(x) for x in self.penalized)

    def terms(self, params):
        """Yield ``(weight, birth_pixel, death_pixel)`` with the sign of each pair folded in."""
        for k in (0, 1):
            mu = params.mu[k]
            if mu == 0:
                continue
            for p in self.penalized[k]:
                yield mu, p.birth_pixel, p.death_pixel
            for p in self.encouraged[k]:
                yield -mu, p.birth_pixel, p.death_pixel

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_HEADER + ("encouraged",))
            for k in (0, 1):
                for p in self.encouraged[k]:
                    writer.writerow(pair_to_row(p) + [1])
                for p in self.penalized[k]:
                    writer.writerow(pair_to_row(p) + [0])


def bar_energy(diagram, k, beta, *, count_essential=True):
    """Total persistence of the penalized dimension-``k`` bars."""
    split = critical_sets(diagram, k, beta, count_essential=count_essential)
    return float(sum(p.birth - p.death for p in split.penalized))


def ph_energy(field, params):
    """Plain persistence energy ``sum_k mu_k (2 B(u, beta_k) - B(u, 0))`` from a fresh diagram."""
    diagram = compute_superlevel_persistence(check_field(field))
    total = 0.0
    for k in (0, 1):
        mu = params.mu[k]
        if mu == 0:
            continue
        pen = bar_energy(diagram, k, params.beta[k], count_essential=params.count_essential)
        every = bar_energy(diagram, k, 0, count_essential=params.count_essential)
        total += mu * (2.0 * pen - every)
    return total


def _check_frozen(u, frozen):
    if tuple(u.shape) != tuple(frozen.shape):
        raise ValueError(f"field shape {u.shape} does not match critical sets shape {frozen.shape}")


def _term_arrays(frozen, params):
    terms = list(frozen.terms(params))
    weights = np.array([t[0] for t in terms], dtype=float)
    births = np.array([tuple(t[1]) for t in terms], dtype=np.intp).reshape(-1, 2)
    deaths = np.array([tuple(t[2]) for t in terms], dtype=np.intp).reshape(-1, 2)
    return weights, births, deaths


def _window_extrema(u, pixels, smooth, sign):
    """Smooth extremum and kernel on the clipped window of every pixel in ``pixels``.

    Returns ``(values (K,), kernels (K, n), rows (K, n), cols (K, n))``;
    kernel entries outside the image are 0 and their indices are clipped.
    """
    h, w = u.shape
    offs = _offset_array(smooth.nb)
    rows = pixels[:, :1] + offs[None, :, 0]
    cols = pixels[:, 1:] + offs[None, :, 1]
    inside = (rows >= 0) & (rows < h) & (cols >= 0) & (cols < w)
    rows = np.clip(rows, 0, h - 1)
    cols = np.clip(cols, 0, w - 1)
    vals = u[rows, cols]
    z = np.where(inside, (sign * vals) / smooth.eps, -np.inf)
    shifted = z - z.max(axis=1, keepdims=True)
    log_k = np.where(inside, shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True)), 0.0)
    k = np.where(inside, np.exp(log_k), 0.0)
    inner = np.sum(k * vals, axis=1)
    entropy = np.sum(k * log_k, axis=1)  # 0 * ln 0 = 0
    return inner - (sign * smooth.eps) * entropy, k, rows, cols


def surrogate_energy(u, frozen, params):
    """WT energy of ``u`` evaluated on frozen critical pixels; kernels are taken from ``u``."""
    u = check_field(u)
    _check_frozen(u, frozen)
    weights, births, deaths = _term_arrays(frozen, params)
    if weights.size == 0:
        return 0.0
    up = _window_extrema(u, births, params.smooth, 1.0)[0]
    down = _window_extrema(u, deaths, params.smooth, -1.0)[0]
    return float(np.sum(weights * (up - down)))


def surrogate_gradient(u, frozen, params):
    """Analytic gradient of :func:`surrogate_energy` with the critical pixels held fixed.

    Each birth pixel ``y`` contributes its softmax kernel over B(y, r) and
    each death pixel ``z`` minus its softmin kernel over B(z, r), scaled by
    ``+mu_k`` for penalized and ``-mu_k`` for encouraged pairs.
    """
    u = check_field(u)
    _check_frozen(u, frozen)
    grad = np.zeros_like(u)
    weights, births, deaths = _term_arrays(frozen, params)
    if weights.size == 0:
        return grad
    _, k_max, rows, cols = _window_extrema(u, births, params.smooth, 1.0)
    np.add.at(grad, (rows, cols), weights[:, None] * k_max)
    _, k_min, rows, cols = _window_extrema(u, deaths, params.smooth, -1.0)
    np.add.at(grad, (rows, cols), -weights[:, None] * k_min)
    return grad


def ph_gradient(shape, frozen, params):
    """Zero-width limit of :func:`surrogate_gradient`: unit mass on the critical pixels only."""
    grad = np.zeros(shape)
    for weight, y, z in frozen.terms(params):
        grad[y] += weight
        grad[z] -= weight
    return grad


def wt_energy(field, params):
    """WT energy of ``field`` with its own critical sets.

    Returns
    -------
    value : float
    frozen : FrozenCriticalSets
        The critical sets used, for reuse in a gradient step.
    """
    field = check_field(field)
    frozen = FrozenCriticalSets.from_diagram(compute_superlevel_persistence(field), params)
    return surrogate_energy(field, frozen, params), frozen
