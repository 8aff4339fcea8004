"""Nonlocal soft threshold dynamics with a width-aware topological prior.

The model minimizes, over soft segmentations ``u`` on the simplex::

    E(u) = <-o, u> + gamma <u, ln u> + <u, N(u)> + eta T_eps(u_l*)

with ``N(u)_l = lam_l sum_l' zeta[l, l'] W (1 - u_l')`` and ``W`` a truncated
nonlocal Gaussian-mixture kernel. The topological term is split off onto an
auxiliary field ``v`` coupled to ``u_l*`` by an L1 penalty whose dual
variable ``q`` is updated by a clamped ascent step. Each outer iteration
updates ``q``, takes one AdamW step on ``v`` and solves the linearized
(concave-convex) ``u`` problem in closed form with a softmax.
"""

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Optional

import numpy as np

from ._validation import SIMPLEX_ATOL, check_channels, check_field, check_positive, check_simplex
from .grid import NeighborhoodSpec
from .morphology import SmoothParams
from .optimizer import AdamWState, adamw_step
from .persistence import betti_at_threshold, compute_superlevel_persistence
from .topo_energy import FrozenCriticalSets, TopoParams, surrogate_energy, surrogate_gradient

__all__ = [
    "WeightModel",
    "WeightStack",
    "weight",
    "nonlocal_N",
    "subgradient_p",
    "dual_q_update",
    "v_update",
    "u_update",
    "softmax_channels",
    "unary_features",
    "SolverConfig",
    "SolverResult",
    "LOG_COLUMNS",
    "write_log",
    "energy_terms",
    "run_topo_nlstd",
    "dice_loss",
    "topo_loss",
    "MetricsReport",
    "metrics",
]

LOG_FLOOR = 1e-12
LOG_COLUMNS = ("iter", "energy_F", "energy_S", "energy_R", "energy_T", "l1_gap", "delta_u_inf")


# ---------------------------------------------------------------- weights

def _as_class_vector(value, n_classes, name, *, strict):
    arr = np.broadcast_to(np.asarray(value, dtype=float), (n_classes,)).copy()
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    if strict and np.any(arr <= 0):
        raise ValueError(f"{name} must be > 0, got {value!r}")
    if not strict and np.any(arr < 0):
        raise ValueError(f"{name} must be >= 0, got {value!r}")
    return arr


@dataclass(frozen=True, eq=False)
class WeightModel:
    """Gaussian-mixture nonlocal weights, truncated to a square window.

    ``w(x, y) = sum_l omega0_l exp(-|I(x)-I(y)|^2/alpha1_l - |x-y|^2/alpha2_l)
    + omega1_l exp(-|x-y|^2/alpha3_l)`` for ``|x - y|_inf <= radius`` and 0
    beyond. Scalar parameters are broadcast to ``n_classes`` entries and the
    class sum is taken literally, so a scalar ``omega`` counts ``n_classes``
    times.

    Parameters
    ----------
    omega0, omega1 : float or sequence
        Nonnegative mixture weights of the color-spatial and spatial terms.
    alpha1, alpha2, alpha3 : float or sequence
        Positive bandwidths (color, and the two spatial terms).
    radius : int
        Truncation radius of the window (Chebyshev distance).
    n_classes : int
        Number of classes the parameters are broadcast to.
    image : ndarray, optional
        Reference image for the color term; required before evaluation.
    """

    omega0: object = 1.0
    omega1: object = 1.0
    alpha1: object = 1.0
    alpha2: object = 3.0
    alpha3: object = 3.0
    radius: int = 7
    n_classes: int = 2
    image: Optional[np.ndarray] = None

    def __post_init__(self):
        if int(self.radius) != self.radius or self.radius < 1:
            raise ValueError(f"radius must be an integer >= 1, got {self.radius!r}")
        if int(self.n_classes) != self.n_classes or self.n_classes < 1:
            raise ValueError(f"n_classes must be a positive integer, got {self.n_classes!r}")
        self.class_params()
        if self.image is not None:
            object.__setattr__(self, "image", check_field(self.image, "image"))

    def class_params(self):
        """Per-class arrays ``(omega0, omega1, alpha1, alpha2, alpha3)``."""
        n = int(self.n_classes)
        return (
            _as_class_vector(self.omega0, n, "omega0", strict=False),
            _as_class_vector(self.omega1, n, "omega1", strict=False),
            _as_class_vector(self.alpha1, n, "alpha1", strict=True),
            _as_class_vector(self.alpha2, n, "alpha2", strict=True),
            _as_class_vector(self.alpha3, n, "alpha3", strict=True),
        )

    def bind(self, image, n_classes=None):
        """Copy with the reference image (and optionally the class count) set."""
        n = self.n_classes if n_classes is None else n_classes
        return replace(self, image=image, n_classes=n)

    def _require_image(self):
        if self.image is None:
            raise ValueError("WeightModel has no reference image; call bind(image) first")
        return self.image

    def pair_weight(self, diff2, dist2):
        w0, w1, a1, a2, a3 = self.class_params()
        total = 0.0
        for k in range(len(w0)):
            total = total + w0[k] * np.exp(-diff2 / a1[k] - dist2 / a2[k]) + w1[k] * np.exp(-dist2 / a3[k])
        return total

    def stack(self):
        """Precompute the weights of every in-window offset; see :class:`WeightStack`."""
        image = self._require_image()
        h, w = image.shape
        r = int(self.radius)
        offsets = [(dr, dc) for dr in range(-r, r + 1) for dc in range(-r, r + 1)]
        pad = np.pad(image, r, mode="constant", constant_values=np.nan)
        weights = np.zeros((len(offsets), h, w))
        for i, (dr, dc) in enumerate(offsets):
            shifted = pad[r + dr : r + dr + h, r + dc : r + dc + w]
            valid = ~np.isnan(shifted)
            diff2 = np.where(valid, image - np.where(valid, shifted, 0.0), 0.0) ** 2
            weights[i] = np.where(valid, self.pair_weight(diff2, float(dr * dr + dc * dc)), 0.0)
        return WeightStack(np.array(offsets, dtype=np.intp), weights, r)


def weight(x, y, model):
    """Nonlocal weight ``w(x, y)`` between two pixels of ``model.image``."""
    image = model._require_image()
    h, w = image.shape
    for p in (x, y):
        if not (0 <= p[0] < h and 0 <= p[1] < w):
            raise IndexError(f"pixel {tuple(p)} outside {h}x{w} grid")
    dr, dc = y[0] - x[0], y[1] - x[1]
    if max(abs(dr), abs(dc)) > model.radius:
        return 0.0
    diff2 = (image[x[0], x[1]] - image[y[0], y[1]]) ** 2
    return float(model.pair_weight(diff2, float(dr * dr + dc * dc)))


class WeightStack(NamedTuple):
    """Truncated kernel stored per offset: ``weights[i, x] = w(x, x + offsets[i])``.

    Entries whose partner pixel falls outside the image are zero.
    """

    offsets: np.ndarray
    weights: np.ndarray
    radius: int

    def apply(self, f):
        """``(W f)(x) = sum_y w(x, y) f(y)`` for one field or a channel stack."""
        f = np.asarray(f, dtype=float)
        if f.ndim == 3:
            return np.stack([self.apply(c) for c in f])
        r = self.radius
        h, w = f.shape
        pad = np.pad(f, r)
        out = np.zeros_like(f)
        for (dr, dc), wk in zip(self.offsets, self.weights):
            out += wk * pad[r + dr : r + dr + h, r + dc : r + dc + w]
        return out

    def apply_transpose(self, f):
        """``(W^T f)(x) = sum_y w(y, x) f(y)``; equal to :meth:`apply` for symmetric weights."""
        f = np.asarray(f, dtype=float)
        if f.ndim == 3:
            return np.stack([self.apply_transpose(c) for c in f])
        r = self.radius
        h, w = f.shape
        out = np.zeros((h + 2 * r, w + 2 * r))
        for (dr, dc), wk in zip(self.offsets, self.weights):
            out[r + dr : r + dr + h, r + dc : r + dc + w] += wk * f
        return out[r : r + h, r : r + w]

    def row_sums(self):
        return self.weights.sum(axis=0)

    def dense(self):
        """Dense ``(N, N)`` matrix; for tests on small grids."""
        _, h, w = self.weights.shape
        n = h * w
        mat = np.zeros((n, n))
        for (dr, dc), wk in zip(self.offsets, self.weights):
            for r in range(h):
                for c in range(w):
                    rr, cc = r + dr, c + dc
                    if 0 <= rr < h and 0 <= cc < w:
                        mat[r * w + c, rr * w + cc] = wk[r, c]
        return mat


# ---------------------------------------------------------------- operators

def _class_lambda(lam, n_classes):
    return _as_class_vector(lam, n_classes, "lambda", strict=True)


def _zeta(zeta, n_classes):
    if zeta is None:
        return np.eye(n_classes)
    z = np.asarray(zeta, dtype=float)
    if z.shape != (n_classes, n_classes):
        raise ValueError(f"zeta must have shape {(n_classes, n_classes)}, got {z.shape}")
    return z


def nonlocal_N(u, weights, lam, zeta=None):
    """``N(u)_l(x) = lam_l sum_l' zeta[l, l'] sum_y w(x, y) (1 - u_l'(y))``.

    Parameters
    ----------
    u : ndarray of shape (L, H, W)
    weights : WeightStack
    lam : float or sequence of length L
    zeta : ndarray of shape (L, L), optional
        Class compatibility matrix; identity when omitted.
    """
    u = check_channels(u, "u", min_channels=1)
    n = u.shape[0]
    wu = weights.apply(1.0 - u)
    return _class_lambda(lam, n)[:, None, None] * np.einsum("ab,bhw->ahw", _zeta(zeta, n), wu)


def _is_symmetric_case(lam, zeta, n):
    lam = _class_lambda(lam, n)
    z = _zeta(zeta, n)
    return bool(np.all(lam == lam[0]) and np.array_equal(z, z.T))


def subgradient_p(u, weights, lam, zeta=None, *, form="auto"):
    """Gradient of ``R(u) = <u, N(u)>``.

    ``form="general"`` evaluates ``N(u)_l - sum_l' lam_l' zeta[l', l] W^T u_l'``.
    ``form="symmetric"`` uses the simplification
    ``lam_l sum_l' zeta[l, l'] W (1 - 2 u_l')``, valid for symmetric ``zeta``
    and ``w`` and a class-independent ``lam``. ``"auto"`` picks the
    symmetric form when ``lam`` and ``zeta`` allow it (``w`` is symmetric by
    construction).
    """
    u = check_channels(u, "u", min_channels=1)
    n = u.shape[0]
    if form == "auto":
        form = "symmetric" if _is_symmetric_case(lam, zeta, n) else "general"
    lam_v = _class_lambda(lam, n)
    z = _zeta(zeta, n)
    if form == "symmetric":
        return lam_v[:, None, None] * np.einsum("ab,bhw->ahw", z, weights.apply(1.0 - 2.0 * u))
    if form == "general":
        back = np.einsum("b,ba,bhw->ahw", lam_v, z, weights.apply_transpose(u))
        return nonlocal_N(u, weights, lam, zeta) - back
    raise ValueError(f"form must be 'auto', 'symmetric' or 'general', got {form!r}")


def dual_q_update(q, v, u):
    """Clamped dual ascent ``clip(q + (v - u), -1, 1)``."""
    q, v, u = (np.asarray(a, dtype=float) for a in (q, v, u))
    if not (q.shape == v.shape == u.shape):
        raise ValueError(f"shape mismatch: q {q.shape}, v {v.shape}, u {u.shape}")
    return np.clip(q + (v - u), -1.0, 1.0)


def v_update(v, q, frozen, topo, state, eta):
    """One AdamW step on ``T_eps(v) + eta <q, v>`` with frozen critical sets.

    Returns
    -------
    v : ndarray
    state : AdamWState
    """
    v = check_field(v, "v")
    q = np.asarray(q, dtype=float)
    if q.shape != v.shape:
        raise ValueError(f"shape mismatch: v {v.shape} vs q {q.shape}")
    grad = eta * q
    if topo.active:
        grad = grad + surrogate_gradient(v, frozen, topo)
    state, v = adamw_step(state, v, grad)
    return v, state


def softmax_channels(z):
    """Softmax across axis 0 of a ``(L, H, W)`` array."""
    z = np.asarray(z, dtype=float)
    e = np.exp(z - z.max(axis=0, keepdims=True))
    return e / e.sum(axis=0, keepdims=True)


def u_update(o, p, q, eta, gamma, channel):
    """Closed-form CCCP step ``softmax((o - p + eta q_bar) / gamma)``; ``q_bar`` is ``q`` on ``channel`` only."""
    check_positive(gamma, "gamma")
    o = np.asarray(o, dtype=float)
    z = o - np.asarray(p, dtype=float)
    if q is not None and eta != 0:
        z = z.copy()
        z[channel] += eta * np.asarray(q, dtype=float)
    return softmax_channels(z / gamma)


def unary_features(image, means, sigma=0.25):
    """Quadratic unary features ``o_l(x) = -(I(x) - c_l)^2 / sigma^2``.

    Parameters
    ----------
    image : ndarray of shape (H, W)
    means : sequence of float
        One intensity per class; at least two.
    sigma : float
    """
    image = check_field(image, "image")
    check_positive(sigma, "sigma")
    means = np.asarray(means, dtype=float).ravel()
    if means.size < 2:
        raise ValueError("need at least two class means")
    return -((image[None] - means[:, None, None]) ** 2) / sigma**2


# ---------------------------------------------------------------- solver

def _default_topo():
    return TopoParams(mu0=1.0, mu1=1.0, beta0=1, beta1=0, smooth=SmoothParams(0.0625, NeighborhoodSpec("square", 3)))


@dataclass(frozen=True, eq=False)
class SolverConfig:
    """Hyperparameters and loop controls of :func:`run_topo_nlstd`.

    Parameters
    ----------
    lam : float or sequence
        Regularization weight per class (scalar broadcast).
    gamma : float
        Entropy weight, > 0.
    eta : float
        Penalty weight coupling ``v`` to ``u[topo_channel]``; 0 disables the
        topological part.
    weights : WeightModel
        Kernel parameters; the image is bound by the solver.
    zeta : ndarray, optional
        Symmetric positive semi-definite class compatibility matrix.
    topo : TopoParams
    lr, weight_decay : float
        AdamW step size and decoupled weight decay for ``v``.
    topo_channel : int
    max_iters : int
    tol : float
        Stop once ``max|u_new - u| < tol``.
    v_init_steps : int
        AdamW steps on the surrogate at ``u0`` used to initialize ``v``.
    recompute_every : int
        Refresh the critical sets of ``v`` every this many iterations.
    """

    lam: object = 0.5
    gamma: float = 0.3
    eta: float = 3.0
    weights: WeightModel = field(default_factory=WeightModel)
    zeta: Optional[np.ndarray] = None
    topo: TopoParams = field(default_factory=_default_topo)
    lr: float = 0.003
    weight_decay: float = 0.01
    topo_channel: int = 0
    max_iters: int = 300
    tol: float = 1e-4
    v_init_steps: int = 25
    recompute_every: int = 1

    def __post_init__(self):
        check_positive(self.gamma, "gamma")
        check_positive(self.eta, "eta", strict=False)
        check_positive(self.tol, "tol", strict=False)
        for name in ("max_iters", "v_init_steps"):
            val = getattr(self, name)
            if int(val) != val or val < 0:
                raise ValueError(f"{name} must be a nonnegative integer, got {val!r}")
        if int(self.recompute_every) != self.recompute_every or self.recompute_every < 1:
            raise ValueError(f"recompute_every must be a positive integer, got {self.recompute_every!r}")
        if self.zeta is not None:
            z = np.asarray(self.zeta, dtype=float)
            if z.ndim != 2 or z.shape[0] != z.shape[1]:
                raise ValueError(f"zeta must be square, got shape {z.shape}")
            if not np.allclose(z, z.T, rtol=0, atol=1e-12):
                raise ValueError("zeta must be symmetric")
            if np.linalg.eigvalsh(z).min() < -1e-10:
                raise ValueError("zeta must be positive semi-definite")
            object.__setattr__(self, "zeta", z)
        AdamWState(lr=self.lr, weight_decay=self.weight_decay)

    @property
    def topo_active(self):
        return self.eta > 0 and self.topo.active


class SolverResult(NamedTuple):
    u: np.ndarray
    v: np.ndarray
    q: np.ndarray
    log: list
    n_iter: int
    converged: bool


def energy_terms(u, o, weights, lam, gamma, zeta=None):
    """``(F, S, R)`` of a soft segmentation; ``ln u`` is floored at 1e-12."""
    u = np.asarray(u, dtype=float)
    f = -float(np.sum(o * u))
    s = gamma * float(np.sum(u * np.log(np.maximum(u, LOG_FLOOR))))
    r = float(np.sum(u * nonlocal_N(u, weights, lam, zeta)))
    return f, s, r


def _wt_value(v, topo):
    if not topo.active:
        return 0.0
    frozen = FrozenCriticalSets.from_diagram(compute_superlevel_persistence(v), topo)
    return surrogate_energy(v, frozen, topo)


def run_topo_nlstd(o, image, config, *, callback: Optional[Callable] = None):
    """Run the topology-constrained NLSTD iteration.

    Parameters
    ----------
    o : ndarray of shape (L, H, W)
        Feature field (unary scores, larger = more likely).
    image : ndarray of shape (H, W)
        Reference image of the nonlocal weights.
    config : SolverConfig
    callback : callable, optional
        ``callback(t, u, v, q)`` after every outer iteration.

    Returns
    -------
    SolverResult
        ``log`` holds one dict per iterate (row 0 is the initialization) with
        keys :data:`LOG_COLUMNS`.

    Raises
    ------
    SimplexViolationError
        If an iterate leaves the simplex (should not happen).
    """
    o = check_channels(o, "o")
    image = check_field(image, "image")
    n, h, w = o.shape
    if image.shape != (h, w):
        raise ValueError(f"image shape {image.shape} does not match features {o.shape[1:]}")
    ch = int(config.topo_channel)
    if not 0 <= ch < n:
        raise ValueError(f"topo_channel {ch} out of range for {n} classes")
    zeta = _zeta(config.zeta, n)
    stack = config.weights.bind(image, n).stack()
    lam, gamma, eta, topo = config.lam, config.gamma, config.eta, config.topo
    use_topo = config.topo_active

    def topo_state(v):
        # one diagram per iterate: its critical sets drive the next v step and its energy is logged
        if not use_topo:
            return FrozenCriticalSets.empty((h, w)), 0.0
        frozen_v = FrozenCriticalSets.from_diagram(compute_superlevel_persistence(v), topo)
        return frozen_v, surrogate_energy(v, frozen_v, topo)

    def log_row(t, u, v, energy_t, delta):
        f, s, r = energy_terms(u, o, stack, lam, gamma, zeta)
        return {
            "iter": t,
            "energy_F": f,
            "energy_S": s,
            "energy_R": r,
            "energy_T": energy_t,
            "l1_gap": float(np.abs(v - u[ch]).sum()),
            "delta_u_inf": delta,
        }

    u = softmax_channels(o)
    check_simplex(u, SIMPLEX_ATOL)
    v = u[ch].copy()
    if use_topo and config.v_init_steps > 0:
        frozen = FrozenCriticalSets.from_diagram(compute_superlevel_persistence(u[ch]), topo)
        state = AdamWState(lr=config.lr, weight_decay=config.weight_decay)
        for _ in range(int(config.v_init_steps)):
            v, state = v_update(v, np.zeros_like(v), frozen, topo, state, 0.0)
    q = np.clip(v - u[ch], -1.0, 1.0)
    current, energy_t = topo_state(v)
    log = [log_row(0, u, v, energy_t, math.nan)]

    state = AdamWState(lr=config.lr, weight_decay=config.weight_decay)
    frozen = current
    converged = False
    t = 0
    for t in range(1, int(config.max_iters) + 1):
        q = dual_q_update(q, v, u[ch])
        if use_topo:
            if (t - 1) % config.recompute_every == 0:
                frozen = current
            v, state = v_update(v, q, frozen, topo, state, eta)
            current, energy_t = topo_state(v)
        p = subgradient_p(u, stack, lam, zeta)
        u_new = u_update(o, p, q, eta, gamma, ch)
        check_simplex(u_new, SIMPLEX_ATOL)
        delta = float(np.max(np.abs(u_new - u)))
        u = u_new
        log.append(log_row(t, u, v, energy_t, delta))
        if callback is not None:
            callback(t, u, v, q)
        if delta < config.tol:
            converged = True
            break
    return SolverResult(u, v, q, log, t, converged)


def write_log(log, fp):
    """Write an iterate log as CSV to a path or text file object."""
    if isinstance(fp, (str, bytes)) or hasattr(fp, "__fspath__"):
        with open(fp, "w", newline="") as fh:
            write_log(log, fh)
        return
    writer = csv.DictWriter(fp, fieldnames=LOG_COLUMNS)
    writer.writeheader()
    for row in log:
        writer.writerow({k: (repr(row[k]) if isinstance(row[k], float) else row[k]) for k in LOG_COLUMNS})


# ---------------------------------------------------------------- losses and metrics

def _as_stack(a, name):
    a = np.asarray(a, dtype=float)
    if a.ndim == 2:
        a = a[None]
    if a.ndim != 3:
        raise ValueError(f"{name} must be (H, W) or (L, H, W), got shape {a.shape}")
    return a


def dice_loss(u, g):
    """``1 - mean_l 2<u_l, g_l> / (|u_l|^2 + |g_l|^2)``; an all-zero channel pair scores a dice term of 1."""
    u, g = _as_stack(u, "u"), _as_stack(g, "g")
    if u.shape != g.shape:
        raise ValueError(f"shape mismatch: u {u.shape} vs g {g.shape}")
    terms = []
    for ul, gl in zip(u, g):
        denom = float(np.sum(ul * ul) + np.sum(gl * gl))
        terms.append(1.0 if denom == 0 else 2.0 * float(np.sum(ul * gl)) / denom)
    return 1.0 - float(np.mean(terms))


def topo_loss(u, g, alpha, topo, *, channel=0):
    """Dice loss plus ``alpha`` times the WT energy of ``u[channel]``."""
    loss = dice_loss(u, g)
    if alpha == 0:
        return loss
    field_ = _as_stack(u, "u")[channel]
    return loss + alpha * _wt_value(field_, topo)


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    dice: float
    iou: float
    betti_error_0: float
    betti_error_1: float

    def as_dict(self):
        return {k: getattr(self, k) for k in ("accuracy", "dice", "iou", "betti_error_0", "betti_error_1")}


def _betti(mask):
    diagram = compute_superlevel_persistence(mask.astype(float))
    return betti_at_threshold(diagram, 0.5, 0), betti_at_threshold(diagram, 0.5, 1)


def metrics(pred, truth, beta=None):
    """Volumetric and topological scores of a prediction, both binarized at 0.5.

    Parameters
    ----------
    pred, truth : ndarray of shape (H, W)
    beta : (int, int), optional
        Target Betti numbers; when omitted they are read off ``truth``.

    Notes
    -----
    Dice and IoU of two empty masks are 1.
    """
    p = check_field(pred, "pred") >= 0.5
    t = check_field(truth, "truth") >= 0.5
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: pred {p.shape} vs truth {t.shape}")
    inter = int(np.sum(p & t))
    union = int(np.sum(p | t))
    size = int(p.sum() + t.sum())
    acc = float(np.mean(p == t))
    dice = 1.0 if size == 0 else 2.0 * inter / size
    iou = 1.0 if union == 0 else inter / union
    b_pred = _betti(p)
    b_true = _betti(t) if beta is None else tuple(beta)
    return MetricsReport(
        accuracy=acc,
        dice=dice,
        iou=iou,
        betti_error_0=float(abs(b_pred[0] - b_true[0])),
        betti_error_1=float(abs(b_pred[1] - b_true[1])),
    )
