"""scikit-learn style wrappers around the solver and the direct minimizer.

Both estimators work on whole images: ``X`` is one ``(H, W)`` image (or, for
the filter, a ``(n_images, H, W)`` stack), not a feature matrix.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_channels, check_field
from .grid import NeighborhoodSpec
from .minimize import minimize_energy
from .morphology import SmoothParams
from .nlstd import SolverConfig, WeightModel, metrics, run_topo_nlstd, unary_features
from .topo_energy import TopoParams

__all__ = ["TopoNLSTDSegmenter", "WidthAwareTopoFilter"]


def _topo_params(est):
    nb = NeighborhoodSpec(est.shape, est.r)
    return TopoParams(
        mu0=est.mu0, mu1=est.mu1, beta0=est.beta0, beta1=est.beta1, smooth=SmoothParams(est.epsilon, nb)
    )


class TopoNLSTDSegmenter(ClusterMixin, BaseEstimator):
    """Topology-constrained nonlocal soft threshold dynamics segmentation.

    Defaults follow the two-class synthetic setting: ``lam=0.5, gamma=0.3``,
    weights ``(omega0, omega1, alpha1, alpha2, alpha3) = (10, 10, 1, 3, 3)``,
    AdamW ``(nu, tau) = (0.01, 0.003)`` and topology
    ``(eta, epsilon, r, mu0, mu1, beta0, beta1) = (3, 0.0625, 3, 1, 1, 1, 0)``.

    Parameters
    ----------
    class_means : sequence of float, optional
        Intensities used to build quadratic unary features when ``fit`` is
        not given ``features``.
    sigma : float
        Width of the quadratic unary features.

    Attributes
    ----------
    soft_segmentation_ : ndarray of shape (L, H, W)
    labels_ : ndarray of shape (H, W)
        Per-pixel argmax of ``soft_segmentation_``.
    v_ : ndarray of shape (H, W)
        Final auxiliary field of the topological channel.
    log_ : list of dict
        Iterate log, one row per iteration.
    n_iter_ : int
    converged_ : bool
    """

    def __init__(
        self,
        *,
        lam=0.5,
        gamma=0.3,
        omega0=10.0,
        omega1=10.0,
        alpha1=1.0,
        alpha2=3.0,
        alpha3=3.0,
        radius=7,
        eta=3.0,
        epsilon=0.0625,
        r=3,
        shape="square",
        mu0=1.0,
        mu1=1.0,
        beta0=1,
        beta1=0,
        nu=0.01,
        tau=0.003,
        topo_channel=0,
        max_iters=300,
        tol=1e-4,
        v_init_steps=25,
        class_means=None,
        sigma=0.25,
    ):
        self.lam = lam
        self.gamma = gamma
        self.omega0 = omega0
        self.omega1 = omega1
        self.alpha1 = alpha1
        self.alpha2 = alpha2
        self.alpha3 = alpha3
        self.radius = radius
        self.eta = eta
        self.epsilon = epsilon
        self.r = r
        self.shape = shape
        self.mu0 = mu0
        self.mu1 = mu1
        self.beta0 = beta0
        self.beta1 = beta1
        self.nu = nu
        self.tau = tau
        self.topo_channel = topo_channel
        self.max_iters = max_iters
        self.tol = tol
        self.v_init_steps = v_init_steps
        self.class_means = class_means
        self.sigma = sigma

    def solver_config(self):
        """The :class:`SolverConfig` described by the current parameters."""
        weights = WeightModel(self.omega0, self.omega1, self.alpha1, self.alpha2, self.alpha3, radius=self.radius)
        return SolverConfig(
            lam=self.lam,
            gamma=self.gamma,
            eta=self.eta,
            weights=weights,
            topo=_topo_params(self),
            lr=self.tau,
            weight_decay=self.nu,
            topo_channel=self.topo_channel,
            max_iters=self.max_iters,
            tol=self.tol,
            v_init_steps=self.v_init_steps,
        )

    def fit(self, X, y=None, features=None):
        """Segment image ``X``.

        Parameters
        ----------
        X : ndarray of shape (H, W)
        y : ignored
        features : ndarray of shape (L, H, W), optional
            Unary scores; built from ``class_means`` when omitted.
        """
        image = check_field(X, "X")
        if features is None:
            if self.class_means is None:
                raise ValueError("either pass features to fit or set class_means")
            features = unary_features(image, self.class_means, self.sigma)
        features = check_channels(features, "features")
        result = run_topo_nlstd(features, image, self.solver_config())
        self.soft_segmentation_ = result.u
        self.labels_ = np.argmax(result.u, axis=0)
        self.v_ = result.v
        self.log_ = result.log
        self.n_iter_ = result.n_iter
        self.converged_ = result.converged
        return self

    def score(self, X, y):
        """Dice overlap between the topological channel and the binary mask ``y``."""
        check_is_fitted(self, "soft_segmentation_")
        pred = self.soft_segmentation_[self.topo_channel]
        return metrics(pred, np.asarray(y, dtype=float)).dice


class WidthAwareTopoFilter(TransformerMixin, BaseEstimator):
    """Push images toward target Betti numbers by direct energy minimization.

    ``transform`` runs AdamW on the WT energy (``variant="wt"``) or the plain
    persistence energy (``variant="ph"``) of each image and returns the
    lowest-energy iterate (or the last one with ``keep_best=False``).

    Attributes
    ----------
    params_ : TopoParams
    energy_trace_ : list of list of float
        Energy traces of the images seen by the last ``transform``.
    best_iter_ : list of int
    """

    def __init__(
        self,
        *,
        mu0=1.0,
        mu1=0.0,
        beta0=1,
        beta1=0,
        epsilon=0.0625,
        r=2,
        shape="square",
        variant="wt",
        lr=0.01,
        weight_decay=0.01,
        iters=500,
        keep_best=True,
    ):
        self.mu0 = mu0
        self.mu1 = mu1
        self.beta0 = beta0
        self.beta1 = beta1
        self.epsilon = epsilon
        self.r = r
        self.shape = shape
        self.variant = variant
        self.lr = lr
        self.weight_decay = weight_decay
        self.iters = iters
        self.keep_best = keep_best

    @staticmethod
    def _as_images(X):
        arr = np.asarray(X, dtype=float)
        if arr.ndim == 2:
            return arr[None], True
        if arr.ndim == 3:
            return arr, False
        raise ValueError(f"X must be (H, W) or (n_images, H, W), got shape {arr.shape}")

    def fit(self, X, y=None):
        images, _ = self._as_images(X)
        for img in images:
            check_field(img, "X", unit_interval=True)
        if self.variant not in ("wt", "ph"):
            raise ValueError(f"variant must be 'wt' or 'ph', got {self.variant!r}")
        self.params_ = _topo_params(self)
        return self

    def transform(self, X):
        check_is_fitted(self, "params_")
        images, single = self._as_images(X)
        out, traces, best = [], [], []
        for img in images:
            res = minimize_energy(
                img,
                self.params_,
                lr=self.lr,
                weight_decay=self.weight_decay,
                iters=self.iters,
                variant=self.variant,
                keep_best=self.keep_best,
            )
            out.append(res.field)
            traces.append(res.energy_trace)
            best.append(res.best_iter)
        self.energy_trace_ = traces
        self.best_iter_ = best
        out = np.stack(out)
        return out[0] if single else out
