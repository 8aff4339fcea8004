"""TOML configuration for the solver and the direct minimizer.

Sections and keys::

    [nlstd]    lambda, gamma            (optional: zeta, topo_channel, max_iters, tol,
                                          v_init_steps, recompute_every)
    [weights]  omega0, omega1, alpha1, alpha2, alpha3   (optional: radius)
    [adamw]    nu, tau
    [topo]     eta, epsilon, r, mu0, mu1, beta0, beta1  (optional: shape)
    [minimize] optional: iters, keep_best
    [features] optional: means, sigma

``eta`` is only read by the solver; the minimizer ignores it.
"""

import sys

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on older interpreters only
    import tomli as tomllib

from .grid import NeighborhoodSpec
from .morphology import SmoothParams
from .nlstd import SolverConfig, WeightModel
from .topo_energy import TopoParams

__all__ = [
    "ConfigError",
    "load_config",
    "topo_params",
    "adamw_params",
    "minimize_settings",
    "solver_config",
    "feature_settings",
]

TOPO_KEYS = ("epsilon", "r", "mu0", "mu1", "beta0", "beta1")
WEIGHT_KEYS = ("omega0", "omega1", "alpha1", "alpha2", "alpha3")


class ConfigError(ValueError):
    """Invalid or incomplete configuration; ``key`` names the offending entry when known."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


def load_config(path):
    """Parse a TOML file into a dict; syntax errors become :class:`ConfigError`."""
    with open(path, "rb") as fh:
        try:
            return tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc


def _section(cfg, name):
    sec = cfg.get(name)
    if sec is None:
        raise ConfigError(f"missing config section [{name}]", key=name)
    if not isinstance(sec, dict):
        raise ConfigError(f"[{name}] must be a table", key=name)
    return sec


def _number(sec, section, key, default=None, *, integer=False):
    if key not in sec:
        if default is None:
            raise ConfigError(f"missing config key '{key}' in [{section}]", key=key)
        return default
    val = sec[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"[{section}] {key} must be a number, got {val!r}", key=key)
    if integer:
        if int(val) != val:
            raise ConfigError(f"[{section}] {key} must be an integer, got {val!r}", key=key)
        return int(val)
    return float(val)


def _build(factory, **kwargs):
    try:
        return factory(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def topo_params(cfg):
    """:class:`TopoParams` from the [topo] section."""
    sec = _section(cfg, "topo")
    vals = {k: _number(sec, "topo", k, integer=k in ("r", "beta0", "beta1")) for k in TOPO_KEYS}
    shape = sec.get("shape", "square")
    nb = _build(NeighborhoodSpec, shape=shape, radius=vals["r"])
    smooth = _build(SmoothParams, eps=vals["epsilon"], nb=nb)
    return _build(
        TopoParams, mu0=vals["mu0"], mu1=vals["mu1"], beta0=vals["beta0"], beta1=vals["beta1"], smooth=smooth
    )


def adamw_params(cfg):
    """``(nu, tau)``, i.e. weight decay and learning rate, from [adamw]."""
    sec = _section(cfg, "adamw")
    return _number(sec, "adamw", "nu"), _number(sec, "adamw", "tau")


def minimize_settings(cfg):
    """Keyword arguments for :func:`widthtopo.minimize.minimize_energy`, without ``variant``."""
    nu, tau = adamw_params(cfg)
    sec = cfg.get("minimize", {})
    keep_best = sec.get("keep_best", True)
    if not isinstance(keep_best, bool):
        raise ConfigError(f"[minimize] keep_best must be a boolean, got {keep_best!r}", key="keep_best")
    return {
        "params": topo_params(cfg),
        "lr": tau,
        "weight_decay": nu,
        "iters": _number(sec, "minimize", "iters", 500, integer=True),
        "keep_best": keep_best,
    }


def solver_config(cfg):
    """:class:`SolverConfig` from [nlstd], [weights], [adamw] and [topo]."""
    nl = _section(cfg, "nlstd")
    wsec = _section(cfg, "weights")
    topo_sec = _section(cfg, "topo")
    weights = _build(
        WeightModel,
        **{k: _number(wsec, "weights", k) for k in WEIGHT_KEYS},
        radius=_number(wsec, "weights", "radius", 7, integer=True),
    )
    nu, tau = adamw_params(cfg)
    lam = nl.get("lambda")
    if lam is None:
        raise ConfigError("missing config key 'lambda' in [nlstd]", key="lambda")
    if not isinstance(lam, (int, float, list)) or isinstance(lam, bool):
        raise ConfigError(f"[nlstd] lambda must be a number or a list, got {lam!r}", key="lambda")
    return _build(
        SolverConfig,
        lam=lam,
        gamma=_number(nl, "nlstd", "gamma"),
        eta=_number(topo_sec, "topo", "eta"),
        weights=weights,
        zeta=nl.get("zeta"),
        topo=topo_params(cfg),
        lr=tau,
        weight_decay=nu,
        topo_channel=_number(nl, "nlstd", "topo_channel", 0, integer=True),
        max_iters=_number(nl, "nlstd", "max_iters", 300, integer=True),
        tol=_number(nl, "nlstd", "tol", 1e-4),
        v_init_steps=_number(nl, "nlstd", "v_init_steps", 25, integer=True),
        recompute_every=_number(nl, "nlstd", "recompute_every", 1, integer=True),
    )


def feature_settings(cfg):
    """``(means, sigma)`` from the optional [features] section; ``means`` may be None."""
    sec = cfg.get("features", {})
    means = sec.get("means")
    if means is not None and (not isinstance(means, list) or len(means) < 2):
        raise ConfigError("[features] means must be a list of at least two numbers", key="means")
    return means, _number(sec, "features", "sigma", 0.25)
