"""Acceptance criteria, one test each, at their stated tolerances.

Every test records a PASS/FAIL line that the terminal summary prints after
the run; ``python tests/test_acceptance.py`` prints the same lines directly.
"""

import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from oracles import (
    betti_flood,
    distinct_field,
    erosion_connected,
    euler_characteristic,
    random_field,
    window,
)
from widthtopo import (
    NeighborhoodSpec,
    SmoothParams,
    SolverConfig,
    TopoParams,
    WeightModel,
    betti_at_threshold,
    compute_superlevel_persistence,
    minimize_energy,
    run_topo_nlstd,
    smooth_dilation,
    smooth_dilation_value,
    smooth_erosion,
    surrogate_energy,
    surrogate_gradient,
    unary_features,
)
from widthtopo.fixtures import single_saddle_field, three_component_field, two_blob_field
from widthtopo.grid import PixelIndex
from widthtopo.topo_energy import FrozenCriticalSets


def record(number, title, passed, detail):
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


# ---------------------------------------------------------------- 1

def check_persistence_oracle(n_fields=200, seed=0):
    rng = np.random.default_rng(seed)
    mismatches = 0
    n_checks = 0
    for _ in range(n_fields):
        f = random_field(rng)
        diagram = compute_superlevel_persistence(f)
        levels = np.unique(f)
        # every level plus points strictly between and outside the levels
        mids = (levels[1:] + levels[:-1]) / 2
        for t in np.concatenate([levels, mids, [levels[0] - 0.5, levels[-1] + 0.5]]):
            mask = f >= t
            b0, b1 = betti_flood(mask)
            got = (betti_at_threshold(diagram, t, 0), betti_at_threshold(diagram, t, 1))
            n_checks += 1
            if got != (b0, b1) or b0 - b1 != euler_characteristic(mask):
                mismatches += 1
    return mismatches, n_checks


def test_criterion_1_persistence_oracle():
    start = time.perf_counter()
    mismatches, n_checks = check_persistence_oracle()
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and elapsed < 10
    record(1, "persistence oracle equivalence", ok, f"{n_checks} thresholds, {mismatches} mismatches, {elapsed:.1f}s")
    assert ok


# ---------------------------------------------------------------- 2

def check_event_sequence():
    diagram = compute_superlevel_persistence(three_component_field())
    dim0 = sorted((round(p.birth * 255), round(p.death * 255)) for p in diagram.finite(0))
    dim1 = sorted((round(p.birth * 255), round(p.death * 255)) for p in diagram.finite(1))
    exact = all(
        p.birth * 255 == round(p.birth * 255) and p.death * 255 == round(p.death * 255)
        for p in diagram.finite(0) + diagram.finite(1)
    )
    return dim0, dim1, len(diagram.essential(0)), len(diagram.essential(1)), exact


def test_criterion_2_event_sequence():
    dim0, dim1, ess0, ess1, exact = check_event_sequence()
    ok = dim0 == [(243, 65), (243, 241)] and dim1 == [(26, 1), (198, 1)] and ess0 == 1 and ess1 == 0 and exact
    record(2, "event-sequence reconstruction", ok, f"dim0={dim0} dim1={dim1} essential0={ess0}")
    assert ok


# ---------------------------------------------------------------- 3

GRAD_PARAMS = TopoParams(mu0=1.0, mu1=1.0, beta0=1, beta1=1, smooth=SmoothParams(0.0625, NeighborhoodSpec("square", 2)))


def check_gradient_fidelity(n_fields=50, seed=1, h=1e-6):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_fields):
        u = distinct_field(rng)
        frozen = FrozenCriticalSets.from_diagram(compute_superlevel_persistence(u), GRAD_PARAMS)
        g = surrogate_gradient(u, frozen, GRAD_PARAMS)
        fd = np.zeros_like(u)
        for idx in np.ndindex(u.shape):
            up, dn = u.copy(), u.copy()
            up[idx] += h
            dn[idx] -= h
            fd[idx] = (surrogate_energy(up, frozen, GRAD_PARAMS) - surrogate_energy(dn, frozen, GRAD_PARAMS)) / (2 * h)
        rel = np.linalg.norm(g - fd) / max(np.linalg.norm(g), 1e-300)
        worst = max(worst, rel)
    return worst


def test_criterion_3_gradient_fidelity():
    start = time.perf_counter()
    worst = check_gradient_fidelity()
    elapsed = time.perf_counter() - start
    ok = worst < 1e-5 and elapsed < 30
    record(3, "surrogate gradient vs central differences", ok, f"max rel err {worst:.2e}, {elapsed:.1f}s")
    assert ok


# ---------------------------------------------------------------- 4

def check_soft_extrema(n_windows=1000, seed=2):
    rng = np.random.default_rng(seed)
    violations = 0
    for eps in (0.25, 0.0625, 0.01):
        for _ in range(n_windows):
            h, w = rng.integers(1, 12, size=2)
            r = int(rng.integers(1, 4))
            f = rng.uniform(0, 1, size=(h, w))
            x = PixelIndex(int(rng.integers(h)), int(rng.integers(w)))
            params = SmoothParams(eps, NeighborhoodSpec("square", r))
            vals = window(f, x, r)
            if abs(smooth_dilation_value(f, x, params) - vals.max()) > eps * math.log(vals.size):
                violations += 1
    dual_equal = True
    for eps in (0.25, 0.0625, 0.01):
        f = rng.uniform(0, 1, size=(20, 20))
        params = SmoothParams(eps, NeighborhoodSpec("square", 2))
        dual_equal &= bool(np.array_equal(smooth_erosion(f, params), -smooth_dilation(-f, params)))
    return violations, dual_equal


def test_criterion_4_soft_extrema_bound():
    violations, dual_equal = check_soft_extrema()
    ok = violations == 0 and dual_equal
    record(4, "soft-extrema bound and erosion/dilation duality", ok, f"{violations} bound violations, dual bit-equal={dual_equal}")
    assert ok


# ---------------------------------------------------------------- 5

WIDTH_PARAMS = TopoParams(mu0=1.0, mu1=0.0, beta0=1, beta1=0, smooth=SmoothParams(0.0625, NeighborhoodSpec("square", 2)))


def check_width_separation():
    f = two_blob_field()
    out = {}
    for variant in ("wt", "ph"):
        res = minimize_energy(f, WIDTH_PARAMS, lr=0.01, weight_decay=0.01, iters=500, variant=variant)
        diagram = compute_superlevel_persistence(res.field)
        out[variant] = (betti_at_threshold(diagram, 0.5, 0), erosion_connected(res.field))
    return out


def test_criterion_5_width_separation():
    start = time.perf_counter()
    out = check_width_separation()
    elapsed = time.perf_counter() - start
    ok = out["wt"] == (1, True) and out["ph"] == (1, False) and elapsed < 60
    record(
        5,
        "width separation",
        ok,
        f"WT beta0={out['wt'][0]} eroded-connected={out['wt'][1]}; "
        f"PH beta0={out['ph'][0]} eroded-connected={out['ph'][1]}; {elapsed:.1f}s",
    )
    assert ok


# ---------------------------------------------------------------- 6

def check_width_monotonicity(threshold=1e-6):
    f = single_saddle_field()
    counts = []
    for eps in (0.01, 0.0625, 0.25):
        params = TopoParams(mu0=1.0, mu1=0.0, beta0=1, beta1=0, smooth=SmoothParams(eps, NeighborhoodSpec("square", 2)))
        diagram = compute_superlevel_persistence(f)
        frozen = FrozenCriticalSets.from_diagram(diagram, params)
        (pair,) = frozen.penalized[0]
        g = surrogate_gradient(f, frozen, params)
        counts.append(int(np.sum(np.abs(window(g, pair.death_pixel, 2)) > threshold)))
    return counts


def test_criterion_6_width_monotonicity():
    counts = check_width_monotonicity()
    ok = all(a <= b for a, b in zip(counts, counts[1:]))
    record(6, "gradient support nondecreasing in eps", ok, f"support counts {counts} for eps 0.01, 0.0625, 0.25")
    assert ok


# ---------------------------------------------------------------- 7

def descent_config():
    return SolverConfig(
        lam=0.5,
        gamma=0.3,
        eta=0.0,
        weights=WeightModel(omega0=0.0, omega1=1.0, alpha1=1.0, alpha2=3.0, alpha3=3.0),
        zeta=np.eye(2),
        max_iters=100,
        tol=0.0,
    )


def check_cccp_descent(n_problems=20, seed=3, tol=1e-10):
    rng = np.random.default_rng(seed)
    config = descent_config()
    worst = -math.inf
    for _ in range(n_problems):
        image = rng.uniform(0, 1, size=(32, 32))
        res = run_topo_nlstd(unary_features(image, [0.3, 0.7]), image, config)
        total = np.array([row["energy_F"] + row["energy_S"] + row["energy_R"] for row in res.log])
        worst = max(worst, float(np.max(np.diff(total))))
    return worst <= tol, worst


def test_criterion_7_cccp_descent():
    ok, worst = check_cccp_descent()
    record(7, "CCCP descent with topology off", ok, f"largest per-iteration increase {worst:.3e}")
    assert ok


# ---------------------------------------------------------------- 8

def check_invariants(seed=4):
    from widthtopo.fixtures import two_blob_segmentation

    worst_sum, worst_q, n_iterates = 0.0, 0.0, 0
    for s in range(3):
        image, _ = two_blob_segmentation(seed=seed + s, noise=0.1)
        config = SolverConfig(max_iters=40, tol=0.0)

        def check(t, u, v, q):
            nonlocal worst_sum, worst_q, n_iterates
            worst_sum = max(worst_sum, float(np.max(np.abs(u.sum(axis=0) - 1))))
            worst_q = max(worst_q, float(np.max(np.abs(q))))
            n_iterates += 1

        run_topo_nlstd(unary_features(image, [0.8, 0.2]), image, config, callback=check)
    return worst_sum, worst_q, n_iterates


def test_criterion_8_simplex_and_dual():
    worst_sum, worst_q, n = check_invariants()
    ok = worst_sum <= 1e-9 and worst_q <= 1.0 and n > 0
    record(8, "simplex and dual invariants", ok, f"{n} iterates, max |sum u - 1| {worst_sum:.1e}, max |q| {worst_q:.3f}")
    assert ok


# ---------------------------------------------------------------- 9

def test_criterion_9_golden_regression():
    from test_golden import GOLDEN, golden_run

    expected = np.load(GOLDEN)
    got = golden_run()
    ok = got.shape == expected.shape and np.array_equal(got, expected)
    record(9, "eta = 0 segmentation golden file", ok, f"bitwise equal={ok}")
    assert ok


if __name__ == "__main__":
    pytest.main([__file__, "-q"])
    print("\n".join(ACCEPTANCE_LINES))
