import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from widthtopo import SimplexViolationError
from widthtopo.fixtures import two_blob_segmentation
from widthtopo.nlstd import (
    LOG_COLUMNS,
    SolverConfig,
    WeightModel,
    dice_loss,
    dual_q_update,
    energy_terms,
    metrics,
    nonlocal_N,
    run_topo_nlstd,
    softmax_channels,
    subgradient_p,
    topo_loss,
    u_update,
    unary_features,
    v_update,
    weight,
    write_log,
)
from widthtopo.optimizer import AdamWState
from widthtopo.topo_energy import FrozenCriticalSets, TopoParams


def brute_weight(image, x, y, omega0, omega1, a1, a2, a3, n_classes, radius):
    if max(abs(x[0] - y[0]), abs(x[1] - y[1])) > radius:
        return 0.0
    d2 = (x[0] - y[0]) ** 2 + (x[1] - y[1]) ** 2
    c2 = (image[x] - image[y]) ** 2
    return n_classes * (omega0 * math.exp(-c2 / a1 - d2 / a2) + omega1 * math.exp(-d2 / a3))


@pytest.fixture
def small(rng):
    image = rng.uniform(size=(6, 6))
    model = WeightModel(omega0=0.7, omega1=0.4, alpha1=0.5, alpha2=2.0, alpha3=4.0, radius=2).bind(image, 3)
    u = softmax_channels(rng.normal(size=(3, 6, 6)))
    return image, model, u


def test_weights_match_brute_force(small):
    image, model, _ = small
    dense = model.stack().dense()
    for xi in range(36):
        for yi in range(36):
            x, y = divmod(xi, 6), divmod(yi, 6)
            want = brute_weight(image, x, y, 0.7, 0.4, 0.5, 2.0, 4.0, 3, 2)
            assert dense[xi, yi] == pytest.approx(want, rel=1e-12, abs=1e-300)
            assert weight(x, y, model) == pytest.approx(want, rel=1e-12, abs=1e-300)


def test_weights_symmetric(small):
    _, model, _ = small
    dense = model.stack().dense()
    assert np.array_equal(dense, dense.T)


def test_per_class_parameters_sum():
    image = np.zeros((3, 3))
    model = WeightModel(omega0=[1.0, 2.0], omega1=[0.0, 0.5], alpha1=1.0, alpha2=[1.0, 2.0], alpha3=3.0, radius=1).bind(image)
    want = math.exp(-1.0) + 2.0 * math.exp(-0.5) + 0.5 * math.exp(-1 / 3)
    assert weight((0, 0), (0, 1), model) == pytest.approx(want)


def test_nonlocal_N_brute_force(small):
    _, model, u = small
    stack = model.stack()
    dense = stack.dense()
    zeta = np.array([[1.0, 0.2, 0.0], [0.2, 1.0, 0.3], [0.0, 0.3, 1.0]])
    lam = np.array([0.5, 1.0, 2.0])
    got = nonlocal_N(u, stack, lam, zeta)
    flat = (1 - u).reshape(3, -1)
    for l in range(3):
        want = lam[l] * sum(zeta[l, m] * dense @ flat[m] for m in range(3))
        np.testing.assert_allclose(got[l].ravel(), want, rtol=1e-12)


@pytest.mark.parametrize("lam, zeta", [(0.5, None), ([0.5, 1.0, 2.0], None), (0.3, [[1, 0.5, 0], [0.5, 1, 0], [0, 0, 1]])])
def test_subgradient_matches_finite_differences(small, lam, zeta):
    _, model, u = small
    stack = model.stack()

    def R(v):
        return float(np.sum(v * nonlocal_N(v, stack, lam, zeta)))

    p = subgradient_p(u, stack, lam, zeta)
    h = 1e-6
    for idx in [(0, 0, 0), (1, 2, 3), (2, 5, 5), (0, 3, 1)]:
        d = np.zeros_like(u)
        d[idx] = h
        assert p[idx] == pytest.approx((R(u + d) - R(u - d)) / (2 * h), rel=1e-6)


def test_symmetric_and_general_forms_agree(small):
    _, model, u = small
    stack = model.stack()
    a = subgradient_p(u, stack, 0.5, form="symmetric")
    b = subgradient_p(u, stack, 0.5, form="general")
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)
    with pytest.raises(ValueError):
        subgradient_p(u, stack, 0.5, form="other")


def test_apply_transpose_is_adjoint(small, rng):
    _, model, _ = small
    stack = model.stack()
    f, g = rng.normal(size=(2, 6, 6))
    assert np.sum(g * stack.apply(f)) == pytest.approx(np.sum(f * stack.apply_transpose(g)))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_q_update_clamped(seed):
    rng = np.random.default_rng(seed)
    q = rng.uniform(-1, 1, size=(4, 4))
    out = dual_q_update(q, rng.normal(size=(4, 4)) * 3, rng.uniform(size=(4, 4)))
    assert np.abs(out).max() <= 1.0


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.05, 5.0))
def test_u_update_on_simplex(seed, gamma):
    rng = np.random.default_rng(seed)
    o = rng.normal(size=(3, 5, 5)) * 20
    out = u_update(o, rng.normal(size=o.shape), rng.uniform(-1, 1, size=(5, 5)), 3.0, gamma, 1)
    assert np.all(out >= 0)
    np.testing.assert_allclose(out.sum(axis=0), 1.0, atol=1e-12)


def test_u_update_only_shifts_topo_channel(rng):
    o = rng.normal(size=(2, 3, 3))
    p = np.zeros_like(o)
    q = np.ones((3, 3))
    got = u_update(o, p, q, 2.0, 0.5, 0)
    z = o.copy()
    z[0] += 2.0
    np.testing.assert_allclose(got, softmax_channels(z / 0.5))


def test_v_update_without_topology_follows_q():
    v = np.full((3, 3), 0.5)
    topo = TopoParams(mu0=0.0, mu1=0.0)
    new, state = v_update(v, np.ones((3, 3)), FrozenCriticalSets.empty((3, 3)), topo, AdamWState(lr=0.1, weight_decay=0.0), 1.0)
    np.testing.assert_allclose(new, 0.4)
    assert state.t == 1


def test_unary_features():
    o = unary_features(np.array([[0.2, 0.8]]), [0.2, 0.8], sigma=0.5)
    np.testing.assert_allclose(o, [[[0.0, -1.44]], [[-1.44, 0.0]]])
    with pytest.raises(ValueError):
        unary_features(np.zeros((2, 2)), [0.5])


def test_energy_terms_entropy_floor():
    u = np.stack([np.ones((2, 2)), np.zeros((2, 2))])
    model = WeightModel(radius=1).bind(np.zeros((2, 2)))
    f, s, r = energy_terms(u, np.zeros_like(u), model.stack(), 0.5, 0.3)
    assert f == 0.0 and s == 0.0 and math.isfinite(r)


def segmentation_problem(seed=0, shape=(20, 24)):
    image, truth = two_blob_segmentation(seed=seed, noise=0.05, shape=shape)
    return unary_features(image, [0.8, 0.2]), image, truth


def test_solver_log_and_invariants():
    o, image, _ = segmentation_problem()
    seen = []
    res = run_topo_nlstd(o, image, SolverConfig(max_iters=15, tol=0.0), callback=lambda t, u, v, q: seen.append((t, np.abs(q).max())))
    assert [row["iter"] for row in res.log] == list(range(16))
    assert math.isnan(res.log[0]["delta_u_inf"])
    assert all(row["delta_u_inf"] >= 0 for row in res.log[1:])
    assert [t for t, _ in seen] == list(range(1, 16))
    assert max(m for _, m in seen) <= 1.0
    assert res.n_iter == 15 and not res.converged
    np.testing.assert_allclose(res.u.sum(axis=0), 1.0, atol=1e-12)


def test_solver_converges_and_stops():
    o, image, _ = segmentation_problem()
    res = run_topo_nlstd(o, image, SolverConfig(eta=0.0, max_iters=200, tol=1e-3))
    assert res.converged and res.n_iter < 200
    assert res.log[-1]["delta_u_inf"] < 1e-3


def test_topology_does_not_add_components():
    o, image, _ = segmentation_problem(seed=1)
    base = run_topo_nlstd(o, image, SolverConfig(eta=0.0, max_iters=80))
    topo = run_topo_nlstd(o, image, SolverConfig(eta=3.0, max_iters=80))
    assert metrics(topo.u[0], base.u[0] >= 0.5).dice > 0.9
    b_base = metrics(base.u[0], np.ones_like(image), beta=(1, 0)).betti_error_0
    b_topo = metrics(topo.u[0], np.ones_like(image), beta=(1, 0)).betti_error_0
    assert b_topo <= b_base


def test_simplex_violation_is_raised(monkeypatch):
    import widthtopo.nlstd as nl

    o, image, _ = segmentation_problem()
    monkeypatch.setattr(nl, "u_update", lambda *a, **k: np.full_like(o, 0.7))
    with pytest.raises(SimplexViolationError):
        run_topo_nlstd(o, image, SolverConfig(max_iters=3))


def test_solver_input_validation():
    o, image, _ = segmentation_problem()
    with pytest.raises(ValueError):
        run_topo_nlstd(o, image[:-1], SolverConfig())
    with pytest.raises(ValueError):
        run_topo_nlstd(o, image, SolverConfig(topo_channel=2))


@pytest.mark.parametrize(
    "kwargs",
    [
        {"gamma": 0.0},
        {"eta": -1.0},
        {"max_iters": -1},
        {"recompute_every": 0},
        {"zeta": [[1.0, 2.0], [0.0, 1.0]]},
        {"zeta": [[0.0, 1.0], [1.0, 0.0]]},
        {"lr": 0.0},
    ],
)
def test_bad_solver_config(kwargs):
    with pytest.raises(ValueError):
        SolverConfig(**kwargs)


def test_write_log_roundtrip():
    o, image, _ = segmentation_problem()
    res = run_topo_nlstd(o, image, SolverConfig(max_iters=3, tol=0.0))
    buf = io.StringIO()
    write_log(res.log, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == ",".join(LOG_COLUMNS)
    assert len(lines) == 5
    assert float(lines[2].split(",")[1]) == res.log[1]["energy_F"]


def test_dice_loss_and_topo_loss():
    g = np.stack([np.eye(4), 1 - np.eye(4)])
    assert dice_loss(g, g) == 0.0
    assert dice_loss(g, g[::-1]) == 1.0
    assert topo_loss(g, g, 0.0, TopoParams()) == 0.0
    assert topo_loss(g, g, 1.0, TopoParams()) > 0.0  # the diagonal has four 4-components


def test_metrics_identical_and_inverted():
    truth = np.zeros((8, 8))
    truth[2:6, 2:6] = 1
    rep = metrics(truth, truth)
    assert rep.as_dict() == {"accuracy": 1.0, "dice": 1.0, "iou": 1.0, "betti_error_0": 0.0, "betti_error_1": 0.0}
    assert metrics(1 - truth, truth).dice == 0.0


def test_metrics_counting_oracle(rng):
    from oracles import betti_flood

    pred = rng.uniform(size=(12, 12))
    truth = rng.uniform(size=(12, 12))
    p, t = pred >= 0.5, truth >= 0.5
    rep = metrics(pred, truth)
    assert rep.accuracy == np.mean(p == t)
    assert rep.dice == pytest.approx(2 * np.sum(p & t) / (p.sum() + t.sum()))
    assert rep.iou == pytest.approx(np.sum(p & t) / np.sum(p | t))
    bp, bt = betti_flood(p), betti_flood(t)
    assert rep.betti_error_0 == abs(bp[0] - bt[0]) and rep.betti_error_1 == abs(bp[1] - bt[1])


def test_metrics_empty_masks():
    rep = metrics(np.zeros((3, 3)), np.zeros((3, 3)))
    assert rep.dice == 1.0 and rep.iou == 1.0


def test_u_update_closed_forms():
    z = np.zeros((2, 1, 1))
    np.testing.assert_allclose(u_update(z, z, None, 0.0, 0.3, 0), 0.5)
    o = np.array([[[0.3 * math.log(3)]], [[0.0]]])
    np.testing.assert_allclose(u_update(o, np.zeros_like(o), np.zeros((1, 1)), 3.0, 0.3, 0).ravel(), [0.75, 0.25])


def test_v_update_weight_decay_only():
    v = np.full((3, 3), 0.5)
    out, _ = v_update(v, np.zeros_like(v), FrozenCriticalSets.empty(v.shape), TopoParams(), AdamWState(lr=0.1, weight_decay=0.2), 3.0)
    np.testing.assert_allclose(out, 0.5 * (1 - 0.1 * 0.2))


def test_v_update_large_eta_decreases_v(rng):
    v = rng.uniform(size=(6, 6))
    p = TopoParams(mu0=1.0, mu1=1.0)
    frozen = FrozenCriticalSets.from_diagram(__import__("widthtopo").compute_superlevel_persistence(v), p)
    out, _ = v_update(v, np.ones_like(v), frozen, p, AdamWState(lr=0.01, weight_decay=0.0), 100.0)
    assert np.all(out < v)


def test_v_gradient_matches_finite_differences(rng, monkeypatch):
    import widthtopo.nlstd as nl
    from widthtopo import compute_superlevel_persistence, surrogate_energy

    from oracles import distinct_field

    v = distinct_field(rng, (7, 7))
    q = rng.uniform(-1, 1, size=v.shape)
    p = TopoParams(mu0=1.0, mu1=1.0, beta1=1)
    frozen = FrozenCriticalSets.from_diagram(compute_superlevel_persistence(v), p)
    seen = {}

    def spy(state, param, grad):
        seen["grad"] = grad
        return state, param

    monkeypatch.setattr(nl, "adamw_step", spy)
    v_update(v, q, frozen, p, AdamWState(), 2.5)
    h = 1e-6
    fd = np.zeros_like(v)
    for idx in np.ndindex(v.shape):
        d = np.zeros_like(v)
        d[idx] = h
        fd[idx] = (
            surrogate_energy(v + d, frozen, p) + 2.5 * np.sum(q * (v + d))
            - surrogate_energy(v - d, frozen, p) - 2.5 * np.sum(q * (v - d))
        ) / (2 * h)
    assert np.linalg.norm(seen["grad"] - fd) <= 1e-5 * np.linalg.norm(fd)


def test_metrics_empty_prediction():
    truth = np.zeros((4, 4))
    truth[1:3, 1:3] = 1
    rep = metrics(np.zeros((4, 4)), truth)
    assert rep.dice == 0.0 and rep.iou == 0.0
