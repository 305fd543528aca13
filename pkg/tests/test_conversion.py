import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpotb.accounting import BoundConstants, theoretical_gap_bound
from dpotb.conversion import (
    SensitivityError,
    Variant,
    VariantConfig,
    WeightSchedule,
    build_learner,
    gradient_difference,
    hint_provider,
    loss_gradient_pf,
    loss_gradient_plain,
    loss_gradient_sc,
    run,
    step_average,
)
from dpotb.geometry import make_rng
from dpotb.problems import make_logistic, make_quadratic

INF = math.inf


def quad(sigma_G=1.0, seed=0, **kw):
    return make_quadratic(4, 2.0, 1.0, sigma_G, seed=seed, **kw)


def go(instance, T, mode="plain", learner=None, rho=INF, seed=0, **vkw):
    vc = VariantConfig(mode=mode, **vkw)
    name = learner or {"plain": "osd", "optimistic": "optimistic", "strongly_convex": "sc_osd",
                       "parameter_free": "parameter_free"}[mode]
    L = build_learner(name, instance, vc, T, rho)
    return run(instance, L, instance.dataset(T, [seed, 1]), vc, rho, rng=[seed, 2])


def test_step_average_examples():
    w1 = np.array([0.3, -0.1])
    np.testing.assert_array_equal(step_average(np.zeros(2), w1, 0.0, 1.0), w1)
    ws = np.random.default_rng(0).normal(size=(6, 2))
    x, prefix = np.zeros(2), 0.0
    for w in ws:
        x = step_average(x, w, prefix, 1.0)
        prefix += 1
    np.testing.assert_allclose(x, ws.mean(axis=0), rtol=1e-12)


@given(st.integers(min_value=2, max_value=5000), st.floats(min_value=0, max_value=1))
def test_average_moves_by_at_most_2D_over_t_plus_1(t, frac):
    # k = 1: beta_t / beta_{1:t} = 2 / (t + 1)
    D = 2.0
    sched = WeightSchedule(1)
    x_prev = np.zeros(2)
    w = np.array([frac * D, 0.0])
    x = step_average(x_prev, w, sched.prefix(t - 1), sched.beta(t))
    assert np.linalg.norm(x - x_prev) <= 2 * D / (t + 1) + 1e-15


def test_weight_schedule():
    s = WeightSchedule(3)
    assert s.beta(0) == 0.0 and s.beta(2) == 8.0
    assert s.prefix(4) == 1 + 8 + 27 + 64


def test_gradient_difference_first_round_and_bound():
    inst = quad()
    z = inst.sample(make_rng(0))
    x1 = np.array([0.1, 0.2, 0.0, 0.0])
    np.testing.assert_array_equal(gradient_difference(inst, x1, np.zeros(4), z, 1.0, 0.0), inst.grad(x1, z))


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=0, max_value=10**6), st.integers(min_value=1, max_value=3),
       st.integers(min_value=1, max_value=300))
def test_gradient_difference_within_bound(seed, k, t):
    rng = make_rng(seed)
    inst = make_logistic(3, 2.0, seed=seed % 7, n_eval=200)
    sched = WeightSchedule(k)
    x_prev = inst.domain.project(rng.normal(size=3))
    w = inst.domain.project(rng.normal(size=3))
    x = step_average(x_prev, w, sched.prefix(t - 1), sched.beta(t))
    z = inst.sample(rng)
    d = gradient_difference(inst, x, x_prev, z, sched.beta(t), sched.beta(t - 1))
    bound = (k + 1) * (inst.G + inst.H * np.linalg.norm(w - x_prev)) * t ** (k - 1)
    assert np.linalg.norm(d) <= bound * (1 + 1e-12)


def test_loss_gradients():
    g, gamma = np.array([1.0, 2.0]), np.array([0.5, -0.5])
    np.testing.assert_array_equal(loss_gradient_plain(g, np.zeros(2)), g)
    x = np.array([0.2, 0.2])
    out, mu_t = loss_gradient_sc(g, gamma, x, x, 3.0, 0.4)
    np.testing.assert_array_equal(out, g + gamma)
    assert mu_t == pytest.approx(0.6)
    reg, _ = loss_gradient_sc(np.zeros(1), np.zeros(1), np.array([0.5]), np.zeros(1), 1.0, 2.0)
    assert reg[0] == pytest.approx(0.5)
    with pytest.raises(ValueError):
        loss_gradient_sc(g, gamma, x, x, 1.0, 0.0)
    np.testing.assert_array_equal(loss_gradient_pf(g, gamma, np.zeros(2), np.zeros(2), 5.0, 7.0), g + gamma)
    np.testing.assert_array_equal(loss_gradient_pf(g, gamma, x, np.zeros(2), 0.0, 0.0), g + gamma)


def test_hint_provider():
    np.testing.assert_array_equal(hint_provider(None, 3), np.zeros(3))
    prev = np.array([1.0, 2.0])
    assert hint_provider(prev, 2) is prev


def test_variant_config_validation():
    assert VariantConfig(mode="parameter_free").k == 3
    assert VariantConfig().k == 1
    with pytest.raises(ValueError):
        VariantConfig(mode="parameter_free", k=2)
    with pytest.raises(ValueError):
        VariantConfig(mode="strongly_convex", mu=-1.0)
    with pytest.raises(ValueError):
        VariantConfig(mode="strongly_convex").resolve_mu(make_logistic(2, 2.0, 0, n_eval=100))


def test_single_round_returns_first_prediction():
    inst = quad()
    res = go(inst, 1)
    np.testing.assert_array_equal(res.x_T, res.ws[0])
    np.testing.assert_array_equal(res.x_T, inst.center)


def test_first_linear_loss_is_plain_gradient():
    inst = quad()
    vc = VariantConfig()
    ds = inst.dataset(3, 5)
    L = build_learner("osd", inst, vc, 3)
    res = run(inst, L, ds, vc, None, rng=0)
    g1 = inst.grad(res.xs[1], ds[0])
    assert res.columns["g_norm"][0] == pytest.approx(np.linalg.norm(g1))


def test_noiseless_gap_decreases_with_T():
    inst = make_quadratic(10, 2.0, 1.0, 0.0, seed=7)
    gaps = [go(inst, 2**j).gap for j in range(8, 13)]
    assert all(a > b for a, b in zip(gaps, gaps[1:]))


def test_private_mean_gap_below_bound():
    inst = make_quadratic(10, 2.0, 1.0, 1.0, seed=7)
    T = 512
    runs = [go(inst, T, rho=1.0, seed=s) for s in range(20)]
    c = BoundConstants.from_instance(inst)
    bound = theoretical_gap_bound("plain", c, T, np.mean([r.decomposition["regret"] for r in runs]), 1, 1.0)
    assert np.mean([r.gap for r in runs]) <= bound


def test_noise_off_means_gamma_zero():
    res = go(quad(), 64)
    assert np.all(res.columns["gamma_norm"] == 0) and np.all(res.columns["sigma"] == 0)


def test_sensitivity_ledger_has_no_violations():
    for noise_scale in ("adaptive", "static"):
        res = go(quad(), 128, rho=0.5, k=2, noise_scale=noise_scale)
        assert res.sensitivity.violations() == []


def test_sensitivity_error_on_wrong_constants():
    import dataclasses

    inst = dataclasses.replace(quad(), G=0.01)
    with pytest.raises(SensitivityError):
        go(inst, 16)


@pytest.mark.parametrize("mode", ["plain", "optimistic", "strongly_convex", "parameter_free"])
@pytest.mark.parametrize("rho", [INF, 1.0])
def test_decomposition_holds_every_variant(mode, rho):
    for seed in range(3):
        res = go(quad(), 200, mode=mode, rho=rho, seed=seed)
        assert res.decomposition["holds"]
        if mode == "strongly_convex":
            assert res.decomposition["sc_holds"]


def test_ftrl_learner_runs():
    res = go(quad(), 128, learner="ftrl", rho=1.0)
    assert res.decomposition["holds"] and np.isfinite(res.gap)


def test_optimistic_hint_error_identity():
    # ||gbar_t - hint_t||^2 <= 3||delta_t||^2 + 3||gamma_t||^2 + 3||gamma_{t-1}||^2
    rng = make_rng(0)
    for _ in range(100):
        delta, gamma, gamma_prev, g_prev = rng.normal(size=(4, 3))
        gbar = g_prev + delta + gamma
        hint = g_prev + gamma_prev
        lhs = np.sum((gbar - hint) ** 2)
        assert lhs <= 3 * (delta @ delta + gamma @ gamma + gamma_prev @ gamma_prev) + 1e-12


def test_optimistic_noiseless_hint_error_bounded():
    inst = make_quadratic(3, 2.0, 1.0, 0.0, seed=1)
    res = go(inst, 100, mode="optimistic")
    # noise off, k = 1: ||gbar_t - hint_t|| = ||delta_t|| <= 2 (G + H D)
    assert np.all(res.columns["delta_norm"][1:] <= 2 * (inst.G + inst.H * inst.D))


def test_parameter_free_clip_rate_and_cap():
    res = go(quad(), 256, mode="parameter_free")
    assert res.clips / res.T < 0.01


def test_trace_csv_shape():
    res = go(quad(), 8, rho=1.0)
    lines = res.trace_csv().strip().split("\n")
    assert lines[0] == "t,gap,g_norm,gamma_norm,sigma,delta_norm,max_disp,clip_flag,index_set"
    assert len(lines) == 9
    assert lines[7].split(",")[-1] == "4;6;7"


def test_logistic_run_and_private_noise_reproducible():
    inst = make_logistic(3, 2.0, seed=0, n_eval=2000)
    a = go(inst, 64, rho=1.0, seed=3)
    b = go(inst, 64, rho=1.0, seed=3)
    np.testing.assert_array_equal(a.x_T, b.x_T)
    assert a.decomposition == {}
    assert np.isfinite(a.gap)


def test_dataset_too_short():
    inst = quad()
    vc = VariantConfig()
    with pytest.raises(ValueError):
        run(inst, build_learner("osd", inst, vc, 10), inst.dataset(5, 0), vc, T=10)


def test_variant_enum_values():
    assert {v.value for v in Variant} == {"plain", "optimistic", "strongly_convex", "parameter_free"}
