import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dpotb.accounting import (
    DEFAULT_ALPHA_GRID,
    BoundConstants,
    PrivacyBudget,
    SensitivityLedger,
    budget_over_grid,
    delta_sensitivity,
    max_in_size,
    pf_constants,
    pf_gradient_cap,
    rdp_to_dp,
    theoretical_gap_bound,
    tree_composition_budget,
)
from dpotb.tree_noise import in_sets, noise_variance


def exact_optimum(rho, delta):
    return rho**2 / 2 + rho * math.sqrt(2 * math.log(1 / delta))


def test_delta_sensitivity_examples():
    assert delta_sensitivity(17, 1, 1.0, 0.0, 3.0) == 4.0
    assert delta_sensitivity(3, 2, 2.0, 5.0, 0.0) == 2 * 3 * 3 * 2.0


def test_rdp_to_dp_examples():
    assert rdp_to_dp(2.0, 1.0, 0.01) == pytest.approx(1 + math.log(100))
    assert rdp_to_dp(3.0, 0.4, 1 - 1e-12) == pytest.approx(0.4, abs=1e-9)
    with pytest.raises(ValueError):
        rdp_to_dp(1.0, 1.0, 0.1)


def test_budget_anchor_and_frozen_values():
    assert 2.0 <= budget_over_grid(PrivacyBudget(1.0, math.exp(-1))) <= 2.001
    # frozen from a brute-force minimum over the default grid (attained at alpha = 9)
    assert budget_over_grid(PrivacyBudget(0.5, 1e-5)) == pytest.approx(2.564115683121279, rel=1e-12)
    assert PrivacyBudget(math.inf).epsilon() == math.inf


@given(st.sampled_from([0.25, 0.5, 1.0, 2.0]), st.sampled_from([1e-3, 1e-5, 1e-8]))
def test_grid_epsilon_sandwiched(rho, delta):
    eps = budget_over_grid(PrivacyBudget(rho, delta))
    assert exact_optimum(rho, delta) <= eps + 1e-12
    assert eps <= 2 * rho * math.sqrt(math.log(1 / delta)) + 1e-12
    # the grid doubles alpha - 1, so it overshoots the optimum by a few percent at most
    assert eps <= exact_optimum(rho, delta) * 1.05


def test_grid_widening_warns():
    with pytest.warns(UserWarning):
        eps = budget_over_grid(PrivacyBudget(0.005, 1e-5))
    assert eps == pytest.approx(exact_optimum(0.005, 1e-5), rel=5e-3)


def test_default_grid():
    assert DEFAULT_ALPHA_GRID[0] == 1.125 and DEFAULT_ALPHA_GRID[-1] == 513.0
    assert len(DEFAULT_ALPHA_GRID) == 13


def test_tree_composition_examples():
    T = 64
    rho = 1.3
    per_node = [rho / math.sqrt(math.log2(2 * T))] * T
    for alpha in (1.5, 4.0, 32.0):
        assert tree_composition_budget(per_node, in_sets(T), alpha) <= alpha * rho**2 / 2 + 1e-12
    assert tree_composition_budget([0.8], in_sets(1), 3.0) == pytest.approx(3.0 * 0.64 / 2)


@given(st.integers(min_value=1, max_value=3000))
def test_max_in_size(T):
    assert max_in_size(T) == max(len(v) for v in in_sets(T).values()) if T <= 300 else True
    assert max_in_size(T) <= math.log2(2 * T)


def test_sensitivity_ledger_flags_undersized_noise():
    led = SensitivityLedger(T=8, k=1, rho=1.0)
    led.record(1, 2.0, noise_variance(1, 1, 1.0, 0.5, 0.0, 0.0, 8))
    led.record(2, 2.0, 1.0)
    assert led.violations() == [2]


def test_pf_constants_examples():
    c = pf_constants(G=1.0, H=2.0, D=1.0, d=1, T=16, delta_prob=0.1)
    assert c["kappa"] == 3.0
    c = pf_constants(G=1.0, H=0.0, D=1.0, d=1, T=16, delta_prob=0.1)
    phi = math.sqrt(math.log(320 * math.log(32) / 0.1))
    assert c["Phi"] == pytest.approx(phi, rel=1e-14)
    assert c["Phi"] == pytest.approx(3.051856988890576, rel=1e-12)
    t = np.arange(1, 17)
    np.testing.assert_allclose(c["xi"], 8 * math.sqrt(2) * phi * t**2.5, rtol=1e-14)
    np.testing.assert_array_equal(c["nu"], np.zeros(16))
    cap = pf_gradient_cap(1, 1.0, 0.0, 1.0, 16, c)
    assert cap == pytest.approx(1.0 + 2 * c["A"] * 1.0 * phi, rel=1e-14)


def test_bound_examples():
    c = BoundConstants(G=1.0, H=0.0, D=1.0, sigma_G=0.0, sigma_H=0.0)
    assert theoretical_gap_bound("plain", c, 100, 0.0) == 0.0
    c = BoundConstants(G=1.0, H=0.0, D=1.0, sigma_G=1.0, sigma_H=0.0)
    assert theoretical_gap_bound("plain", c, 50, 0.0) == pytest.approx(8 / math.sqrt(2 * 50))
    c_priv = BoundConstants(G=1.0, H=0.0, D=1.0, sigma_G=0.0, sigma_H=0.0, V=4.0, d=4)
    third = 8 * math.sqrt(8) * math.log2(32) / (math.sqrt(2) * 16)
    assert theoretical_gap_bound("optimistic", c_priv, 16, 0.0, k=1, rho=1.0) == pytest.approx(third)


def test_bound_regret_term_and_errors():
    c = BoundConstants(G=1.0, H=1.0, D=1.0, sigma_G=0.0, sigma_H=0.0, mu=0.5)
    assert theoretical_gap_bound("strongly_convex", c, 10, 50.0) == pytest.approx(2 * 50 / 100)
    with pytest.raises(ValueError):
        theoretical_gap_bound("strongly_convex", BoundConstants(1, 1, 1, 0, 0), 10, 1.0)
    with pytest.raises(ValueError):
        theoretical_gap_bound("nope", c, 10, 1.0)
    assert theoretical_gap_bound("parameter_free", c, 16, 0.0) == 0.0
