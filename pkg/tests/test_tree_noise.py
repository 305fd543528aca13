import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dpotb.checks import brute_index_set
from dpotb.geometry import gaussian
from dpotb.tree_noise import (
    NoiseTree,
    in_set,
    index_set,
    node_interval,
    noise_variance,
    sigma_schedule,
)


def test_index_set_examples():
    assert index_set(7) == [4, 6, 7]
    assert index_set(8) == [8]
    assert index_set(1) == [1]
    members = index_set(2**12 - 1)
    assert len(members) == 12 and members[-1] == 4095
    with pytest.raises(ValueError):
        index_set(0)


@given(st.integers(min_value=1, max_value=2**20))
def test_index_set_matches_binary_prefixes(t):
    assert index_set(t) == brute_index_set(t)
    assert len(index_set(t)) <= math.log2(2 * t)


@given(st.integers(min_value=1, max_value=5000))
def test_node_intervals_partition_prefix(t):
    covered = [j for i in index_set(t) for j in node_interval(i)]
    assert sorted(covered) == list(range(1, t + 1))
    assert len(covered) == len(set(covered))


@given(st.integers(min_value=1, max_value=600), st.data())
def test_in_set_is_membership(T, data):
    q = data.draw(st.integers(min_value=1, max_value=T))
    expected = [i for i in range(1, T + 1) if q in node_interval(i)]
    assert in_set(q, T) == expected
    assert len(expected) <= math.log2(2 * T)


def test_in_set_bound_T8():
    assert all(len(in_set(q, 8)) <= 4 for q in range(1, 9))


def test_noise_variance_examples():
    assert noise_variance(1, 1, 2.0, 1.0, 0.0, 0.0, 2) == 8.0
    assert sigma_schedule(2, 1, 2.0, 1.0, 0.0, 0.0, 2) == math.sqrt(8.0)
    # H = 0: independent of the displacement
    assert noise_variance(3, 2, 1.0, 1.0, 0.0, 0.1, 8) == noise_variance(3, 2, 1.0, 1.0, 0.0, 5.0, 8)
    # k = 1: constant in t
    vals = {noise_variance(t, 1, 0.7, 1.0, 2.0, 0.3, 100) for t in range(1, 101)}
    assert len(vals) == 1
    assert noise_variance(5, 3, math.inf, 1.0, 1.0, 1.0, 10) == 0.0
    with pytest.raises(ValueError):
        noise_variance(1, 1, 0.0, 1.0, 1.0, 1.0, 4)
    with pytest.raises(ValueError):
        noise_variance(5, 1, 1.0, 1.0, 1.0, 1.0, 4)


def test_zero_sigma_gives_zero_noise():
    tree = NoiseTree(gaussian(3), 16, 0)
    for t in range(1, 17):
        np.testing.assert_array_equal(tree.noise(t, 0.0), np.zeros(3))


def test_aggregate_is_sum_of_stored_nodes():
    tree = NoiseTree(gaussian(2), 8, 4)
    out = {t: tree.noise(t, 0.5 * t) for t in range(1, 9)}
    np.testing.assert_array_equal(out[8], tree.nodes[8])
    np.testing.assert_array_equal(out[7], tree.nodes[4] + tree.nodes[6] + tree.nodes[7])


def test_tree_rejects_out_of_order_rounds():
    tree = NoiseTree(gaussian(2), 4, 0)
    tree.noise(1, 1.0)
    with pytest.raises(ValueError):
        tree.noise(3, 1.0)
    with pytest.raises(ValueError):
        tree.noise(1, 1.0)


def test_tree_reproducible_and_scale_coupled():
    a, b = NoiseTree(gaussian(3), 32, [1, 2]), NoiseTree(gaussian(3), 32, [1, 2])
    for t in range(1, 33):
        np.testing.assert_array_equal(a.noise(t, 1.0), b.noise(t, 1.0))
    # base noises are drawn even when the scale is zero, so later nodes still couple
    c, d = NoiseTree(gaussian(3), 4, 9), NoiseTree(gaussian(3), 4, 9)
    c.noise(1, 0.0)
    d.noise(1, 2.0)
    c.noise(2, 1.0)
    d.noise(2, 1.0)
    np.testing.assert_array_equal(c.nodes[1], np.zeros(3))
    assert np.any(d.nodes[1] != 0)
    np.testing.assert_array_equal(c.nodes[2], d.nodes[2])
