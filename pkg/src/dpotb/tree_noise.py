"""Tree-aggregated noise for private running sums.

Node ``i`` covers the contiguous block ``S_i = {i - lowbit(i) + 1, ..., i}``.
The running sum up to ``t`` is covered by the nodes ``I_t`` (the nonzero
prefix sums of the binary expansion of ``t``), so the released noise for
round ``t`` is the sum of at most ``log2(2t)`` stored node noises.
"""

from __future__ import annotations

import math

import numpy as np

from .accounting import delta_sensitivity
from .geometry import NoiseDistribution, make_rng, sample_noise


def index_set(t: int) -> list[int]:
    """Nonzero prefix sums of the binary expansion of ``t``, most significant first.

    >>> index_set(7)
    [4, 6, 7]
    >>> index_set(8)
    [8]
    """
    if t < 1:
        raise ValueError(f"index_set needs t >= 1, got {t}")
    members = []
    acc = 0
    for shift in range(t.bit_length() - 1, -1, -1):
        bit = 1 << shift
        if t & bit:
            acc += bit
            members.append(acc)
    return members


def lowbit(i: int) -> int:
    return i & -i


def node_interval(i: int) -> range:
    """The block ``S_i`` of rounds whose gradient differences node ``i`` sums."""
    if i < 1:
        raise ValueError(f"node index must be >= 1, got {i}")
    return range(i - lowbit(i) + 1, i + 1)


def in_set(q: int, T: int) -> list[int]:
    """``IN(q) = {i <= T : q in S_i}``: the nodes that see datum ``q``."""
    nodes = []
    i = q
    while i <= T:
        nodes.append(i)
        i += lowbit(i)
    return nodes


def in_sets(T: int) -> dict[int, list[int]]:
    return {q: in_set(q, T) for q in range(1, T + 1)}


def noise_variance(t, k, rho, G, H, max_disp, T) -> float:
    """``sigma_t^2 = Delta_t^2 log2(2T) / rho^2`` with
    ``Delta_t = 2 (k+1) t^(k-1) (G + H max_disp)``.

    ``rho = inf`` is the non-private sentinel and yields 0.
    """
    if rho <= 0:
        raise ValueError(f"rho must be positive, got {rho}")
    if t < 1 or k < 1 or T < t:
        raise ValueError(f"need 1 <= t <= T and k >= 1; got t={t}, T={T}, k={k}")
    if math.isinf(rho):
        return 0.0
    delta = delta_sensitivity(t, k, G, H, max_disp)
    return delta**2 * math.log2(2 * T) / rho**2


def sigma_schedule(t, k, rho, G, H, max_disp, T) -> float:
    return math.sqrt(noise_variance(t, k, rho, G, H, max_disp, T))


class NoiseTree:
    """Per-node noises ``R_i = sigma_i * R~_i`` generated once, in round order.

    A round's ``R~_t`` is drawn from ``rng`` at round ``t`` whether or not it
    is scaled by zero, so two trees built from the same seed draw the same
    base noises regardless of the scales used.
    """

    def __init__(self, dist: NoiseDistribution, T: int, rng):
        if T < 1:
            raise ValueError(f"horizon must be >= 1, got {T}")
        self.dist = dist
        self.T = T
        self.rng = make_rng(rng)
        self.nodes: dict[int, np.ndarray] = {}
        self.scales: dict[int, float] = {}
        self.variances: dict[int, float] = {}
        self.t = 0

    def noise(self, t: int, sigma: float, variance: float | None = None) -> np.ndarray:
        if t != self.t + 1:
            raise ValueError(f"noise rounds must be called in order: expected {self.t + 1}, got {t}")
        if t > self.T:
            raise ValueError(f"round {t} beyond horizon {self.T}")
        if sigma < 0:
            raise ValueError(f"sigma must be nonnegative, got {sigma}")
        base = sample_noise(self.dist, self.rng)
        self.nodes[t] = sigma * base if sigma > 0 else np.zeros(self.dist.dim)
        self.scales[t] = sigma
        self.variances[t] = sigma**2 if variance is None else variance
        self.t = t
        return self.aggregate(t)

    def aggregate(self, t: int) -> np.ndarray:
        gamma = np.zeros(self.dist.dim)
        for i in index_set(t):
            gamma = gamma + self.nodes[i]
        return gamma
