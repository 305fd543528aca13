"""Privacy bookkeeping and closed-form convergence bounds."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

DEFAULT_ALPHA_GRID = tuple(1.0 + 2.0**j / 8.0 for j in range(13))


def delta_sensitivity(t: int, k: int, G: float, H: float, max_disp: float) -> float:
    """Sensitivity of tree node ``t``: ``2 (k+1) t^(k-1) (G + H max_disp)``."""
    if t < 1 or k < 1:
        raise ValueError(f"need t >= 1 and k >= 1; got t={t}, k={k}")
    return 2.0 * (k + 1) * float(t) ** (k - 1) * (G + H * max_disp)


def rdp_to_dp(alpha: float, eps_rdp: float, delta: float) -> float:
    """(alpha, eps)-RDP implies (eps + log(1/delta) / (alpha - 1), delta)-DP."""
    if alpha <= 1:
        raise ValueError(f"alpha must exceed 1, got {alpha}")
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    return eps_rdp + math.log(1.0 / delta) / (alpha - 1.0)


@dataclass(frozen=True)
class PrivacyBudget:
    rho: float
    delta: float = 1e-5
    alpha_grid: tuple = DEFAULT_ALPHA_GRID

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError(f"rho must be positive (or inf), got {self.rho}")
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if any(a <= 1 for a in self.alpha_grid):
            raise ValueError("every alpha in the grid must exceed 1")

    @property
    def private(self) -> bool:
        return not math.isinf(self.rho)

    @property
    def alpha_star(self) -> float:
        """Minimiser of ``alpha rho^2/2 + log(1/delta)/(alpha-1)`` over alpha > 1."""
        if not self.private:
            return math.inf
        return 1.0 + math.sqrt(2.0 * math.log(1.0 / self.delta)) / self.rho

    def rdp_epsilon(self, alpha: float) -> float:
        return alpha * self.rho**2 / 2.0

    def epsilon(self) -> float:
        return budget_over_grid(self)

    def report(self, T: int | None = None) -> dict:
        out = {
            "rho": self.rho,
            "delta": self.delta,
            "alpha_star": self.alpha_star,
            "epsilon": self.epsilon(),
        }
        if T is not None:
            out["per_node_max_IN"] = max_in_size(T)
        return out


def budget_over_grid(budget: PrivacyBudget) -> float:
    """Best (epsilon, delta)-DP guarantee over the alpha grid for an
    ``(alpha, alpha rho^2 / 2)``-RDP mechanism. Widens the grid (with a
    warning) if it does not bracket the analytic optimum."""
    if not budget.private:
        return math.inf
    grid = sorted(budget.alpha_grid)
    a_star = budget.alpha_star
    if not grid[0] <= a_star <= grid[-1]:
        warnings.warn(
            f"alpha grid [{grid[0]}, {grid[-1]}] does not bracket alpha*={a_star:.4g}; widening",
            stacklevel=2,
        )
        lo = min(grid[0], 1.0 + (a_star - 1.0) / 2.0)
        hi = max(grid[-1], 2.0 * a_star)
        grid = sorted(set(grid) | set(np.geomspace(lo - 1.0, hi - 1.0, 64) + 1.0))
    return min(rdp_to_dp(a, budget.rdp_epsilon(a), budget.delta) for a in grid)


def max_in_size(T: int) -> int:
    """``max_q |IN(q)|`` for a tree over ``T`` rounds."""
    return T.bit_length()


def tree_composition_budget(rho_per_node, in_sets, alpha: float) -> float:
    """RDP level of the adaptive tree composition:
    ``S = max_q sum_{t in IN(q)} alpha rho_t^2 / 2``.

    ``rho_per_node`` maps node index to its per-node privacy level (a list is
    read as 1-based); ``in_sets`` maps datum index ``q`` to ``IN(q)``.
    """
    if not isinstance(rho_per_node, dict):
        rho_per_node = {i + 1: r for i, r in enumerate(rho_per_node)}
    return max(
        sum(alpha * rho_per_node[t] ** 2 / 2.0 for t in nodes) for nodes in in_sets.values()
    )


@dataclass
class SensitivityLedger:
    """Per-node sensitivity bound and the noise variance actually used."""

    T: int
    k: int
    rho: float
    sensitivity: dict = field(default_factory=dict)
    variance: dict = field(default_factory=dict)

    def record(self, i: int, delta: float, variance: float) -> None:
        self.sensitivity[i] = delta
        self.variance[i] = variance

    def violations(self) -> list[int]:
        """Nodes where ``sigma_i^2 < Delta_i^2 log2(2T) / rho^2``."""
        if math.isinf(self.rho):
            return []
        need = math.log2(2 * self.T) / self.rho**2
        return [i for i, d in self.sensitivity.items() if self.variance[i] < d**2 * need]


def pf_constants(G, H, D, d, T, delta_prob, C=1.0, sigma_D=1.0, rho=math.inf):
    """Constants of the parameter-free regularised conversion (``k = 3``).

    Returns a dict with ``kappa, Phi, A, A_prime, xi, nu`` where ``xi`` and
    ``nu`` are arrays over ``t = 1..T``.
    """
    if not 0 < delta_prob < 1:
        raise ValueError(f"delta_prob must lie in (0, 1), got {delta_prob}")
    if G <= 0:
        raise ValueError(f"G must be positive, got {G}")
    if C <= 0:
        raise ValueError(f"C must be positive, got {C}")
    A = 8.0 * math.sqrt(2.0) * C**2
    A_prime = 8.0 * math.sqrt(d) * sigma_D * C**2
    kappa = 1.0 + D * H / G
    Phi = math.sqrt(math.log(20.0 * d * T * math.log(2.0 * kappa * T) / delta_prob))
    t = np.arange(1, T + 1, dtype=float)
    private_term = 0.0 if math.isinf(rho) else A_prime * (G + D * H) * Phi * math.log2(2 * T) / rho
    xi = A * G * Phi * t**2.5 + private_term * t**2
    nu = 28.0 * A * H * Phi * t**2.5
    return {"kappa": kappa, "Phi": Phi, "A": A, "A_prime": A_prime, "xi": xi, "nu": nu}


def pf_gradient_cap(t, G, H, D, T, consts, rho=math.inf) -> float:
    """High-probability bound on the regularised loss gradient at round ``t``."""
    A, A_prime, Phi = consts["A"], consts["A_prime"], consts["Phi"]
    cap = G * t**3 + A * (2 * G + 57 * D * H) * Phi * t**2.5
    if not math.isinf(rho):
        cap += 2 * A_prime * (G + D * H) * Phi * math.log2(2 * T) * t**2 / rho
    return cap


@dataclass(frozen=True)
class BoundConstants:
    G: float
    H: float
    D: float
    sigma_G: float
    sigma_H: float
    mu: float = 0.0
    lam: float = 2.0
    V: float = 1.0
    d: int = 1
    sigma_D: float = 1.0
    delta_prob: float = 0.1
    C: float = 1.0
    x_star_norm: float = 0.0

    @classmethod
    def from_instance(cls, instance, V=None, lam=2.0, **kw):
        """Constants of ``instance``; keyword arguments override any field."""
        fields = dict(
            G=instance.G, H=instance.H, D=instance.D,
            sigma_G=instance.sigma_G, sigma_H=instance.sigma_H, mu=instance.mu,
            lam=lam, V=instance.dim if V is None else V, d=instance.dim,
            x_star_norm=float(np.linalg.norm(instance.optimum - instance.center)),
        )
        fields.update(kw)
        return cls(**fields)


def theoretical_gap_bound(variant, c: BoundConstants, T: int, regret_estimate: float,
                          k: int = 1, rho: float = math.inf) -> float:
    """Right-hand side of the expected-gap guarantee for ``variant``.

    ``plain``/``optimistic``: regret term plus the variance and privacy terms.
    ``strongly_convex``: the regularised-regret form with the ``1/(mu T)`` terms.
    ``parameter_free``: the high-probability ``||x*||``-dependent form (k = 3).
    """
    variant = getattr(variant, "value", variant)
    priv = 0.0 if math.isinf(rho) else 1.0 / rho
    if variant in ("plain", "optimistic"):
        noise = (c.sigma_G + c.D * c.sigma_H) / math.sqrt(T)
        privacy = math.sqrt(2.0 * c.V) * (c.G + c.D * c.H) * math.log2(2 * T) * priv / T
        return (k + 1) * regret_estimate / T ** (k + 1) + (
            2.0 * (k + 1) ** 2 * c.D / math.sqrt(c.lam)
        ) * (noise + privacy)
    if variant == "strongly_convex":
        if c.mu <= 0:
            raise ValueError("strongly convex bound needs mu > 0")
        noise = (c.sigma_G + c.D * c.sigma_H) ** 2 / T
        privacy = 2.0 * c.V * (c.G + c.D * c.H) ** 2 * math.log2(2 * T) ** 2 * priv**2 / T**2
        return (k + 1) * regret_estimate / T ** (k + 1) + (
            16.0 * (k + 1) ** 3 / (c.lam * c.mu)
        ) * (noise + privacy)
    if variant == "parameter_free":
        pc = pf_constants(c.G, c.H, c.D, c.d, T, c.delta_prob, c.C, c.sigma_D, rho)
        r = c.x_star_norm
        return (
            4.0 * regret_estimate / T**4
            + 8.0 * pc["A"] * r * (c.G + 28.0 * r * c.H) * pc["Phi"] / math.sqrt(T)
            + 8.0 * pc["A_prime"] * r * (c.G + c.D * c.H) * pc["Phi"] * math.log2(2 * T) * priv / T
        )
    raise ValueError(f"unknown variant {variant!r}")
