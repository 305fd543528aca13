"""Private online-to-batch conversion driver and its regularized variants.

Each round the wrapped learner predicts ``w_t``; the driver forms the weighted
average ``x_t``, the gradient difference
``delta_t = beta_t grad l(x_t, z_t) - beta_{t-1} grad l(x_{t-1}, z_t)``, adds it
to the running sum ``g_t`` and feeds the learner the linear loss
``<g_t + gamma_t, w>`` where ``gamma_t`` is tree-aggregated noise. The variants
change only the loss handed to the learner (hints, a strongly convex
regularizer, or norm regularizers for the parameter-free learner).
"""

from __future__ import annotations

import enum
import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import learners as _learners
from .accounting import (
    PrivacyBudget,
    SensitivityLedger,
    delta_sensitivity,
    pf_constants,
    pf_gradient_cap,
)
from .geometry import NoiseDistribution, gaussian
from .learners import RegretLedger
from .problems import Dataset, ProblemInstance
from .tree_noise import NoiseTree, index_set, noise_variance

log = logging.getLogger(__name__)

__all__ = [
    "Variant", "VariantConfig", "WeightSchedule", "RunResult", "SensitivityError",
    "step_average", "gradient_difference", "loss_gradient_plain", "hint_provider",
    "loss_gradient_sc", "loss_gradient_pf", "pf_constants", "build_learner", "run",
]


class SensitivityError(AssertionError):
    """A gradient difference exceeded its analytic bound: the instance constants are wrong."""


class Variant(enum.Enum):
    PLAIN = "plain"
    OPTIMISTIC = "optimistic"
    STRONGLY_CONVEX = "strongly_convex"
    PARAMETER_FREE = "parameter_free"


@dataclass(frozen=True)
class VariantConfig:
    mode: Variant = Variant.PLAIN
    k: int | None = None
    mu: float | None = None
    delta_prob: float = 0.1
    C: float = 1.0
    noise_scale: str = "adaptive"

    def __post_init__(self):
        mode = Variant(self.mode)
        object.__setattr__(self, "mode", mode)
        k = self.k
        if mode is Variant.PARAMETER_FREE:
            if k not in (None, 3):
                raise ValueError(f"the parameter-free variant requires k = 3, got k={k}")
            k = 3
        elif k is None:
            k = 1
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        object.__setattr__(self, "k", int(k))
        if mode is Variant.STRONGLY_CONVEX and self.mu is not None and self.mu <= 0:
            raise ValueError(f"the strongly convex variant requires mu > 0, got {self.mu}")
        if not 0 < self.delta_prob < 1:
            raise ValueError(f"delta_prob must lie in (0, 1), got {self.delta_prob}")
        if self.noise_scale not in ("adaptive", "static"):
            raise ValueError(f"noise_scale must be 'adaptive' or 'static', got {self.noise_scale!r}")

    def resolve_mu(self, instance: ProblemInstance) -> float:
        mu = instance.mu if self.mu is None else self.mu
        if mu <= 0:
            raise ValueError(f"the strongly convex variant requires mu > 0, got {mu}")
        return mu


@dataclass(frozen=True)
class WeightSchedule:
    """``beta_t = t^k`` (``beta_0 = 0``)."""

    k: int = 1

    def beta(self, t: int) -> float:
        return float(t) ** self.k if t > 0 else 0.0

    def prefix(self, t: int) -> float:
        return float(sum(float(i) ** self.k for i in range(1, t + 1)))


def step_average(x_prev, w_t, beta_prefix_prev: float, beta_t: float) -> np.ndarray:
    """``x_t = (beta_{1:t-1} x_{t-1} + beta_t w_t) / beta_{1:t}``."""
    if beta_t <= 0:
        raise ValueError(f"beta_t must be positive, got {beta_t}")
    return (beta_prefix_prev * np.asarray(x_prev) + beta_t * np.asarray(w_t)) / (
        beta_prefix_prev + beta_t
    )


def gradient_difference(instance, x_t, x_prev, z_t, beta_t, beta_prev) -> np.ndarray:
    """Both gradients are taken on the same datum ``z_t``."""
    out = beta_t * instance.grad(x_t, z_t)
    if beta_prev != 0:
        out = out - beta_prev * instance.grad(x_prev, z_t)
    return out


def loss_gradient_plain(g_t, gamma_t) -> np.ndarray:
    return g_t + gamma_t


def hint_provider(prev_linear_gradient, dim: int) -> np.ndarray:
    """Hint for round ``t``: last round's linear loss ``g_{t-1} + gamma_{t-1}`` (0 at t = 1)."""
    if prev_linear_gradient is None:
        return np.zeros(dim)
    return prev_linear_gradient


def loss_gradient_sc(g_t, gamma_t, w, x_t, beta_t: float, mu: float):
    """Gradient at ``w`` of ``<g+gamma, w> + (beta_t mu / 4) ||w - x_t||^2``.

    Returns ``(gradient, mu_t)`` with ``mu_t = beta_t mu / 2`` the strong
    convexity of that loss.
    """
    if mu <= 0:
        raise ValueError(f"mu must be positive, got {mu}")
    return g_t + gamma_t + (beta_t * mu / 2.0) * (np.asarray(w) - x_t), beta_t * mu / 2.0


def loss_gradient_pf(g_t, gamma_t, w, center, xi_t: float, nu_t: float) -> np.ndarray:
    """Subgradient of ``<g+gamma, w> + xi ||w - c|| + nu ||w - c||^2``.

    At ``w = c`` the zero subgradient of the norm is used.
    """
    r = np.asarray(w) - center
    nr = float(np.linalg.norm(r))
    unit = r / nr if nr > 0 else np.zeros_like(r)
    return g_t + gamma_t + xi_t * unit + 2.0 * nu_t * r


def build_learner(name: str, instance: ProblemInstance, variant: VariantConfig,
                  T: int, rho: float = math.inf, **kwargs):
    """Learner on the instance domain; the parameter-free learner gets the
    round-``T`` gradient cap of the regularised losses."""
    domain = instance.domain
    if name == "parameter_free":
        consts = pf_constants(instance.G, instance.H, instance.D, instance.dim, T,
                              variant.delta_prob, variant.C, 1.0, rho)
        cap = pf_gradient_cap(T, instance.G, instance.H, instance.D, T, consts, rho)
        return _learners.ParameterFree(domain, cap, **kwargs)
    try:
        cls = _learners.LEARNERS[name]
    except KeyError:
        raise ValueError(f"unknown learner {name!r}; choose from {sorted(_learners.LEARNERS)}")
    return cls(domain, **kwargs)


TRACE_COLUMNS = ("t", "gap", "g_norm", "gamma_norm", "sigma", "delta_norm",
                 "max_disp", "clip_flag", "index_set")


@dataclass
class RunResult:
    x_T: np.ndarray
    T: int
    k: int
    variant: Variant
    rho: float
    regret: RegretLedger
    sensitivity: SensitivityLedger
    tree: NoiseTree
    clips: int
    xs: np.ndarray  # xs[t] = x_t, xs[0] = x_0 = 0
    ws: np.ndarray  # ws[t-1] = w_t
    columns: dict
    gap: float = math.nan
    decomposition: dict = field(default_factory=dict)

    def regret_at(self, u) -> float:
        return self.regret.regret(u)

    def trace_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(TRACE_COLUMNS) + "\n")
        c = self.columns
        for i in range(self.T):
            t = i + 1
            row = [
                str(t),
                repr(float(c["gap"][i])),
                repr(float(c["g_norm"][i])),
                repr(float(c["gamma_norm"][i])),
                repr(float(c["sigma"][i])),
                repr(float(c["delta_norm"][i])),
                repr(float(c["max_disp"][i])),
                str(int(c["clip_flag"][i])),
                ";".join(str(j) for j in index_set(t)),
            ]
            buf.write(",".join(row) + "\n")
        return buf.getvalue()


def run(
    instance: ProblemInstance,
    learner,
    dataset: Dataset,
    variant: VariantConfig | None = None,
    budget: PrivacyBudget | float | None = None,
    noise: NoiseDistribution | None = None,
    rng=0,
    T: int | None = None,
    tree: NoiseTree | None = None,
) -> RunResult:
    """Run the private online-to-batch conversion for ``T`` rounds.

    ``budget`` may be a ``PrivacyBudget``, a bare ``rho``, or None for the
    non-private sentinel ``rho = inf``. The noise tree draws its base noises
    from ``rng``, so equal seeds couple the noise across runs.
    """
    variant = variant or VariantConfig()
    if budget is None:
        rho = math.inf
    elif isinstance(budget, PrivacyBudget):
        rho = budget.rho
    else:
        rho = float(budget)
    T = len(dataset) if T is None else T
    if len(dataset) < T:
        raise ValueError(f"dataset exhausted: {len(dataset)} data for horizon {T}")
    d = instance.dim
    k = variant.k
    mode = variant.mode
    G, H, D = instance.G, instance.H, instance.D
    center = instance.center
    domain = instance.domain
    schedule = WeightSchedule(k)
    noise = noise or gaussian(d)
    tree = tree or NoiseTree(noise, T, rng)
    mu = variant.resolve_mu(instance) if mode is Variant.STRONGLY_CONVEX else 0.0
    if mode is Variant.PARAMETER_FREE:
        pf = pf_constants(G, H, D, d, T, variant.delta_prob, variant.C,
                          noise.sub_gaussian_sigma, rho)
    has_grad = instance.cheap_oracle
    optimum = instance.optimum

    ledger = RegretLedger(d, keep_trace=False)
    sens = SensitivityLedger(T, k, rho)
    xs = np.zeros((T + 1, d))
    ws = np.zeros((T, d))
    cols = {name: np.zeros(T) for name in TRACE_COLUMNS if name not in ("t", "index_set")}
    cols["clip_flag"] = np.zeros(T, dtype=bool)
    x_prev = np.zeros(d)
    g = np.zeros(d)
    prefix_prev = 0.0
    beta_prev = 0.0
    max_disp = 0.0
    prev_linear = None
    clips = 0
    # decomposition accumulators
    inner_sum = 0.0
    inner_abs = 0.0
    sc_sum = 0.0
    var_sq = np.full(T, np.nan)

    for t in range(1, T + 1):
        if learner.uses_hints:
            learner.set_hint(hint_provider(prev_linear, d))
        w = learner.predict()
        if not domain.contains(w, slack=1e-9):
            raise AssertionError(f"round {t}: learner predicted outside the domain")
        beta_t = schedule.beta(t)
        prefix = prefix_prev + beta_t
        x = step_average(x_prev, w, prefix_prev, beta_t)
        disp = float(np.linalg.norm(w - x_prev))
        max_disp = max(max_disp, disp)

        z = dataset[t - 1]
        delta = gradient_difference(instance, x, x_prev, z, beta_t, beta_prev)
        delta_norm = float(np.linalg.norm(delta))
        bound = (k + 1) * (G + H * disp) * float(t) ** (k - 1)
        if delta_norm > bound * (1 + 1e-9):
            raise SensitivityError(
                f"round {t}: ||delta_t|| = {delta_norm} exceeds bound {bound}"
            )
        g = g + delta

        scale_disp = max_disp if variant.noise_scale == "adaptive" else D
        var = noise_variance(t, k, rho, G, H, scale_disp, T)
        sigma = math.sqrt(var)
        sens.record(t, delta_sensitivity(t, k, G, H, scale_disp), var)
        gamma = tree.noise(t, sigma, var)

        linear = loss_gradient_plain(g, gamma)
        ledger.add(linear, w)
        mu_t = 0.0
        clipped = False
        if mode is Variant.STRONGLY_CONVEX:
            gbar, mu_t = loss_gradient_sc(g, gamma, w, x, beta_t, mu)
            ledger.add_quadratic(beta_t * mu / 4.0, x, w)
        elif mode is Variant.PARAMETER_FREE:
            xi_t, nu_t = pf["xi"][t - 1], pf["nu"][t - 1]
            gbar = loss_gradient_pf(g, gamma, w, center, xi_t, nu_t)
            ledger.add_norm(xi_t, nu_t, w, center)
            cap = min(pf_gradient_cap(t, G, H, D, T, pf, rho), learner.cap)
            gnorm = float(np.linalg.norm(gbar))
            if gnorm > cap:
                clipped = True
                clips += 1
                log.info("round %d: clipped regularised gradient %.4g to %.4g", t, gnorm, cap)
                gbar = gbar * (cap / gnorm)
        else:
            gbar = linear
        learner.receive(gbar, hint_next=linear, strong_convexity=mu_t)

        if has_grad:
            pop = instance.population_grad(x)
            resid_var = beta_t * pop - g
            var_sq[t - 1] = float(resid_var @ resid_var)
            resid = beta_t * pop - linear
            term = float(resid @ (w - optimum))
            inner_sum += term
            inner_abs += abs(term)
            if mode is Variant.STRONGLY_CONVEX:
                sc_sum += 2.0 * float(resid @ resid) / (beta_t * mu)
            cols["gap"][t - 1] = instance.gap(x)
        else:
            cols["gap"][t - 1] = np.nan

        xs[t] = x
        ws[t - 1] = w
        cols["g_norm"][t - 1] = float(np.linalg.norm(g))
        cols["gamma_norm"][t - 1] = float(np.linalg.norm(gamma))
        cols["sigma"][t - 1] = sigma
        cols["delta_norm"][t - 1] = delta_norm
        cols["max_disp"][t - 1] = max_disp
        cols["clip_flag"][t - 1] = clipped

        x_prev = x
        prefix_prev = prefix
        beta_prev = beta_t
        prev_linear = linear

    cols["var_sq"] = var_sq
    result = RunResult(
        x_T=x_prev, T=T, k=k, variant=mode, rho=rho, regret=ledger, sensitivity=sens,
        tree=tree, clips=clips, xs=xs, ws=ws, columns=cols, gap=instance.gap(x_prev),
    )
    if has_grad:
        regret_star = ledger.regret(optimum)
        lhs = prefix_prev * result.gap
        rhs = regret_star + inner_sum
        slack = 1e-6 * (abs(lhs) + abs(regret_star) + inner_abs)
        result.decomposition = {
            "lhs": lhs, "rhs": rhs, "slack": slack, "holds": lhs <= rhs + slack,
            "regret": regret_star, "beta_sum": prefix_prev,
        }
        if mode is Variant.STRONGLY_CONVEX:
            reg_regret = ledger.regularized_regret(optimum)
            rhs_sc = reg_regret + sc_sum
            slack_sc = 1e-6 * (abs(lhs) + abs(reg_regret) + abs(sc_sum))
            result.decomposition.update(
                sc_rhs=rhs_sc, sc_holds=lhs <= rhs_sc + slack_sc, regularized_regret=reg_regret
            )
        elif mode is Variant.PARAMETER_FREE:
            result.decomposition["regularized_regret"] = ledger.regularized_regret(optimum)
    return result
