"""Named property checks behind ``verify`` and the acceptance suite.

Every check returns a :class:`CheckResult` with a pass flag and a measured
margin (how far the worst case sits from its threshold, positive when the
property holds). ``fast`` uses reduced seed counts and horizons; ``full``
uses the sizes the acceptance suite pins.
"""

from __future__ import annotations

import math
import tempfile
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

from .accounting import DEFAULT_ALPHA_GRID, PrivacyBudget, budget_over_grid, delta_sensitivity
from .conversion import VariantConfig, WeightSchedule, build_learner, run
from .geometry import gaussian_renyi_divergence, make_rng
from .harness import ExperimentConfig, bound_for, fit_rate, run_suite
from .problems import make_logistic, make_quadratic
from .tree_noise import in_set, index_set, node_interval, noise_variance


@dataclass
class CheckResult:
    name: str
    passed: bool
    margin: float
    detail: str = ""
    seconds: float = 0.0
    extra: dict = field(default_factory=dict, repr=False)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: margin={self.margin:.6g} ({self.seconds:.1f}s) {self.detail}"


def _timed(fn):
    def wrapper(*args, **kwargs):
        start = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - start
        return res

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


# ---------------------------------------------------------------------------
# exact combinatorics of the tree


def brute_index_set(t: int) -> list[int]:
    """Prefixes of the binary string of ``t`` that end in a 1, zero-padded back to full length."""
    bits = bin(t)[2:]
    return [int(bits[: j + 1] + "0" * (len(bits) - j - 1), 2) for j, b in enumerate(bits) if b == "1"]


@_timed
def check_index_sets(T_max: int = 4096) -> CheckResult:
    bad = []
    worst = -math.inf
    for t in range(1, T_max + 1):
        members = index_set(t)
        if members != brute_index_set(t):
            bad.append(("index_set", t))
        covered = sorted(j for i in members for j in node_interval(i))
        if covered != list(range(1, t + 1)):
            bad.append(("partition", t))
        worst = max(worst, len(members) - math.log2(2 * t))
        if len(members) != bin(t).count("1"):
            bad.append(("cardinality", t))
    # IN(q) against a brute-force membership scan of every node interval
    nodes = np.arange(1, T_max + 1)
    lo = nodes - (nodes & -nodes) + 1
    for q in range(1, T_max + 1):
        brute = nodes[(lo <= q) & (q <= nodes)].tolist()
        if in_set(q, T_max) != brute:
            bad.append(("in_set", q))
        worst = max(worst, len(brute) - math.log2(2 * T_max))
    return CheckResult(
        "index_sets", not bad and worst <= 0, -worst,
        f"T<={T_max}: {len(bad)} mismatches; max(|I_t| - log2(2t), |IN(q)| - log2(2T)) = {worst:.3f}",
        extra={"mismatches": bad},
    )


# ---------------------------------------------------------------------------
# divergences and accounting


RENYI_ALPHAS = (1.5, 2.0, 4.0, 16.0)
RENYI_SHIFTS = (0.0, 0.5, 1.0, 3.0)
RENYI_SIGMAS = (0.5, 1.0, 2.0)


def renyi_by_quadrature(m: float, sigma: float, alpha: float) -> float:
    """``1/(alpha-1) log int P^alpha Q^(1-alpha)`` for ``P = N(0, s^2)``, ``Q = N(m, s^2)``.

    The log-integrand is shifted by its maximum before exponentiating.
    """
    def log_integrand(x):
        log_p = -0.5 * (x / sigma) ** 2
        log_q = -0.5 * ((x - m) / sigma) ** 2
        return alpha * log_p + (1 - alpha) * log_q - 0.5 * math.log(2 * math.pi * sigma**2)

    peak = optimize.minimize_scalar(lambda x: -log_integrand(x)).x
    top = log_integrand(peak)
    width = 12.0 * sigma + abs(alpha) * abs(m)
    val, _ = integrate.quad(lambda x: math.exp(log_integrand(x) - top), peak - width, peak + width,
                            epsabs=0, epsrel=1e-13, limit=200, points=[peak])
    return (math.log(val) + top) / (alpha - 1)


@_timed
def check_renyi_quadrature(tol: float = 1e-6) -> CheckResult:
    worst = 0.0
    for alpha in RENYI_ALPHAS:
        for m in RENYI_SHIFTS:
            for sigma in RENYI_SIGMAS:
                closed = gaussian_renyi_divergence([0.0], [m], sigma, alpha)
                worst = max(worst, abs(closed - renyi_by_quadrature(m, sigma, alpha)))
    n = len(RENYI_ALPHAS) * len(RENYI_SHIFTS) * len(RENYI_SIGMAS)
    return CheckResult("renyi_quadrature", worst <= tol, tol - worst,
                       f"{n} grid points, max |closed - quadrature| = {worst:.3g}")


RDP_RHOS = (0.25, 0.5, 1.0, 2.0)
RDP_DELTAS = (1e-3, 1e-5, 1e-8)


@_timed
def check_rdp_to_dp(rel_tol: float = 0.01) -> CheckResult:
    """Grid-optimised epsilon against the closed form ``2 rho sqrt(log(1/delta))``."""
    worst = 0.0
    ratios = {}
    for rho in RDP_RHOS:
        for delta in RDP_DELTAS:
            eps = budget_over_grid(PrivacyBudget(rho, delta))
            closed = 2 * rho * math.sqrt(math.log(1 / delta))
            ratios[(rho, delta)] = eps / closed
            worst = max(worst, abs(eps / closed - 1))
    anchor = budget_over_grid(PrivacyBudget(1.0, math.exp(-1.0)))
    anchor_ok = 2.0 <= anchor <= 2.001
    margin = min(rel_tol - worst, 0.001 - abs(anchor - 2.0005) + 0.0005)
    return CheckResult(
        "rdp_to_dp", worst <= rel_tol and anchor_ok, margin,
        f"max |eps/closed - 1| = {worst:.4f} over 12 points (ratios {min(ratios.values()):.3f}"
        f"..{max(ratios.values()):.3f}); rho=1, delta=1/e -> eps = {anchor:.6f}",
        extra={"ratios": ratios, "anchor": anchor},
    )


@_timed
def check_calibration_identity(t_max: int = 10_000, ks=(1, 2, 3), rhos=(0.5, 1.0, 2.0),
                               G: float = 1.3, H: float = 0.7, max_disp: float = 0.9) -> CheckResult:
    """``sigma_t^2`` from the noise schedule against ``Delta_t^2 log2(2T) / rho^2``.

    The identity is checked for exact float equality. The fully expanded
    closed form is also evaluated independently and its relative distance
    reported (it rounds differently, so only a 1e-12 tolerance applies).
    """
    T = t_max
    unequal = 0
    worst_rel = 0.0
    for k in ks:
        for rho in rhos:
            for t in range(1, t_max + 1):
                var = noise_variance(t, k, rho, G, H, max_disp, T)
                ident = delta_sensitivity(t, k, G, H, max_disp) ** 2 * math.log2(2 * T) / rho**2
                if var != ident:
                    unequal += 1
                expanded = (4 * (k + 1) ** 2 / rho**2 * (G + H * max_disp) ** 2
                            * math.log2(2 * T) * t ** (2 * k - 2))
                worst_rel = max(worst_rel, abs(var - expanded) / expanded)
    ok = unequal == 0 and worst_rel <= 1e-12
    return CheckResult("calibration_identity", ok, -unequal if unequal else 1e-12 - worst_rel,
                       f"{unequal} unequal evaluations; expanded form max rel diff {worst_rel:.2e}")


# ---------------------------------------------------------------------------
# neighbouring-run sensitivity probe


def node_sums(instance, xs, data, k: int) -> dict[int, np.ndarray]:
    """``F_i = sum_{j in S_i} delta_j`` with every gradient difference evaluated
    along the trajectory ``xs`` (``xs[0] = 0``) on the data rows ``data``."""
    sched = WeightSchedule(k)
    T = len(data)
    deltas = []
    for j in range(1, T + 1):
        b, b_prev = sched.beta(j), sched.beta(j - 1)
        d = b * instance.grad(xs[j], data[j - 1])
        if b_prev != 0:
            d = d - b_prev * instance.grad(xs[j - 1], data[j - 1])
        deltas.append(d)
    out = {}
    for i in range(1, T + 1):
        acc = np.zeros(instance.dim)
        for j in node_interval(i):
            acc = acc + deltas[j - 1]
        out[i] = acc
    return out


def probe_once(instance, T: int, q: int, k: int, rho: float, seed: int,
               alphas=DEFAULT_ALPHA_GRID) -> dict:
    """One neighbouring pair ``(Z, Z')`` differing at datum ``q`` (1-based).

    Returns counts of violated properties and the tightest margins.
    """
    vc = VariantConfig(k=k)
    Z = instance.dataset(T, [seed, 1])
    Zp = Z.neighbor(q - 1, instance.sample(make_rng([seed, 3])))
    res = run(instance, build_learner("osd", instance, vc, T, rho), Z, vc, rho, rng=[seed, 2])
    F = node_sums(instance, res.xs, Z.items, k)
    Fp = node_sums(instance, res.xs, Zp.items, k)
    out = {"not_identical": 0, "over_sensitivity": 0, "sens_margin": math.inf,
           "renyi_ratio": 0.0, "coupled_prefix_mismatch": 0, "prefix_sum_rel_err": 0.0}
    for i in range(1, T + 1):
        diff = F[i] - Fp[i]
        if q not in node_interval(i):
            if not np.array_equal(F[i], Fp[i]):
                out["not_identical"] += 1
        else:
            gap = res.sensitivity.sensitivity[i] - float(np.linalg.norm(diff))
            out["sens_margin"] = min(out["sens_margin"], gap)
            if gap < 0:
                out["over_sensitivity"] += 1
    # per-IN(q) Renyi budget of the node releases, at every alpha of the grid
    for alpha in alphas:
        total = sum(
            gaussian_renyi_divergence(F[i], Fp[i], math.sqrt(res.sensitivity.variance[i]), alpha)
            for i in in_set(q, T)
        )
        out["renyi_ratio"] = max(out["renyi_ratio"], total / (alpha * rho**2 / 2))
    # coupled second run: everything strictly before round q is bit-identical
    res_p = run(instance, build_learner("osd", instance, vc, T, rho), Zp, vc, rho, rng=[seed, 2])
    if not np.array_equal(res.xs[:q], res_p.xs[:q]):
        out["coupled_prefix_mismatch"] += 1
    for i in range(1, q):
        if not np.array_equal(res.tree.nodes[i], res_p.tree.nodes[i]):
            out["coupled_prefix_mismatch"] += 1
    # node sums over I_T reproduce the running sum the driver used
    g_T = sum((F[i] for i in index_set(T)), np.zeros(instance.dim))
    g_norm = res.columns["g_norm"][T - 1]
    out["prefix_sum_rel_err"] = abs(float(np.linalg.norm(g_T)) - g_norm) / max(g_norm, 1e-300)
    return out


@_timed
def check_sensitivity_probe(T: int = 256, trials: int = 10, rho: float = 1.0, seed: int = 0) -> CheckResult:
    rng = make_rng([seed, 99])
    quad = make_quadratic(10, 2.0, 1.0, 1.0, seed=seed)
    logi = make_logistic(5, 4.0, seed=seed, n_eval=2000)
    totals = {"not_identical": 0, "over_sensitivity": 0, "coupled_prefix_mismatch": 0}
    sens_margin, renyi_ratio, sum_err = math.inf, 0.0, 0.0
    for trial in range(trials):
        instance = quad if trial % 2 == 0 else logi
        k = (1, 2, 3)[trial % 3]
        q = int(rng.integers(1, T + 1))
        r = probe_once(instance, T, q, k, rho, seed=seed * 1000 + trial)
        for key in totals:
            totals[key] += r[key]
        sens_margin = min(sens_margin, r["sens_margin"])
        renyi_ratio = max(renyi_ratio, r["renyi_ratio"])
        sum_err = max(sum_err, r["prefix_sum_rel_err"])
    ok = all(v == 0 for v in totals.values()) and renyi_ratio <= 1 and sum_err <= 1e-9
    return CheckResult(
        "sensitivity_probe", ok, min(1 - renyi_ratio, sens_margin),
        f"{trials} neighbouring pairs at T={T}: {totals}; min(Delta_i - ||dF_i||) = {sens_margin:.3g}; "
        f"max per-IN(q) Renyi / (alpha rho^2/2) = {renyi_ratio:.4f}",
    )


# ---------------------------------------------------------------------------
# Monte Carlo bounds


def synthetic_martingale(trials: int, steps: int, dim: int, seed: int) -> np.ndarray:
    """Martingale differences with a scale that depends on the running sum.

    Returns an array of shape ``(trials, steps, dim)``.
    """
    rng = make_rng([seed, 7])
    X = np.zeros((trials, steps, dim))
    S = np.zeros((trials, dim))
    for t in range(steps):
        scale = 1.0 / (1.0 + 0.1 * np.linalg.norm(S, axis=1)) + 0.5 * abs(math.sin(t + 1))
        step = scale[:, None] * rng.standard_normal((trials, dim))
        # a symmetric sign flip keeps the conditional mean at zero
        step *= rng.choice([-1.0, 1.0], size=(trials, 1))
        X[:, t] = step
        S += step
    return X


@_timed
def check_martingale_bound(trials: int = 1000, steps: int = 64, dim: int = 5, lam: float = 2.0,
                           seed: int = 0) -> CheckResult:
    X = synthetic_martingale(trials, steps, dim, seed)
    lhs = float(np.mean(np.sum(X.sum(axis=1) ** 2, axis=1)))
    rhs = (2.0 / lam) * float(np.sum(np.mean(np.sum(X**2, axis=2), axis=0)))
    limit = rhs * (1 + 4 / math.sqrt(trials))
    return CheckResult("martingale_bound", lhs <= limit, (limit - lhs) / limit,
                       f"E||sum X||^2 = {lhs:.4g}, (2/lambda) sum E||X||^2 = {rhs:.4g}, limit {limit:.4g}")


def variance_bound(k: int, t: int, sigma_G: float, sigma_H: float, D: float, lam: float = 2.0) -> float:
    return 4 * (k + 1) ** 2 * (sigma_G**2 + D**2 * sigma_H**2) * t ** (2 * k - 1) / lam


@_timed
def check_variance_bound(seeds: int = 500, T: int = 512, ks=(1, 3), seed: int = 0) -> CheckResult:
    instance = make_quadratic(10, 2.0, 1.0, 1.0, seed=seed)
    ts = (T // 4, T // 2, T)
    worst = math.inf
    lines = []
    for k in ks:
        vc = VariantConfig(k=k)
        acc = np.zeros(len(ts))
        for s in range(seeds):
            res = run(instance, build_learner("osd", instance, vc, T), instance.dataset(T, [seed, s, k, 1]),
                      vc, None, rng=[seed, s, k, 2])
            acc += res.columns["var_sq"][[t - 1 for t in ts]]
        emp = acc / seeds
        for t, e in zip(ts, emp):
            limit = variance_bound(k, t, instance.sigma_G, instance.sigma_H, instance.D) * (
                1 + 4 / math.sqrt(seeds))
            worst = min(worst, (limit - e) / limit)
            lines.append(f"k={k} t={t}: {e:.4g} <= {limit:.4g}")
    return CheckResult("variance_bound", worst >= 0, worst, "; ".join(lines))


# ---------------------------------------------------------------------------
# rate experiments


QUADRATIC = {"family": "quadratic", "dim": 10, "D": 2.0, "H": 1.0, "sigma_G": 1.0, "seed": 7}


def _sizes(level: str):
    if level == "full":
        return {"horizons": tuple(2**j for j in range(8, 14)), "opt_horizons": tuple(2**j for j in range(8, 13)),
                "pf_horizons": tuple(2**j for j in range(8, 12)), "seeds": 20}
    return {"horizons": tuple(2**j for j in range(8, 12)), "opt_horizons": tuple(2**j for j in range(8, 12)),
            "pf_horizons": (256, 512), "seeds": 4}


def _bound_margins(suite) -> tuple[float, list[str]]:
    worst, lines = math.inf, []
    for T in suite.config.horizons:
        mean_gap = float(np.mean(suite.gaps(T)))
        bound = bound_for(suite, T)
        worst = min(worst, (bound - mean_gap) / bound)
        lines.append(f"T={T}: {mean_gap:.3g} <= {bound:.3g}")
    return worst, lines


def _slope(suite) -> tuple[float, float]:
    Ts = suite.config.horizons
    return fit_rate(Ts, [float(np.mean(suite.gaps(T))) for T in Ts])


@_timed
def check_rate_plain(level: str = "full", lo: float = -1.2, hi: float = -0.35) -> CheckResult:
    sz = _sizes(level)
    base = ExperimentConfig(instance=QUADRATIC, variant="plain", learner="osd",
                            horizons=sz["horizons"], seeds=sz["seeds"], master_seed=1)
    public = run_suite(base)
    private = run_suite(base.replace(rho=1.0))
    slope, se = _slope(public)
    bound_margin, lines = _bound_margins(private)
    ok = lo <= slope <= hi and bound_margin >= 0 and not public.failures and not private.failures
    return CheckResult(
        "rate_plain", ok, min(slope - lo, hi - slope, bound_margin),
        f"non-private slope {slope:.3f} +- {se:.3f} in [{lo}, {hi}]; private rho=1: " + "; ".join(lines),
        extra={"suites": [public, private], "slope": slope},
    )


@_timed
def check_rate_strongly_convex(level: str = "full", lo: float = -1.3, hi: float = -0.7) -> CheckResult:
    sz = _sizes(level)
    base = ExperimentConfig(instance=QUADRATIC, variant="strongly_convex", learner="sc_osd",
                            horizons=sz["horizons"], seeds=sz["seeds"], master_seed=2)
    public = run_suite(base)
    private = run_suite(base.replace(rho=1.0))
    slope, se = _slope(public)
    bound_margin, lines = _bound_margins(private)
    ok = lo <= slope <= hi and bound_margin >= 0 and not public.failures and not private.failures
    return CheckResult(
        "rate_strongly_convex", ok, min(slope - lo, hi - slope, bound_margin),
        f"non-private slope {slope:.3f} +- {se:.3f} in [{lo}, {hi}]; private rho=1: " + "; ".join(lines),
        extra={"suites": [public, private], "slope": slope},
    )


@_timed
def check_optimistic_adaptivity(level: str = "full", max_slope: float = -1.2) -> CheckResult:
    sz = _sizes(level)
    inst = {**QUADRATIC, "sigma_G": 0.0}
    base = ExperimentConfig(instance=inst, variant="optimistic", learner="optimistic",
                            horizons=sz["opt_horizons"], seeds=sz["seeds"], master_seed=3)
    opt = run_suite(base)
    plain = run_suite(base.replace(variant="plain", learner="osd"))
    Ts = base.horizons
    normalized = [float(np.mean([r.linear_regret / r.beta_sum for r in opt.rows_for(T)])) for T in Ts]
    slope, se = fit_rate(Ts, normalized)
    T_max = max(Ts)
    med_opt, med_plain = float(np.median(opt.gaps(T_max))), float(np.median(plain.gaps(T_max)))
    ok = slope <= max_slope and med_opt <= med_plain and not opt.failures and not plain.failures
    return CheckResult(
        "optimistic_adaptivity", ok, min(max_slope - slope, med_plain - med_opt),
        f"regret/beta_sum slope {slope:.3f} +- {se:.3f} <= {max_slope}; "
        f"median gap at T={T_max}: optimistic {med_opt:.3g} vs plain {med_plain:.3g}",
        extra={"suites": [opt, plain], "slope": slope, "normalized_regret": normalized},
    )


@_timed
def check_parameter_free_distance(level: str = "full", max_clip_rate: float = 0.01) -> CheckResult:
    sz = _sizes(level)
    D = QUADRATIC["D"]
    base = ExperimentConfig(instance={**QUADRATIC, "optimum_distance": 0.05 * D}, variant="parameter_free",
                            horizons=sz["pf_horizons"], seeds=sz["seeds"], master_seed=4)
    near = run_suite(base)
    far = run_suite(base.replace(instance={**QUADRATIC, "optimum_distance": 0.45 * D}))
    worst, lines = math.inf, []
    for T in base.horizons:
        a, b = float(np.median(near.gaps(T))), float(np.median(far.gaps(T)))
        worst = min(worst, b - a)
        lines.append(f"T={T}: {a:.3g} <= {b:.3g}")
    rounds = sum(r.T for s in (near, far) for r in s.rows)
    clips = sum(r.clips for s in (near, far) for r in s.rows)
    clip_rate = clips / rounds
    ok = worst >= 0 and clip_rate < max_clip_rate and not near.failures and not far.failures
    return CheckResult(
        "parameter_free_distance", ok, min(worst, max_clip_rate - clip_rate),
        "median gap near vs far optimum: " + "; ".join(lines) + f"; clip rate {clip_rate:.4%}",
        extra={"suites": [near, far], "clip_rate": clip_rate},
    )


@_timed
def check_decomposition(suites) -> CheckResult:
    total, bad = 0, []
    for suite in suites:
        for r in suite.rows:
            total += 1
            holds = r.decomposition_holds
            if r.sc_decomposition_holds is not None:
                holds = holds and r.sc_decomposition_holds
            if not holds:
                bad.append((suite.config.variant, r.T, r.seed))
    return CheckResult("decomposition", total > 0 and not bad, -len(bad),
                       f"{total} runs, {len(bad)} violations of the gap decomposition",
                       extra={"violations": bad})


@_timed
def check_determinism(horizons=(64, 128), seeds: int = 3) -> CheckResult:
    config = ExperimentConfig(instance=QUADRATIC, variant="plain", rho=1.0, horizons=horizons,
                              seeds=seeds, master_seed=11)
    blobs = []
    for _ in range(2):
        with tempfile.TemporaryDirectory() as tmp:
            run_suite(config, tmp)
            with open(f"{tmp}/raw.csv", "rb") as fh:
                blobs.append(fh.read())
    same = blobs[0] == blobs[1]
    return CheckResult("determinism", same, 0.0 if same else -1.0,
                       f"two runs of the same config: raw.csv {'byte-identical' if same else 'differs'}"
                       f" ({len(blobs[0])} bytes)")


def run_checks(level: str = "fast") -> dict:
    if level not in ("fast", "full"):
        raise ValueError(f"level must be 'fast' or 'full', got {level!r}")
    fast = level == "fast"
    results = [
        check_index_sets(1024 if fast else 4096),
        check_renyi_quadrature(),
        check_rdp_to_dp(),
        check_calibration_identity(2000 if fast else 10_000),
        check_sensitivity_probe(128 if fast else 256, 4 if fast else 10),
        check_martingale_bound(),
        check_variance_bound(40 if fast else 500, 256 if fast else 512),
    ]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rate = [check_rate_plain(level), check_rate_strongly_convex(level),
                check_optimistic_adaptivity(level), check_parameter_free_distance(level)]
    results += rate
    results.append(check_decomposition([s for r in rate for s in r.extra["suites"]]))
    results.append(check_determinism())
    return {"level": level, "checks": results, "passed": all(r.passed for r in results)}
