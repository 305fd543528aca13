"""Experiment orchestration: configs, multi-seed suites, rate fits and comparisons.

A suite runs every (horizon, seed) pair of a config, writes ``raw.csv`` and
``aggregate.json`` and returns the rows plus aggregates. Per-run seeds are
derived from the master seed keyed on ``(T, seed index)``, so adding horizons
or arms never perturbs existing runs and arms sharing a key see the same data
and the same base noises.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .accounting import DEFAULT_ALPHA_GRID, BoundConstants, PrivacyBudget, theoretical_gap_bound
from .conversion import SensitivityError, Variant, VariantConfig, build_learner, run
from .geometry import NoiseDistribution, NoiseKind
from .learners import LEARNERS
from .problems import instance_from_descriptor

log = logging.getLogger(__name__)

RAW_HEADER = ("variant", "k", "T", "seed", "gap", "regret", "eps", "clips", "wall_ms")

DEFAULT_LEARNER = {
    Variant.PLAIN: "osd",
    Variant.OPTIMISTIC: "optimistic",
    Variant.STRONGLY_CONVEX: "sc_osd",
    Variant.PARAMETER_FREE: "parameter_free",
}


class ConfigError(ValueError):
    """Invalid experiment config; the message names every offending field."""


def _parse_rho(value):
    if value is None or (isinstance(value, str) and value.lower() in ("inf", "infinity")):
        return math.inf
    return float(value)


@dataclass(frozen=True)
class ExperimentConfig:
    instance: dict
    variant: str = "plain"
    k: int | None = None
    learner: str | None = None
    rho: float = math.inf
    delta: float = 1e-5
    alpha_grid: tuple = DEFAULT_ALPHA_GRID
    horizons: tuple = (256,)
    seeds: int = 1
    out: str | None = None
    master_seed: int = 0
    noise: str = "gaussian"
    mu: float | None = None
    C: float = 1.0
    delta_prob: float = 0.1
    workers: int = 1
    trace: bool = False
    record_wall_time: bool = False

    def __post_init__(self):
        object.__setattr__(self, "rho", _parse_rho(self.rho))
        object.__setattr__(self, "horizons", tuple(self.horizons))
        object.__setattr__(self, "alpha_grid", tuple(self.alpha_grid))
        object.__setattr__(self, "instance", dict(self.instance))
        errors = self.field_errors()
        if errors:
            raise ConfigError("invalid config: " + "; ".join(errors))

    def field_errors(self) -> list[str]:
        errs = []
        inst = self.instance
        family = inst.get("family")
        if family not in ("quadratic", "logistic"):
            errs.append(f"instance.family: expected 'quadratic' or 'logistic', got {family!r}")
        for key in ("dim", "D", "seed") + (("H", "sigma_G") if family == "quadratic" else ()):
            if key not in inst:
                errs.append(f"instance.{key}: missing")
        if inst.get("dim") is not None and not (isinstance(inst["dim"], int) and inst["dim"] >= 1):
            errs.append(f"instance.dim: must be a positive integer, got {inst['dim']!r}")
        for key in ("D", "H"):
            if key in inst and not inst[key] > 0:
                errs.append(f"instance.{key}: must be positive, got {inst[key]!r}")
        if "sigma_G" in inst and inst["sigma_G"] < 0:
            errs.append(f"instance.sigma_G: must be nonnegative, got {inst['sigma_G']!r}")
        od = inst.get("optimum_distance")
        if od is not None and "D" in inst and not 0 <= od <= inst["D"] / 2:
            errs.append(f"instance.optimum_distance: must lie in [0, D/2], got {od!r}")
        try:
            mode = Variant(self.variant)
        except ValueError:
            errs.append(f"variant: unknown {self.variant!r}, choose from {[v.value for v in Variant]}")
            mode = None
        if mode is Variant.PARAMETER_FREE and self.k not in (None, 3):
            errs.append(f"k: the parameter-free variant requires k = 3, got {self.k}")
        if self.k is not None and not (isinstance(self.k, int) and self.k >= 1):
            errs.append(f"k: must be an integer >= 1, got {self.k!r}")
        if self.learner is not None and self.learner not in LEARNERS:
            errs.append(f"learner: unknown {self.learner!r}, choose from {sorted(LEARNERS)}")
        if mode is Variant.STRONGLY_CONVEX and self.learner not in (None, "sc_osd"):
            errs.append(f"learner: the strongly convex variant needs 'sc_osd', got {self.learner!r}")
        if mode is Variant.PARAMETER_FREE and self.learner not in (None, "parameter_free"):
            errs.append(f"learner: the parameter-free variant needs 'parameter_free', got {self.learner!r}")
        if not self.rho > 0:
            errs.append(f"rho: must be positive or 'inf', got {self.rho!r}")
        if not 0 < self.delta < 1:
            errs.append(f"delta: must lie in (0, 1), got {self.delta!r}")
        if not self.alpha_grid or any(not a > 1 for a in self.alpha_grid):
            errs.append("alpha_grid: must be a nonempty list of values > 1")
        if not self.horizons or any(not (isinstance(T, int) and T >= 1) for T in self.horizons):
            errs.append(f"horizons: must be a nonempty list of positive integers, got {list(self.horizons)}")
        elif len(set(self.horizons)) != len(self.horizons):
            errs.append("horizons: duplicates are not allowed")
        if not (isinstance(self.seeds, int) and self.seeds >= 1):
            errs.append(f"seeds: must be a positive integer, got {self.seeds!r}")
        if not (isinstance(self.master_seed, int) and self.master_seed >= 0):
            errs.append(f"master_seed: must be a nonnegative integer, got {self.master_seed!r}")
        if self.noise not in ("gaussian", "exponential"):
            errs.append(f"noise: expected 'gaussian' or 'exponential', got {self.noise!r}")
        if self.mu is not None and not self.mu > 0:
            errs.append(f"mu: must be positive, got {self.mu!r}")
        if not self.C > 0:
            errs.append(f"C: must be positive, got {self.C!r}")
        if not 0 < self.delta_prob < 1:
            errs.append(f"delta_prob: must lie in (0, 1), got {self.delta_prob!r}")
        if not (isinstance(self.workers, int) and self.workers >= 1):
            errs.append(f"workers: must be a positive integer, got {self.workers!r}")
        return errs

    @property
    def mode(self) -> Variant:
        return Variant(self.variant)

    @property
    def learner_name(self) -> str:
        return self.learner or DEFAULT_LEARNER[self.mode]

    def variant_config(self) -> VariantConfig:
        return VariantConfig(mode=self.mode, k=self.k, mu=self.mu,
                             delta_prob=self.delta_prob, C=self.C)

    def budget(self) -> PrivacyBudget:
        return PrivacyBudget(self.rho, self.delta, self.alpha_grid)

    def noise_distribution(self) -> NoiseDistribution:
        kind = NoiseKind.GAUSSIAN_RDP if self.noise == "gaussian" else NoiseKind.EXPONENTIAL_PURE_DP
        return NoiseDistribution(kind, self.instance["dim"])

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"invalid config: unknown fields {unknown}")
        if "instance" not in data:
            raise ConfigError("invalid config: instance: missing")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise OSError(f"cannot read config {path}: {exc.strerror}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(data)


def run_seeds(master_seed: int, T: int, seed_index: int) -> tuple[np.random.SeedSequence, ...]:
    """(data seed, noise seed) for one run, keyed on the horizon value and seed index."""
    root = np.random.SeedSequence(master_seed, spawn_key=(T, seed_index))
    return tuple(root.spawn(2))


@dataclass
class RunRow:
    variant: str
    k: int
    T: int
    seed: int
    gap: float
    regret: float
    eps: float
    clips: int
    wall_ms: float | None
    # diagnostics kept in memory only
    beta_sum: float = math.nan
    decomposition_holds: bool | None = None
    sc_decomposition_holds: bool | None = None
    linear_regret: float = math.nan
    failure: str | None = None
    trace: str | None = None

    def csv_fields(self) -> list[str]:
        wall = "" if self.wall_ms is None else f"{self.wall_ms:.3f}"
        return [self.variant, str(self.k), str(self.T), str(self.seed), repr(float(self.gap)),
                repr(float(self.regret)), repr(float(self.eps)), str(self.clips), wall]


def _single_run(config: ExperimentConfig, T: int, seed_index: int, eps: float) -> RunRow:
    instance = instance_from_descriptor(config.instance)
    vc = config.variant_config()
    data_seed, noise_seed = run_seeds(config.master_seed, T, seed_index)
    start = time.perf_counter()
    row = RunRow(config.variant, vc.k, T, seed_index, math.nan, math.nan, eps, 0, None)
    try:
        dataset = instance.dataset(T, data_seed)
        learner = build_learner(config.learner_name, instance, vc, T, config.rho)
        result = run(instance, learner, dataset, vc, config.rho,
                     noise=config.noise_distribution(), rng=noise_seed)
    except (AssertionError, SensitivityError, FloatingPointError) as exc:
        row.failure = f"{type(exc).__name__}: {exc}"
        log.error("run T=%d seed=%d aborted: %s", T, seed_index, row.failure)
        return row
    elapsed = (time.perf_counter() - start) * 1e3
    decomposition = result.decomposition
    optimum = instance.optimum
    linear = result.regret.regret(optimum)
    # the regret that enters each variant's bound
    if vc.mode in (Variant.STRONGLY_CONVEX, Variant.PARAMETER_FREE):
        regret = result.regret.regularized_regret(optimum)
    else:
        regret = linear
    row.gap = result.gap
    row.regret = regret
    row.linear_regret = linear
    row.clips = result.clips
    row.wall_ms = elapsed if config.record_wall_time else None
    row.beta_sum = float(decomposition.get("beta_sum", math.nan))
    row.decomposition_holds = decomposition.get("holds")
    row.sc_decomposition_holds = decomposition.get("sc_holds")
    if config.trace:
        row.trace = result.trace_csv()
    return row


def _run_job(args):
    return _single_run(*args)


def fit_rate(T_list, gaps) -> tuple[float, float]:
    """OLS slope (and its standard error) of ``log gap`` against ``log T``."""
    T_arr = np.asarray(T_list, dtype=float)
    g_arr = np.asarray(gaps, dtype=float)
    if T_arr.shape != g_arr.shape:
        raise ValueError("T_list and gaps must have the same length")
    keep = g_arr > 0
    if not keep.all():
        warnings.warn(f"fit_rate: excluding {int((~keep).sum())} non-positive gap(s)", stacklevel=2)
    if keep.sum() < 4:
        raise ValueError(f"fit_rate needs at least 4 positive points, got {int(keep.sum())}")
    fit = stats.linregress(np.log(T_arr[keep]), np.log(g_arr[keep]))
    return float(fit.slope), float(fit.stderr)


def aggregate_rows(rows) -> dict:
    """Per-horizon aggregates and the rate fit, computed from raw rows only."""
    by_T: dict[int, list] = {}
    for r in rows:
        by_T.setdefault(int(r["T"]), []).append(r)
    per_T = {}
    for T in sorted(by_T):
        ok = [r for r in by_T[T] if not math.isnan(float(r["gap"]))]
        gaps = np.array([float(r["gap"]) for r in ok])
        regrets = np.array([float(r["regret"]) for r in ok])
        per_T[str(T)] = {
            "n": len(ok),
            "failed": len(by_T[T]) - len(ok),
            "mean_gap": float(gaps.mean()) if len(ok) else math.nan,
            "median_gap": float(np.median(gaps)) if len(ok) else math.nan,
            "mean_regret": float(regrets.mean()) if len(ok) else math.nan,
            "clips": int(sum(int(r["clips"]) for r in ok)),
        }
    out = {"per_T": per_T, "slope": None, "slope_stderr": None}
    Ts = [int(T) for T in per_T if per_T[T]["n"] > 0]
    if len(Ts) >= 4:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            try:
                slope, se = fit_rate(Ts, [per_T[str(T)]["mean_gap"] for T in Ts])
                out["slope"], out["slope_stderr"] = slope, se
            except ValueError:
                pass
    return out


def read_raw_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@dataclass
class SuiteResult:
    config: ExperimentConfig
    rows: list[RunRow]
    aggregate: dict
    budget: dict
    out_dir: str | None = None
    failures: list[str] = field(default_factory=list)

    def rows_for(self, T: int) -> list[RunRow]:
        return [r for r in self.rows if r.T == T and r.failure is None]

    def gaps(self, T: int) -> np.ndarray:
        return np.array([r.gap for r in self.rows_for(T)])

    def raw_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(RAW_HEADER) + "\n")
        for r in self.rows:
            buf.write(",".join(r.csv_fields()) + "\n")
        return buf.getvalue()

    def raw_dicts(self) -> list[dict]:
        return [dict(zip(RAW_HEADER, r.csv_fields())) for r in self.rows]


def _write(path: str, text: str) -> None:
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def run_suite(config: ExperimentConfig, out: str | None = None) -> SuiteResult:
    """Run seeds x horizons; write ``raw.csv``/``aggregate.json`` when an output dir is given."""
    out = out if out is not None else config.out
    budget = config.budget()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        report = budget.report(max(config.horizons))
    eps = report["epsilon"]
    jobs = [(config, T, s, eps) for T in config.horizons for s in range(config.seeds)]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            rows = list(pool.map(_run_job, jobs))
    else:
        rows = [_run_job(j) for j in jobs]
    rows.sort(key=lambda r: (r.T, r.seed))
    failures = [f"T={r.T} seed={r.seed}: {r.failure}" for r in rows if r.failure]
    result = SuiteResult(config, rows, {}, report, out, failures)
    result.aggregate = aggregate_rows(result.raw_dicts())
    result.aggregate.update(
        variant=config.variant, learner=config.learner_name, k=config.variant_config().k,
        budget=report, failures=failures,
    )
    if out is not None:
        try:
            os.makedirs(out, exist_ok=True)
        except OSError as exc:
            raise OSError(f"cannot create output directory {out}: {exc.strerror}") from exc
        _write(os.path.join(out, "raw.csv"), result.raw_csv())
        _write(os.path.join(out, "aggregate.json"),
               json.dumps(_jsonable(result.aggregate), indent=2, sort_keys=True) + "\n")
        if config.trace:
            for r in rows:
                if r.trace is not None:
                    _write(os.path.join(out, f"trace_{r.T}_{r.seed}.csv"), r.trace)
    return result


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def bound_for(suite: SuiteResult, T: int) -> float:
    """Theoretical expected-gap bound at horizon ``T`` using the suite's mean regret."""
    config = suite.config
    instance = instance_from_descriptor(config.instance)
    V = config.noise_distribution().rdp_variance
    mode = config.mode
    extra = {}
    if mode is Variant.STRONGLY_CONVEX:
        extra["mu"] = config.mu if config.mu is not None else instance.mu
    c = BoundConstants.from_instance(instance, V=V, delta_prob=config.delta_prob, C=config.C, **extra)
    regret = float(np.mean([r.regret for r in suite.rows_for(T)]))
    return theoretical_gap_bound(mode, c, T, regret, config.variant_config().k, config.rho)


# ---------------------------------------------------------------------------
# variant comparison


COMPARABLE_OVERRIDES = ("sigma_G", "optimum_distance")


@dataclass(frozen=True)
class CompareConfig:
    """Several arms over one base config. Arms may override the variant,
    learner, ``k`` and the instance's ``sigma_G`` / ``optimum_distance``."""

    base: ExperimentConfig
    arms: tuple

    def __post_init__(self):
        if len(self.arms) < 2:
            raise ConfigError("compare needs at least 2 arms")
        names = [a.get("name") for a in self.arms]
        if None in names or len(set(names)) != len(names):
            raise ConfigError("every arm needs a unique 'name'")
        for arm in self.arms:
            for key in arm.get("instance", {}):
                if key not in COMPARABLE_OVERRIDES:
                    raise ConfigError(
                        f"arm {arm['name']!r}: instance.{key} differs from the base instance; "
                        f"only {COMPARABLE_OVERRIDES} may vary across arms"
                    )
            self.arm_config(arm)  # validate eagerly

    def arm_config(self, arm: dict) -> ExperimentConfig:
        changes = {k: v for k, v in arm.items() if k not in ("name", "instance")}
        instance = {**self.base.instance, **arm.get("instance", {})}
        return self.base.replace(instance=instance, **changes)

    @classmethod
    def from_dict(cls, data: dict) -> "CompareConfig":
        data = dict(data)
        arms = data.pop("arms", None)
        if not arms:
            raise ConfigError("invalid compare config: arms: missing")
        return cls(ExperimentConfig.from_dict(data), tuple(arms))

    @classmethod
    def from_json(cls, path) -> "CompareConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise OSError(f"cannot read config {path}: {exc.strerror}") from exc
        return cls.from_dict(data)


def compare_variants(config: CompareConfig, out: str | None = None) -> dict:
    """Matched-seed comparison of the arms: per-arm suites plus, per horizon,
    the median gap of each arm and the fraction of seeds where each arm beats the first."""
    suites = {}
    for arm in config.arms:
        arm_out = None if out is None else os.path.join(out, arm["name"])
        suites[arm["name"]] = run_suite(config.arm_config(arm), arm_out)
    names = list(suites)
    table = []
    for T in config.base.horizons:
        row = {"T": T}
        ref = suites[names[0]].gaps(T)
        for name in names:
            gaps = suites[name].gaps(T)
            row[f"{name}_median_gap"] = float(np.median(gaps)) if gaps.size else math.nan
            if name != names[0] and gaps.size == ref.size:
                row[f"{name}_wins_vs_{names[0]}"] = float(np.mean(gaps <= ref))
        table.append(row)
    report = {"arms": names, "table": table, "suites": suites}
    if out is not None:
        _write(os.path.join(out, "compare.json"),
               json.dumps(_jsonable({"arms": names, "table": table}), indent=2, sort_keys=True) + "\n")
    return report


def format_table(table: list[dict]) -> str:
    if not table:
        return ""
    cols = list(table[0])
    lines = ["  ".join(f"{c:>24}" for c in cols)]
    for row in table:
        lines.append("  ".join(f"{row.get(c, ''):>24.6g}" if isinstance(row.get(c), float)
                               else f"{row.get(c, ''):>24}" for c in cols))
    return "\n".join(lines)


def verify_all(level: str = "fast") -> dict:
    """Run every named property check; see :mod:`dpotb.checks`."""
    from .checks import run_checks

    return run_checks(level)
