"""Command line entry point: ``run``, ``verify``, ``compare`` and ``budget``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import warnings

from .accounting import PrivacyBudget
from .harness import CompareConfig, ConfigError, ExperimentConfig, compare_variants, format_table, run_suite


def _cmd_run(args) -> int:
    config = ExperimentConfig.from_json(args.config)
    changes = {}
    if args.seeds is not None:
        changes["seeds"] = args.seeds
    if args.out is not None:
        changes["out"] = args.out
    if args.trace:
        changes["trace"] = True
    if changes:
        config = config.replace(**changes)
    suite = run_suite(config)
    agg = suite.aggregate
    for T, stats in agg["per_T"].items():
        print(f"T={T:>6}  mean_gap={stats['mean_gap']:.6g}  median_gap={stats['median_gap']:.6g}"
              f"  n={stats['n']}  failed={stats['failed']}")
    if agg["slope"] is not None:
        print(f"slope={agg['slope']:.4f} +- {agg['slope_stderr']:.4f}")
    if config.out:
        print(f"wrote {config.out}/raw.csv and {config.out}/aggregate.json")
    for failure in suite.failures:
        print(f"FAILED {failure}", file=sys.stderr)
    return 1 if suite.failures else 0


def _cmd_verify(args) -> int:
    from .checks import run_checks

    report = run_checks(args.level)
    for check in report["checks"]:
        print(check.line())
    n_pass = sum(c.passed for c in report["checks"])
    print(f"{n_pass}/{len(report['checks'])} checks passed")
    return 0 if report["passed"] else 1


def _cmd_compare(args) -> int:
    config = CompareConfig.from_json(args.config)
    report = compare_variants(config, args.out)
    print(format_table(report["table"]))
    failed = [f for s in report["suites"].values() for f in s.failures]
    return 1 if failed else 0


def _cmd_budget(args) -> int:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        budget = PrivacyBudget(args.rho, args.delta)
        report = budget.report(args.T)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    print(json.dumps({k: (str(v) if isinstance(v, float) and math.isinf(v) else v)
                      for k, v in report.items()}, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dpotb", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-round events")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a multi-seed suite from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--seeds", type=int)
    p.add_argument("--out")
    p.add_argument("--trace", action="store_true", help="also write trace_<T>_<seed>.csv per run")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("verify", help="run the property checks")
    p.add_argument("--level", choices=("fast", "full"), default="fast")
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("compare", help="matched-seed comparison of several arms")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("budget", help="(epsilon, delta) guarantee for a privacy level rho")
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--delta", type=float, default=1e-5)
    p.add_argument("--T", type=int, help="horizon, to report the max number of nodes per datum")
    p.set_defaults(func=_cmd_budget)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
