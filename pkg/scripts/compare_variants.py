"""Matched-seed comparisons: optimistic vs plain at zero gradient noise, and the
parameter-free conversion with the optimum near vs far from the centre.

Usage: python3 scripts/compare_variants.py [--seeds 20] [--out DIR]
"""

import argparse
import os

import numpy as np

from dpotb.harness import CompareConfig, compare_variants, fit_rate, format_table

QUADRATIC = {"family": "quadratic", "dim": 10, "D": 2.0, "H": 1.0, "sigma_G": 0.0, "seed": 7}


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--seeds", type=int, default=20)
    parser.add_argument("--out")
    args = parser.parse_args()

    optimistic = CompareConfig.from_dict({
        "instance": QUADRATIC, "horizons": [2**j for j in range(8, 13)], "seeds": args.seeds,
        "master_seed": 3,
        "arms": [
            {"name": "plain", "variant": "plain", "learner": "osd"},
            {"name": "optimistic", "variant": "optimistic"},
            {"name": "optimistic_noisy", "variant": "optimistic", "instance": {"sigma_G": 2.5}},
        ],
    })
    report = compare_variants(optimistic, None if args.out is None else os.path.join(args.out, "optimistic"))
    print(format_table(report["table"]))
    suite = report["suites"]["optimistic"]
    Ts = list(optimistic.base.horizons)
    normalized = [np.mean([r.linear_regret / r.beta_sum for r in suite.rows_for(T)]) for T in Ts]
    slope, se = fit_rate(Ts, normalized)
    print(f"optimistic regret / beta_(1:T) slope: {slope:.3f} +- {se:.3f}\n")

    D = QUADRATIC["D"]
    pf = CompareConfig.from_dict({
        "instance": {**QUADRATIC, "sigma_G": 1.0}, "variant": "parameter_free",
        "horizons": [2**j for j in range(8, 12)], "seeds": args.seeds, "master_seed": 4,
        "arms": [
            {"name": "near", "instance": {"optimum_distance": 0.05 * D}},
            {"name": "far", "instance": {"optimum_distance": 0.45 * D}},
        ],
    })
    report = compare_variants(pf, None if args.out is None else os.path.join(args.out, "parameter_free"))
    print(format_table(report["table"]))


if __name__ == "__main__":
    main()
