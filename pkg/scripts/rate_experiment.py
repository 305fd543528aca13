"""Fit log-log convergence slopes for the plain and strongly convex conversions.

Usage: python3 scripts/rate_experiment.py [--seeds 20] [--max-log2-T 13] [--out DIR]
"""

import argparse
import math
import os

import numpy as np

from dpotb.harness import ExperimentConfig, bound_for, run_suite

QUADRATIC = {"family": "quadratic", "dim": 10, "D": 2.0, "H": 1.0, "sigma_G": 1.0, "seed": 7}


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--seeds", type=int, default=20)
    parser.add_argument("--max-log2-T", type=int, default=13)
    parser.add_argument("--rho", type=float, default=1.0)
    parser.add_argument("--out")
    args = parser.parse_args()
    horizons = [2**j for j in range(8, args.max_log2_T + 1)]
    for variant, learner in (("plain", "osd"), ("strongly_convex", "sc_osd")):
        for rho in (math.inf, args.rho):
            out = None if args.out is None else os.path.join(args.out, f"{variant}_rho{rho}")
            config = ExperimentConfig(instance=QUADRATIC, variant=variant, learner=learner, rho=rho,
                                      horizons=horizons, seeds=args.seeds, master_seed=1, out=out)
            suite = run_suite(config)
            agg = suite.aggregate
            print(f"{variant} rho={rho}: slope {agg['slope']:.3f} +- {agg['slope_stderr']:.3f}")
            for T in horizons:
                mean_gap = float(np.mean(suite.gaps(T)))
                print(f"  T={T:>6} mean gap {mean_gap:.4g}  bound {bound_for(suite, T):.4g}")


if __name__ == "__main__":
    main()
