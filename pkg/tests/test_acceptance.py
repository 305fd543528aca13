"""One test per acceptance criterion; each prints a single PASS/FAIL line."""

import math
import time

import pytest

from dpotb import checks

_cache: dict = {}


def cached(name, fn):
    if name not in _cache:
        _cache[name] = fn()
    return _cache[name]


def verdict(report_line, number, result, limit_s=None):
    within = limit_s is None or result.seconds < limit_s
    ok = result.passed and within
    timing = f" [limit {limit_s}s]" if limit_s is not None else ""
    report_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'} {result.name} "
                f"({result.seconds:.1f}s{timing}) {result.detail}")
    return ok


def test_c01_index_sets(report_line):
    res = checks.check_index_sets(4096)
    assert verdict(report_line, 1, res, limit_s=5), res.detail


def test_c02_renyi_quadrature(report_line):
    res = checks.check_renyi_quadrature(tol=1e-6)
    assert verdict(report_line, 2, res, limit_s=10), res.detail


def test_c03_rdp_to_dp(report_line):
    res = checks.check_rdp_to_dp(rel_tol=0.01)
    assert verdict(report_line, 3, res), res.detail


def test_c04_calibration_identity(report_line):
    res = checks.check_calibration_identity(t_max=10_000, ks=(1, 2, 3))
    assert verdict(report_line, 4, res), res.detail


def test_c05_sensitivity_probe(report_line):
    res = checks.check_sensitivity_probe(T=256, trials=10, rho=1.0)
    assert verdict(report_line, 5, res, limit_s=120), res.detail


def test_c06_martingale_bound(report_line):
    res = checks.check_martingale_bound(trials=1000)
    assert verdict(report_line, 6, res), res.detail


def test_c07_variance_bound(report_line):
    res = checks.check_variance_bound(seeds=500, T=512, ks=(1, 3))
    assert verdict(report_line, 7, res), res.detail


def test_c08_rate_plain(report_line):
    res = cached("plain", lambda: checks.check_rate_plain("full", lo=-1.2, hi=-0.35))
    assert verdict(report_line, 8, res, limit_s=600), res.detail


def test_c09_rate_strongly_convex(report_line):
    res = cached("sc", lambda: checks.check_rate_strongly_convex("full", lo=-1.3, hi=-0.7))
    assert verdict(report_line, 9, res), res.detail


def test_c10_optimistic_adaptivity(report_line):
    res = cached("optimistic", lambda: checks.check_optimistic_adaptivity("full", max_slope=-1.2))
    assert verdict(report_line, 10, res), res.detail


def test_c11_parameter_free_distance(report_line):
    res = cached("pf", lambda: checks.check_parameter_free_distance("full", max_clip_rate=0.01))
    assert verdict(report_line, 11, res), res.detail


def test_c12_decomposition(report_line):
    suites = []
    for name, fn in [("plain", lambda: checks.check_rate_plain("full")),
                     ("sc", lambda: checks.check_rate_strongly_convex("full")),
                     ("optimistic", lambda: checks.check_optimistic_adaptivity("full")),
                     ("pf", lambda: checks.check_parameter_free_distance("full"))]:
        suites += cached(name, fn).extra["suites"]
    res = checks.check_decomposition(suites)
    assert verdict(report_line, 12, res), res.detail


def test_c13_determinism(report_line):
    res = checks.check_determinism(horizons=(64, 128), seeds=3)
    assert verdict(report_line, 13, res), res.detail
