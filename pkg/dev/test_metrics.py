#!/usr/bin/env python3
import math
import sys
from fractions import Fraction

import numpy as np
import pytest

from lending.core import LoanEvent
from lending.demand import gen_example1, gen_example3
from lending.errors import RejectedInput
from lending.metrics import (
    build_report,
    check_polylog_growth,
    competitive_ratio,
    dynamic_regret,
    fit_scaling,
    hindsight_bruteforce,
    hindsight_fixed_optimal,
    hindsight_static_supply,
    hindsight_variable_optimal,
    path_length,
    per_step_maxima,
    regret,
    series_sign,
    static_supply_revenue,
)
from lending.pricing import VARIABLE, run_pooled_fixed

SMALL_STREAM = (
    LoanEvent(1, 0.25, 2),
    LoanEvent(2, 0.5, 3),
    LoanEvent(3, 0.2, 1),
    LoanEvent(4, 0.3, 2),
    LoanEvent(5, 0.1, 1),
)


# --- Benchmarks ---

def test_fixed_optimal_with_and_without_capacity():
    stream = gen_example3(10, Fraction(1, 10), exact=True)
    assert hindsight_fixed_optimal(stream, 1) == 18
    assert hindsight_fixed_optimal(stream, 1, S_total=Fraction(1)) == 10


def test_variable_optimal_counts_accrual_steps_within_horizon():
    stream = [LoanEvent(1, 0.5, 2)]
    assert hindsight_variable_optimal(stream, 1.0, horizon=4) == pytest.approx(1.5)
    assert hindsight_variable_optimal(stream, 1.0, horizon=2) == pytest.approx(1.0)
    assert per_step_maxima(stream, 1.0, horizon=4, mode=VARIABLE) == pytest.approx([1.5, 0, 0, 0])


def test_per_step_maxima_fixed():
    assert per_step_maxima(gen_example1(4), 1.0) == pytest.approx([1.0] * 4)


def test_static_supply_revenue_and_search():
    stream = gen_example1(10)
    assert static_supply_revenue(stream, 1.0, 1.0) == pytest.approx(5.5)
    assert static_supply_revenue(stream, 0.5, 1.0) == pytest.approx(3.0)
    best = hindsight_static_supply(stream, 1.0, (0.01, 1.0))
    assert best.revenue == pytest.approx(5.5)
    assert best.supply == pytest.approx(1.0)


def test_bruteforce_matches_capacitated_optimum():
    grid = np.linspace(0.05, 1.0, 20)
    result = hindsight_bruteforce(SMALL_STREAM, 1.0, grid)
    expected = hindsight_fixed_optimal(SMALL_STREAM, 1.0, S_total=1.0)
    assert expected == pytest.approx(2.9)
    assert result.value == pytest.approx(expected)
    assert result.accepted == [1, 2, 3, 4, 5]
    assert len(result.supply_path) == 5


def test_bruteforce_budget():
    with pytest.raises(RejectedInput):
        hindsight_bruteforce(gen_example1(9), 1.0, [1.0])
    with pytest.raises(RejectedInput):
        hindsight_bruteforce(SMALL_STREAM, 1.0, np.linspace(0.05, 1.0, 22))
    with pytest.raises(RejectedInput):
        hindsight_bruteforce(SMALL_STREAM, 1.0, S_max=0.0)


def random_tiny_stream(rng, low=0.01, high=None):
    T = int(rng.integers(2, 9))
    high = 1.0 / T if high is None else high
    return [LoanEvent(t, float(rng.uniform(low, high)), int(rng.integers(1, 4))) for t in range(1, T + 1)]


def test_bruteforce_agrees_with_fixed_optimum_on_random_tiny_instances():
    rng = np.random.default_rng(20240601)
    for _ in range(50):
        stream = random_tiny_stream(rng)
        expected = hindsight_fixed_optimal(stream, 1.0, S_total=1.0)
        tolerance = 0.02 * sum(e.duration * e.size for e in stream)
        result = hindsight_bruteforce(stream, 1.0, S_max=1.0)
        assert abs(result.value - expected) <= tolerance, stream
        assert result.accepted == [e.t for e in stream]


def test_bruteforce_uses_reachable_demand_levels():
    stream = [LoanEvent(1, 0.13, 2), LoanEvent(2, 0.21, 1), LoanEvent(3, 0.07, 3)]
    result = hindsight_bruteforce(stream, 1.0)
    assert result.value == pytest.approx(2 * 0.13 + 0.21 + 3 * 0.07)
    assert result.supply_path == pytest.approx([0.13, 0.34, 0.07])


def test_bruteforce_never_below_greedy_admission_under_capacity():
    rng = np.random.default_rng(7)
    for _ in range(20):
        stream = random_tiny_stream(rng, low=0.2, high=0.6)
        expected = hindsight_fixed_optimal(stream, 1.0, S_total=1.0)
        assert hindsight_bruteforce(stream, 1.0, S_max=1.0).value >= expected - 1e-12


# --- Regret bookkeeping ---

def test_dynamic_regret_and_residual():
    dyn = dynamic_regret([1.0, 1.0], [0.5, 1.0], R_star=2.0)
    assert dyn.value == pytest.approx(0.5)
    assert dyn.residual == pytest.approx(0.0)
    assert regret([0.5, 1.0], 2.0) == pytest.approx(0.5)
    with pytest.raises(RejectedInput):
        dynamic_regret([1.0], [0.5, 1.0])


def test_competitive_ratio_edge_cases():
    assert competitive_ratio(0, 0) == 1
    assert competitive_ratio(1.0, 2.0) == pytest.approx(0.5)
    assert competitive_ratio(-1.0, 2.0) == 0
    with pytest.raises(RejectedInput):
        competitive_ratio(1.0, 0)
    with pytest.raises(RejectedInput):
        competitive_ratio(1.0, -1.0)


def test_path_length():
    assert path_length([0.0, 1.0, 1.0, 3.0]) == pytest.approx(3.0)
    assert path_length([[0.0, 0.0], [3.0, 4.0]]) == pytest.approx(5.0)
    assert path_length([2.0]) == 0.0


def test_report_for_pooled_example1():
    stream = gen_example1(10)
    trajectory = run_pooled_fixed(stream, 1.0, 1.0)
    report = build_report(trajectory, stream, hindsight_fixed_optimal(stream, 1.0), "dynamic")
    assert report.R_alg == pytest.approx(5.5)
    assert report.regret == pytest.approx(4.5)
    assert report.dynamic_regret == pytest.approx(4.5)
    assert report.decomposition_residual == pytest.approx(0.0)
    assert report.competitive_ratio == pytest.approx(0.55)
    assert report.path_length == pytest.approx(0.9)
    data = report.to_dict()
    assert "per_step" not in data
    assert len(report.to_dict(with_series=True)["per_step"]["revenue"]) == 10


# --- Scaling fits ---

T_GRID = [10, 30, 100, 300, 1000, 3000]


def test_fit_recovers_linear_growth():
    fit = fit_scaling(T_GRID, [0.5 * t for t in T_GRID])
    assert fit.dominant == "T"
    assert fit.coefficients["T"] == pytest.approx(0.5, rel=1e-6)


def test_fit_recovers_logarithmic_growth():
    fit = fit_scaling(T_GRID, [3 * math.log(t) for t in T_GRID])
    assert fit.dominant == "log T"
    assert fit.to_dict()["T_grid"] == T_GRID


def test_fit_recovers_squared_logarithmic_growth():
    fit = fit_scaling(T_GRID, [3 * math.log(t) ** 2 for t in T_GRID])
    assert fit.dominant == "(log T)^2"
    assert fit.coefficients["(log T)^2"] == pytest.approx(3.0, rel=1e-4)
    assert fit.sign == "positive"


def test_fit_reports_linearly_falling_regret():
    grid = [128, 512, 2048, 8192, 32768]
    fit = fit_scaling(grid, [-0.006 * t for t in grid])
    assert fit.dominant == "T"
    assert fit.sign == "negative"
    assert fit.coefficients["T"] == pytest.approx(0.006, rel=1e-4)
    assert fit.to_dict()["sign"] == "negative"


def test_fit_of_zero_regret_has_no_dominant_term():
    fit = fit_scaling(T_GRID, [0.0] * len(T_GRID))
    assert fit.dominant == "none"
    assert fit.sign == "zero"


def test_series_sign():
    assert series_sign([1.0, 2.0]) == "positive"
    assert series_sign([0.0, -2.0]) == "negative"
    assert series_sign([-1.0, 2.0]) == "mixed"


def test_pooled_example1_regret_grows_linearly():
    grid = [100, 300, 1000, 3000, 10000]
    regrets = [hindsight_fixed_optimal(gen_example1(T), 1.0)
               - run_pooled_fixed(gen_example1(T), 1.0, 1.0).total_revenue for T in grid]
    assert regrets == pytest.approx([T / 2 - 0.5 for T in grid])
    fit = fit_scaling(grid, regrets)
    assert fit.dominant == "T"
    assert fit.sign == "positive"


POLYLOG_GRID = [256, 1024, 2048, 4096, 8192, 16384]


def test_polylog_check_accepts_squared_logarithm():
    check = check_polylog_growth(POLYLOG_GRID, [5 * math.log(t) ** 2 for t in POLYLOG_GRID])
    assert check.passed
    assert check.T_grid == [1024, 2048, 4096, 8192, 16384]
    assert check.ratios == pytest.approx([5.0] * 5)


def test_polylog_check_flags_linear_growth():
    assert not check_polylog_growth(POLYLOG_GRID, [0.01 * t for t in POLYLOG_GRID]).passed


def test_polylog_check_accepts_negative_values():
    check = check_polylog_growth(POLYLOG_GRID, [-0.006 * t for t in POLYLOG_GRID])
    assert check.passed
    assert check.to_dict()["pass"] is True


def test_polylog_check_needs_two_points_past_start():
    with pytest.raises(RejectedInput):
        check_polylog_growth([128, 512, 1024], [1.0, 2.0, 3.0])


def test_fit_rejects_short_grid():
    with pytest.raises(RejectedInput):
        fit_scaling([10, 100, 1000, 10000], [1, 2, 3, 4])
    with pytest.raises(RejectedInput):
        fit_scaling([10, 20, 30, 40, 50], [1, 2, 3, 4, 5])


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
