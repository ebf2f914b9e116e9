#!/usr/bin/env python3
import json
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from lending.harness import ASSUMPTIONS, build_stream, cell_seed, reproduce, run, run_scenario, sweep, validate
from lending.errors import RejectedInput
from lending.scenario import load_config

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def scenario(name):
    return load_config(SCENARIOS / f"{name}.json")


def statuses(reports):
    return {r.assumption: r.status for r in reports}


# --- run ---

def test_pooled_example1_run_writes_artifacts(tmp_path):
    result = run(scenario("example1_pooled"), tmp_path / "out")
    assert result.report["regret"] == pytest.approx(4.5)
    assert result.report["R_star"] == pytest.approx(10.0)
    for name in ("stream.csv", "trajectory.csv", "report.json", "assumptions.json"):
        assert (tmp_path / "out" / name).is_file()
    trajectory = pd.read_csv(tmp_path / "out" / "trajectory.csv")
    assert len(trajectory) == 10
    assumptions = json.loads((tmp_path / "out" / "assumptions.json").read_text(encoding="utf-8"))
    assert [entry["assumption"] for entry in assumptions] == list(ASSUMPTIONS)


def test_run_is_byte_reproducible(tmp_path):
    config = scenario("stochastic_tracking").with_horizon(200)
    run(config, tmp_path / "a")
    run(config, tmp_path / "b")
    for name in ("stream.csv", "trajectory.csv", "report.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_seed_override_changes_stream():
    config = scenario("stochastic_tracking").with_horizon(100)
    assert build_stream(config) == build_stream(config)
    assert build_stream(config, seed=1) != build_stream(config)


def test_tracking_run_on_example1():
    result = run_scenario(scenario("example1_curated"))
    assert result.report["regret"] == pytest.approx(1 - 1 / 10)
    assert result.report["engine"] == "curated/fixed_interest"


def test_exact_pooled_run():
    result = run_scenario(scenario("example1_pooled"), exact=True)
    assert result.trajectory.total_revenue == 5.5
    assert result.report["regret"] == 4.5


def test_supply_game_run_reports_floor():
    config = scenario("supply_game").with_horizon(1000)
    result = run_scenario(config)
    assert result.report["floor"] >= 0.4
    assert result.report["low_cost_count"] == 5
    assert list(result.frame().columns[:2]) == ["t", "supply_ratio"]


def test_monopolist_run_report():
    result = run_scenario(scenario("monopolist").with_horizon(60))
    assert result.report["benchmark"] == "static_allocation"
    assert result.report["horizon"] == 60
    assert np.isfinite(result.report["regret"])


# --- reproduce ---

@pytest.mark.parametrize("example_id", [1, 2, 3])
def test_reproduce_matches_closed_forms(example_id):
    table = reproduce(example_id, 100)
    assert table["passed"].all(), table.to_string()


def test_reproduce_exact_example1():
    table = reproduce(1, 20, exact=True)
    assert table["passed"].all()
    pooled = table.set_index("quantity").loc["pooled_revenue"]
    assert pooled["abs_diff"] == 0.0


def test_reproduce_rejects_unknown_example():
    with pytest.raises(RejectedInput):
        reproduce(4, 10)


# --- validate ---

def test_validate_reports_every_assumption_in_order():
    reports = validate(scenario("example1_pooled"))
    assert [r.assumption for r in reports] == list(ASSUMPTIONS)
    assert statuses(reports)["min_allocation"] == "not_applicable"


def test_validate_flags_reset_violation():
    assert statuses(validate(scenario("example3")))["reset_condition"] == "fail"


def test_validate_conforming_stochastic_scenario():
    reports = validate(scenario("stochastic_tracking"))
    assert all(r.passed for r in reports), [r.to_dict() for r in reports if not r.passed]
    result = statuses(reports)
    assert result["bounded_increment"] == "pass"
    assert result["reset_condition"] == "pass"
    assert result["curator_costs"] == "not_applicable"


def test_validate_supply_game_costs():
    assert statuses(validate(scenario("supply_game")))["curator_costs"] == "pass"


def test_validate_zero_min_mass_fails_min_allocation():
    result = statuses(validate(scenario("multi_min_mass_zero")))
    assert result["min_allocation"] == "fail"
    assert result["max_elasticity"] == "pass"


@pytest.mark.parametrize("duration_mean", [2.0, 8.0, 32.0])
def test_validate_variable_rate_scenario(duration_mean):
    config = scenario("variable_rate").with_horizon(300)
    stochastic = config.demand.stochastic.model_copy(update={"duration_mean": duration_mean})
    config = config.model_copy(update={"demand": config.demand.model_copy(update={"stochastic": stochastic})})
    report = validate(config)[ASSUMPTIONS.index("variable_rate_concentration")]
    assert report.status in ("pass", "fail")
    assert report.sample_size > 0


def test_oracle_searches_reachable_levels():
    config = scenario("example1_pooled").with_horizon(8)
    config = config.model_copy(update={"metrics": config.metrics.model_copy(update={"oracle": True})})
    result = run_scenario(config)
    oracle = result.report["oracle"]
    assert oracle["levels"] == "reachable"
    assert oracle["value"] == pytest.approx(result.report["R_star"])
    assert oracle["accepted"] == list(range(1, 9))


def test_oracle_is_skipped_beyond_budget():
    config = scenario("example1_pooled").with_horizon(20)
    config = config.model_copy(update={"metrics": config.metrics.model_copy(update={"oracle": True})})
    assert "skipped" in run_scenario(config).report["oracle"]


# --- sweep ---

def test_cell_seeds_are_stable():
    a = np.random.default_rng(cell_seed(7, 128, 0)).integers(0, 2 ** 32, size=4)
    b = np.random.default_rng(cell_seed(7, 128, 0)).integers(0, 2 ** 32, size=4)
    c = np.random.default_rng(cell_seed(7, 128, 1)).integers(0, 2 ** 32, size=4)
    assert list(a) == list(b)
    assert list(a) != list(c)


def test_sweep_is_independent_of_worker_count(tmp_path):
    config = scenario("stochastic_tracking")
    serial = sweep(config, tmp_path / "serial", t_grid=[64, 128], reps=2, workers=1)
    parallel = sweep(config, tmp_path / "parallel", t_grid=[64, 128], reps=2, workers=2)
    assert (tmp_path / "serial" / "sweep.csv").read_bytes() == (tmp_path / "parallel" / "sweep.csv").read_bytes()
    assert list(serial.cells["T"]) == [64, 64, 128, 128]
    assert serial.fit is None
    assert list(parallel.medians["T"]) == [64, 128]


@pytest.mark.slow
def test_tracking_sweep_reports_sign_and_growth_of_regret(tmp_path):
    grid = [128, 512, 2048, 8192, 16384]
    result = sweep(scenario("stochastic_tracking"), tmp_path, t_grid=grid, reps=3)
    medians = result.medians.set_index("T")
    assert (medians.loc[[2048, 8192, 16384], "regret"] < 0).all()
    assert abs(medians.loc[16384, "regret"]) > abs(medians.loc[2048, "regret"])
    assert result.fit.dominant == "T"
    assert result.fit.sign in ("negative", "mixed")
    assert result.dynamic_fit.dominant == "T"
    assert result.polylog.passed
    document = json.loads((tmp_path / "fit.json").read_text(encoding="utf-8"))
    assert document["sign"] == result.fit.sign
    assert document["dynamic_regret"]["dominant"] == "T"
    assert document["polylog_bound"]["pass"] is True


@pytest.mark.slow
def test_example1_curation_sweep_has_bounded_regret(tmp_path):
    result = sweep(scenario("example1_curated"), tmp_path, reps=1)
    regrets = result.medians.set_index("T")["regret"]
    assert regrets.loc[10000] <= 3 * regrets.loc[100]
    assert result.fit.dominant in ("1", "log T")
    assert result.fit.sign == "positive"
    assert result.polylog.passed


def test_sweep_registers_cells(tmp_path):
    from database.database import get_engine, list_runs, make_session

    url = f"sqlite:///{tmp_path / 'registry' / 'runs.db'}"
    config = scenario("example1_pooled")
    sweep(config, tmp_path / "out", t_grid=[5, 10], reps=1, registry_url=url)
    sweep(config, tmp_path / "again", t_grid=[5, 10], reps=1, registry_url=url)
    with make_session(get_engine(url)) as session:
        runs = list_runs(session, "example1_pooled")
        assert [r.horizon for r in runs] == [5, 10]
        assert runs[1].regret == pytest.approx(4.5)


def test_sweep_rejects_engines_without_regret(tmp_path):
    with pytest.raises(RejectedInput):
        sweep(scenario("supply_game"), tmp_path, t_grid=[200], reps=1)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
