#!/usr/bin/env python3
import json
import sys
from pathlib import Path

import pytest

from main import EXIT_CONFIG, EXIT_OK, main, parse_t_grid

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


@pytest.fixture(autouse=True)
def isolated_env(monkeypatch, tmp_path):
    monkeypatch.setenv("LENDING_OUT_DIR", str(tmp_path / "out"))
    monkeypatch.setenv("LENDING_DB_URL", f"sqlite:///{tmp_path / 'out' / 'runs.db'}")
    monkeypatch.setenv("LENDING_WORKERS", "1")


def test_run_command(tmp_path, capsys):
    out = tmp_path / "run"
    code = main(["run", "--config", str(SCENARIOS / "example1_pooled.json"), "--out", str(out)])
    assert code == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["regret"] == pytest.approx(4.5)
    assert summary["peak_demand"] == pytest.approx(1.0)
    assert (out / "report.json").is_file()


def test_run_defaults_to_settings_out_dir(tmp_path):
    assert main(["run", "--config", str(SCENARIOS / "example1_pooled.json")]) == EXIT_OK
    assert (tmp_path / "out" / "example1_pooled" / "report.json").is_file()


def test_invalid_scenario_exits_with_config_code(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"schema_version": 1, "name": "bad",
                                "demand": {"generator": "example1", "horizon": 10},
                                "market": {"supply_bounds": [2.0, 1.0]}}), encoding="utf-8")
    assert main(["run", "--config", str(path)]) == EXIT_CONFIG
    assert "market.supply_bounds" in capsys.readouterr().err


def test_missing_scenario_exits_with_config_code(tmp_path):
    assert main(["validate", "--config", str(tmp_path / "absent.json")]) == EXIT_CONFIG


def test_bad_arguments_exit_with_config_code():
    with pytest.raises(SystemExit) as info:
        main(["sweep", "--config", "x.json", "--t-grid", "ten"])
    assert info.value.code == EXIT_CONFIG


def test_reproduce_command(tmp_path, capsys):
    assert main(["reproduce", "3", "--T", "50", "--out", str(tmp_path)]) == EXIT_OK
    assert "pooled_revenue" in capsys.readouterr().out
    assert (tmp_path / "reproduce_example3_T50.csv").is_file()


def test_validate_command_writes_reports(tmp_path, capsys):
    code = main(["validate", "--config", str(SCENARIOS / "example3.json"), "--out", str(tmp_path)])
    assert code == EXIT_OK
    assert "reset_condition" in capsys.readouterr().out
    reports = json.loads((tmp_path / "assumptions.json").read_text(encoding="utf-8"))
    assert {r["assumption"]: r["status"] for r in reports}["reset_condition"] == "fail"


def test_bounds_command(tmp_path, capsys):
    assert main(["bounds", "--G", "1", "--mu", "0.5", "--t-grid", "10,100", "--out", str(tmp_path)]) == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "T,hazan,zinkevich,besbes"
    assert len(lines) == 3
    assert (tmp_path / "bounds.csv").is_file()


def test_fit_command(tmp_path, capsys):
    path = tmp_path / "regret.csv"
    grid = [10, 30, 100, 300, 1000, 3000]
    path.write_text("T,regret\n" + "".join(f"{t},{0.5 * t}\n" for t in grid), encoding="utf-8")
    assert main(["fit", str(path)]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["dominant"] == "T"


def test_fit_command_rejects_missing_columns(tmp_path):
    path = tmp_path / "regret.csv"
    path.write_text("T,value\n10,1\n", encoding="utf-8")
    assert main(["fit", str(path)]) == EXIT_CONFIG


def test_parse_t_grid():
    assert parse_t_grid("128, 256,512") == [128, 256, 512]


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
