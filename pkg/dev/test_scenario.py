#!/usr/bin/env python3
import json
import sys
from pathlib import Path

import pytest
from pydantic import ValidationError

from lending.errors import RejectedInput
from lending.pricing import VARIABLE
from lending.scenario import ScenarioConfig, format_validation_error, load_config, load_settings

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def write_scenario(tmp_path, document, name="scenario.json"):
    path = tmp_path / name
    path.write_text(json.dumps(document), encoding="utf-8")
    return path


def minimal(**overrides):
    document = {"schema_version": 1, "name": "minimal", "demand": {"generator": "example1", "horizon": 10}}
    document.update(overrides)
    return document


# --- Shipped scenarios ---

@pytest.mark.parametrize("path", sorted(SCENARIOS.glob("*.json")), ids=lambda p: p.stem)
def test_shipped_scenarios_load(path):
    config = load_config(path)
    assert config.name == path.stem


def test_curated_scenario_conversions():
    config = load_config(SCENARIOS / "example1_curated.json")
    assert config.pricing_config().model == "curated"
    game = config.game_config()
    assert game.supply_mode == "tracking"
    assert game.tracking.schedule.scale == 0.5
    assert game.capacity_total == 1.0


def test_variable_scenario_mode():
    config = load_config(SCENARIOS / "variable_rate.json")
    assert config.pricing_config().mode == VARIABLE
    assert config.demand.stochastic_params().horizon == 1024


def test_multi_scenario_conversions():
    config = load_config(SCENARIOS / "md_curators.json")
    assert len(config.md_curators()) == 4
    assert config.md_config().min_mass == 0.05
    assert config.game_config() is None


# --- Schema errors ---

def test_supply_bounds_order_is_reported_with_field_path(tmp_path):
    path = write_scenario(tmp_path, minimal(market={"supply_bounds": [2.0, 1.0]}))
    with pytest.raises(ValidationError) as info:
        load_config(path)
    lines = format_validation_error(info.value)
    assert any(line.startswith("market.supply_bounds") for line in lines)


def test_zero_minimum_supply_is_rejected(tmp_path):
    path = write_scenario(tmp_path, minimal(market={"supply_bounds": [0.0, 1.0]}))
    with pytest.raises(ValidationError):
        load_config(path)


def test_unknown_keys_are_rejected(tmp_path):
    path = write_scenario(tmp_path, minimal(colour="blue"))
    with pytest.raises(ValidationError) as info:
        load_config(path)
    assert any("colour" in line for line in format_validation_error(info.value))


def test_generator_parameters_are_required(tmp_path):
    with pytest.raises(ValidationError):
        load_config(write_scenario(tmp_path, minimal(demand={"generator": "example3", "horizon": 10})))
    with pytest.raises(ValidationError):
        load_config(write_scenario(tmp_path, minimal(demand={"generator": "stochastic", "horizon": 10})))


def test_market_kind_must_match_generator_and_engine(tmp_path):
    multi_demand = {"generator": "multi_stochastic", "horizon": 10}
    with pytest.raises(ValidationError):
        load_config(write_scenario(tmp_path, minimal(demand=multi_demand)))
    with pytest.raises(ValidationError):
        load_config(write_scenario(tmp_path, minimal(engine={"model": "monopolist"})))
    with pytest.raises(ValidationError):
        load_config(write_scenario(tmp_path, minimal(engine={"model": "curated"})))


def test_t_grid_must_increase(tmp_path):
    with pytest.raises(ValidationError):
        load_config(write_scenario(tmp_path, minimal(output={"t_grid": [100, 10]})))


def test_missing_file_is_rejected(tmp_path):
    with pytest.raises(RejectedInput):
        load_config(tmp_path / "absent.json")


# --- Copies and digests ---

def test_horizon_and_seed_copies():
    config = ScenarioConfig.model_validate(minimal())
    longer = config.with_horizon(40)
    assert longer.demand.horizon == 40
    assert config.demand.horizon == 10
    assert config.digest() == ScenarioConfig.model_validate(minimal()).digest()
    assert config.with_seed(5).digest() != config.digest()


# --- Environment ---

def test_settings_from_environment(monkeypatch, tmp_path):
    monkeypatch.setenv("LENDING_OUT_DIR", str(tmp_path))
    monkeypatch.setenv("LENDING_DB_URL", "sqlite:///:memory:")
    monkeypatch.setenv("LENDING_WORKERS", "3")
    monkeypatch.setenv("LENDING_LOG_LEVEL", "debug")
    settings = load_settings()
    assert settings.out_dir == str(tmp_path)
    assert settings.db_url == "sqlite:///:memory:"
    assert settings.workers == 3
    assert settings.log_level == "DEBUG"


@pytest.mark.parametrize("workers", ["abc", "0"])
def test_settings_reject_bad_worker_count(monkeypatch, workers):
    monkeypatch.setenv("LENDING_WORKERS", workers)
    with pytest.raises(RejectedInput):
        load_settings()


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
