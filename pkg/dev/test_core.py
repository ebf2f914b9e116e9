#!/usr/bin/env python3
import sys
from fractions import Fraction

import pytest

from lending.core import (
    CostFunction,
    CuratorProfile,
    LoanEvent,
    MarketReplay,
    MarketState,
    RevenueLedger,
    active_demand,
    demand_path,
    read_stream_csv,
    split_revenue,
    step_market,
    total_supply,
    validate_stream,
    write_stream_csv,
)
from lending.errors import ModelError, RejectedInput


# --- Domain types ---

def test_loan_event_rejects_bad_fields():
    with pytest.raises(RejectedInput):
        LoanEvent(0, 0.1, 1)
    with pytest.raises(RejectedInput):
        LoanEvent(1, 0, 1)
    with pytest.raises(RejectedInput):
        LoanEvent(1, -0.1, 2)
    with pytest.raises(RejectedInput):
        LoanEvent(1, float("nan"), 1)


def test_cost_function_must_be_increasing_and_convex():
    cost = CostFunction(linear=0.5, quadratic=2.0)
    assert cost(0) == 0
    assert cost(1) == pytest.approx(1.5)
    assert cost.derivative(0.5) == pytest.approx(1.5)
    with pytest.raises(RejectedInput):
        CostFunction(linear=-1.0)


def test_curator_cost_basis():
    cost = CostFunction(linear=1.0)
    idle = CuratorProfile(capacity=2.0, alpha=0.25, cost=cost, cost_basis="idle")
    deployed = CuratorProfile(capacity=2.0, alpha=0.25, cost=cost, cost_basis="deployed")
    assert idle.cost_at(0.25) == pytest.approx(0.75)
    assert deployed.cost_at(0.25) == pytest.approx(0.25)
    assert idle.cost_slope(0.25) == pytest.approx(-1.0)
    assert deployed.cost_slope(0.25) == pytest.approx(1.0)
    assert idle.is_low_cost(0.5)
    assert not CuratorProfile(capacity=1.0, cost=CostFunction(linear=2.0)).is_low_cost(1.0)
    with pytest.raises(RejectedInput):
        CuratorProfile(capacity=1.0, alpha=0.0)
    with pytest.raises(RejectedInput):
        CuratorProfile(capacity=1.0, cost_basis="unused")


def test_total_supply():
    curators = [CuratorProfile(1.0, 0.5), CuratorProfile(2.0, 0.25)]
    assert total_supply(curators) == pytest.approx(1.0)
    with pytest.raises(RejectedInput):
        total_supply([])


# --- State transition ---

def test_step_market_accepts_ties():
    state = step_market(MarketState.initial(), LoanEvent(1, 1.0, 2), supply=1.0)
    assert not state.rejected
    assert state.active_demand == 1.0
    assert state.utilization == 1.0


def test_step_market_rejects_over_capacity():
    first = step_market(MarketState.initial(), LoanEvent(1, 0.6, 5), supply=1.0)
    second = step_market(first, LoanEvent(2, 0.5, 5), supply=1.0)
    assert second.rejected
    assert second.active_demand == pytest.approx(0.6)
    assert second.quoted_demand == pytest.approx(0.6)


def test_zero_duration_arrival_is_quoted_but_not_active():
    state = step_market(MarketState.initial(), LoanEvent(1, 0.3, 0), supply=1.0)
    assert not state.rejected
    assert state.active_demand == 0
    assert state.quoted_demand == pytest.approx(0.3)


def test_step_market_hard_errors():
    with pytest.raises(ModelError):
        step_market(MarketState.initial(), None, supply=0)
    with pytest.raises(RejectedInput):
        step_market(MarketState.initial(), LoanEvent(3, 0.1, 1), supply=1.0)


def test_exact_utilization_stays_rational():
    state = step_market(MarketState.initial(), LoanEvent(1, Fraction(1, 3), 2), supply=Fraction(1))
    assert state.utilization == Fraction(1, 3)
    assert isinstance(state.utilization, Fraction)


# --- Replay ---

def test_replay_releases_scheduled_departures():
    replay = MarketReplay([LoanEvent(1, 0.5, 2)], horizon=4)
    demands = [replay.advance(1.0)[0].active_demand for _ in range(4)]
    assert demands == [0.5, 0.5, 0, 0]


def test_replay_matches_explicit_departure():
    replay = MarketReplay([LoanEvent(1, 0.5, 2), LoanEvent(3, -0.5)], horizon=3)
    states = [replay.advance(1.0)[0] for _ in range(3)]
    assert states[-1].active_demand == 0
    assert replay.warnings == []


def test_replay_skips_unmatched_departure():
    replay = MarketReplay([LoanEvent(1, 0.5, 4), LoanEvent(2, -0.3)], horizon=2)
    replay.advance(1.0)
    state, event, accepted = replay.advance(1.0)
    assert event is None and not accepted
    assert state.active_demand == pytest.approx(0.5)
    assert len(replay.warnings) == 1


def test_replay_reports_open_loans():
    replay = MarketReplay([LoanEvent(1, 0.2, 1), LoanEvent(2, 0.2, 10)], horizon=3)
    for _ in range(3):
        replay.advance(1.0)
    assert [e.t for e in replay.open_loans()] == [2]
    with pytest.raises(RejectedInput):
        replay.advance(1.0)


def test_validate_stream_rules():
    with pytest.raises(RejectedInput):
        validate_stream([LoanEvent(1, 0.1, 1), LoanEvent(1, 0.2, 1)])
    with pytest.raises(RejectedInput):
        validate_stream([LoanEvent(2, 0.1, 1), LoanEvent(1, 0.2, 1)])


def test_active_demand_and_path_agree():
    events = [LoanEvent(1, 0.25, 3), LoanEvent(2, 0.5, 1), LoanEvent(4, 0.125, 2)]
    path = demand_path(events, horizon=5)
    assert list(path) == pytest.approx([0.25, 0.75, 0.25, 0.125, 0.125])
    for t in range(1, 6):
        assert active_demand(events, t) == pytest.approx(path[t - 1])
    assert active_demand(events, 2, accepted={1}) == pytest.approx(0.25)


# --- Ledger ---

def test_ledger_exact_additivity():
    ledger = RevenueLedger(n_suppliers=2)
    for amount in (Fraction(1, 3), Fraction(1, 7), Fraction(2, 5)):
        ledger.book(amount, split_revenue(amount, [1, 2]))
    assert ledger.total == Fraction(1, 3) + Fraction(1, 7) + Fraction(2, 5)
    assert ledger.is_additive()
    assert sum(ledger.supplier_totals()) == ledger.total


def test_ledger_rejects_bad_split():
    ledger = RevenueLedger(n_suppliers=2)
    with pytest.raises(ModelError):
        ledger.book(1.0, [0.5, 0.4])
    with pytest.raises(RejectedInput):
        ledger.book(1.0, [1.0])


def test_stream_csv_keeps_values(tmp_path):
    events = (LoanEvent(1, 0.1, 3), LoanEvent(2, 1 / 3, 0), LoanEvent(4, 0.2, 1))
    path = tmp_path / "stream.csv"
    write_stream_csv(events, path)
    assert read_stream_csv(path) == events


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
