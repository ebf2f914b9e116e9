"""
Single borrowable asset market: domain types and the state transition.

Arithmetic here is deliberately generic: feeding `fractions.Fraction` sizes and
supplies gives exact results, floats give the usual double-precision run.
"""
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from fractions import Fraction
from numbers import Real
from typing import Iterable, Optional, Sequence

import numpy as np
import pandas as pd

from lending.errors import ModelError, RejectedInput

logger = logging.getLogger(__name__)

# Relative slack on the capacity rule in float mode; exact mode uses none.
CAPACITY_RTOL = 1e-12
SPLIT_RTOL = 1e-12

COST_BASES = ("idle", "deployed")


def is_exact(*values) -> bool:
    """True when every value is an int or a Fraction (bools excluded)."""
    return all(isinstance(v, (int, Fraction)) and not isinstance(v, bool) for v in values)


def ratio(numerator, denominator):
    """numerator / denominator, kept as a Fraction when both sides are exact."""
    if is_exact(numerator, denominator):
        return Fraction(numerator) / denominator
    return numerator / denominator


def _check_real(name: str, value, *, positive: bool = False, nonnegative: bool = False):
    if isinstance(value, bool) or not isinstance(value, Real):
        raise RejectedInput(f"{name} must be a real number, got {value!r}")
    if not math.isfinite(float(value)):
        raise RejectedInput(f"{name} must be finite, got {value!r}")
    if positive and value <= 0:
        raise RejectedInput(f"{name} must be > 0, got {value!r}")
    if nonnegative and value < 0:
        raise RejectedInput(f"{name} must be >= 0, got {value!r}")


# --- Domain types ---

@dataclass(frozen=True)
class LoanEvent:
    """One arrival (size > 0) or explicit departure (size < 0) at time index t."""
    t: int
    size: Real
    duration: int = 0

    def __post_init__(self):
        if isinstance(self.t, bool) or not isinstance(self.t, (int, np.integer)) or self.t < 1:
            raise RejectedInput(f"time index must be an integer >= 1, got {self.t!r}")
        _check_real("size", self.size)
        if self.size == 0:
            raise RejectedInput(f"loan size at t={self.t} must be non-zero")
        if isinstance(self.duration, bool) or not isinstance(self.duration, (int, np.integer)) or self.duration < 0:
            raise RejectedInput(f"duration at t={self.t} must be an integer >= 0, got {self.duration!r}")
        if self.size < 0 and self.duration != 0:
            raise RejectedInput(f"departure at t={self.t} must have duration 0")
        object.__setattr__(self, "t", int(self.t))
        object.__setattr__(self, "duration", int(self.duration))

    @property
    def is_arrival(self) -> bool:
        return self.size > 0


@dataclass(frozen=True)
class CostFunction:
    """C(x) = linear*x + quadratic*x^2/2 on [0, 1]."""
    linear: float = 0.0
    quadratic: float = 0.0

    def __post_init__(self):
        _check_real("cost linear coefficient", self.linear, nonnegative=True)
        _check_real("cost quadratic coefficient", self.quadratic, nonnegative=True)
        grid = np.linspace(0.0, 1.0, 11)
        values = np.array([self(x) for x in grid])
        if values[0] != 0:
            raise RejectedInput("cost function must vanish at 0")
        if np.any(np.diff(values) < -1e-12) or np.any(np.diff(values, 2) < -1e-12):
            raise RejectedInput("cost function must be convex and increasing on [0, 1]")

    def __call__(self, x):
        return self.linear * x + self.quadratic * x * x / 2

    def derivative(self, x):
        return self.linear + self.quadratic * x


@dataclass(frozen=True)
class CuratorProfile:
    """
    A supplier with capacity S_n that deploys the fraction alpha of it.

    cost_basis picks what the cost is charged on: "idle" charges C(1 - alpha)
    (the written net profit), "deployed" charges C(alpha).
    """
    capacity: Real
    alpha: Real = 1.0
    cost: CostFunction = field(default_factory=CostFunction)
    cost_basis: str = "idle"

    def __post_init__(self):
        _check_real("curator capacity", self.capacity, positive=True)
        _check_real("curator alpha", self.alpha)
        if not 0 < self.alpha <= 1:
            raise RejectedInput(f"curator alpha must lie in (0, 1], got {self.alpha!r}")
        if self.cost_basis not in COST_BASES:
            raise RejectedInput(f"cost_basis must be one of {COST_BASES}, got {self.cost_basis!r}")

    def with_alpha(self, alpha) -> "CuratorProfile":
        return replace(self, alpha=alpha)

    def cost_at(self, alpha):
        """Cost paid at allocation alpha."""
        return self.cost(1 - alpha) if self.cost_basis == "idle" else self.cost(alpha)

    def cost_slope(self, alpha):
        """d/d(alpha) of cost_at."""
        if self.cost_basis == "idle":
            return -self.cost.derivative(1 - alpha)
        return self.cost.derivative(alpha)

    def is_low_cost(self, c_star) -> bool:
        """C'(0) <= c* S_n."""
        return self.cost.derivative(0) <= c_star * self.capacity


@dataclass(frozen=True)
class MarketState:
    """
    Market after processing time index t.

    quoted_demand is the demand the step's price is quoted on: D(t-1)+l_t for an
    accepted arrival (zero-duration loans included), otherwise D(t).
    """
    t: int
    active_demand: Real
    supply: Real
    utilization: Real
    rejected: bool = False
    quoted_demand: Optional[Real] = None

    def __post_init__(self):
        if self.quoted_demand is None:
            object.__setattr__(self, "quoted_demand", self.active_demand)

    @classmethod
    def initial(cls, supply=1) -> "MarketState":
        return cls(t=0, active_demand=0, supply=supply, utilization=0)


@dataclass
class RevenueLedger:
    """Per-step and cumulative revenue with the per-supplier split of every step."""
    n_suppliers: int = 1
    per_step: list = field(default_factory=list)
    cumulative: list = field(default_factory=list)
    per_supplier: list = field(default_factory=list)

    def book(self, amount, shares: Optional[Sequence] = None):
        if shares is None:
            shares = [amount] if self.n_suppliers == 1 else split_revenue(amount, [1] * self.n_suppliers)
        if len(shares) != self.n_suppliers:
            raise RejectedInput(f"expected {self.n_suppliers} revenue shares, got {len(shares)}")
        total = sum(shares, 0)
        if is_exact(amount, *shares):
            if total != amount:
                raise ModelError(f"revenue split {total} does not add up to {amount}")
        elif not math.isclose(total, amount, rel_tol=SPLIT_RTOL, abs_tol=1e-300):
            raise ModelError(f"revenue split {total!r} does not add up to {amount!r}")
        previous = self.cumulative[-1] if self.cumulative else 0
        self.per_step.append(amount)
        self.cumulative.append(previous + amount)
        self.per_supplier.append(list(shares))

    def add_to_last(self, amount, shares: Sequence):
        """Folds a late booking (loans closed at horizon end) into the last step."""
        if not self.per_step:
            raise ModelError("nothing booked yet")
        self.per_step[-1] = self.per_step[-1] + amount
        self.cumulative[-1] = self.cumulative[-1] + amount
        self.per_supplier[-1] = [a + b for a, b in zip(self.per_supplier[-1], shares)]

    @property
    def total(self):
        return self.cumulative[-1] if self.cumulative else 0

    def supplier_totals(self) -> list:
        totals = [0] * self.n_suppliers
        for row in self.per_supplier:
            totals = [a + b for a, b in zip(totals, row)]
        return totals

    def is_additive(self, rel_tol: float = 1e-9) -> bool:
        """cumulative(t) == sum of per_step up to t; exact when the entries are exact."""
        running = 0
        for step, cum in zip(self.per_step, self.cumulative):
            running = running + step
            if is_exact(running, cum):
                if running != cum:
                    return False
            elif not math.isclose(running, cum, rel_tol=rel_tol, abs_tol=1e-12):
                return False
        return True


def split_revenue(amount, weights: Sequence) -> list:
    """Pro-rata split of amount by weights."""
    total = sum(weights, 0)
    if total <= 0:
        raise ModelError("pro-rata split needs a positive total weight")
    return [ratio(amount * w, total) for w in weights]


# --- Streams ---

def validate_stream(events: Iterable[LoanEvent]) -> tuple:
    """Checks the one-event-per-index rule and returns the stream as a tuple."""
    events = tuple(events)
    for previous, current in zip(events, events[1:]):
        if current.t == previous.t:
            raise RejectedInput(f"duplicate time index {current.t} in event ledger")
        if current.t < previous.t:
            raise RejectedInput(f"event at t={current.t} is out of time order")
    return events


def stream_horizon(events: Sequence[LoanEvent]) -> int:
    return events[-1].t if events else 0


def active_demand(events: Iterable[LoanEvent], t: int, accepted: Optional[set] = None):
    """
    D(t): sum of l_s over arrivals with s <= t < s + tau(s).

    When `accepted` (a set of arrival time indices) is given only those count,
    which is how the capacity rule enters.
    """
    events = validate_stream(events)
    total = 0
    for e in events:
        if e.t > t:
            break
        if not e.is_arrival or (accepted is not None and e.t not in accepted):
            continue
        if e.t <= t < e.t + e.duration:
            total = total + e.size
    return total


def demand_path(events: Sequence[LoanEvent], horizon: Optional[int] = None) -> np.ndarray:
    """Uncapacitated D(1..horizon) as a float array."""
    events = validate_stream(events)
    horizon = stream_horizon(events) if horizon is None else horizon
    delta = np.zeros(horizon + 2)
    for e in events:
        if e.is_arrival and e.duration > 0 and e.t <= horizon:
            delta[e.t] += float(e.size)
            delta[min(e.t + e.duration, horizon + 1)] -= float(e.size)
    return np.cumsum(delta)[1:horizon + 1]


def total_supply(curators: Sequence[CuratorProfile]):
    """S(alpha, t) = sum of alpha_n S_n."""
    if not curators:
        raise RejectedInput("at least one curator is required")
    supply = sum((c.alpha * c.capacity for c in curators), 0)
    if supply <= 0:
        raise ModelError("total supply must be positive")
    return supply


# --- State transition ---

def step_market(state: MarketState, event: Optional[LoanEvent], supply, released=0) -> MarketState:
    """
    Advances the market by one time index.

    `released` is the demand whose scheduled departure falls due at this index;
    it leaves before the event is processed. An arrival is accepted iff
    D(t-1) + l_t <= supply (ties accepted). event=None is an idle tick.
    """
    if supply <= 0:
        raise ModelError(f"supply must be positive, got {supply!r}")
    t = state.t + 1
    if event is not None and event.t != t:
        raise RejectedInput(f"event at t={event.t} is out of time order (market is at t={state.t})")

    demand = state.active_demand - released
    if demand < 0:
        demand = 0
    quoted = demand
    rejected = False

    if event is not None and event.is_arrival:
        candidate = demand + event.size
        tolerance = 0 if is_exact(candidate, supply) else CAPACITY_RTOL
        if candidate <= supply * (1 + tolerance):
            quoted = candidate
            if event.duration > 0:
                demand = candidate
        else:
            rejected = True
    elif event is not None:
        demand = demand + event.size
        if demand < 0:
            demand = 0
        quoted = demand

    utilization = min(ratio(demand, supply), 1)
    return MarketState(t=t, active_demand=demand, supply=supply, utilization=utilization,
                       rejected=rejected, quoted_demand=quoted)


class MarketReplay:
    """
    Replays a stream one time index at a time and owns the departure schedule.

    Accepted arrivals schedule their departure at t + tau. An explicit negative
    event must match a scheduled departure at its index; it then replaces the
    synthesized one. Unmatched departures (a rejected loan, a typo) are skipped
    and reported in `warnings`.
    """

    def __init__(self, events: Iterable[LoanEvent], horizon: Optional[int] = None, initial_supply=1):
        events = validate_stream(events)
        self.horizon = stream_horizon(events) if horizon is None else int(horizon)
        if events and events[-1].t > self.horizon:
            raise RejectedInput(f"event at t={events[-1].t} lies beyond horizon {self.horizon}")
        self._events = {e.t: e for e in events}
        self._schedule = defaultdict(list)
        self.state = MarketState.initial(initial_supply)
        self.accepted: list = []
        self.warnings: list = []

    def _match_departure(self, event: LoanEvent, due: list) -> bool:
        amount = -event.size
        for i, scheduled in enumerate(due):
            if scheduled == amount or (not is_exact(scheduled, amount)
                                       and math.isclose(scheduled, amount, rel_tol=1e-12)):
                del due[i]
                return True
        return False

    def advance(self, supply):
        """Processes the next index; returns (state, event, accepted)."""
        t = self.state.t + 1
        if t > self.horizon:
            raise RejectedInput(f"replay already reached horizon {self.horizon}")
        event = self._events.get(t)
        due = self._schedule.pop(t, [])
        if event is not None and not event.is_arrival and not self._match_departure(event, due):
            message = f"t={t}: departure of {-event.size} matches no scheduled repayment, skipped"
            logger.warning(message)
            self.warnings.append(message)
            event = None
        state = step_market(self.state, event, supply, released=sum(due, 0))
        accepted = event is not None and event.is_arrival and not state.rejected
        if accepted:
            self.accepted.append(event)
            if event.duration > 0:
                self._schedule[t + event.duration].append(event.size)
        self.state = state
        return state, event, accepted

    def open_loans(self) -> list:
        """Accepted loans still active after the horizon."""
        return [e for e in self.accepted if e.t + e.duration > self.horizon]


# --- CSV ---

def write_stream_csv(events: Sequence[LoanEvent], path) -> None:
    frame = pd.DataFrame(
        {"t": [e.t for e in events], "size": [float(e.size) for e in events],
         "duration": [e.duration for e in events]},
        columns=["t", "size", "duration"],
    )
    frame.to_csv(path, index=False, float_format="%.17g")


def read_stream_csv(path) -> tuple:
    frame = pd.read_csv(path)
    missing = {"t", "size", "duration"} - set(frame.columns)
    if missing:
        raise RejectedInput(f"stream CSV {path} lacks columns {sorted(missing)}")
    events = [LoanEvent(int(row.t), float(row.size), int(row.duration))
              for row in frame.itertuples(index=False)]
    return validate_stream(events)
