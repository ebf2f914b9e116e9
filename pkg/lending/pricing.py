"""
Fixed- and variable-interest engines for the single-asset market.

Pooled and curated runs share one engine loop; only the supply policy differs:

- StaticSupply: fixed S (pooled model).
- CuratorGame: curators take simultaneous projected-OGD steps on their own
  pro-rata profit before each loan.
- SupplyTracker: aggregate supply S_t = clip(D(t-1) + h_t, S_min, S_max) where
  the headroom h runs OGD toward the arriving loan size.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from lending.core import (
    CuratorProfile,
    MarketReplay,
    RevenueLedger,
    is_exact,
    ratio,
    split_revenue,
    total_supply,
    validate_stream,
)
from lending.errors import ModelError, RejectedInput
from lending.learners import ScalarOGD, StepSchedule, project_interval

logger = logging.getLogger(__name__)

FIXED = "fixed_interest"
VARIABLE = "variable_interest"
MODES = (FIXED, VARIABLE)
MODELS = ("pooled", "curated")
SUPPLY_MODES = ("game", "tracking")


# --- Configuration ---

@dataclass(frozen=True)
class PricingConfig:
    kappa: float = 1.0
    mode: str = FIXED
    model: str = "pooled"
    supply_bounds: tuple = (1e-9, 1.0)

    def __post_init__(self):
        if not self.kappa > 0:
            raise RejectedInput(f"kappa must be > 0, got {self.kappa!r}")
        if self.mode not in MODES:
            raise RejectedInput(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.model not in MODELS:
            raise RejectedInput(f"model must be one of {MODELS}, got {self.model!r}")
        low, high = self.supply_bounds
        if not 0 < low <= high:
            raise RejectedInput(f"supply bounds need 0 < S_min <= S_max, got {self.supply_bounds}")


@dataclass(frozen=True)
class TrackingConfig:
    """Headroom learner of the supply-tracking mode; scale 0.5 is the 1/(mu t) schedule for (h - l)^2."""
    schedule: StepSchedule = StepSchedule("inverse_t_strongly_convex", 0.5)
    margin: float = 0.0
    initial_fraction: float = 1.0


@dataclass(frozen=True)
class CuratorGameConfig:
    curators: tuple
    learner: StepSchedule = StepSchedule()
    low_cost_fraction: float = 0.5
    c_star: float = 1.0
    update_timing: str = "curators_move_then_loan"
    supply_mode: str = "game"
    revenue_floor: float = 0.0
    alpha_floor: float = 1e-3
    tracking: TrackingConfig = TrackingConfig()

    def __post_init__(self):
        object.__setattr__(self, "curators", tuple(self.curators))
        if not self.curators:
            raise RejectedInput("the curator game needs at least one curator")
        if not 0 < self.low_cost_fraction <= 1:
            raise RejectedInput(f"low_cost_fraction must lie in (0, 1], got {self.low_cost_fraction!r}")
        if self.c_star < 0 or self.revenue_floor < 0:
            raise RejectedInput("c_star and revenue_floor must be non-negative")
        if not 0 < self.alpha_floor <= 1:
            raise RejectedInput(f"alpha_floor must lie in (0, 1], got {self.alpha_floor!r}")
        if self.update_timing != "curators_move_then_loan":
            raise RejectedInput(f"unsupported update timing {self.update_timing!r}")
        if self.supply_mode not in SUPPLY_MODES:
            raise RejectedInput(f"supply_mode must be one of {SUPPLY_MODES}, got {self.supply_mode!r}")

    @property
    def capacity_total(self):
        return sum((c.capacity for c in self.curators), 0)

    def low_cost_count(self) -> int:
        return sum(1 for c in self.curators if c.is_low_cost(self.c_star))

    def required_low_cost(self) -> int:
        return math.ceil(self.low_cost_fraction * len(self.curators))

    def satisfies_low_cost(self) -> bool:
        return self.low_cost_count() >= self.required_low_cost()


# --- Prices and curator profit ---

def pooled_price(D, S, kappa):
    """kappa * min(D / S, 1)."""
    if S <= 0:
        raise ModelError(f"supply must be positive, got {S!r}")
    return kappa * min(ratio(D, S), 1)


def _checked_supplies(alphas: Sequence, profiles: Sequence[CuratorProfile]) -> list:
    if len(alphas) != len(profiles):
        raise RejectedInput(f"{len(alphas)} allocations for {len(profiles)} curators")
    if all(a == 0 for a in alphas):
        raise ModelError("all allocations are zero, the pro-rata split is undefined")
    for a in alphas:
        if not 0 < a <= 1:
            raise RejectedInput(f"allocation {a!r} outside (0, 1]")
    return [a * p.capacity for a, p in zip(alphas, profiles)]


def curator_profit(n: int, alphas: Sequence, R_t, profiles: Sequence[CuratorProfile]):
    """pi_n = (alpha_n S_n / sum_m alpha_m S_m) R_t - cost."""
    if R_t < 0:
        raise RejectedInput(f"protocol revenue must be >= 0, got {R_t!r}")
    supplies = _checked_supplies(alphas, profiles)
    total = sum(supplies, 0)
    return ratio(supplies[n], total) * R_t - profiles[n].cost_at(alphas[n])


def profit_gradient(n: int, alphas: Sequence, R_t, profiles: Sequence[CuratorProfile]):
    """d pi_n / d alpha_n = R_t S_n S_{-n} / S^2 - d cost / d alpha_n."""
    supplies = _checked_supplies(alphas, profiles)
    total = sum(supplies, 0)
    others = total - supplies[n]
    return R_t * profiles[n].capacity * others / (total * total) - profiles[n].cost_slope(alphas[n])


def pro_rata_game_step(profiles: Sequence[CuratorProfile], R_t, learner: StepSchedule,
                       t: int = 1, alpha_floor: float = 1e-3) -> tuple:
    """
    One simultaneous move: every curator ascends its own profit holding the
    others at their current allocations, projected onto [alpha_floor, 1].
    """
    alphas = [p.alpha for p in profiles]
    eta = learner.eta(t)
    updated = []
    for n, profile in enumerate(profiles):
        grad = profit_gradient(n, alphas, R_t, profiles)
        if not math.isfinite(grad):
            raise ModelError(f"non-finite profit gradient for curator {n}")
        updated.append(profile.with_alpha(project_interval(profile.alpha + eta * grad, alpha_floor, 1.0)))
    return tuple(updated)


# --- Supply policies ---

class StaticSupply:
    n_suppliers = 1

    def __init__(self, supply):
        if supply <= 0:
            raise ModelError(f"supply must be positive, got {supply!r}")
        self.supply = supply

    def begin_step(self, t, demand_prev):
        return self.supply, (1.0,)

    def end_step(self, t, event, state, booked):
        pass

    def shares(self, amount):
        return [amount]


class CuratorGame:
    def __init__(self, game: CuratorGameConfig):
        self.game = game
        self.profiles = tuple(game.curators)
        self.n_suppliers = len(self.profiles)
        self.rounds = 0
        self.pending_revenue = None
        self.floor_held = True

    def begin_step(self, t, demand_prev):
        if self.pending_revenue is not None:
            self.rounds += 1
            self.profiles = pro_rata_game_step(self.profiles, self.pending_revenue, self.game.learner,
                                               t=self.rounds, alpha_floor=self.game.alpha_floor)
        return total_supply(self.profiles), tuple(p.alpha for p in self.profiles)

    def end_step(self, t, event, state, booked):
        floor = self.game.revenue_floor * state.supply
        if booked < floor:
            self.floor_held = False
        self.pending_revenue = max(booked, floor)

    def shares(self, amount):
        return split_revenue(amount, [p.alpha * p.capacity for p in self.profiles])


class SupplyTracker:
    def __init__(self, game: CuratorGameConfig, supply_bounds: tuple):
        self.game = game
        self.profiles = tuple(game.curators)
        self.n_suppliers = len(self.profiles)
        self.capacity_total = game.capacity_total
        low, high = supply_bounds
        high = min(high, self.capacity_total)
        if low > high:
            raise RejectedInput(f"S_min {low} exceeds the usable supply {high}")
        self.bounds = (low, high)
        start = project_interval(self.capacity_total * game.tracking.initial_fraction, 0.0, high)
        self.headroom = ScalarOGD(x=float(start), schedule=game.tracking.schedule, domain=(0.0, float(high)))
        self.alphas = tuple(p.alpha for p in self.profiles)

    def begin_step(self, t, demand_prev):
        supply = project_interval(demand_prev + self.headroom.x, *self.bounds)
        alpha = supply / self.capacity_total
        self.alphas = (alpha,) * self.n_suppliers
        return supply, self.alphas

    def end_step(self, t, event, state, booked):
        if event is not None and event.is_arrival:
            target = float(event.size) * (1 + self.game.tracking.margin)
            self.headroom.track(target)

    def shares(self, amount):
        return split_revenue(amount, [a * p.capacity for a, p in zip(self.alphas, self.profiles)])


def make_policy(game: CuratorGameConfig, supply_bounds: Optional[tuple] = None):
    if game.supply_mode == "tracking":
        return SupplyTracker(game, supply_bounds or (1e-9, game.capacity_total))
    return CuratorGame(game)


# --- Trajectory ---

@dataclass
class RunTrajectory:
    model: str
    mode: str
    kappa: float
    horizon: int
    revenue: RevenueLedger
    states: list = field(default_factory=list)
    prices: list = field(default_factory=list)
    alphas: list = field(default_factory=list)
    accepted: list = field(default_factory=list)
    open_loans: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    floor_held: Optional[bool] = None

    @property
    def total_revenue(self):
        return self.revenue.total

    @property
    def supplies(self) -> list:
        return [s.supply for s in self.states]

    def to_frame(self) -> pd.DataFrame:
        columns = {
            "t": [s.t for s in self.states],
            "demand": [float(s.active_demand) for s in self.states],
            "supply": [float(s.supply) for s in self.states],
            "utilization": [float(s.utilization) for s in self.states],
            "price": [float(p) for p in self.prices],
            "revenue_step": [float(r) for r in self.revenue.per_step],
            "revenue_cum": [float(r) for r in self.revenue.cumulative],
            "rejected": [int(s.rejected) for s in self.states],
        }
        n = len(self.alphas[0]) if self.alphas else 0
        for i in range(n):
            columns[f"alpha_{i + 1}"] = [float(a[i]) for a in self.alphas]
        return pd.DataFrame(columns)

    def write_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.12g")


def _run_engine(stream, policy, kappa, mode: str, horizon: Optional[int], model: str) -> RunTrajectory:
    replay = MarketReplay(validate_stream(stream), horizon)
    trajectory = RunTrajectory(model=model, mode=mode, kappa=kappa, horizon=replay.horizon,
                               revenue=RevenueLedger(policy.n_suppliers))
    logger.info("running %s %s engine over %d steps", model, mode, replay.horizon)
    open_loans = []
    for t in range(1, replay.horizon + 1):
        supply, alphas = policy.begin_step(t, replay.state.active_demand)
        state, event, accepted = replay.advance(supply)
        price = pooled_price(state.quoted_demand, supply, kappa)
        if mode == FIXED:
            booked = price * event.duration * event.size if accepted else 0
        else:
            if accepted:
                open_loans.append([event, 0])
            for loan in open_loans:
                loan[1] = loan[1] + price
            closing = [loan for loan in open_loans if loan[0].t + loan[0].duration == t]
            open_loans = [loan for loan in open_loans if loan[0].t + loan[0].duration != t]
            booked = sum((loan[0].size * loan[1] for loan in closing), 0)
        trajectory.revenue.book(booked, policy.shares(booked))
        policy.end_step(t, event, state, booked)
        trajectory.states.append(state)
        trajectory.prices.append(price)
        trajectory.alphas.append(tuple(alphas))
        logger.debug("t=%d supply=%s demand=%s price=%s booked=%s", t, supply, state.active_demand, price, booked)

    if open_loans:
        late = sum((loan[0].size * loan[1] for loan in open_loans), 0)
        trajectory.revenue.add_to_last(late, policy.shares(late))
        message = f"{len(open_loans)} loans still open at horizon {replay.horizon}; booked elapsed steps only"
        logger.warning(message)
        trajectory.warnings.append(message)
    trajectory.accepted = list(replay.accepted)
    trajectory.open_loans = replay.open_loans()
    trajectory.warnings.extend(replay.warnings)
    if isinstance(policy, CuratorGame) and policy.game.revenue_floor > 0:
        trajectory.floor_held = policy.floor_held
    logger.info("%s %s run finished: revenue %s", model, mode, trajectory.total_revenue)
    return trajectory


def _low_cost_warning(game: CuratorGameConfig) -> Optional[str]:
    if game.supply_mode == "game" and not game.satisfies_low_cost():
        return (f"only {game.low_cost_count()} of {len(game.curators)} curators are low cost "
                f"(need {game.required_low_cost()} at c*={game.c_star})")
    return None


# --- Public engines ---

def run_pooled_fixed(stream, S, kappa, horizon: Optional[int] = None) -> RunTrajectory:
    return _run_engine(stream, StaticSupply(S), kappa, FIXED, horizon, "pooled")


def run_curated_fixed(stream, game: CuratorGameConfig, kappa, supply_bounds: Optional[tuple] = None,
                      horizon: Optional[int] = None) -> RunTrajectory:
    warning = _low_cost_warning(game)
    if warning:
        logger.warning(warning)
    trajectory = _run_engine(stream, make_policy(game, supply_bounds), kappa, FIXED, horizon, "curated")
    if warning:
        trajectory.warnings.insert(0, warning)
    return trajectory


def run_variable(stream, config: PricingConfig, game: Optional[CuratorGameConfig] = None,
                 supply=None, horizon: Optional[int] = None) -> RunTrajectory:
    """Variable-interest run; each loan pays l * sum of the posted prices from t to t + tau."""
    if config.model == "pooled":
        policy = StaticSupply(config.supply_bounds[1] if supply is None else supply)
        return _run_engine(stream, policy, config.kappa, VARIABLE, horizon, "pooled")
    if game is None:
        raise RejectedInput("a curated variable-rate run needs a curator game configuration")
    warning = _low_cost_warning(game)
    trajectory = _run_engine(stream, make_policy(game, config.supply_bounds), config.kappa, VARIABLE,
                             horizon, "curated")
    if warning:
        trajectory.warnings.insert(0, warning)
    return trajectory


def run_engine(stream, config: PricingConfig, game: Optional[CuratorGameConfig] = None,
               supply=None, horizon: Optional[int] = None) -> RunTrajectory:
    """Dispatches on config.mode and config.model."""
    if config.mode == VARIABLE:
        return run_variable(stream, config, game, supply, horizon)
    if config.model == "pooled":
        return run_pooled_fixed(stream, config.supply_bounds[1] if supply is None else supply,
                                config.kappa, horizon)
    if game is None:
        raise RejectedInput("a curated run needs a curator game configuration")
    return run_curated_fixed(stream, game, config.kappa, config.supply_bounds, horizon)


# --- Supply game without demand ---

@dataclass
class SupplyGameResult:
    ratios: np.ndarray
    alphas: np.ndarray
    floor: float
    limit: float
    gap: np.ndarray
    gap_bound: float
    burn_in: int


def simulate_supply_game(game: CuratorGameConfig, steps: int, burn_in: int = 100,
                         revenue: Optional[Sequence] = None) -> SupplyGameResult:
    """
    Runs the pro-rata game alone, feeding R(t) = max(revenue_t, floor * S(alpha, t)).

    Reports S(alpha, t)/S_total, its minimum after burn_in, the terminal value
    and the gap series (limit - ratio) * t / log t.
    """
    if burn_in < 2:
        raise RejectedInput(f"burn_in must be >= 2 so that log t > 0, got {burn_in}")
    if steps <= burn_in:
        raise RejectedInput(f"steps ({steps}) must exceed burn_in ({burn_in})")
    profiles = game.curators
    caps = np.array([float(p.capacity) for p in profiles])
    alphas = np.array([float(p.alpha) for p in profiles])
    capacity_total = caps.sum()

    ratios = np.empty(steps)
    history = np.empty((steps, len(profiles)))
    for t in range(1, steps + 1):
        supply = float(alphas @ caps)
        ratios[t - 1] = supply / capacity_total
        history[t - 1] = alphas
        booked = 0.0 if revenue is None else float(revenue[t - 1])
        R = max(booked, game.revenue_floor * supply)
        grad = np.array([profit_gradient(n, alphas, R, profiles) for n in range(len(profiles))], dtype=float)
        alphas = np.clip(alphas + game.learner.eta(t) * grad, game.alpha_floor, 1.0)

    limit = float(ratios[-1])
    t_index = np.arange(burn_in, steps + 1)
    gap = (limit - ratios[burn_in - 1:]) * t_index / np.log(t_index)
    return SupplyGameResult(ratios=ratios, alphas=history, floor=float(ratios[burn_in - 1:].min()),
                            limit=limit, gap=gap, gap_bound=float(np.abs(gap).max()), burn_in=burn_in)
