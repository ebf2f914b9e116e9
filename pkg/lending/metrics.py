"""
Hindsight benchmarks, regret and competitive-ratio bookkeeping, and
regret-scaling fits.
"""
import heapq
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar, nnls

from lending.core import CAPACITY_RTOL, MarketReplay, demand_path, ratio, validate_stream
from lending.errors import RejectedInput
from lending.pricing import FIXED, RunTrajectory

logger = logging.getLogger(__name__)

BRUTEFORCE_MAX_T = 8
BRUTEFORCE_MAX_LEVELS = 21
SCALING_LABELS = ("1", "log T", "(log T)^2", "(log T)^3", "T")


# --- Benchmarks ---

def hindsight_fixed_optimal(stream, kappa, S_total=None):
    """
    Sum of kappa * tau * l over admissible arrivals.

    The benchmark supply tracks demand exactly, so every admitted loan pays the
    cap kappa. S_total=None admits every arrival; otherwise arrivals are
    admitted in order under total capacity S_total.
    """
    events = validate_stream(stream)
    if S_total is None:
        return sum((kappa * e.duration * e.size for e in events if e.is_arrival), 0)
    replay = MarketReplay(events)
    for _ in range(replay.horizon):
        replay.advance(S_total)
    return sum((kappa * e.duration * e.size for e in replay.accepted), 0)


def _accrual_steps(event, horizon: int) -> int:
    return min(event.t + event.duration, horizon) - event.t + 1


def hindsight_variable_optimal(stream, kappa, horizon: Optional[int] = None, S_total=None):
    """
    Every accrual step priced at the cap: kappa * l * (steps accrued within the horizon).

    S_total admits arrivals in order under total capacity, as in hindsight_fixed_optimal.
    """
    events = validate_stream(stream)
    horizon = (events[-1].t if events else 0) if horizon is None else horizon
    if S_total is None:
        admitted = [e for e in events if e.is_arrival]
    else:
        replay = MarketReplay(events, horizon)
        for _ in range(replay.horizon):
            replay.advance(S_total)
        admitted = replay.accepted
    return sum((kappa * e.size * _accrual_steps(e, horizon) for e in admitted), 0)


def per_step_maxima(stream, kappa, horizon: Optional[int] = None, mode: str = FIXED) -> list:
    """Best revenue attainable at each step in isolation."""
    events = validate_stream(stream)
    horizon = (events[-1].t if events else 0) if horizon is None else horizon
    maxima = [0] * horizon
    for e in events:
        if e.is_arrival and e.t <= horizon:
            if mode == FIXED:
                maxima[e.t - 1] = kappa * e.duration * e.size
            else:
                maxima[e.t - 1] = kappa * e.size * _accrual_steps(e, horizon)
    return maxima


def static_supply_revenue(stream, S: float, kappa: float, horizon: Optional[int] = None,
                          mode: str = FIXED) -> float:
    """Pooled revenue at constant supply S; a lean replay used inside searches."""
    events = validate_stream(stream)
    horizon = (events[-1].t if events else 0) if horizon is None else horizon
    by_t = {e.t: e for e in events if e.is_arrival}
    releases = []
    demand = 0.0
    revenue = 0.0
    open_loans = []
    for t in range(1, horizon + 1):
        while releases and releases[0][0] == t:
            demand -= heapq.heappop(releases)[1]
        demand = max(demand, 0.0)
        quoted = demand
        e = by_t.get(t)
        if e is not None:
            size = float(e.size)
            if demand + size <= S * (1 + CAPACITY_RTOL):
                quoted = demand + size
                if e.duration > 0:
                    demand = quoted
                    heapq.heappush(releases, (t + e.duration, size))
                if mode == FIXED:
                    revenue += kappa * min(quoted / S, 1.0) * e.duration * size
                else:
                    open_loans.append([t + e.duration, size, 0.0])
        if mode != FIXED:
            price = kappa * min(quoted / S, 1.0)
            still_open = []
            for loan in open_loans:
                loan[2] += price
                if loan[0] == t:
                    revenue += loan[1] * loan[2]
                else:
                    still_open.append(loan)
            open_loans = still_open
    if mode != FIXED:
        revenue += sum(loan[1] * loan[2] for loan in open_loans)
    return revenue


@dataclass
class StaticBenchmark:
    supply: float
    revenue: float


def hindsight_static_supply(stream, kappa: float, supply_bounds: tuple, horizon: Optional[int] = None,
                            mode: str = FIXED, grid: int = 16) -> StaticBenchmark:
    """Best single supply level in hindsight: log grid over the bounds, then a bounded scalar search."""
    low, high = supply_bounds
    levels = np.unique(np.concatenate([np.geomspace(low, high, grid), [high]]))
    values = [static_supply_revenue(stream, float(S), kappa, horizon, mode) for S in levels]
    best = int(np.argmax(values))
    best_S, best_value = float(levels[best]), float(values[best])
    left = float(levels[max(best - 1, 0)])
    right = float(levels[min(best + 1, len(levels) - 1)])
    if right > left:
        result = minimize_scalar(lambda S: -static_supply_revenue(stream, S, kappa, horizon, mode),
                                 bounds=(left, right), method="bounded", options={"maxiter": 12, "xatol": 1e-6 * right})
        if -result.fun > best_value:
            best_S, best_value = float(result.x), float(-result.fun)
    return StaticBenchmark(supply=best_S, revenue=best_value)


@dataclass
class BruteForceResult:
    value: float
    supply_path: list
    accepted: list


def hindsight_bruteforce(stream, kappa, supply_grid: Optional[Sequence[float]] = None,
                         horizon: Optional[int] = None, S_max: float = 1.0) -> BruteForceResult:
    """
    Exhaustive search over supply paths for tiny instances.

    For every accept/reject pattern the best supply at an accepted arrival is the
    smallest level that admits it; a rejection needs some level below D + l.
    Steps without an arrival take the largest level.

    supply_grid=None searches the reachable levels: an accepted arrival is
    priced at S = D + l (capped at S_max), so every level the fixed-rate
    optimum can use is a candidate. An explicit grid restricts S to its levels.
    """
    events = validate_stream(stream)
    horizon = (events[-1].t if events else 0) if horizon is None else horizon
    if horizon > BRUTEFORCE_MAX_T:
        raise RejectedInput(f"brute-force budget exceeded: T <= {BRUTEFORCE_MAX_T} (got T={horizon})")
    if supply_grid is None:
        if not S_max > 0:
            raise RejectedInput(f"S_max must be positive, got {S_max!r}")
        grid = None
        top = float(S_max)
    else:
        grid = sorted(float(s) for s in supply_grid)
        if len(grid) > BRUTEFORCE_MAX_LEVELS:
            raise RejectedInput(f"brute-force budget exceeded: at most {BRUTEFORCE_MAX_LEVELS} supply "
                                f"levels (got {len(grid)})")
        if not grid or grid[0] <= 0:
            raise RejectedInput("supply grid must contain positive levels")
        top = grid[-1]
    by_t = {e.t: e for e in events if e.is_arrival}

    def admitting_level(candidate):
        if grid is None:
            return min(candidate, top) if candidate <= top * (1 + CAPACITY_RTOL) else None
        return next((S for S in grid if candidate <= S * (1 + CAPACITY_RTOL)), None)

    def refusing_level(demand, candidate):
        if grid is None:
            return demand if 0 < demand and candidate > demand * (1 + CAPACITY_RTOL) else candidate / 2
        return next((S for S in grid if candidate > S * (1 + CAPACITY_RTOL)), None)

    best = BruteForceResult(value=-math.inf, supply_path=[], accepted=[])

    def search(t, demand, releases, value, path, accepted):
        nonlocal best
        if t > horizon:
            if value > best.value + 1e-15:
                best = BruteForceResult(value=value, supply_path=list(path), accepted=list(accepted))
            return
        demand = max(demand - releases.get(t, 0.0), 0.0)
        e = by_t.get(t)
        if e is None:
            search(t + 1, demand, releases, value, path + [top], accepted)
            return
        size = float(e.size)
        candidate = demand + size
        S = admitting_level(candidate)
        if S is not None:
            gain = kappa * min(candidate / S, 1.0) * e.duration * size
            after = dict(releases)
            if e.duration > 0:
                after[t + e.duration] = after.get(t + e.duration, 0.0) + size
            search(t + 1, candidate if e.duration > 0 else demand, after, value + gain,
                   path + [S], accepted + [t])
        S = refusing_level(demand, candidate)
        if S is not None:
            search(t + 1, demand, releases, value, path + [S], accepted)

    search(1, 0.0, {}, 0.0, [], [])
    if best.value == -math.inf:
        best = BruteForceResult(value=0.0, supply_path=[], accepted=[])
    return best


# --- Regret bookkeeping ---

def _total(series):
    return sum(series, 0)


def regret(alg_series: Sequence, R_star):
    """R_star - cumulative algorithm revenue."""
    return R_star - _total(alg_series)


@dataclass
class DynamicRegret:
    value: float
    residual: Optional[float] = None


def dynamic_regret(step_max: Sequence, alg_series: Sequence, R_star=None) -> DynamicRegret:
    """Sum of per-step maxima minus realised revenue; residual = DRegret - Regret when R_star is given."""
    if len(step_max) != len(alg_series):
        raise RejectedInput(f"series lengths differ ({len(step_max)} vs {len(alg_series)})")
    value = _total(step_max) - _total(alg_series)
    residual = None if R_star is None else value - regret(alg_series, R_star)
    return DynamicRegret(value=value, residual=residual)


def path_length(series) -> float:
    """Sum over t >= 2 of ||x*_t - x*_{t-1}||_2."""
    points = np.asarray([np.asarray(x, dtype=float).ravel() for x in series]) if len(series) else np.zeros((0, 1))
    if len(points) < 2:
        return 0.0
    return float(np.linalg.norm(np.diff(points, axis=0), axis=1).sum())


def competitive_ratio(R_alg, R_star):
    """R_alg / R_star clamped below at 0; 0/0 is 1."""
    if R_star == 0:
        if R_alg == 0:
            return 1
        raise RejectedInput("competitive ratio undefined: zero benchmark with positive revenue")
    if R_star < 0:
        raise RejectedInput(f"benchmark revenue must be >= 0, got {R_star!r}")
    return max(ratio(R_alg, R_star), 0)


@dataclass
class RegretReport:
    R_alg: float
    R_star: float
    regret: float
    dynamic_regret: float
    decomposition_residual: float
    path_length: float
    competitive_ratio: float
    cr_per_step_max: float
    benchmark: str
    horizon: int
    per_step: dict = field(default_factory=dict)

    def to_dict(self, with_series: bool = False) -> dict:
        data = asdict(self)
        for key, value in list(data.items()):
            if key != "per_step" and not isinstance(value, (str, int)):
                data[key] = float(value)
        if with_series:
            data["per_step"] = {k: [float(v) for v in vs] for k, vs in self.per_step.items()}
        else:
            data.pop("per_step")
        return data


def build_report(trajectory: RunTrajectory, stream, R_star, benchmark: str,
                 kappa=None, S_total=None) -> RegretReport:
    """Regret, dynamic regret, path length and both competitive ratios for a single-asset run."""
    kappa = trajectory.kappa if kappa is None else kappa
    horizon = trajectory.horizon
    alg = trajectory.revenue.per_step
    maxima = per_step_maxima(stream, kappa, horizon, trajectory.mode)
    dyn = dynamic_regret(maxima, alg, R_star)
    optimizer = demand_path(stream, horizon)
    if S_total is not None:
        optimizer = np.minimum(optimizer, float(S_total))
    R_alg = trajectory.total_revenue
    return RegretReport(
        R_alg=R_alg,
        R_star=R_star,
        regret=regret(alg, R_star),
        dynamic_regret=dyn.value,
        decomposition_residual=dyn.residual,
        path_length=path_length(optimizer),
        competitive_ratio=competitive_ratio(R_alg, R_star),
        cr_per_step_max=competitive_ratio(R_alg, _total(maxima)),
        benchmark=benchmark,
        horizon=horizon,
        per_step={"revenue": list(alg), "step_max": list(maxima)},
    )


# --- Scaling fits ---

POLYLOG_START = 1024
POLYLOG_SLACK = 0.25


def series_sign(values) -> str:
    """"positive", "negative", "zero" or "mixed" for a series of regrets."""
    y = np.asarray(values, dtype=float)
    if np.all(y == 0):
        return "zero"
    if np.all(y >= 0):
        return "positive"
    if np.all(y <= 0):
        return "negative"
    return "mixed"


@dataclass
class ScalingFit:
    T_grid: list
    regrets: list
    coefficients: dict
    dominant: str
    residual: float
    sign: str = "positive"

    def to_dict(self) -> dict:
        return {"T_grid": [int(t) for t in self.T_grid], "regrets": [float(r) for r in self.regrets],
                "coefficients": {k: float(v) for k, v in self.coefficients.items()},
                "dominant": self.dominant, "sign": self.sign, "residual": float(self.residual)}


def scaling_basis(T) -> np.ndarray:
    logs = np.log(np.asarray(T, dtype=float))
    return np.column_stack([np.ones_like(logs), logs, logs ** 2, logs ** 3, np.asarray(T, dtype=float)])


def fit_scaling(T_grid: Sequence, regrets: Sequence) -> ScalingFit:
    """
    Non-negative least squares of |regret| on {1, log T, (log T)^2, (log T)^3, T}.

    Columns are normalised before solving; the dominant term is the one with
    the largest contribution at the largest T, or "none" when every
    coefficient is zero. The fit describes magnitudes: a regret that falls
    linearly below zero fits as "T" with sign "negative".
    """
    T = np.asarray(T_grid, dtype=float)
    y = np.asarray(regrets, dtype=float)
    if T.size != y.size:
        raise RejectedInput("T grid and regret values differ in length")
    if T.size < 5 or np.any(np.diff(T) <= 0) or T[0] <= 1 or T[-1] / T[0] < 100:
        raise RejectedInput("scaling grid must be strictly increasing, have >= 5 points above 1 "
                            "and span at least two decades")
    if not np.all(np.isfinite(y)):
        raise RejectedInput("regret values must be finite")
    sign = series_sign(y)
    if sign == "mixed":
        logger.warning("regret changes sign across the grid; fitting magnitudes")
    basis = scaling_basis(T)
    norms = np.linalg.norm(basis, axis=0)
    solution, residual = nnls(basis / norms, np.abs(y))
    coefficients = solution / norms
    contributions = coefficients * scaling_basis([T[-1]])[0]
    dominant = SCALING_LABELS[int(np.argmax(contributions))] if np.max(contributions) > 0 else "none"
    return ScalingFit(T_grid=list(T_grid), regrets=list(y), coefficients=dict(zip(SCALING_LABELS, coefficients)),
                      dominant=dominant, residual=float(residual), sign=sign)


@dataclass
class PolylogCheck:
    power: int
    start: int
    slack: float
    T_grid: list
    ratios: list
    passed: bool

    def to_dict(self) -> dict:
        return {"power": self.power, "start": self.start, "slack": self.slack,
                "T_grid": [int(t) for t in self.T_grid], "ratios": [float(r) for r in self.ratios],
                "pass": bool(self.passed)}


def check_polylog_growth(T_grid: Sequence, values: Sequence, power: int = 2, start: int = POLYLOG_START,
                         slack: float = POLYLOG_SLACK) -> PolylogCheck:
    """
    Upper-bound check of value(T) = O((log T)^power) on a grid.

    The ratios value / (log T)^power for T >= start must not increase by more
    than a factor (1 + slack) from one grid point to the next. Ratios are
    clipped at zero: values at or below zero satisfy the bound.
    """
    T = np.asarray(T_grid, dtype=float)
    y = np.asarray(values, dtype=float)
    if T.size != y.size:
        raise RejectedInput("T grid and values differ in length")
    if not slack >= 0:
        raise RejectedInput(f"slack must be >= 0, got {slack!r}")
    keep = T >= max(start, 2)
    if np.count_nonzero(keep) < 2:
        raise RejectedInput(f"need at least 2 grid points with T >= {start}")
    T, y = T[keep], y[keep]
    ratios = y / np.log(T) ** power
    clipped = np.maximum(ratios, 0.0)
    passed = bool(np.all(clipped[1:] <= (1 + slack) * clipped[:-1]))
    return PolylogCheck(power=power, start=start, slack=slack, T_grid=T.tolist(), ratios=ratios.tolist(),
                        passed=passed)
