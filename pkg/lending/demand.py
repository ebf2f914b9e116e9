"""
Demand processes: the adversarial example streams, a seeded stochastic family
and empirical validators for the distributional assumptions.

Validators are diagnostics. They compare empirical tail frequencies with the
assumed bound on a log-spaced threshold grid and never prove anything.
"""
import logging
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from lending.core import LoanEvent, demand_path, validate_stream
from lending.errors import RejectedInput

logger = logging.getLogger(__name__)

DEFAULT_SLACK = 2.0
GRID_POINTS = 8
GRID_SPAN = 8.0
MIN_EVENTS = 100

DURATION_MODES = ("remaining", "horizon")


def _check_horizon(T, minimum=1):
    if isinstance(T, bool) or not isinstance(T, (int, np.integer)) or T < minimum:
        raise RejectedInput(f"horizon T must be an integer >= {minimum}, got {T!r}")
    return int(T)


def _as_fraction(x):
    return Fraction(str(x)) if isinstance(x, float) else Fraction(x)


# --- Adversarial streams ---

def gen_example1(T: int, exact: bool = False) -> tuple:
    """T loans of size 1/T, each lasting T steps; D(t) = t/T."""
    T = _check_horizon(T)
    size = Fraction(1, T) if exact else 1 / T
    return tuple(LoanEvent(t, size, T) for t in range(1, T + 1))


def gen_example2(T: int, duration_mode: str = "remaining", exact: bool = False) -> tuple:
    """
    Loans of size 1/T^2 at every t.

    duration_mode "remaining" gives tau = T - t (all loans end together at T);
    "horizon" gives tau = T, the variant under which the pooled revenue is
    T(T+1)/(2T^3) and the benchmark is 1.
    """
    T = _check_horizon(T)
    if duration_mode not in DURATION_MODES:
        raise RejectedInput(f"duration_mode must be one of {DURATION_MODES}, got {duration_mode!r}")
    size = Fraction(1, T * T) if exact else 1 / (T * T)
    if duration_mode == "remaining":
        return tuple(LoanEvent(t, size, T - t) for t in range(1, T + 1))
    return tuple(LoanEvent(t, size, T) for t in range(1, T + 1))


def gen_example3(T: int, delta, exact: bool = False) -> tuple:
    """One large loan 1 - delta followed by loans of size delta, all lasting T."""
    T = _check_horizon(T, minimum=2)
    if not 0 < delta < 1:
        raise RejectedInput(f"delta must lie in (0, 1), got {delta!r}")
    d = _as_fraction(delta) if exact else float(delta)
    events = [LoanEvent(1, 1 - d, T)]
    events.extend(LoanEvent(t, d, T) for t in range(2, T + 1))
    return tuple(events)


# --- Stochastic family ---

@dataclass(frozen=True)
class StochasticDemandParams:
    """
    Laplace-increment loan sizes and geometric durations.

    Sizes follow a random walk with Laplace(1/K) steps clipped to
    [size_mean - increment_scale, size_mean + increment_scale]; durations are
    geometric with mean duration_mean, truncated so that size * duration never
    exceeds reset_epsilon * supply_total.
    """
    increment_scale: float
    tail_rate: float
    duration_mean: float
    reset_epsilon: float
    min_demand: float
    horizon: int
    size_mean: float = 0.05
    supply_total: float = 1.0

    def __post_init__(self):
        for name in ("increment_scale", "tail_rate", "duration_mean", "reset_epsilon",
                     "min_demand", "size_mean", "supply_total"):
            value = getattr(self, name)
            if not value > 0:
                raise RejectedInput(f"{name} must be strictly positive, got {value!r}")
        _check_horizon(self.horizon)
        if self.duration_mean < 1:
            raise RejectedInput("duration_mean must be >= 1 (durations are geometric on 1, 2, ...)")
        low, high = self.size_bounds
        if low <= 0:
            raise RejectedInput(
                f"infeasible parameters: size_mean {self.size_mean} minus increment_scale "
                f"{self.increment_scale} leaves no positive loan sizes")
        if self.min_demand > low:
            raise RejectedInput(
                f"infeasible parameters: min_demand {self.min_demand} exceeds the smallest "
                f"loan size {low}, demand could fall below it")
        if high > self.reset_epsilon * self.supply_total:
            raise RejectedInput(
                f"infeasible parameters: a one-step loan of size {high} already exceeds "
                f"reset_epsilon * supply_total = {self.reset_epsilon * self.supply_total}; "
                "the reset tail bound cannot hold at this scale")

    @property
    def size_bounds(self) -> tuple:
        return self.size_mean - self.increment_scale, self.size_mean + self.increment_scale


def gen_stochastic(params: StochasticDemandParams, seed) -> tuple:
    """Deterministic in (params, seed); seed may be an int or a numpy SeedSequence."""
    rng = np.random.default_rng(seed)
    T = params.horizon
    low, high = params.size_bounds
    if math.isinf(params.tail_rate):
        increments = np.zeros(T)
    else:
        increments = rng.laplace(0.0, 1.0 / params.tail_rate, size=T)
    durations = rng.geometric(1.0 / params.duration_mean, size=T)

    cap = params.supply_total
    reset_budget = params.reset_epsilon * params.supply_total
    releases = np.zeros(T + 2)
    demand = 0.0
    size = params.size_mean
    events = []
    for t in range(1, T + 1):
        if t > 1:
            size = min(max(size + increments[t - 1], low), high)
        demand -= releases[t]
        tau = int(min(durations[t - 1], math.floor(reset_budget / size)))
        if demand + size > cap:
            tau = 0
        if tau > 0:
            demand += size
            if t + tau <= T:
                releases[t + tau] += size
        events.append(LoanEvent(t, float(size), tau))
    return tuple(events)


# --- Validators ---

@dataclass
class AssumptionReport:
    """Outcome of one assumption check; status is pass, fail or not_applicable."""
    assumption: str
    thresholds: list = field(default_factory=list)
    empirical: list = field(default_factory=list)
    bound: list = field(default_factory=list)
    passed: bool = True
    sample_size: int = 0
    status: str = "pass"
    detail: str = ""

    def to_dict(self) -> dict:
        data = asdict(self)
        data["pass"] = data.pop("passed")
        return data

    @classmethod
    def not_applicable(cls, assumption: str, detail: str) -> "AssumptionReport":
        return cls(assumption=assumption, passed=True, status="not_applicable", detail=detail)

    @classmethod
    def constructive(cls, assumption: str, ok: bool, detail: str, *,
                     thresholds=(), empirical=(), bound=()) -> "AssumptionReport":
        return cls(assumption=assumption, thresholds=list(thresholds), empirical=list(empirical),
                   bound=list(bound), passed=bool(ok), status="pass" if ok else "fail",
                   detail=detail)


def _tail_report(assumption, thresholds, empirical, bound, slack, n, detail="") -> AssumptionReport:
    ok = all(e <= b * slack for e, b in zip(empirical, bound))
    return AssumptionReport(
        assumption=assumption,
        thresholds=[float(x) for x in thresholds],
        empirical=[float(x) for x in empirical],
        bound=[float(x) for x in bound],
        passed=ok,
        sample_size=int(n),
        status="pass" if ok else "fail",
        detail=detail or f"slack {slack}",
    )


def _arrivals(stream) -> list:
    return [e for e in validate_stream(stream) if e.is_arrival]


def check_bounded_increment(stream, delta, K, slack: float = DEFAULT_SLACK,
                            grid_points: int = GRID_POINTS, grid_span: float = GRID_SPAN) -> AssumptionReport:
    """P(|l_s - l_{s-1}| > d) <= exp(-K d) for d on a grid starting at delta."""
    arrivals = _arrivals(stream)
    if len(arrivals) < MIN_EVENTS:
        raise RejectedInput(f"bounded-increment check needs >= {MIN_EVENTS} arrivals, got {len(arrivals)}")
    sizes = np.array([float(e.size) for e in arrivals])
    increments = np.abs(np.diff(sizes))
    thresholds = delta * np.geomspace(1.0, grid_span, grid_points)
    empirical = [np.mean(increments > x) for x in thresholds]
    bound = np.exp(-K * thresholds) if not math.isinf(K) else np.zeros_like(thresholds)
    return _tail_report("bounded_increment", thresholds, empirical, bound, slack, increments.size)


def check_reset_condition(stream, S_total, epsilon, rate: float = 1.0, slack: float = DEFAULT_SLACK,
                          grid_points: int = GRID_POINTS, grid_span: float = GRID_SPAN) -> AssumptionReport:
    """
    P(l_s tau_s > e S_total) <= exp(-rate e / epsilon) for e on a grid starting at epsilon.

    The bound is scaled by epsilon so that a smaller epsilon is a stricter claim.
    """
    arrivals = _arrivals(stream)
    if len(arrivals) < MIN_EVENTS:
        raise RejectedInput(f"reset-condition check needs >= {MIN_EVENTS} arrivals, got {len(arrivals)}")
    exposure = np.array([float(e.size) * e.duration for e in arrivals])
    thresholds = epsilon * np.geomspace(1.0, grid_span, grid_points)
    empirical = [np.mean(exposure > x * S_total) for x in thresholds]
    bound = np.exp(-rate * thresholds / epsilon)
    return _tail_report("reset_condition", thresholds, empirical, bound, slack, exposure.size)


def check_variable_rate_concentration(prices: Sequence, durations: Sequence, sigma_p: Optional[float] = None,
                                      *, starts: Optional[Sequence] = None, rate: float = 1.0,
                                      slack: float = DEFAULT_SLACK, eps_low: float = 0.5,
                                      eps_high: float = 8.0, grid_points: int = GRID_POINTS) -> AssumptionReport:
    """
    Concentration of the variable-rate charge around the fixed quote.

    For a loan opened at t with duration tau >= 1 (fully inside the price
    series) the statistic is |sum_{s=t}^{t+tau} (p_s - p_t)| / (tau + 1), the
    per-accrual-step deviation from the quote, compared with
    (1 + e) sigma_p sqrt(tau). sigma_p is a standard deviation; when absent it
    is the standard deviation of the price increments.
    """
    prices = np.asarray(prices, dtype=float)
    durations = np.asarray(durations, dtype=int)
    starts = np.arange(1, durations.size + 1) if starts is None else np.asarray(starts, dtype=int)
    if starts.size != durations.size:
        raise RejectedInput("starts and durations must have the same length")
    if sigma_p is None:
        sigma_p = float(np.std(np.diff(prices))) if prices.size > 1 else 0.0
    thresholds = np.geomspace(eps_low, eps_high, grid_points)
    bound = np.exp(-rate * thresholds)

    cumulative = np.concatenate([[0.0], np.cumsum(prices)])
    stats, scales = [], []
    for t, tau in zip(starts, durations):
        if tau < 1 or t + tau > prices.size:
            continue
        window = cumulative[t + tau] - cumulative[t - 1]
        stats.append(abs(window - (tau + 1) * prices[t - 1]) / (tau + 1))
        scales.append(math.sqrt(tau))
    if sigma_p == 0 or not stats:
        return AssumptionReport(assumption="variable_rate_concentration",
                                thresholds=[float(x) for x in thresholds],
                                empirical=[0.0] * grid_points, bound=[float(b) for b in bound],
                                passed=True, sample_size=len(stats), status="pass",
                                detail="degenerate price path (no dispersion or no complete loans)")
    stats, scales = np.array(stats), np.array(scales)
    empirical = [np.mean(stats > (1 + e) * sigma_p * scales) for e in thresholds]
    return _tail_report("variable_rate_concentration", thresholds, empirical, bound, slack, stats.size,
                        detail=f"slack {slack}, sigma_p {sigma_p:.6g}")


def check_min_demand(stream, D_min, warmup: int = 1, horizon: Optional[int] = None) -> AssumptionReport:
    """Uncapacitated D(t) >= D_min for t >= warmup."""
    path = demand_path(stream, horizon)[warmup - 1:]
    observed = float(path.min()) if path.size else 0.0
    return AssumptionReport.constructive(
        "min_demand", observed >= D_min, f"min D(t) over t >= {warmup} is {observed:.6g}",
        thresholds=[D_min], empirical=[observed], bound=[D_min])


# --- Multi-asset streams ---

@dataclass(frozen=True)
class MultiLoanEvent:
    """Loan of borrowable asset `asset` (0-based) backed by per-collateral sizes."""
    t: int
    asset: int
    sizes: tuple
    duration: int

    def __post_init__(self):
        if isinstance(self.t, bool) or not isinstance(self.t, (int, np.integer)) or self.t < 1:
            raise RejectedInput(f"time index must be an integer >= 1, got {self.t!r}")
        if not isinstance(self.asset, (int, np.integer)) or self.asset < 0:
            raise RejectedInput(f"asset index must be a non-negative integer, got {self.asset!r}")
        sizes = tuple(float(s) for s in self.sizes)
        if not sizes or any(s < 0 or not math.isfinite(s) for s in sizes) or not any(sizes):
            raise RejectedInput(f"loan at t={self.t}: sizes must be non-negative, finite and not all zero")
        if isinstance(self.duration, bool) or not isinstance(self.duration, (int, np.integer)) or self.duration < 0:
            raise RejectedInput(f"duration at t={self.t} must be an integer >= 0")
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "t", int(self.t))
        object.__setattr__(self, "asset", int(self.asset))
        object.__setattr__(self, "duration", int(self.duration))


def gen_multi_cyclic(B: int, C: int, T: int, pattern: Sequence, duration: int) -> tuple:
    """Repeats pattern = [(asset, sizes), ...] with a fixed duration."""
    T = _check_horizon(T)
    if not pattern:
        raise RejectedInput("cyclic pattern must not be empty")
    for asset, sizes in pattern:
        if asset >= B or len(sizes) != C:
            raise RejectedInput(f"pattern entry ({asset}, {sizes}) does not fit B={B}, C={C}")
    return tuple(MultiLoanEvent(t, pattern[(t - 1) % len(pattern)][0], pattern[(t - 1) % len(pattern)][1], duration)
                 for t in range(1, T + 1))


def gen_multi_stochastic(B: int, C: int, T: int, size_mean: float, duration_mean: float, seed) -> tuple:
    """Uniform asset, exponential per-collateral sizes, geometric durations."""
    T = _check_horizon(T)
    rng = np.random.default_rng(seed)
    assets = rng.integers(0, B, size=T)
    sizes = rng.exponential(size_mean, size=(T, C)) + 1e-12
    durations = rng.geometric(1.0 / duration_mean, size=T)
    return tuple(MultiLoanEvent(t, int(assets[t - 1]), tuple(sizes[t - 1]), int(durations[t - 1]))
                 for t in range(1, T + 1))
