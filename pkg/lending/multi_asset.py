"""
Several borrowable assets lent against several collateral markets.

Each curator holds an allocation matrix A^n (rows = borrowable assets, columns =
collateral markets, every row on the simplex with minimum mass a). Supplies are
S_{b,c} = sum_n S^n_b A^n_{b,c}, utilizations U = min(D/S, 1) and the protocol
earns sum kappa_{b,c} U_{b,c} per step. There is no capacity rule here; the
cap on utilization plays that role.
"""
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from scipy.optimize import minimize

from lending.demand import MultiLoanEvent
from lending.errors import ModelError, RejectedInput
from lending.learners import (
    CurvatureEstimate,
    StepSchedule,
    estimate_curvature,
    hazan_bound,
    md_simplex_step,
    project_capped_simplex,
)
from lending.metrics import path_length

logger = logging.getLogger(__name__)

ORDERS = ("allocate_first", "loan_first")
DEFAULT_MAX_POINTS = 50_000


@dataclass(frozen=True, eq=False)
class AllocationMatrix:
    entries: np.ndarray
    min_mass: float

    def __post_init__(self):
        entries = np.array(self.entries, dtype=float)
        if entries.ndim != 2:
            raise RejectedInput(f"allocation matrix must be 2-d, got shape {entries.shape}")
        B, C = entries.shape
        if not self.min_mass > 0 or self.min_mass * C >= 1:
            raise RejectedInput(f"minimum mass a={self.min_mass} infeasible for C={C} (need 0 < aC < 1)")
        if np.any(np.abs(entries.sum(axis=1) - 1.0) > 1e-9):
            raise RejectedInput("every allocation row must sum to 1")
        if np.any(entries < self.min_mass - 1e-12) or np.any(entries > 1 + 1e-12):
            raise RejectedInput(f"allocation entries must lie in [{self.min_mass}, 1]")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @classmethod
    def uniform(cls, B: int, C: int, min_mass: float) -> "AllocationMatrix":
        return cls(np.full((B, C), 1.0 / C), min_mass)

    @property
    def shape(self) -> tuple:
        return self.entries.shape


@dataclass(frozen=True, eq=False)
class MultiMarketState:
    t: int
    demand: np.ndarray
    supply: np.ndarray
    utilization: np.ndarray
    kappas: np.ndarray


def _kappa_grid(kappas, B: int, C: int) -> np.ndarray:
    grid = np.asarray(kappas, dtype=float)
    if grid.shape != (B, C):
        raise RejectedInput(f"elasticity grid must have shape ({B}, {C}), got {grid.shape}")
    if np.any(grid < 0):
        raise RejectedInput("elasticities must be non-negative")
    return grid


def md_supply(capacities, matrices: Sequence[AllocationMatrix]) -> np.ndarray:
    """S_{b,c} = sum_n S^n_b A^n_{b,c}; capacities has shape (N, B)."""
    capacities = np.asarray(capacities, dtype=float)
    if capacities.ndim != 2 or capacities.shape[0] != len(matrices):
        raise RejectedInput("capacities must have one row per curator matrix")
    if np.any(capacities <= 0):
        raise RejectedInput("curator capacities must be positive")
    grid = np.zeros(matrices[0].shape)
    for caps, matrix in zip(capacities, matrices):
        if matrix.shape != grid.shape or caps.size != grid.shape[0]:
            raise RejectedInput("allocation matrices and capacities disagree on shape")
        grid += caps[:, None] * matrix.entries
    if np.any(grid <= 0):
        raise ModelError("supply grid has a non-positive entry")
    return grid


def aggregate_matrix(capacities, matrices: Sequence[AllocationMatrix]) -> np.ndarray:
    """Capacity-weighted aggregate allocation; every row sums to 1."""
    capacities = np.asarray(capacities, dtype=float)
    return md_supply(capacities, matrices) / capacities.sum(axis=0)[:, None]


def md_demand_path(stream: Sequence[MultiLoanEvent], B: int, C: int, horizon: Optional[int] = None) -> np.ndarray:
    """D_{b,c}(t) for t = 1..horizon as an array of shape (T, B, C)."""
    events = tuple(stream)
    for previous, current in zip(events, events[1:]):
        if current.t <= previous.t:
            raise RejectedInput(f"multi-asset stream is not strictly time ordered at t={current.t}")
    horizon = (events[-1].t if events else 0) if horizon is None else horizon
    delta = np.zeros((horizon + 2, B, C))
    for e in events:
        if e.asset >= B or len(e.sizes) != C:
            raise RejectedInput(f"loan at t={e.t} does not fit B={B}, C={C}")
        if e.duration == 0 or e.t > horizon:
            continue
        delta[e.t, e.asset] += e.sizes
        delta[min(e.t + e.duration, horizon + 1), e.asset] -= e.sizes
    path = np.cumsum(delta, axis=0)[1:horizon + 1]
    return np.maximum(path, 0.0)


def _utilization(D: np.ndarray, S: np.ndarray) -> np.ndarray:
    return np.minimum(D / S, 1.0)


def md_revenue_static(A, stream, kappas, T: int, capacities=None) -> float:
    """sum over t, b, c of kappa_{b,c} U_{b,c}(A, t) with A held fixed."""
    entries = A.entries if isinstance(A, AllocationMatrix) else np.asarray(A, dtype=float)
    B, C = entries.shape
    kappa = _kappa_grid(kappas, B, C)
    caps = np.ones(B) if capacities is None else np.asarray(capacities, dtype=float)
    supply = caps[:, None] * entries
    demand = md_demand_path(stream, B, C, T)
    return float((kappa * _utilization(demand, supply)).sum())


# --- Static optimum ---

def _lattice(C: int, a: float, h: float) -> np.ndarray:
    free = 1.0 - C * a
    m = max(1, int(round(free / h)))
    points = []
    for bars in itertools.combinations(range(m + C - 1), C - 1):
        parts = np.diff(np.concatenate([[-1], bars, [m + C - 1]])) - 1
        points.append(a + parts * free / m)
    return np.array(points)


def lattice_size(C: int, a: float, h: float) -> int:
    m = max(1, int(round((1.0 - C * a) / h)))
    return math.comb(m + C - 1, C - 1)


def _row_step_revenue(D_row: np.ndarray, cap: float, kappa_row: np.ndarray, points: np.ndarray,
                      chunk: int = 64) -> np.ndarray:
    """Per-step revenue of every lattice point for one asset row; shape (T, P)."""
    out = np.empty((D_row.shape[0], points.shape[0]))
    for start in range(0, points.shape[0], chunk):
        block = points[start:start + chunk]
        U = _utilization(D_row[:, None, :], cap * block[None, :, :])
        out[:, start:start + chunk] = (U * kappa_row).sum(axis=2)
    return out


@dataclass
class StaticOptimum:
    matrix: np.ndarray
    revenue: float
    grid_matrix: np.ndarray
    grid_revenue: float
    step_revenue: np.ndarray
    step_max: np.ndarray
    step_argmax: np.ndarray


def md_optimal_static(stream, kappas, B: int, C: int, h: float = 0.05, a: float = 0.05,
                      capacities=None, horizon: Optional[int] = None,
                      max_points: int = DEFAULT_MAX_POINTS, refine: bool = True) -> StaticOptimum:
    """
    Best static allocation in hindsight.

    Rows are separable, so each row is searched on its own lattice
    {a + k (1 - Ca)/m} and then polished by SLSQP from the best lattice point;
    the better of the two is kept.
    """
    if not a > 0 or a * C >= 1:
        raise RejectedInput(f"minimum mass a={a} infeasible for C={C}")
    points_needed = B * lattice_size(C, a, h)
    if points_needed > max_points:
        raise RejectedInput(f"static optimum needs {points_needed} lattice evaluations per step "
                            f"(budget {max_points}); use a learning run instead of the grid search")
    kappa = _kappa_grid(kappas, B, C)
    caps = np.ones(B) if capacities is None else np.asarray(capacities, dtype=float)
    demand = md_demand_path(stream, B, C, horizon)
    T = demand.shape[0]
    points = _lattice(C, a, h)

    best = np.empty((B, C))
    grid_best = np.empty((B, C))
    grid_total = 0.0
    step_revenue = np.zeros(T)
    step_max = np.zeros(T)
    step_argmax = np.empty((T, B, C))
    for b in range(B):
        per_step = _row_step_revenue(demand[:, b, :], caps[b], kappa[b], points)
        totals = per_step.sum(axis=0)
        k = int(np.argmax(totals))
        grid_best[b] = points[k]
        grid_total += totals[k]
        row, row_total = points[k], totals[k]
        if refine and C > 1:
            objective = lambda x, b=b: -float((kappa[b] * _utilization(demand[:, b, :], caps[b] * x)).sum())
            result = minimize(objective, row, method="SLSQP", bounds=[(a, 1.0)] * C,
                              constraints=[{"type": "eq", "fun": lambda x: x.sum() - 1.0}],
                              options={"maxiter": 50})
            if result.success:
                candidate = project_capped_simplex(np.clip(result.x, a, None), a)
                value = -objective(candidate)
                if value > row_total:
                    row, row_total = candidate, value
        best[b] = row
        row_steps = (kappa[b] * _utilization(demand[:, b, :], caps[b] * row)).sum(axis=1)
        step_revenue += row_steps
        lattice_max = per_step.max(axis=1)
        use_opt = row_steps > lattice_max
        step_max += np.where(use_opt, row_steps, lattice_max)
        step_argmax[:, b, :] = np.where(use_opt[:, None], row, points[per_step.argmax(axis=1)])
    logger.info("static optimum over %d steps: grid %.6g, refined %.6g", T, grid_total, step_revenue.sum())
    return StaticOptimum(matrix=best, revenue=float(step_revenue.sum()), grid_matrix=grid_best,
                         grid_revenue=float(grid_total), step_revenue=step_revenue, step_max=step_max,
                         step_argmax=step_argmax)


# --- Losses and gradients ---

def monopolist_gradient(kappa_row, D_row, cap: float, row) -> np.ndarray:
    """d/dA of -sum_c kappa_c min(D_c / (S_b A_c), 1); zero on saturated pairs."""
    kappa_row, D_row, row = (np.asarray(x, dtype=float) for x in (kappa_row, D_row, row))
    return np.where(D_row < cap * row, kappa_row * D_row / (cap * row * row), 0.0)


def pair_loss_gradient(kappa_row, D_row, cap: float, row, supply_row) -> np.ndarray:
    """
    Gradient of curator n's loss -sum_c kappa_c U_c s_c / S_c with respect to its row.

    s = cap * row is the curator's own supply and supply_row the pair totals.
    With a single curator this equals monopolist_gradient.
    """
    kappa_row, D_row, row, S = (np.asarray(x, dtype=float) for x in (kappa_row, D_row, row, supply_row))
    own = cap * row
    others = S - own
    unsaturated = D_row < S
    return np.where(unsaturated,
                    -kappa_row * D_row * cap * (S - 2 * own) / S ** 3,
                    -kappa_row * cap * others / S ** 2)


@dataclass
class PairCurvature:
    estimate: float
    expression: float
    passed: bool


def _pair_loss(kappa: float, D: float, cap: float):
    return lambda x: -kappa * min(D / (cap * x), 1.0)


def pair_curvature_check(kappa: float, D: float, cap: float, a: float, tolerance: float = 0.1) -> PairCurvature:
    """
    Central-difference |L''| at A = a against 2 kappa D / (a^3 S_b) for the pair
    loss L(A) = -kappa min(D / (S_b A), 1). The expression is the curvature at
    the minimum mass; over [a, 1] the curvature only shrinks from there.
    """
    if not D < cap * a:
        raise RejectedInput("pair is saturated at the minimum mass, no curvature to check")
    loss = _pair_loss(kappa, D, cap)
    h = 1e-4 * a
    estimate = abs(loss(a + h) - 2 * loss(a) + loss(a - h)) / (h * h)
    expression = 2 * kappa * D / (a ** 3 * cap)
    return PairCurvature(estimate=estimate, expression=expression, passed=estimate >= expression * (1 - tolerance))


def pair_loss_constants(kappa: float, D: float, cap: float, a: float) -> CurvatureEstimate:
    """
    Curvature floor mu and slope bound G of the pair loss over [a, 1].

    The sampled interval reaches a step below a, so the pair must stay
    unsaturated there.
    """
    if not D < cap * (a - 1e-3 * (1 - a)):
        raise RejectedInput("pair saturates near the minimum mass, curvature constants undefined")
    return estimate_curvature(_pair_loss(kappa, D, cap), (a, 1.0))


def curvature_summary(kappa: np.ndarray, demand: np.ndarray, caps: np.ndarray, a: float, T: int) -> dict:
    """
    Per-pair curvature checks at the minimum mass on the smallest positive
    demand seen on each pair, with the log T regret bound of the weakest pair.
    """
    checks, constants, skipped = [], [], 0
    B, C = kappa.shape
    for b in range(B):
        for c in range(C):
            seen = demand[:, b, c]
            seen = seen[seen > 0]
            if kappa[b, c] <= 0 or seen.size == 0:
                continue
            D = float(seen.min())
            try:
                check = pair_curvature_check(float(kappa[b, c]), D, float(caps[b]), a)
                bound = pair_loss_constants(float(kappa[b, c]), D, float(caps[b]), a)
            except RejectedInput:
                skipped += 1
                continue
            checks.append(check)
            constants.append(bound)
    summary = {"pairs": len(checks), "skipped": skipped, "passed": all(ch.passed for ch in checks),
               "min_ratio": min((ch.estimate / ch.expression for ch in checks), default=None),
               "mu": None, "G": None, "log_bound": None}
    if constants:
        mu = min(k.mu for k in constants)
        G = max(k.G for k in constants)
        summary.update(mu=mu, G=G, log_bound=hazan_bound(G, mu, T) if T >= 2 else None)
    return summary


@dataclass
class RateFit:
    c: float
    split: int
    suffix_ratio: float
    held: bool


def fit_rate_constant(error: Sequence[float], split: float = 0.5) -> RateFit:
    """
    Fits c in error_t <= c log t / t on the steps t <= split * T and checks the
    bound on the remaining steps. error[0] is step 1, which has log t = 0 and
    is ignored.
    """
    error = np.asarray(error, dtype=float)
    T = error.size
    cut = int(split * T)
    if not 0 < split < 1 or cut < 2 or cut >= T:
        raise RejectedInput(f"rate fit needs steps on both sides of the split (T={T}, split={split})")
    t_index = np.arange(2, T + 1)
    scaled = error[1:] * t_index / np.log(t_index)
    prefix, suffix = scaled[:cut - 1], scaled[cut - 1:]
    c = float(prefix.max())
    suffix_ratio = float(suffix.max())
    return RateFit(c=c, split=cut, suffix_ratio=suffix_ratio, held=bool(suffix_ratio <= c * (1 + 1e-9)))


# --- Learning runs ---

@dataclass(frozen=True)
class MirrorDescentConfig:
    schedule: StepSchedule = StepSchedule("inverse_sqrt_t", 1.0)
    min_mass: float = 0.05
    barrier: float = 0.0
    order: str = "allocate_first"

    def __post_init__(self):
        if self.order not in ORDERS:
            raise RejectedInput(f"order must be one of {ORDERS}, got {self.order!r}")
        if not self.min_mass > 0:
            raise RejectedInput(f"minimum mass must be > 0, got {self.min_mass!r}")
        if self.barrier < 0:
            raise RejectedInput("barrier weight must be >= 0")


@dataclass(frozen=True)
class MDCurator:
    capacities: tuple
    initial: Optional[AllocationMatrix] = None


@dataclass
class MultiRunResult:
    kappas: np.ndarray
    revenue: np.ndarray
    demand: np.ndarray
    supply: np.ndarray
    utilization: np.ndarray
    aggregate: np.ndarray
    allocations: np.ndarray
    optimum: StaticOptimum
    regret_series: np.ndarray
    aggregate_error: np.ndarray
    fitted_c: float
    saturation_fraction: float
    rate_bound_held: Optional[bool] = None
    curvature: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    @property
    def total_revenue(self) -> float:
        return float(self.revenue.sum())

    @property
    def regret(self) -> float:
        return float(self.optimum.revenue - self.revenue.sum())

    @property
    def dynamic_regret(self) -> float:
        return float(self.optimum.step_max.sum() - self.revenue.sum())

    def state_at(self, t: int) -> MultiMarketState:
        return MultiMarketState(t=t, demand=self.demand[t - 1], supply=self.supply[t - 1],
                                utilization=self.utilization[t - 1], kappas=self.kappas)

    def to_frame(self) -> pd.DataFrame:
        T, B, C = self.utilization.shape
        columns = {"t": np.arange(1, T + 1), "revenue_step": self.revenue, "revenue_cum": np.cumsum(self.revenue)}
        for b in range(B):
            for c in range(C):
                columns[f"A_{b + 1}_{c + 1}"] = self.aggregate[:, b, c]
        for b in range(B):
            for c in range(C):
                columns[f"U_{b + 1}_{c + 1}"] = self.utilization[:, b, c]
        columns["aggregate_error"] = self.aggregate_error
        return pd.DataFrame(columns)

    def write_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.12g")

    def report(self) -> dict:
        return {
            "R_alg": self.total_revenue,
            "R_star": float(self.optimum.revenue),
            "regret": self.regret,
            "dynamic_regret": self.dynamic_regret,
            "path_length": path_length(list(self.optimum.step_argmax)),
            "competitive_ratio": self.total_revenue / self.optimum.revenue if self.optimum.revenue > 0 else 1.0,
            "cr_per_step_max": (self.total_revenue / self.optimum.step_max.sum()
                                if self.optimum.step_max.sum() > 0 else 1.0),
            "fitted_c": self.fitted_c,
            "rate_bound_held": self.rate_bound_held,
            "saturation_fraction": self.saturation_fraction,
            "curvature": dict(self.curvature),
            "benchmark": "static_allocation",
            "horizon": int(self.revenue.size),
        }


def _run_md(stream, kappas, B: int, C: int, curators: Sequence[MDCurator], config: MirrorDescentConfig,
            horizon: Optional[int], grid_h: float, optimum: Optional[StaticOptimum]) -> MultiRunResult:
    kappa = _kappa_grid(kappas, B, C)
    a = config.min_mass
    caps = np.array([np.asarray(c.capacities, dtype=float) for c in curators])
    if caps.shape != (len(curators), B) or np.any(caps <= 0):
        raise RejectedInput(f"every curator needs {B} positive capacities")
    mats = []
    for c in curators:
        start = c.initial or AllocationMatrix.uniform(B, C, a)
        if start.shape != (B, C) or start.min_mass < a - 1e-15:
            raise RejectedInput("initial allocation matrix does not fit the market")
        mats.append(np.array(start.entries))
    total_caps = caps.sum(axis=0)

    demand = md_demand_path(stream, B, C, horizon)
    T = demand.shape[0]
    if optimum is None:
        optimum = md_optimal_static(stream, kappa, B, C, h=grid_h, a=a, capacities=total_caps, horizon=T)

    revenue = np.empty(T)
    utilization = np.empty((T, B, C))
    supplies = np.empty((T, B, C))
    aggregate = np.empty((T, B, C))
    allocations = np.empty((T, len(curators), B, C))

    def update(D, round_index):
        supply = sum(caps[n][:, None] * mats[n] for n in range(len(mats)))
        eta = config.schedule.eta(round_index)
        for n in range(len(mats)):
            for b in range(B):
                if len(mats) == 1:
                    grad = monopolist_gradient(kappa[b], D[b], caps[0, b], mats[0][b])
                else:
                    grad = pair_loss_gradient(kappa[b], D[b], caps[n, b], mats[n][b], supply[b])
                mats[n][b] = md_simplex_step(mats[n][b], grad, eta, a, config.barrier)

    for t in range(1, T + 1):
        if config.order == "allocate_first":
            if t > 1:
                update(demand[t - 2], t - 1)
        else:
            update(demand[t - 1], t)
        supply = sum(caps[n][:, None] * mats[n] for n in range(len(mats)))
        U = _utilization(demand[t - 1], supply)
        revenue[t - 1] = float((kappa * U).sum())
        utilization[t - 1] = U
        supplies[t - 1] = supply
        aggregate[t - 1] = supply / total_caps[:, None]
        allocations[t - 1] = np.array(mats)

    error = np.linalg.norm(aggregate - optimum.matrix[None], axis=(1, 2))
    try:
        rate = fit_rate_constant(error)
    except RejectedInput as exc:
        logger.warning("no rate fit for the aggregate allocation: %s", exc)
        rate = None
    active = demand > 0
    saturation = float(((utilization >= 1.0) & active).sum() / max(active.sum(), 1))
    regret_series = np.cumsum(optimum.step_revenue - revenue)
    curvature = curvature_summary(kappa, demand, total_caps, a, T)
    if not curvature["passed"]:
        logger.warning("pair curvature below 0.9 of 2 kappa D / (a^3 S_b) on some pair (min ratio %s)",
                       curvature["min_ratio"])
    logger.info("mirror-descent run with %d curators: revenue %.6g, regret %.6g",
                len(curators), revenue.sum(), regret_series[-1] if T else 0.0)
    return MultiRunResult(kappas=kappa, revenue=revenue, demand=demand, supply=supplies, utilization=utilization,
                          aggregate=aggregate, allocations=allocations, optimum=optimum,
                          regret_series=regret_series, aggregate_error=error,
                          fitted_c=rate.c if rate else 0.0, saturation_fraction=saturation,
                          rate_bound_held=rate.held if rate else None, curvature=curvature)


def run_monopolist(stream, kappas, B: int, C: int, config: MirrorDescentConfig = MirrorDescentConfig(),
                   capacities=None, horizon: Optional[int] = None, grid_h: float = 0.05,
                   optimum: Optional[StaticOptimum] = None) -> MultiRunResult:
    """One allocator, B independent mirror-descent rows on -sum_c kappa_{b,c} U_{b,c}."""
    caps = tuple(np.ones(B)) if capacities is None else tuple(capacities)
    return _run_md(stream, kappas, B, C, [MDCurator(caps)], config, horizon, grid_h, optimum)


def run_curators_md(stream, kappas, B: int, C: int, curators: Sequence[MDCurator],
                    config: MirrorDescentConfig = MirrorDescentConfig(), horizon: Optional[int] = None,
                    grid_h: float = 0.05, optimum: Optional[StaticOptimum] = None) -> MultiRunResult:
    """N curators, each descending on its own pro-rata share of the pair revenues."""
    if not curators:
        raise RejectedInput("at least one curator is required")
    return _run_md(stream, kappas, B, C, curators, config, horizon, grid_h, optimum)


# --- CSV ---

def write_multi_stream_csv(stream: Sequence[MultiLoanEvent], C: int, path) -> None:
    columns = {"t": [e.t for e in stream], "asset": [e.asset for e in stream]}
    for c in range(C):
        columns[f"size_c{c + 1}"] = [e.sizes[c] for e in stream]
    columns["duration"] = [e.duration for e in stream]
    pd.DataFrame(columns).to_csv(path, index=False, float_format="%.17g")


def read_multi_stream_csv(path) -> tuple:
    frame = pd.read_csv(path)
    size_columns = sorted((c for c in frame.columns if c.startswith("size_c")), key=lambda c: int(c[6:]))
    if not size_columns or not {"t", "asset", "duration"} <= set(frame.columns):
        raise RejectedInput(f"multi-asset stream CSV {path} lacks t, asset, size_c*, duration columns")
    return tuple(MultiLoanEvent(int(row["t"]), int(row["asset"]), tuple(float(row[c]) for c in size_columns),
                                int(row["duration"]))
                 for _, row in frame.iterrows())
