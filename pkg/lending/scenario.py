"""
Scenario files and environment defaults.

A scenario is a JSON document validated by the pydantic models below
(schema_version 1, unknown keys rejected). Environment defaults come from a
.env file through python-dotenv.
"""
import hashlib
import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import List, Literal, Optional, Tuple

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from lending.core import CostFunction, CuratorProfile
from lending.demand import StochasticDemandParams
from lending.errors import RejectedInput
from lending.learners import SCHEDULE_KINDS, StepSchedule
from lending.multi_asset import MDCurator, MirrorDescentConfig
from lending.pricing import CuratorGameConfig, PricingConfig, TrackingConfig

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

SINGLE_GENERATORS = ("example1", "example2", "example3", "stochastic", "csv", "none")
MULTI_GENERATORS = ("multi_cyclic", "multi_stochastic", "multi_csv")


# --- Environment ---

@dataclass(frozen=True)
class Settings:
    out_dir: str
    db_url: str
    workers: int
    log_level: str


def load_settings() -> Settings:
    """Reads LENDING_* variables, loading a .env file first when present."""
    load_dotenv()
    out_dir = os.getenv("LENDING_OUT_DIR", "./out")
    db_url = os.getenv("LENDING_DB_URL", f"sqlite:///{Path(out_dir) / 'runs.db'}")
    try:
        workers = int(os.getenv("LENDING_WORKERS", "1"))
    except ValueError:
        raise RejectedInput(f"LENDING_WORKERS must be an integer, got {os.getenv('LENDING_WORKERS')!r}")
    if workers < 1:
        raise RejectedInput("LENDING_WORKERS must be >= 1")
    log_level = os.getenv("LENDING_LOG_LEVEL", "INFO").upper()
    return Settings(out_dir=out_dir, db_url=db_url, workers=workers, log_level=log_level)


# --- Schema ---

class _Spec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class StochasticSpec(_Spec):
    increment_scale: float = Field(..., gt=0, description="Delta, half-width of the loan size band")
    tail_rate: float = Field(..., gt=0, description="K, rate of the Laplace increments")
    duration_mean: float = Field(..., ge=1)
    reset_epsilon: float = Field(..., gt=0)
    min_demand: float = Field(..., gt=0)
    size_mean: float = Field(0.05, gt=0)
    supply_total: float = Field(1.0, gt=0)


class PatternStep(_Spec):
    asset: int = Field(..., ge=0)
    sizes: List[float]


class CyclicSpec(_Spec):
    pattern: List[PatternStep] = Field(..., min_length=1)
    duration: int = Field(1, ge=0)


class MultiStochasticSpec(_Spec):
    size_mean: float = Field(0.05, gt=0)
    duration_mean: float = Field(4.0, ge=1)


class DemandSpec(_Spec):
    generator: Literal["example1", "example2", "example3", "stochastic", "csv", "none",
                       "multi_cyclic", "multi_stochastic", "multi_csv"]
    horizon: int = Field(..., ge=1)
    delta: Optional[float] = Field(None, gt=0, lt=1)
    duration_mode: Literal["remaining", "horizon"] = "remaining"
    stochastic: Optional[StochasticSpec] = None
    cyclic: Optional[CyclicSpec] = None
    multi_stochastic: Optional[MultiStochasticSpec] = None
    path: Optional[str] = None

    @model_validator(mode="after")
    def check_generator_parameters(self):
        if self.generator == "example3" and self.delta is None:
            raise ValueError("generator example3 needs delta")
        if self.generator == "example3" and self.horizon < 2:
            raise ValueError("generator example3 needs horizon >= 2")
        if self.generator == "stochastic" and self.stochastic is None:
            raise ValueError("generator stochastic needs a stochastic block")
        if self.generator == "multi_cyclic" and self.cyclic is None:
            raise ValueError("generator multi_cyclic needs a cyclic block")
        if self.generator in ("csv", "multi_csv") and not self.path:
            raise ValueError(f"generator {self.generator} needs a path")
        return self

    @property
    def is_multi(self) -> bool:
        return self.generator in MULTI_GENERATORS

    def stochastic_params(self) -> StochasticDemandParams:
        s = self.stochastic
        return StochasticDemandParams(
            increment_scale=s.increment_scale, tail_rate=s.tail_rate, duration_mean=s.duration_mean,
            reset_epsilon=s.reset_epsilon, min_demand=s.min_demand, horizon=self.horizon,
            size_mean=s.size_mean, supply_total=s.supply_total,
        )


class MarketSpec(_Spec):
    kind: Literal["single", "multi"] = "single"
    kappa: float = Field(1.0, gt=0)
    supply_bounds: Tuple[float, float] = (1e-9, 1.0)
    supply: Optional[float] = Field(None, gt=0, description="pooled supply; defaults to S_max")
    B: Optional[int] = Field(None, ge=1)
    C: Optional[int] = Field(None, ge=1)
    kappas: Optional[List[List[float]]] = None
    min_mass: float = Field(0.05, ge=0)
    max_elasticity: Optional[float] = Field(None, gt=0)

    @field_validator("supply_bounds")
    @classmethod
    def check_supply_bounds(cls, value):
        low, high = value
        if not low > 0:
            raise ValueError(f"S_min must be > 0, got {low}")
        if low > high:
            raise ValueError(f"S_min ({low}) exceeds S_max ({high})")
        return value

    @model_validator(mode="after")
    def check_multi_shapes(self):
        if self.kind == "multi":
            if self.B is None or self.C is None or self.kappas is None:
                raise ValueError("a multi-asset market needs B, C and kappas")
            if len(self.kappas) != self.B or any(len(row) != self.C for row in self.kappas):
                raise ValueError(f"kappas must be a {self.B} x {self.C} grid")
            if any(k < 0 for row in self.kappas for k in row):
                raise ValueError("kappas must be non-negative")
        return self


class LearnerSpec(_Spec):
    kind: Literal["inverse_t_strongly_convex", "inverse_sqrt_t"] = "inverse_t_strongly_convex"
    scale: Optional[float] = Field(None, gt=0)
    mu: Optional[float] = Field(None, gt=0, description="curvature; sets scale = 1/mu for the 1/t schedule")

    def to_schedule(self, default_scale: float = 1.0) -> StepSchedule:
        if self.mu is not None and self.kind == SCHEDULE_KINDS[0]:
            return StepSchedule.strongly_convex(self.mu)
        return StepSchedule(self.kind, self.scale if self.scale is not None else default_scale)


class CuratorSpec(_Spec):
    capacity: float = Field(..., gt=0)
    alpha: float = Field(1.0, gt=0, le=1)
    cost_linear: float = Field(0.0, ge=0)
    cost_quadratic: float = Field(0.0, ge=0)
    cost_basis: Literal["idle", "deployed"] = "idle"
    count: int = Field(1, ge=1)

    def profiles(self) -> list:
        profile = CuratorProfile(capacity=self.capacity, alpha=self.alpha,
                                 cost=CostFunction(self.cost_linear, self.cost_quadratic),
                                 cost_basis=self.cost_basis)
        return [profile] * self.count


class MultiCuratorSpec(_Spec):
    capacities: List[float] = Field(..., min_length=1)
    count: int = Field(1, ge=1)


class TrackingSpec(_Spec):
    learner: LearnerSpec = LearnerSpec(scale=0.5)
    margin: float = Field(0.0, ge=0)
    initial_fraction: float = Field(1.0, ge=0, le=1)


class EngineSpec(_Spec):
    model: Literal["pooled", "curated", "supply_game", "monopolist", "curators_md"] = "pooled"
    mode: Literal["fixed_interest", "variable_interest"] = "fixed_interest"
    curators: List[CuratorSpec] = []
    supply_mode: Literal["game", "tracking"] = "game"
    learner: LearnerSpec = LearnerSpec()
    low_cost_fraction: float = Field(0.5, gt=0, le=1)
    c_star: float = Field(1.0, ge=0)
    revenue_floor: float = Field(0.0, ge=0)
    alpha_floor: float = Field(1e-3, gt=0, le=1)
    burn_in: int = Field(100, ge=2)
    tracking: TrackingSpec = TrackingSpec()
    multi_curators: List[MultiCuratorSpec] = []
    md_learner: LearnerSpec = LearnerSpec(kind="inverse_sqrt_t", scale=1.0)
    order: Literal["allocate_first", "loan_first"] = "allocate_first"
    barrier: float = Field(0.0, ge=0)

    @model_validator(mode="after")
    def check_curators(self):
        if self.model in ("curated", "supply_game") and not self.curators:
            raise ValueError(f"engine model {self.model} needs at least one curator")
        if self.model == "curators_md" and not self.multi_curators:
            raise ValueError("engine model curators_md needs multi_curators")
        return self

    def profiles(self) -> tuple:
        return tuple(p for spec in self.curators for p in spec.profiles())


class MetricsSpec(_Spec):
    benchmark: Literal["dynamic", "capacitated", "static_supply"] = "dynamic"
    oracle: bool = False
    oracle_levels: Optional[int] = Field(None, ge=1, le=21)
    grid_resolution: float = Field(0.05, gt=0, le=1)
    static_grid: int = Field(16, ge=2)
    with_series: bool = False


class AssumptionSpec(_Spec):
    slack: float = Field(2.0, ge=1)
    epsilon: Optional[float] = Field(None, gt=0)
    rate: float = Field(1.0, gt=0)
    sigma_p: Optional[float] = Field(None, gt=0)
    min_demand: Optional[float] = Field(None, gt=0)
    increment_scale: Optional[float] = Field(None, gt=0)
    tail_rate: Optional[float] = Field(None, gt=0)


class OutputSpec(_Spec):
    out_dir: Optional[str] = None
    registry: bool = False
    t_grid: List[int] = []
    reps: int = Field(1, ge=1)

    @field_validator("t_grid")
    @classmethod
    def check_t_grid(cls, value):
        if any(t < 1 for t in value):
            raise ValueError("every T in t_grid must be >= 1")
        if any(b <= a for a, b in zip(value, value[1:])):
            raise ValueError("t_grid must be strictly increasing")
        return value


class ScenarioConfig(_Spec):
    schema_version: Literal[1] = SCHEMA_VERSION
    name: str = Field(..., min_length=1)
    seed: int = Field(0, ge=0, lt=2 ** 64)
    demand: DemandSpec
    market: MarketSpec = MarketSpec()
    engine: EngineSpec = EngineSpec()
    metrics: MetricsSpec = MetricsSpec()
    assumptions: AssumptionSpec = AssumptionSpec()
    output: OutputSpec = OutputSpec()

    @model_validator(mode="after")
    def check_consistency(self):
        multi_engine = self.engine.model in ("monopolist", "curators_md")
        if self.market.kind == "multi":
            if not self.demand.is_multi and self.demand.generator != "none":
                raise ValueError(f"multi-asset market cannot use generator {self.demand.generator}")
            if not multi_engine:
                raise ValueError("multi-asset market needs engine model monopolist or curators_md")
            if self.demand.cyclic is not None:
                for step in self.demand.cyclic.pattern:
                    if step.asset >= self.market.B or len(step.sizes) != self.market.C:
                        raise ValueError("cyclic pattern entries must fit the B x C market")
            for spec in self.engine.multi_curators:
                if len(spec.capacities) != self.market.B:
                    raise ValueError("every multi-asset curator needs B capacities")
        else:
            if self.demand.is_multi:
                raise ValueError(f"generator {self.demand.generator} needs a multi-asset market")
            if multi_engine:
                raise ValueError(f"engine model {self.engine.model} needs a multi-asset market")
        return self

    # --- Conversions to domain types ---

    def pricing_config(self) -> PricingConfig:
        return PricingConfig(kappa=self.market.kappa, mode=self.engine.mode,
                             model="pooled" if self.engine.model == "pooled" else "curated",
                             supply_bounds=tuple(self.market.supply_bounds))

    def game_config(self) -> Optional[CuratorGameConfig]:
        if not self.engine.curators:
            return None
        tracking = self.engine.tracking
        return CuratorGameConfig(
            curators=self.engine.profiles(),
            learner=self.engine.learner.to_schedule(),
            low_cost_fraction=self.engine.low_cost_fraction,
            c_star=self.engine.c_star,
            supply_mode=self.engine.supply_mode,
            revenue_floor=self.engine.revenue_floor,
            alpha_floor=self.engine.alpha_floor,
            tracking=TrackingConfig(schedule=tracking.learner.to_schedule(0.5), margin=tracking.margin,
                                    initial_fraction=tracking.initial_fraction),
        )

    def md_config(self) -> MirrorDescentConfig:
        return MirrorDescentConfig(schedule=self.engine.md_learner.to_schedule(), min_mass=self.market.min_mass,
                                   barrier=self.engine.barrier, order=self.engine.order)

    def md_curators(self) -> list:
        return [MDCurator(tuple(spec.capacities)) for spec in self.engine.multi_curators
                for _ in range(spec.count)]

    def with_horizon(self, T: int) -> "ScenarioConfig":
        return self.model_copy(update={"demand": self.demand.model_copy(update={"horizon": T})})

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return self.model_copy(update={"seed": seed})

    def digest(self) -> str:
        """sha256 of the canonical JSON dump; stored with registry records."""
        canonical = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


# --- Loading ---

def load_config(path) -> ScenarioConfig:
    """Reads and validates a scenario file; raises pydantic.ValidationError on schema violations."""
    path = Path(path)
    if not path.is_file():
        raise RejectedInput(f"scenario file not found: {path}")
    text = path.read_text(encoding="utf-8")
    config = ScenarioConfig.model_validate_json(text)
    logger.info("loaded scenario '%s' from %s", config.name, path)
    return config


def format_validation_error(exc: ValidationError) -> list:
    """One 'dotted.field.path: message' line per schema violation."""
    lines = []
    for error in exc.errors():
        location = ".".join(str(part) for part in error.get("loc", ())) or "<root>"
        lines.append(f"{location}: {error.get('msg', 'invalid value')}")
    return lines
