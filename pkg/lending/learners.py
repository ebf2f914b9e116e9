"""Online gradient steps, mirror descent on the capped simplex, curvature estimates and regret bounds."""
import logging
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from lending.errors import ModelError, RejectedInput

logger = logging.getLogger(__name__)

SCHEDULE_KINDS = ("inverse_t_strongly_convex", "inverse_sqrt_t")


@dataclass(frozen=True)
class StepSchedule:
    """eta_t = scale / t (strongly convex, scale = 1/mu) or scale / sqrt(t)."""
    kind: str = "inverse_t_strongly_convex"
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise RejectedInput(f"schedule kind must be one of {SCHEDULE_KINDS}, got {self.kind!r}")
        if not self.scale > 0:
            raise RejectedInput(f"schedule scale must be > 0, got {self.scale!r}")

    @classmethod
    def strongly_convex(cls, mu: float) -> "StepSchedule":
        if not mu > 0:
            raise RejectedInput(f"curvature mu must be > 0, got {mu!r}")
        return cls("inverse_t_strongly_convex", 1.0 / mu)

    def eta(self, t: int) -> float:
        if t < 1:
            raise RejectedInput(f"round index must be >= 1, got {t}")
        if self.kind == "inverse_t_strongly_convex":
            return self.scale / t
        return self.scale / math.sqrt(t)


@dataclass(frozen=True)
class CurvatureEstimate:
    mu: float
    G: float
    domain: tuple
    sign: int


def project_interval(x, low, high):
    return min(max(x, low), high)


def ogd_step(x, grad, t: int, schedule: StepSchedule, domain: tuple = (0.0, 1.0)):
    """Projected gradient step x - eta_t * grad onto the interval domain."""
    low, high = domain
    if not math.isfinite(grad):
        raise ModelError(f"non-finite gradient {grad!r} at round {t}")
    if not low <= x <= high:
        raise RejectedInput(f"iterate {x!r} lies outside the domain {domain}")
    return project_interval(x - schedule.eta(t) * grad, low, high)


@dataclass
class ScalarOGD:
    """Projected OGD iterate on an interval with its own round counter."""
    x: float
    schedule: StepSchedule
    domain: tuple = (0.0, 1.0)
    rounds: int = 0

    def update(self, grad: float) -> float:
        self.rounds += 1
        self.x = ogd_step(self.x, grad, self.rounds, self.schedule, self.domain)
        return self.x

    def track(self, target: float) -> float:
        """
        OGD step on (x - target)^2 written as (1 - 2 eta) x + 2 eta target.
        Lands on target exactly when 2 eta = 1.
        """
        if not math.isfinite(target):
            raise ModelError(f"non-finite tracking target {target!r}")
        self.rounds += 1
        weight = 2 * self.schedule.eta(self.rounds)
        self.x = project_interval((1 - weight) * self.x + weight * target, *self.domain)
        return self.x


def _check_min_mass(C: int, a: float):
    if a < 0 or a * C >= 1:
        raise RejectedInput(f"infeasible minimum mass a={a} for C={C} coordinates (need 0 <= aC < 1)")


def project_capped_simplex(y, a: float) -> np.ndarray:
    """
    KL projection of a positive vector onto {w : w_c >= a, sum w = 1}.

    Coordinates that fall below a after renormalisation are pinned at a and the
    rest share the remaining mass in proportion to y.
    """
    y = np.asarray(y, dtype=float)
    C = y.size
    _check_min_mass(C, a)
    if np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise ModelError("capped-simplex projection needs a positive finite vector")
    if np.all(y >= a) and abs(y.sum() - 1.0) <= 1e-15:
        return y.copy()
    pinned = np.zeros(C, dtype=bool)
    for _ in range(C):
        free = ~pinned
        w = np.where(pinned, a, 0.0)
        w[free] = y[free] / y[free].sum() * (1.0 - a * pinned.sum())
        low = free & (w < a)
        if not low.any():
            break
        pinned |= low
    return w


def md_simplex_step(x, grad, eta: float, a: float, barrier: float = 0.0) -> np.ndarray:
    """
    Exponentiated-gradient step followed by projection onto the capped simplex.

    barrier > 0 adds the gradient of -barrier * sum(log x) to grad.
    """
    x = np.asarray(x, dtype=float)
    grad = np.asarray(grad, dtype=float)
    _check_min_mass(x.size, a)
    if grad.shape != x.shape:
        raise RejectedInput(f"gradient shape {grad.shape} does not match point shape {x.shape}")
    if not np.all(np.isfinite(grad)):
        raise ModelError("non-finite gradient in mirror-descent step")
    if np.any(x < a - 1e-12) or abs(x.sum() - 1.0) > 1e-9:
        raise RejectedInput("mirror-descent point is not on the capped simplex")
    if barrier:
        grad = grad - barrier / x
    exponent = -eta * grad
    exponent -= exponent.max()
    return project_capped_simplex(x * np.exp(exponent), a)


def estimate_curvature(loss: Callable[[float], float], domain: tuple, samples: int = 101,
                       zero_tol: float = 1e-6) -> CurvatureEstimate:
    """
    Central-difference curvature and slope bounds of a 1-d loss over domain.

    The loss is evaluated a step h = 1e-3 * width outside the interval ends.
    """
    low, high = domain
    if not high > low:
        raise RejectedInput(f"curvature domain {domain} is empty")
    h = 1e-3 * (high - low)
    grid = np.linspace(low, high, samples)
    second, first = [], []
    for x in grid:
        left, mid, right = loss(x - h), loss(x), loss(x + h)
        second.append((right - 2 * mid + left) / (h * h))
        first.append((right - left) / (2 * h))
    second, first = np.array(second), np.array(first)
    if not (np.all(np.isfinite(second)) and np.all(np.isfinite(first))):
        raise ModelError("loss is not finite on the sampled domain")
    magnitude = np.abs(second)
    if magnitude.min() <= zero_tol:
        raise RejectedInput(f"curvature estimate rejected: |f''| reaches {magnitude.min():.3g} (mu = 0)")
    signs = np.sign(second)
    if np.any(signs != signs[0]):
        raise RejectedInput("curvature estimate rejected: second derivative changes sign on the domain")
    return CurvatureEstimate(mu=float(magnitude.min()), G=float(np.abs(first).max()),
                             domain=(float(low), float(high)), sign=int(signs[0]))


# --- Bounds (leading term, constant 1) ---

def hazan_bound(G, mu, T) -> float:
    """(G^2 / mu) log T."""
    if G < 0:
        raise RejectedInput(f"G must be >= 0, got {G!r}")
    if mu <= 0:
        raise RejectedInput(f"mu must be > 0, got {mu!r}")
    if T < 2:
        raise RejectedInput(f"T must be >= 2, got {T!r}")
    return G * G / mu * math.log(T)


def zinkevich_bound(diam, G, T) -> float:
    """((diam^2 + G^2) / 2) sqrt T."""
    if diam < 0 or G < 0 or T < 0:
        raise RejectedInput("zinkevich bound inputs must be non-negative")
    return (diam * diam + G * G) / 2 * math.sqrt(T)


def besbes_dynamic_bound(G, mu, T, P_T) -> float:
    """(G^2 / mu) log T + (G / mu) P_T."""
    if P_T < 0:
        raise RejectedInput(f"path length must be >= 0, got {P_T!r}")
    return hazan_bound(G, mu, T) + G / mu * P_T


def bounds_table(G: float, mu: float, diam: float, P_T: float, t_grid: Sequence[int]) -> list:
    """Rows of (T, hazan, zinkevich, besbes) for the CLI."""
    return [
        {"T": T, "hazan": hazan_bound(G, mu, T), "zinkevich": zinkevich_bound(diam, G, T),
         "besbes": besbes_dynamic_bound(G, mu, T, P_T)}
        for T in t_grid
    ]
