"""Model parameters: branching moments, offspring law, validation rules.

The per-colony branching rate is the per-particle rate at density n; the
limit drift and noise coefficients derive from it as b = beta * rate / n
and gamma = sigma^2 * rate / n.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .measures import FiniteMeasure
from .migration import MigrationIntensity

__all__ = [
    "BadInitialMeasure",
    "ValidationError",
    "OffspringLaw",
    "ColonyBranching",
    "InitialSpec",
    "ModelParams",
    "RATE_STEP_LIMIT",
    "ETA_STEP_LIMIT",
]

# Keeps "at most one event per particle per step" an honest approximation.
RATE_STEP_LIMIT = 0.2
ETA_STEP_LIMIT = 0.2


class BadInitialMeasure(ValueError):
    """Initial measure is not n unit-weight particles or a sampling rule."""


class ValidationError(ValueError):
    """Carries the full list of configuration violations."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass(frozen=True)
class OffspringLaw:
    """Offspring count on {0, 1, 2} with prescribed mean and variance.

    The probabilities solve q1 + 2 q2 = mean, q1 + 4 q2 = variance + mean^2,
    so the law realizes the requested moments exactly whenever it exists.
    """

    mean: float
    variance: float
    q0: float
    q1: float
    q2: float

    @staticmethod
    def feasibility_gap(mean: float, variance: float) -> float:
        """Slack in the feasibility inequality s^2 + (m-1)^2 <= m(2-m)."""
        return mean * (2.0 - mean) - variance - (mean - 1.0) ** 2

    @staticmethod
    def from_moments(mean: float, variance: float) -> "OffspringLaw":
        if variance < 0:
            raise ValueError("variance must be nonnegative")
        if OffspringLaw.feasibility_gap(mean, variance) < -1e-12:
            raise ValueError(
                f"offspring law on {{0,1,2}} infeasible: requires "
                f"variance + (mean-1)^2 <= mean(2-mean), got "
                f"{variance} + {(mean - 1.0) ** 2:.3g} > {mean * (2.0 - mean):.6g}"
            )
        q2 = 0.5 * (variance + mean * (mean - 1.0))
        q1 = mean - 2.0 * q2
        q0 = 1.0 - q1 - q2
        for name, q in (("q0", q0), ("q1", q1), ("q2", q2)):
            if q < -1e-12:
                raise ValueError(f"offspring law infeasible: {name} = {q:.3g} < 0")
        q0, q1, q2 = max(q0, 0.0), max(q1, 0.0), max(q2, 0.0)
        return OffspringLaw(mean=mean, variance=variance, q0=q0, q1=q1, q2=q2)

    def sample(self, u: np.ndarray) -> np.ndarray:
        """Map uniforms to offspring counts (vectorized inverse transform)."""
        return (u >= self.q0).astype(np.int64) + (u >= self.q0 + self.q1)


@dataclass(frozen=True)
class ColonyBranching:
    rate: float      # per-particle branching rate lambda_{n,i}
    beta: float      # offspring mean shift: E xi = 1 + beta/n
    sigma_sq: float  # offspring variance

    def offspring(self, n: int) -> OffspringLaw:
        return OffspringLaw.from_moments(1.0 + self.beta / n, self.sigma_sq)


@dataclass(frozen=True)
class InitialSpec:
    """Either explicit particle positions (weight 1/n each) or a sampling rule.

    An empty colony (no particles) is expressed as positions=() and is a
    valid degenerate start.
    """

    positions: tuple[float, ...] | None = None
    sample_from: FiniteMeasure | None = None

    def __post_init__(self):
        if (self.positions is None) == (self.sample_from is None):
            raise BadInitialMeasure("give either positions or sample_from")
        if self.sample_from is not None and self.sample_from.total_mass <= 0:
            raise BadInitialMeasure("sampling rule needs a measure with positive mass")

    @staticmethod
    def empty() -> "InitialSpec":
        return InitialSpec(positions=())

    @staticmethod
    def at(positions) -> "InitialSpec":
        return InitialSpec(positions=tuple(float(x) for x in positions))

    @staticmethod
    def sampled(measure: FiniteMeasure) -> "InitialSpec":
        return InitialSpec(sample_from=measure)

    def realize(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.positions is not None:
            pos = np.asarray(self.positions, dtype=float)
            if pos.size not in (0, n):
                raise BadInitialMeasure(
                    f"explicit start needs exactly n={n} particles (or none), got {pos.size}"
                )
            return pos.copy()
        probs = self.sample_from.weights / self.sample_from.total_mass
        u = rng.random(n)
        idx = np.searchsorted(np.cumsum(probs), u, side="right")
        return self.sample_from.positions[np.minimum(idx, len(probs) - 1)]


@dataclass(frozen=True)
class ModelParams:
    n: int
    colony1: ColonyBranching
    colony2: ColonyBranching
    eta: MigrationIntensity
    chi: FiniteMeasure
    initial1: InitialSpec
    initial2: InitialSpec
    h: float | None = None  # defaults to 1/n

    @property
    def step(self) -> float:
        return self.h if self.h is not None else 1.0 / self.n

    def branching(self, colony: int) -> ColonyBranching:
        return self.colony1 if colony == 1 else self.colony2

    def lam(self, colony: int) -> float:
        """Limit branching intensity lambda_i = lambda_{n,i} / n."""
        return self.branching(colony).rate / self.n

    def b(self, colony: int) -> float:
        return self.branching(colony).beta * self.lam(colony)

    def gamma(self, colony: int) -> float:
        return self.branching(colony).sigma_sq * self.lam(colony)

    def violations(self) -> list[str]:
        out = []
        if self.n < 1:
            out.append(f"n must be a positive integer, got {self.n}")
        h = self.h if self.h is not None else (1.0 / self.n if self.n >= 1 else None)
        if h is not None and h <= 0:
            out.append(f"step h must be positive, got {h}")
            h = None
        for colony in (1, 2):
            br = self.branching(colony)
            if br.rate < 0:
                out.append(f"colony {colony}: branching rate must be nonnegative")
            elif h is not None and br.rate * h > RATE_STEP_LIMIT + 1e-12:
                out.append(
                    f"colony {colony}: rate*h = {br.rate * h:.4g} violates the "
                    f"rate*h <= {RATE_STEP_LIMIT} rule"
                )
            if br.rate > 0 and self.n >= 1:
                mean = 1.0 + br.beta / self.n
                try:
                    OffspringLaw.from_moments(mean, br.sigma_sq)
                except ValueError as exc:
                    out.append(f"colony {colony}: {exc}")
        if h is not None and h * self.eta.bound > ETA_STEP_LIMIT + 1e-12:
            out.append(
                f"h*eta_max = {h * self.eta.bound:.4g} violates the "
                f"h*eta_max <= {ETA_STEP_LIMIT} rule"
            )
        if self.eta.bound > 0 and self.chi.total_mass <= 0:
            out.append("migration is active but chi has zero mass")
        return out

    def validate(self) -> "ModelParams":
        bad = self.violations()
        if bad:
            raise ValidationError(bad)
        return self
