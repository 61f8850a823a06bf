"""Migration intensity models and the cumulative emigration functional."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .measures import DistributionFunction, FiniteMeasure, Grid, cdf

__all__ = ["MigrationIntensity", "ImmigrationTarget", "eta_eval", "xi_eval", "xi_on_grid"]

MODELS = ("constant", "mass_coupled", "local_window")


@dataclass(frozen=True)
class MigrationIntensity:
    """Per-particle emigration rate eta(x, mu1, mu2), bounded by `eta_max`.

    Built-in models:
      constant       eta = c everywhere
      mass_coupled   eta = c * <mu2,1> / (1 + <mu2,1>)   (position-free)
      local_window   eta = min(c * mu1([x-r, x+r]), eta_max)
    """

    model: str
    c: float
    r: float = 0.0
    eta_max: float = 0.0

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}, expected one of {MODELS}")
        if self.c < 0:
            raise ValueError("c must be nonnegative")
        if self.model == "local_window":
            if self.r <= 0:
                raise ValueError("local_window needs a positive radius r")
            if self.eta_max <= 0:
                raise ValueError("local_window needs an explicit eta_max")

    @property
    def bound(self) -> float:
        if self.model == "local_window":
            return self.eta_max
        return self.c

    @property
    def position_dependent(self) -> bool:
        return self.model == "local_window"

    def value_for_masses(self, m1: float, m2: float) -> float:
        """Shared value of position-free models, given the colony masses."""
        if self.model == "constant":
            return self.c
        if self.model == "mass_coupled":
            return self.c * m2 / (1.0 + m2)
        raise ValueError("local_window depends on positions")

    def __call__(self, x, mu1: FiniteMeasure, mu2: FiniteMeasure):
        x = np.asarray(x, dtype=float)
        if self.model == "constant":
            vals = np.full(x.shape, self.c)
        elif self.model == "mass_coupled":
            m2 = mu2.total_mass
            vals = np.full(x.shape, self.c * m2 / (1.0 + m2))
        else:
            hi = np.searchsorted(mu1.positions, x + self.r, side="right")
            lo = np.searchsorted(mu1.positions, x - self.r, side="left")
            cw = np.concatenate([[0.0], np.cumsum(mu1.weights)])
            vals = np.minimum(self.c * (cw[hi] - cw[lo]), self.eta_max)
        assert np.all(vals >= 0) and np.all(vals <= self.bound + 1e-12)
        return float(vals) if vals.ndim == 0 else vals


def eta_eval(model: MigrationIntensity, x: float, mu1: FiniteMeasure, mu2: FiniteMeasure) -> float:
    return float(model(x, mu1, mu2))


def xi_eval(y: float, mu1: FiniteMeasure, mu2: FiniteMeasure, model: MigrationIntensity) -> float:
    """Cumulative emigration flow below y: sum of weight * eta over atoms <= y."""
    if mu1.n_atoms == 0:
        return 0.0
    if y == math.inf:
        k = mu1.n_atoms
    else:
        k = int(np.searchsorted(mu1.positions, y, side="right"))
    if k == 0:
        return 0.0
    pos = mu1.positions[:k]
    return float(np.dot(mu1.weights[:k], model(pos, mu1, mu2)))


def xi_on_grid(nodes: np.ndarray, mu1: FiniteMeasure, mu2: FiniteMeasure,
               model: MigrationIntensity) -> np.ndarray:
    """xi(node, mu1, mu2) for every grid node at once (shared eta evaluation)."""
    if mu1.n_atoms == 0:
        return np.zeros(len(nodes))
    flow = mu1.weights * model(mu1.positions, mu1, mu2)
    cum = np.concatenate([[0.0], np.cumsum(flow)])
    return cum[np.searchsorted(mu1.positions, nodes, side="right")]


@dataclass(frozen=True)
class ImmigrationTarget:
    """Settlement measure chi with its distribution function on the run grid."""

    chi: FiniteMeasure
    chi_cdf: DistributionFunction

    @staticmethod
    def on_grid(chi: FiniteMeasure, grid: Grid) -> "ImmigrationTarget":
        # atoms outside the window are a configuration error, never clipped
        return ImmigrationTarget(chi=chi, chi_cdf=cdf(chi, grid))
