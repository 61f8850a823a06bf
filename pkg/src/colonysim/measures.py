"""Atomic measures, grid distribution functions, and the e^{-|x|}-weighted metric.

Everything downstream (both engines and all diagnostics) funnels through the
types here: `FiniteMeasure` for atomic measures, `DistributionFunction` for
grid CDFs, and `TestFunction` for the observables paired against them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "AtomOutsideWindow",
    "SupportOutsideWindow",
    "Grid",
    "FiniteMeasure",
    "DistributionFunction",
    "TestFunction",
    "QuadratureSpec",
    "integrate",
    "cdf",
    "cdf_windowed",
    "rho",
    "rho_grid",
    "weighted_l2_norm",
    "generalized_inverse",
    "pair_l1",
    "exp_abs_integral",
]


class AtomOutsideWindow(ValueError):
    """An atom lies outside the requested grid window."""


class SupportOutsideWindow(ValueError):
    """A test function's support is not covered by the grid window."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Grid:
    """Uniform spatial grid on [x_min, x_max] with `cells` intervals."""

    x_min: float
    x_max: float
    cells: int

    def __post_init__(self):
        if not (self.x_max > self.x_min):
            raise ValueError("empty window")
        if self.cells < 1:
            raise ValueError("need at least one grid cell")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.cells

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.cells + 1)


@dataclass(frozen=True)
class FiniteMeasure:
    """Atomic finite measure: strictly increasing positions, positive weights.

    Construct through `from_atoms`, which sorts, merges coincident positions
    and drops zero weights. Instances are immutable (arrays are read-only).
    """

    positions: np.ndarray
    weights: np.ndarray
    total_mass: float

    @staticmethod
    def from_atoms(positions, weights) -> "FiniteMeasure":
        pos = np.asarray(positions, dtype=float).ravel()
        w = np.asarray(weights, dtype=float).ravel()
        if pos.shape != w.shape:
            raise ValueError("positions and weights must have equal length")
        if pos.size and not (np.all(np.isfinite(pos)) and np.all(np.isfinite(w))):
            raise ValueError("atoms must be finite")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        if pos.size:
            uniq, inverse = np.unique(pos, return_inverse=True)
            merged = np.zeros(uniq.size)
            np.add.at(merged, inverse, w)
            keep = merged > 0
            pos, w = uniq[keep], merged[keep]
        return FiniteMeasure(_readonly(pos), _readonly(w), float(w.sum()))

    @staticmethod
    def empty() -> "FiniteMeasure":
        return FiniteMeasure.from_atoms([], [])

    @staticmethod
    def point(position: float, weight: float = 1.0) -> "FiniteMeasure":
        return FiniteMeasure.from_atoms([position], [weight])

    @property
    def n_atoms(self) -> int:
        return int(self.positions.size)

    def mass_upto(self, y: float) -> float:
        """mu((-inf, y]); +inf gives the total mass."""
        if y == math.inf:
            return self.total_mass
        k = np.searchsorted(self.positions, y, side="right")
        return float(self.weights[:k].sum())

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("position,weight\n")
            for p, w in zip(self.positions, self.weights):
                fh.write(f"{float(p)!r},{float(w)!r}\n")

    @staticmethod
    def from_csv(path) -> "FiniteMeasure":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if data.size == 0:
            return FiniteMeasure.empty()
        return FiniteMeasure.from_atoms(data[:, 0], data[:, 1])


@dataclass(frozen=True)
class DistributionFunction:
    """Nondecreasing nonnegative grid function, evaluated left-constant.

    Between nodes the value of the left node is used, so `__call__` agrees
    with mu((-inf, y]) for measures whose atoms sit on grid nodes.
    """

    grid: Grid
    values: np.ndarray

    @staticmethod
    def from_values(grid: Grid, values) -> "DistributionFunction":
        v = np.asarray(values, dtype=float).ravel()
        if v.size != grid.cells + 1:
            raise ValueError(f"need {grid.cells + 1} node values, got {v.size}")
        if v[0] < 0:
            raise ValueError("values must be nonnegative")
        if np.any(np.diff(v) < -1e-12 * max(1.0, abs(v[-1]))):
            raise ValueError("values must be nondecreasing")
        return DistributionFunction(grid, _readonly(v))

    def __call__(self, y) -> np.ndarray | float:
        y = np.asarray(y, dtype=float)
        idx = np.clip(
            np.searchsorted(self.grid.nodes, y, side="right") - 1,
            0,
            self.grid.cells,
        )
        out = np.where(y < self.grid.x_min, 0.0, self.values[idx])
        return float(out) if out.ndim == 0 else out

    @property
    def right_end(self) -> float:
        return float(self.values[-1])

    def to_csv(self, path) -> None:
        nodes = self.grid.nodes
        with open(path, "w") as fh:
            fh.write("x,value\n")
            for x, v in zip(nodes, self.values):
                fh.write(f"{float(x)!r},{float(v)!r}\n")


@dataclass(frozen=True)
class TestFunction:
    """Twice differentiable observable with a declared support interval.

    `fn`, `d1`, `d2` must accept numpy arrays; evaluation outside the support
    returns 0 (the callables are never invoked there, so they may be singular
    at the support edge).
    """

    __test__ = False  # not a pytest collectible

    fn: Callable[[np.ndarray], np.ndarray]
    d1: Callable[[np.ndarray], np.ndarray]
    d2: Callable[[np.ndarray], np.ndarray]
    support: tuple[float, float] = (-math.inf, math.inf)
    name: str = "f"

    def _masked(self, which, x):
        x = np.asarray(x, dtype=float)
        lo, hi = self.support
        inside = (x >= lo) & (x <= hi)
        out = np.zeros(x.shape)
        if np.any(inside):
            out[inside] = which(x[inside])
        return float(out) if out.ndim == 0 else out

    def __call__(self, x):
        return self._masked(self.fn, x)

    def deriv1(self, x):
        return self._masked(self.d1, x)

    def deriv2(self, x):
        return self._masked(self.d2, x)

    @property
    def const_value(self) -> float | None:
        """The constant's value for constant functions, else None (fast paths)."""
        return getattr(self, "_const", None)

    @staticmethod
    def constant(value: float = 1.0, name: str = "one") -> "TestFunction":
        f = TestFunction(
            fn=lambda x: np.full(np.shape(x), float(value)),
            d1=lambda x: np.zeros(np.shape(x)),
            d2=lambda x: np.zeros(np.shape(x)),
            support=(-math.inf, math.inf),
            name=name,
        )
        object.__setattr__(f, "_const", float(value))
        return f

    @staticmethod
    def bump(center: float = 0.0, halfwidth: float = 1.0, name: str | None = None) -> "TestFunction":
        """Smooth compactly supported bump exp(1 - 1/(1-z^2)), z=(x-center)/halfwidth."""
        c, r = float(center), float(halfwidth)
        if r <= 0:
            raise ValueError("halfwidth must be positive")

        def _z(x):
            return (x - c) / r

        def fn(x):
            z = _z(x)
            s = 1.0 - z * z
            return np.where(s > 0, np.exp(1.0 - 1.0 / np.maximum(s, 1e-300)), 0.0)

        def d1(x):
            z = _z(x)
            s = 1.0 - z * z
            good = s > 0
            s = np.maximum(s, 1e-300)
            return np.where(good, fn(x) * (-2.0 * z / s**2) / r, 0.0)

        def d2(x):
            z = _z(x)
            s = 1.0 - z * z
            good = s > 0
            s = np.maximum(s, 1e-300)
            term = (4.0 * z * z) / s**4 - 2.0 * (1.0 + 3.0 * z * z) / s**3
            return np.where(good, fn(x) * term / r**2, 0.0)

        return TestFunction(
            fn=fn, d1=d1, d2=d2, support=(c - r, c + r),
            name=name or f"bump[{c:g},{r:g}]",
        )

    @staticmethod
    def from_callables(fn, d1, d2, support, name="f") -> "TestFunction":
        return TestFunction(fn=fn, d1=d1, d2=d2, support=tuple(support), name=name)


@dataclass(frozen=True)
class QuadratureSpec:
    """Composite-Simpson window for the weighted L2 norm."""

    x_min: float = -40.0
    x_max: float = 40.0
    intervals: int = 4096

    def __post_init__(self):
        if self.intervals % 2:
            raise ValueError("Simpson needs an even interval count")


# ---------------------------------------------------------------------------
# operations


def integrate(mu: FiniteMeasure, f: TestFunction) -> float:
    """<mu, f> = sum of weight * f(position)."""
    if mu.n_atoms == 0:
        return 0.0
    return float(np.dot(mu.weights, f(mu.positions)))


def cdf(mu: FiniteMeasure, grid: Grid) -> DistributionFunction:
    """Distribution function of `mu` on `grid`; atoms must lie in the window."""
    if mu.n_atoms and (
        mu.positions[0] < grid.x_min or mu.positions[-1] > grid.x_max
    ):
        raise AtomOutsideWindow(
            f"atoms span [{mu.positions[0]}, {mu.positions[-1]}], "
            f"window is [{grid.x_min}, {grid.x_max}]"
        )
    return cdf_windowed(mu, grid)


def cdf_windowed(mu: FiniteMeasure, grid: Grid) -> DistributionFunction:
    """Like `cdf` but atoms outside the window are clipped, not errors.

    Mass below x_min counts at every node; mass above x_max is dropped, so
    the right end underestimates the total. Used for windowed comparisons.
    """
    nodes = grid.nodes
    counts = np.searchsorted(mu.positions, nodes, side="right")
    cw = np.concatenate([[0.0], np.cumsum(mu.weights)])
    return DistributionFunction(grid, _readonly(cw[counts]))


def exp_abs_integral(a: float, b: float) -> float:
    """Closed form of the integral of e^{-|x|} over [a, b] (a <= b, +-inf ok)."""

    def F(x: float) -> float:
        if x == -math.inf:
            return 0.0
        if x == math.inf:
            return 2.0
        return math.exp(x) if x <= 0 else 2.0 - math.exp(-x)

    return F(b) - F(a)


def rho(nu1: FiniteMeasure, nu2: FiniteMeasure) -> float:
    """Weighted-CDF distance, computed exactly piecewise.

    Both CDFs are constant between consecutive atom positions, so each piece
    contributes |c| * int e^{-|x|} with a closed-form antiderivative; the
    leading tail vanishes and the trailing tail uses the mass difference.
    """
    points = np.union1d(nu1.positions, nu2.positions)
    if points.size == 0:
        return 0.0
    c1 = np.concatenate([[0.0], np.cumsum(nu1.weights)])
    c2 = np.concatenate([[0.0], np.cumsum(nu2.weights)])
    v1 = c1[np.searchsorted(nu1.positions, points, side="right")]
    v2 = c2[np.searchsorted(nu2.positions, points, side="right")]
    total = 0.0
    for i in range(points.size - 1):
        diff = abs(v1[i] - v2[i])
        if diff:
            total += diff * exp_abs_integral(points[i], points[i + 1])
    tail = abs(v1[-1] - v2[-1])
    if tail:
        total += tail * exp_abs_integral(points[-1], math.inf)
    return total


def rho_grid(u1: DistributionFunction, u2: DistributionFunction) -> float:
    """Windowed version of `rho` for grid CDFs (left-constant convention)."""
    if u1.grid != u2.grid:
        raise ValueError("grids differ")
    nodes = u1.grid.nodes
    diff = np.abs(u1.values[:-1] - u2.values[:-1])
    pieces = [exp_abs_integral(nodes[j], nodes[j + 1]) for j in range(len(nodes) - 1)]
    return float(np.dot(diff, pieces))


def _simpson(y: np.ndarray, h: float) -> float:
    w = np.ones(y.size)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return float(np.dot(w, y) * h / 3.0)


def weighted_l2_norm(f: TestFunction, quad: QuadratureSpec = QuadratureSpec()) -> float:
    """sqrt(int f(x)^2 e^{-|x|} dx) by composite Simpson, split at the kink."""
    lo, hi = f.support
    if lo < quad.x_min or hi > quad.x_max:
        if not (lo == -math.inf and hi == math.inf):
            raise ValueError("quadrature window does not cover the support")

    def piece(a: float, b: float) -> float:
        if b <= a:
            return 0.0
        x = np.linspace(a, b, quad.intervals + 1)
        y = f(x) ** 2 * np.exp(-np.abs(x))
        return _simpson(y, (b - a) / quad.intervals)

    if quad.x_min < 0.0 < quad.x_max:
        total = piece(quad.x_min, 0.0) + piece(0.0, quad.x_max)
    else:
        total = piece(quad.x_min, quad.x_max)
    return math.sqrt(max(total, 0.0))


def generalized_inverse(u: DistributionFunction, a: float) -> float:
    """inf{x on the grid : u(x) > a}; +inf when no node exceeds `a`."""
    if a < 0:
        raise ValueError("level must be nonnegative")
    idx = np.searchsorted(u.values, a, side="right")
    if idx >= u.values.size:
        return math.inf
    return float(u.grid.nodes[idx])


def pair_l1(u: DistributionFunction, f: TestFunction) -> float:
    """Trapezoid approximation of int u(x) f(x) dx over the grid window."""
    lo, hi = f.support
    if lo < u.grid.x_min or hi > u.grid.x_max:
        raise SupportOutsideWindow(
            f"support [{lo}, {hi}] exceeds window [{u.grid.x_min}, {u.grid.x_max}]"
        )
    nodes = u.grid.nodes
    y = u.values * f(nodes)
    return float(np.trapezoid(y, dx=u.grid.dx))
