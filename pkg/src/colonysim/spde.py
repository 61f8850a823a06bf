"""Explicit Euler scheme for the coupled distribution-function-valued system.

The driving noise is realized on an auxiliary a-grid: each colony draws one
vector of cell increments per step, and the noise at a spatial node is the
cumulative sum over the cells lying below the current height u(y). Nodes
with larger height therefore sum strictly more of the same cells, which is
what couples spatial points. After every update the left node is pinned at
0 and the state is clipped at 0 and projected back onto monotone profiles.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .measures import DistributionFunction, FiniteMeasure, Grid, TestFunction
from .migration import xi_on_grid
from .params import ModelParams
from .records import CdfSnapshot, ObservableSeries, PathRecord

__all__ = [
    "StabilityViolation",
    "WindowTooSmall",
    "HeightOverflow",
    "SchemeSpec",
    "SpdeState",
    "isotonic_projection",
    "cell_counts",
    "spde_init",
    "spde_step",
    "spde_run",
    "to_measure",
    "measure_of",
]

CELL_RULES = ("midpoint", "floor", "fractional")


class StabilityViolation(ValueError):
    """Time step too large for the explicit heat stencil."""


class WindowTooSmall(ValueError):
    """Spatial window or a-axis height cannot hold the initial data."""


class HeightOverflow(RuntimeError):
    """The solution exceeded the configured a-axis height A_max."""


@dataclass(frozen=True)
class SchemeSpec:
    grid: Grid
    dt: float
    da: float
    a_max: float
    cell_rule: str = "midpoint"

    def __post_init__(self):
        if self.dt <= 0:
            raise StabilityViolation("dt must be positive")
        if self.dt > self.grid.dx**2 / 2 + 1e-15:
            raise StabilityViolation(
                f"dt = {self.dt:.4g} violates dt <= dx^2/2 = {self.grid.dx**2 / 2:.4g}"
            )
        if self.a_max <= 0 or self.da <= 0:
            raise ValueError("da and a_max must be positive")
        if self.da > 0.05 * self.a_max + 1e-15:
            raise ValueError(
                f"da = {self.da:.4g} violates da <= 0.05*A_max = {0.05 * self.a_max:.4g}"
            )
        if self.cell_rule not in CELL_RULES:
            raise ValueError(f"cell_rule must be one of {CELL_RULES}")

    @property
    def n_cells(self) -> int:
        return int(math.ceil(self.a_max / self.da - 1e-12))


@dataclass
class SpdeState:
    time: float
    u1: np.ndarray
    u2: np.ndarray
    params: ModelParams
    spec: SchemeSpec
    chi_vals: np.ndarray  # distribution function of chi on the grid nodes
    rng: np.random.Generator
    # per-step projection diagnostics (refreshed by spde_step)
    last_violation_mass: tuple[float, float] = (0.0, 0.0)
    last_right_end_shift: tuple[float, float] = (0.0, 0.0)


def isotonic_projection(y: np.ndarray) -> np.ndarray:
    """L2 projection onto nondecreasing sequences (pool adjacent violators)."""
    d = np.diff(y)
    if not d.size or d.min() >= 0.0:
        return y.copy()
    n = y.size
    means = np.empty(n)
    counts = np.empty(n, dtype=np.int64)
    k = 0
    for v in y:
        means[k] = v
        counts[k] = 1
        k += 1
        while k > 1 and means[k - 2] > means[k - 1]:
            tot = counts[k - 2] + counts[k - 1]
            means[k - 2] = (means[k - 2] * counts[k - 2] + means[k - 1] * counts[k - 1]) / tot
            counts[k - 2] = tot
            k -= 1
    out = np.empty(n)
    i = 0
    for j in range(k):
        out[i:i + counts[j]] = means[j]
        i += counts[j]
    return out


def cell_counts(u: np.ndarray, spec: SchemeSpec) -> np.ndarray:
    """Number of a-cells feeding the noise at each node, per the cell rule."""
    ratio = u / spec.da
    if spec.cell_rule == "midpoint":
        counts = np.ceil(ratio - 0.5)
    else:  # floor and fractional share the full-cell count
        counts = np.floor(ratio)
    return np.clip(counts, 0, spec.n_cells).astype(np.int64)


def _nested_noise(u: np.ndarray, gamma: float, spec: SchemeSpec,
                  dW: np.ndarray) -> np.ndarray:
    cum = np.concatenate([[0.0], np.cumsum(dW)])
    counts = cell_counts(u, spec)
    noise = cum[counts]
    if spec.cell_rule == "fractional":
        frac = np.clip(u / spec.da - counts, 0.0, 1.0)
        idx = np.minimum(counts, spec.n_cells - 1)
        noise = noise + np.where(counts < spec.n_cells, frac * dW[idx], 0.0)
    return math.sqrt(gamma) * noise


def measure_of(u: DistributionFunction) -> FiniteMeasure:
    """Grid-increment measure of u: atoms at nodes, weights u_j - u_{j-1}."""
    nodes = u.grid.nodes
    w = np.concatenate([[u.values[0]], np.diff(u.values)])
    keep = w > 0
    return FiniteMeasure.from_atoms(nodes[keep], w[keep])


def to_measure(state: SpdeState, colony: int) -> FiniteMeasure:
    u = state.u1 if colony == 1 else state.u2
    return measure_of(DistributionFunction(state.spec.grid, u))


def spde_init(
    params: ModelParams,
    u0_1: DistributionFunction,
    u0_2: DistributionFunction,
    spec: SchemeSpec,
    seed: int,
    replica: int = 0,
) -> SpdeState:
    from .measures import cdf
    from .particles import _rng_for

    for name, u0 in (("u0_1", u0_1), ("u0_2", u0_2)):
        if u0.grid != spec.grid:
            raise WindowTooSmall(f"{name} lives on a different grid than the scheme")
        if u0.values[0] != 0.0:
            raise WindowTooSmall(f"{name} has mass at or below the left edge; widen the window")
    top = max(u0_1.right_end, u0_2.right_end)
    if top > 0 and spec.a_max < 4.0 * top:
        raise WindowTooSmall(
            f"A_max = {spec.a_max:.4g} must be at least 4x the initial mass {top:.4g}"
        )
    chi_vals = cdf(params.chi, spec.grid).values
    return SpdeState(
        time=0.0,
        u1=u0_1.values.copy(),
        u2=u0_2.values.copy(),
        params=params,
        spec=spec,
        chi_vals=chi_vals,
        rng=_rng_for(seed, replica),
    )


def _laplacian(u: np.ndarray, dx: float) -> np.ndarray:
    lap = np.zeros_like(u)
    lap[1:-1] = (u[:-2] - 2.0 * u[1:-1] + u[2:]) / dx**2
    lap[-1] = 2.0 * (u[-2] - u[-1]) / dx**2  # Neumann mirror node
    return lap


def _drift_fields(state: SpdeState) -> tuple[np.ndarray, np.ndarray, float]:
    """Deterministic update fields dt*(lap/2 + b u + m_i), plus the total flow."""
    p, spec = state.params, state.spec
    nodes = spec.grid.nodes
    dx = spec.grid.dx
    mu1 = measure_of(DistributionFunction(spec.grid, state.u1))
    mu2 = measure_of(DistributionFunction(spec.grid, state.u2))
    xi_vals = xi_on_grid(nodes, mu1, mu2, p.eta)
    total_flow = float(xi_vals[-1])
    d1 = spec.dt * (0.5 * _laplacian(state.u1, dx) + p.b(1) * state.u1 - xi_vals)
    d2 = spec.dt * (0.5 * _laplacian(state.u2, dx) + p.b(2) * state.u2
                    + state.chi_vals * total_flow)
    d1[0] = 0.0
    d2[0] = 0.0
    return d1, d2, total_flow


def spde_step(state: SpdeState) -> SpdeState:
    d1, d2, _ = _drift_fields(state)
    return _apply_noise_and_project(state, d1, d2)


class _SpdeObs:
    """Node evaluations of one observable, for pairing against u and d(u)."""

    def __init__(self, f: TestFunction, colony: int, nodes: np.ndarray, dx: float, size: int):
        self.f = f
        self.colony = colony
        self.fx = f(nodes)
        self.fsq = self.fx**2
        # f~(y) = integral of f from y to the right edge (reverse trapezoid)
        rev = np.concatenate([[0.0], np.cumsum((self.fx[1:] + self.fx[:-1]) / 2.0 * dx)])
        self.ftilde = rev[-1] - rev
        self.ftilde_sq = self.ftilde**2
        self.dx = dx
        self.value = np.zeros(size)
        self.value_sq = np.zeros(size)
        self.comp = np.zeros(size)
        self.value_l1 = np.zeros(size)
        self.value_l1_sq = np.zeros(size)
        self.comp_l1 = np.zeros(size)

    def record_state(self, j: int, u: np.ndarray):
        w = np.concatenate([[u[0]], np.diff(u)])
        self.value[j] = float(np.dot(w, self.fx))
        self.value_sq[j] = float(np.dot(w, self.fsq))
        self.value_l1[j] = float(np.trapezoid(u * self.fx, dx=self.dx))
        self.value_l1_sq[j] = float(np.dot(w, self.ftilde_sq))

    def record_drift(self, j: int, drift: np.ndarray):
        # increments accumulate into the compensator at the *next* mesh index
        w = np.concatenate([[drift[0]], np.diff(drift)])
        self.comp[j + 1] = self.comp[j] + float(np.dot(w, self.fx))
        self.comp_l1[j + 1] = self.comp_l1[j] + float(np.trapezoid(drift * self.fx, dx=self.dx))


def spde_run(
    params: ModelParams,
    T: float,
    spec: SchemeSpec,
    u0_1: DistributionFunction,
    u0_2: DistributionFunction,
    observables1: list[TestFunction],
    observables2: list[TestFunction],
    seed: int,
    replica: int = 0,
    snapshot_times: tuple[float, ...] = (),
    config_hash: str = "",
) -> PathRecord:
    state = spde_init(params, u0_1, u0_2, spec, seed, replica)
    steps = int(math.floor(T / spec.dt + 1e-9))
    if abs(steps * spec.dt - T) > 1e-9 * max(1.0, abs(T)):
        warnings.warn(f"T={T} is not a multiple of dt={spec.dt}; truncating to {steps * spec.dt}")
    size = steps + 1
    nodes = spec.grid.nodes

    obs = [_SpdeObs(f, 1, nodes, spec.grid.dx, size) for f in observables1]
    obs += [_SpdeObs(g, 2, nodes, spec.grid.dx, size) for g in observables2]
    mass1 = np.zeros(size)
    mass2 = np.zeros(size)
    flow = np.zeros(size)
    proj_viol = np.zeros((size, 2))
    proj_shift = np.zeros((size, 2))
    snapshots: list[CdfSnapshot] = []
    snap_left = sorted(snapshot_times)

    for j in range(size):
        mass1[j] = state.u1[-1]
        mass2[j] = state.u2[-1]
        for ob in obs:
            ob.record_state(j, state.u1 if ob.colony == 1 else state.u2)
        while snap_left and state.time >= snap_left[0] - 1e-9:
            t_snap = snap_left.pop(0)
            snapshots.append(CdfSnapshot(t_snap, 1, spec.grid, state.u1.copy()))
            snapshots.append(CdfSnapshot(t_snap, 2, spec.grid, state.u2.copy()))
        d1, d2, total_flow = _drift_fields(state)
        flow[j] = total_flow
        if j == steps:
            break
        for ob in obs:
            ob.record_drift(j, d1 if ob.colony == 1 else d2)
        state = _apply_noise_and_project(state, d1, d2)
        proj_viol[j + 1] = state.last_violation_mass
        proj_shift[j + 1] = state.last_right_end_shift

    times = np.arange(size) * spec.dt
    observables = []
    for ob in obs:
        observables.append(ObservableSeries(
            name=ob.f.name,
            colony=ob.colony,
            value=ob.value,
            compensator=ob.comp,
            value_sq=ob.value_sq,
        ))
        observables.append(ObservableSeries(
            name=ob.f.name + "+l1",
            colony=ob.colony,
            value=ob.value_l1,
            compensator=ob.comp_l1,
            value_sq=ob.value_l1_sq,
        ))
    return PathRecord(
        engine="spde",
        times=times,
        mass1=mass1,
        mass2=mass2,
        flow=flow,
        observables=observables,
        replica=replica,
        seed=seed,
        config_hash=config_hash,
        model_info={
            "n": None,
            "h": spec.dt,
            "gamma1": params.gamma(1),
            "gamma2": params.gamma(2),
            "b1": params.b(1),
            "b2": params.b(2),
            "chi_mass": params.chi.total_mass,
            "eta_bound": params.eta.bound,
        },
        events={
            "proj_violation1": proj_viol[:, 0],
            "proj_violation2": proj_viol[:, 1],
            "proj_right_shift1": proj_shift[:, 0],
            "proj_right_shift2": proj_shift[:, 1],
        },
        snapshots=snapshots,
    )


def _apply_noise_and_project(state: SpdeState, d1: np.ndarray, d2: np.ndarray) -> SpdeState:
    """The stochastic half of spde_step, reusing precomputed drift fields."""
    spec = state.spec
    new_u, viol, shift = [], [], []
    for u, drift, gamma in (
        (state.u1, d1, state.params.gamma(1)),
        (state.u2, d2, state.params.gamma(2)),
    ):
        dW = state.rng.standard_normal(spec.n_cells) * math.sqrt(spec.dt * spec.da)
        noise = _nested_noise(u, gamma, spec, dW) if gamma > 0 else 0.0
        raw = np.maximum(u + drift + noise, 0.0)
        raw[0] = 0.0
        neg = np.diff(raw)
        viol.append(float(-neg[neg < 0].sum()) if neg.size else 0.0)
        proj = isotonic_projection(raw)
        proj[0] = 0.0
        shift.append(abs(float(proj[-1] - raw[-1])))
        if proj[-1] > spec.a_max + 1e-12:
            raise HeightOverflow(
                f"u reached {proj[-1]:.4g} > A_max = {spec.a_max:.4g} at t={state.time:.4g}"
            )
        new_u.append(proj)
    return SpdeState(
        time=state.time + spec.dt,
        u1=new_u[0],
        u2=new_u[1],
        params=state.params,
        spec=spec,
        chi_vals=state.chi_vals,
        rng=state.rng,
        last_violation_mass=(viol[0], viol[1]),
        last_right_end_shift=(shift[0], shift[1]),
    )
