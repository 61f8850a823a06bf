"""Two-colony branching particle system with one-way migration.

Time is discretized with step h. Per particle and step the three random
events (branching, emigration, survival) are realized through a single
uniform draw, so they are mutually exclusive with marginal probabilities
exactly rate*h and h*eta. Emigration intensities are frozen at the
start-of-step empirical measures.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .measures import FiniteMeasure, Grid, TestFunction, cdf_windowed, integrate
from .params import ModelParams, OffspringLaw
from .records import CdfSnapshot, ObservableSeries, PathRecord

__all__ = ["ParticleState", "EventCounts", "init", "step", "run", "empirical", "run_baseline"]


@dataclass
class EventCounts:
    births1: int = 0
    deaths1: int = 0
    births2: int = 0
    deaths2: int = 0
    migrations: int = 0
    branch_mass_delta1: float = 0.0
    branch_mass_delta2: float = 0.0
    immigrant_mass: float = 0.0


@dataclass
class ParticleState:
    time: float
    pos1: np.ndarray
    w1: float              # colony-1 particles all carry weight 1/n
    pos2: np.ndarray
    w2: np.ndarray         # colony-2 weights: 1/n, <chi,1>/n, and inherited
    params: ModelParams
    rng: np.random.Generator

    @property
    def mass1(self) -> float:
        return self.w1 * self.pos1.size

    @property
    def mass2(self) -> float:
        return float(self.w2.sum())


def _rng_for(seed: int, replica: int) -> np.random.Generator:
    # Philox: counter-based, so replica streams are independent of scheduling.
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy=(seed, replica))))


def init(params: ModelParams, seed: int, replica: int = 0) -> ParticleState:
    params.validate()
    rng = _rng_for(seed, replica)
    pos1 = params.initial1.realize(params.n, rng)
    pos2 = params.initial2.realize(params.n, rng)
    w = 1.0 / params.n
    return ParticleState(
        time=0.0,
        pos1=pos1,
        w1=w,
        pos2=pos2,
        w2=np.full(pos2.size, w),
        params=params,
        rng=rng,
    )


def empirical(state: ParticleState, colony: int) -> FiniteMeasure:
    if colony == 1:
        return FiniteMeasure.from_atoms(state.pos1, np.full(state.pos1.size, state.w1))
    return FiniteMeasure.from_atoms(state.pos2, state.w2)


class _EtaContext:
    """Start-of-step eta evaluation, frozen for the duration of one step."""

    def __init__(self, state: ParticleState):
        model = state.params.eta
        self.model = model
        if model.position_dependent:
            self.mu1 = empirical(state, 1)
            self.mu2 = empirical(state, 2)
            self.scalar = None
        else:
            self.mu1 = None
            self.mu2 = None
            self.scalar = model.value_for_masses(state.mass1, state.mass2)

    def at(self, x: np.ndarray) -> np.ndarray:
        if self.scalar is not None:
            return np.full(x.shape, self.scalar)
        return self.model(x, self.mu1, self.mu2)


def _sample_atoms(measure: FiniteMeasure, size: int, rng: np.random.Generator) -> np.ndarray:
    cum = np.cumsum(measure.weights) / measure.total_mass
    idx = np.minimum(np.searchsorted(cum, rng.random(size), side="right"),
                     measure.n_atoms - 1)
    return measure.positions[idx]


def _branch(pos: np.ndarray, w, u: np.ndarray, p_branch: float, law: OffspringLaw,
            blocked: np.ndarray | None, rng: np.random.Generator):
    """Apply the branching stage; `blocked` marks particles taken by migration."""
    branch = u < p_branch
    if blocked is not None:
        keep = ~branch & ~blocked
    else:
        keep = ~branch
    n_br = int(branch.sum())
    xi = law.sample(rng.random(n_br)) if n_br else np.zeros(0, dtype=np.int64)
    new_pos = np.concatenate([pos[keep], np.repeat(pos[branch], xi)])
    if np.isscalar(w):
        dm = (int(xi.sum()) - n_br) * w
        new_w = None
    else:
        wb = w[branch]
        dm = float(np.dot(xi - 1, wb))
        new_w = np.concatenate([w[keep], np.repeat(wb, xi)])
    return new_pos, new_w, n_br, int(xi.sum()), dm, branch


def step(state: ParticleState, _ctx: _EtaContext | None = None) -> tuple[ParticleState, EventCounts]:
    p = state.params
    h = p.step
    rng = state.rng
    ctx = _ctx if _ctx is not None else _EtaContext(state)
    counts = EventCounts()

    law1 = p.colony1.offspring(p.n)
    law2 = p.colony2.offspring(p.n)
    p_b1 = p.colony1.rate * h
    p_b2 = p.colony2.rate * h

    # colony 1: diffuse, then one categorical draw per particle
    pos1 = state.pos1 + math.sqrt(h) * rng.standard_normal(state.pos1.size)
    u1 = rng.random(pos1.size)
    p_mig = h * ctx.scalar if ctx.scalar is not None else h * ctx.at(pos1)
    migrate = (u1 >= p_b1) & (u1 < p_b1 + p_mig)
    new_pos1, _, n_br1, births1, dm1, _ = _branch(pos1, state.w1, u1, p_b1, law1, migrate, rng)
    counts.deaths1 = n_br1
    counts.births1 = births1
    counts.branch_mass_delta1 = dm1
    counts.migrations = int(migrate.sum())

    # colony 2: diffuse and branch only
    pos2 = state.pos2 + math.sqrt(h) * rng.standard_normal(state.pos2.size)
    u2 = rng.random(pos2.size)
    new_pos2, new_w2, n_br2, births2, dm2, _ = _branch(pos2, state.w2, u2, p_b2, law2, None, rng)
    counts.deaths2 = n_br2
    counts.births2 = births2
    counts.branch_mass_delta2 = dm2

    # immigrants settle in colony 2, one deposit of mass <chi,1>/n per event
    if counts.migrations:
        im_pos = _sample_atoms(p.chi, counts.migrations, rng)
        im_w = p.chi.total_mass / p.n
        new_pos2 = np.concatenate([new_pos2, im_pos])
        new_w2 = np.concatenate([new_w2, np.full(counts.migrations, im_w)])
        counts.immigrant_mass = counts.migrations * im_w

    new_state = ParticleState(
        time=state.time + h,
        pos1=new_pos1,
        w1=state.w1,
        pos2=new_pos2,
        w2=new_w2,
        params=p,
        rng=rng,
    )
    return new_state, counts


def _steps_for(T: float, h: float) -> int:
    steps = int(math.floor(T / h + 1e-9))
    if abs(steps * h - T) > 1e-9 * max(1.0, abs(T)):
        warnings.warn(f"T={T} is not a multiple of h={h}; truncating to {steps * h}")
    return steps


class _SeriesBuffer:
    """Per-observable series accumulated while the chain runs."""

    def __init__(self, f: TestFunction, colony: int, size: int,
                 chi_pair: float | None, track_eta: bool):
        self.f = f
        self.colony = colony
        self.chi_pair = chi_pair
        self.value = np.zeros(size)
        self.value_sq = np.zeros(size)
        self.value_ddf = np.zeros(size)
        self.value_dfsq = np.zeros(size)
        self.value_feta = np.zeros(size) if track_eta else None
        self.value_fsq_eta = np.zeros(size) if track_eta else None

    def record(self, j: int, pos: np.ndarray, w,
               eta_scalar: float | None = None, eta_vals: np.ndarray | None = None):
        """Colony 1 passes exactly one of eta_scalar (position-free models)
        or eta_vals (per-particle values); a position-free eta factorizes
        as <mu, f eta> = eta * <mu, f>."""
        c = self.f.const_value
        scalar_w = np.isscalar(w)
        if c is not None:
            mass = w * pos.size if scalar_w else float(w.sum())
            self.value[j] = c * mass
            self.value_sq[j] = c * c * mass
            if self.value_feta is not None:
                if eta_scalar is not None:
                    eta_mass = eta_scalar * mass
                elif eta_vals is not None:
                    eta_mass = w * eta_vals.sum() if scalar_w else float(np.dot(w, eta_vals))
                else:
                    return
                self.value_feta[j] = c * eta_mass
                self.value_fsq_eta[j] = c * c * eta_mass
            return
        fx = self.f(pos)
        d1 = self.f.deriv1(pos)
        d2 = self.f.deriv2(pos)
        if scalar_w:
            self.value[j] = w * fx.sum()
            self.value_sq[j] = w * np.dot(fx, fx)
            self.value_ddf[j] = w * d2.sum()
            self.value_dfsq[j] = w * np.dot(d1, d1)
        else:
            self.value[j] = np.dot(w, fx)
            self.value_sq[j] = np.dot(w, fx * fx)
            self.value_ddf[j] = np.dot(w, d2)
            self.value_dfsq[j] = np.dot(w, d1 * d1)
        if self.value_feta is not None:
            if eta_scalar is not None:
                self.value_feta[j] = eta_scalar * self.value[j]
                self.value_fsq_eta[j] = eta_scalar * self.value_sq[j]
            elif eta_vals is not None:
                wv = fx * (w if scalar_w else np.asarray(w))
                self.value_feta[j] = float(np.dot(wv, eta_vals))
                self.value_fsq_eta[j] = float(np.dot(wv * fx, eta_vals))


def _cumsum_excl(x: np.ndarray, h: float) -> np.ndarray:
    return h * np.concatenate([[0.0], np.cumsum(x[:-1])])


def run(
    params: ModelParams,
    T: float,
    observables1: list[TestFunction],
    observables2: list[TestFunction],
    seed: int,
    replica: int = 0,
    snapshot_times: tuple[float, ...] = (),
    snapshot_grid: Grid | None = None,
    config_hash: str = "",
) -> PathRecord:
    state = init(params, seed, replica)
    h = params.step
    steps = _steps_for(T, h)
    size = steps + 1

    buffers = [_SeriesBuffer(f, 1, size, None, track_eta=True) for f in observables1]
    buffers += [
        _SeriesBuffer(g, 2, size, integrate(params.chi, g), track_eta=False)
        for g in observables2
    ]
    mass1 = np.zeros(size)
    mass2 = np.zeros(size)
    flow = np.zeros(size)
    events = {
        "branch_mass1": np.zeros(size),
        "branch_mass2": np.zeros(size),
        "migrations": np.zeros(size),
        "immigrant_mass": np.zeros(size),
        "births1": np.zeros(size),
        "deaths1": np.zeros(size),
        "births2": np.zeros(size),
        "deaths2": np.zeros(size),
    }
    snapshots: list[CdfSnapshot] = []
    snap_left = sorted(snapshot_times)

    for j in range(size):
        ctx = _EtaContext(state)
        mass1[j] = state.mass1
        mass2[j] = state.mass2
        if ctx.scalar is not None:
            eta_scalar, eta_vals = ctx.scalar, None
            flow[j] = eta_scalar * mass1[j]
        else:
            eta_scalar, eta_vals = None, ctx.at(state.pos1)
            flow[j] = state.w1 * eta_vals.sum()
        for buf in buffers:
            if buf.colony == 1:
                buf.record(j, state.pos1, state.w1, eta_scalar, eta_vals)
            else:
                buf.record(j, state.pos2, state.w2)
        while snap_left and state.time >= snap_left[0] - 1e-9:
            t_snap = snap_left.pop(0)
            if snapshot_grid is not None:
                for colony in (1, 2):
                    mu = empirical(state, colony)
                    u = cdf_windowed(mu, snapshot_grid)
                    snapshots.append(CdfSnapshot(t_snap, colony, snapshot_grid, u.values))
        if j == steps:
            break
        state, counts = step(state, ctx)
        events["branch_mass1"][j + 1] = counts.branch_mass_delta1
        events["branch_mass2"][j + 1] = counts.branch_mass_delta2
        events["migrations"][j + 1] = counts.migrations
        events["immigrant_mass"][j + 1] = counts.immigrant_mass
        events["births1"][j + 1] = counts.births1
        events["deaths1"][j + 1] = counts.deaths1
        events["births2"][j + 1] = counts.births2
        events["deaths2"][j + 1] = counts.deaths2

    times = np.arange(size) * h
    b1, b2 = params.b(1), params.b(2)
    observables = []
    for buf in buffers:
        if buf.colony == 1:
            drift = 0.5 * buf.value_ddf + b1 * buf.value - buf.value_feta
        else:
            drift = 0.5 * buf.value_ddf + b2 * buf.value + buf.chi_pair * flow
        observables.append(ObservableSeries(
            name=buf.f.name,
            colony=buf.colony,
            value=buf.value,
            compensator=_cumsum_excl(drift, h),
            value_sq=buf.value_sq,
            value_ddf=buf.value_ddf,
            value_dfsq=buf.value_dfsq,
            value_feta=buf.value_feta,
            value_fsq_eta=buf.value_fsq_eta,
            chi_pair=buf.chi_pair,
        ))

    return PathRecord(
        engine="particles",
        times=times,
        mass1=mass1,
        mass2=mass2,
        flow=flow,
        observables=observables,
        replica=replica,
        seed=seed,
        config_hash=config_hash,
        model_info={
            "n": params.n,
            "h": h,
            "gamma1": params.gamma(1),
            "gamma2": params.gamma(2),
            "b1": b1,
            "b2": b2,
            "chi_mass": params.chi.total_mass,
            "eta_bound": params.eta.bound,
        },
        events=events,
        snapshots=snapshots,
    )


def run_baseline(
    n: int,
    branching,
    kappa: FiniteMeasure,
    initial,
    T: float,
    observables: list[TestFunction],
    seed: int,
    replica: int = 0,
    h: float | None = None,
    config_hash: str = "",
) -> PathRecord:
    """Single-colony chain with constant immigration flow kappa.

    Each step deposits one particle of mass <kappa,1>*h at a position drawn
    from normalized kappa, so the mean inflow is exactly <kappa,.> per unit
    time; kappa = 0 is the plain critical/near-critical branching colony.
    """
    from .params import InitialSpec  # local import keeps module init cheap

    h = h if h is not None else 1.0 / n
    if branching.rate * h > 0.2 + 1e-12:
        raise ValueError(f"rate*h = {branching.rate * h:.4g} violates rate*h <= 0.2")
    law = branching.offspring(n)
    steps = _steps_for(T, h)
    size = steps + 1
    rng = _rng_for(seed, replica)
    spec = initial if isinstance(initial, InitialSpec) else InitialSpec.at(initial)
    pos = spec.realize(n, rng)
    weights = np.full(pos.size, 1.0 / n)

    buffers = [_SeriesBuffer(f, 1, size, integrate(kappa, f), track_eta=False)
               for f in observables]
    mass = np.zeros(size)
    events = {
        "branch_mass1": np.zeros(size),
        "immigrant_mass": np.zeros(size),
        "births1": np.zeros(size),
        "deaths1": np.zeros(size),
    }
    p_b = branching.rate * h
    deposit = kappa.total_mass * h

    for j in range(size):
        mass[j] = float(weights.sum())
        for buf in buffers:
            buf.record(j, pos, weights, None)
        if j == steps:
            break
        pos = pos + math.sqrt(h) * rng.standard_normal(pos.size)
        u = rng.random(pos.size)
        pos, weights, n_br, births, dm, _ = _branch(pos, weights, u, p_b, law, None, rng)
        if deposit > 0:
            im_pos = _sample_atoms(kappa, 1, rng)
            pos = np.concatenate([pos, im_pos])
            weights = np.concatenate([weights, [deposit]])
        events["branch_mass1"][j + 1] = dm
        events["immigrant_mass"][j + 1] = deposit
        events["births1"][j + 1] = births
        events["deaths1"][j + 1] = n_br

    times = np.arange(size) * h
    lam = branching.rate / n
    b = branching.beta * lam
    observables_out = []
    for buf in buffers:
        drift = 0.5 * buf.value_ddf + b * buf.value + buf.chi_pair
        observables_out.append(ObservableSeries(
            name=buf.f.name,
            colony=1,
            value=buf.value,
            compensator=_cumsum_excl(drift, h),
            value_sq=buf.value_sq,
            value_ddf=buf.value_ddf,
            value_dfsq=buf.value_dfsq,
            chi_pair=buf.chi_pair,
        ))
    return PathRecord(
        engine="baseline",
        times=times,
        mass1=mass,
        mass2=np.zeros(size),
        flow=np.zeros(size),
        observables=observables_out,
        replica=replica,
        seed=seed,
        config_hash=config_hash,
        model_info={
            "n": n,
            "h": h,
            "gamma1": branching.sigma_sq * lam,
            "gamma2": 0.0,
            "b1": b,
            "b2": 0.0,
            "chi_mass": kappa.total_mass,
            "eta_bound": 0.0,
        },
        events=events,
    )
