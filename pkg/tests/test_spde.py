import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from colonysim.measures import DistributionFunction, FiniteMeasure, Grid, TestFunction, cdf
from colonysim.migration import MigrationIntensity
from colonysim.spde import (
    HeightOverflow,
    SchemeSpec,
    StabilityViolation,
    WindowTooSmall,
    cell_counts,
    isotonic_projection,
    measure_of,
    spde_init,
    spde_run,
    spde_step,
    to_measure,
)

from conftest import basic_params

ONE = TestFunction.constant()
GRID = Grid(-4.0, 4.0, 64)


def scheme(dt=0.005, da=0.05, a_max=4.0, cell_rule="midpoint", grid=GRID):
    return SchemeSpec(grid=grid, dt=dt, da=da, a_max=a_max, cell_rule=cell_rule)


def flat_zero(grid=GRID):
    return DistributionFunction.from_values(grid, np.zeros(grid.cells + 1))


def step_cdf(grid=GRID):
    return cdf(FiniteMeasure.point(0.0, 1.0), grid)


# ---------------------------------------------------------------------------
# scheme and init validation


def test_stability_rejection():
    with pytest.raises(StabilityViolation):
        scheme(dt=GRID.dx**2)  # dt = dx^2 > dx^2/2


def test_da_cap():
    with pytest.raises(ValueError):
        scheme(da=1.0, a_max=4.0)  # da > 0.05 a_max


def test_amax_headroom_checked():
    params = basic_params(n=10, rate1=0.0, rate2=0.0)
    u0 = step_cdf()
    with pytest.raises(WindowTooSmall):
        spde_init(params, u0, u0, scheme(a_max=2.0, da=0.05), seed=1)


def test_left_pin_requires_zero_at_edge():
    params = basic_params(n=10, rate1=0.0, rate2=0.0)
    grid = Grid(0.0, 2.0, 8)
    u0 = cdf(FiniteMeasure.point(0.0, 1.0), grid)  # mass exactly at x_min
    with pytest.raises(WindowTooSmall):
        spde_init(params, u0, u0, scheme(grid=grid, dt=0.001), seed=1)


def test_zero_state_stays_zero_without_flow():
    params = basic_params(n=10, rate1=0.0, rate2=0.0,
                          eta=MigrationIntensity(model="constant", c=0.5))
    state = spde_init(params, flat_zero(), flat_zero(), scheme(), seed=2)
    for _ in range(20):
        state = spde_step(state)
    assert np.all(state.u1 == 0.0)
    assert np.all(state.u2 == 0.0)  # xi = 0 when colony 1 is empty


def test_step_cdf_initial_is_step():
    u0 = step_cdf()
    jump = np.flatnonzero(np.diff(u0.values) > 0)
    assert jump.size == 1
    assert GRID.nodes[jump[0] + 1] == pytest.approx(0.0, abs=GRID.dx)


# ---------------------------------------------------------------------------
# deterministic dynamics


def test_heat_step_linear_profile_invariant_interior():
    params = basic_params(n=10, rate1=0.0, rate2=0.0)  # gamma = 0, b = 0
    grid = Grid(0.0, 2.0, 16)
    vals = np.linspace(0.0, 1.0, 17)
    u0 = DistributionFunction.from_values(grid, vals)
    state = spde_init(params, u0, u0, scheme(grid=grid, dt=0.003, a_max=4.0, da=0.1), seed=3)
    new = spde_step(state)
    # discrete Laplacian of a linear profile vanishes at interior nodes
    assert np.allclose(new.u1[1:-1], vals[1:-1], atol=1e-14)
    assert new.u1[0] == 0.0


def test_linear_drift_exponential_growth():
    # flat-at-the-right profile: right end grows like (1 + b dt)^j -> e^{bt}
    b_rate = 20.0  # beta * rate / n = 2.0 with beta = 10, n = 100: set directly
    params = basic_params(n=100, rate1=20.0, beta1=10.0, sigma_sq=0.0, rate2=0.0,
                          h=0.01)
    assert params.gamma(1) == 0.0 and params.b(1) == pytest.approx(2.0)
    grid = Grid(-6.0, 6.0, 48)
    u0 = cdf(FiniteMeasure.from_atoms([-0.5, 0.5], [0.5, 0.5]), grid)
    spec = scheme(grid=grid, dt=0.01, a_max=8.0, da=0.2)
    state = spde_init(params, u0, u0, spec, seed=4)
    T, steps = 0.5, int(round(0.5 / spec.dt))
    for _ in range(steps):
        state = spde_step(state)
    target = math.exp(params.b(1) * T)
    got = state.u1[-1] / u0.right_end
    assert abs(got - target) <= params.b(1) ** 2 * T * spec.dt * target + 1e-9


def test_monotone_nonnegative_after_every_step(rng):
    params = basic_params(n=100, rate1=20.0, rate2=20.0, sigma_sq=1.0, h=0.01,
                          eta=MigrationIntensity(model="mass_coupled", c=1.0))
    u0 = cdf(FiniteMeasure.from_atoms(np.linspace(-1, 1, 11), np.full(11, 0.1)), GRID)
    state = spde_init(params, u0, u0, scheme(a_max=6.0), seed=5)
    for _ in range(80):
        state = spde_step(state)
        for u in (state.u1, state.u2):
            assert np.all(u >= 0.0)
            assert np.all(np.diff(u) >= -1e-12)
            assert u[0] == 0.0


def test_height_overflow_raised():
    params = basic_params(n=100, rate1=20.0, beta1=10.0, sigma_sq=0.0, rate2=0.0,
                          h=0.01)
    grid = Grid(-2.0, 2.0, 16)
    u0 = cdf(FiniteMeasure.point(0.0, 1.0), grid)
    spec = scheme(grid=grid, dt=0.01, a_max=4.0, da=0.1)
    state = spde_init(params, u0, u0, spec, seed=6)
    with pytest.raises(HeightOverflow):
        for _ in range(200):  # e^{2t} crosses 4 near t = 0.7
            state = spde_step(state)


# ---------------------------------------------------------------------------
# nested noise


def test_cell_counts_rules():
    spec = scheme(da=0.1, a_max=4.0)
    u = np.array([0.0, 0.04, 0.05, 0.1, 0.26, 4.0])
    mid = cell_counts(u, spec)
    # (k + 1/2) da < u: exact lattice values count all full cells
    assert mid.tolist() == [0, 0, 0, 1, 3, 40]
    flo = cell_counts(u, SchemeSpec(GRID, 0.005, 0.1, 4.0, "floor"))
    assert flo.tolist() == [0, 0, 0, 1, 2, 40]


def test_noise_variance_and_covariance(rng):
    # Var = gamma dt da N(y); Cov = gamma dt da N(min u); 4 SE over 2e4 draws
    spec = scheme(da=0.02, a_max=2.0)
    gamma, draws = 0.5, 20_000
    u = np.round(np.linspace(0, 1.2, GRID.cells + 1) / spec.da) * spec.da
    counts = cell_counts(u, spec)
    dW = rng.standard_normal((draws, spec.n_cells)) * math.sqrt(spec.dt * spec.da)
    cums = np.concatenate([np.zeros((draws, 1)), np.cumsum(dW, axis=1)], axis=1)
    noise = math.sqrt(gamma) * cums[:, counts]
    j1, j2 = 20, 50
    t1 = gamma * spec.dt * u[j1]
    t2 = gamma * spec.dt * u[j2]
    tc = gamma * spec.dt * min(u[j1], u[j2])
    v1 = noise[:, j1].var(ddof=1)
    cov = float(np.cov(noise[:, j1], noise[:, j2])[0, 1])
    assert abs(v1 - t1) <= 4 * t1 * math.sqrt(2 / draws)
    assert abs(cov - tc) <= 4 * math.sqrt((t1 * t2 + tc**2) / draws)


def test_noise_nesting_is_prefix_sums():
    spec = scheme()
    u = np.linspace(0, 2.0, GRID.cells + 1)
    counts = cell_counts(u, spec)
    assert np.all(np.diff(counts) >= 0)  # higher u sums strictly more cells


def test_fractional_rule_partial_cell():
    spec = SchemeSpec(GRID, 0.005, 0.1, 4.0, "fractional")
    from colonysim.spde import _nested_noise

    u = np.full(GRID.cells + 1, 0.05)  # half of the first cell
    dW = np.zeros(spec.n_cells)
    dW[0] = 2.0
    noise = _nested_noise(u, 1.0, spec, dW)
    assert np.allclose(noise, 0.5 * 2.0)


# ---------------------------------------------------------------------------
# isotonic projection


def brute_force_isotonic(y, iters=5000):
    # repeated pooling until monotone; O(n^2) reference
    blocks = [[v] for v in y]
    changed = True
    while changed:
        changed = False
        i = 0
        while i < len(blocks) - 1:
            m1 = sum(blocks[i]) / len(blocks[i])
            m2 = sum(blocks[i + 1]) / len(blocks[i + 1])
            if m1 > m2:
                blocks[i] = blocks[i] + blocks[i + 1]
                del blocks[i + 1]
                changed = True
                i = max(i - 1, 0)
            else:
                i += 1
    out = []
    for b in blocks:
        out.extend([sum(b) / len(b)] * len(b))
    return np.array(out)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=24))
def test_pava_matches_brute_force(values):
    y = np.array(values)
    got = isotonic_projection(y)
    want = brute_force_isotonic(y)
    assert np.allclose(got, want, atol=1e-10)
    assert np.all(np.diff(got) >= -1e-12)
    assert got.sum() == pytest.approx(y.sum(), abs=1e-9)  # projection keeps the mean
    again = isotonic_projection(got)
    assert np.allclose(again, got, atol=0)  # idempotent


def test_pava_right_end_shift_bounded(rng):
    for _ in range(200):
        y = rng.normal(0, 1, 30).cumsum()
        y += rng.normal(0, 0.3, 30)  # inject violations
        proj = isotonic_projection(y)
        neg = np.diff(y)
        violation_mass = float(-neg[neg < 0].sum())
        assert abs(proj[-1] - y[-1]) <= violation_mass + 1e-12


# ---------------------------------------------------------------------------
# to_measure round trips


def test_to_measure_step():
    params = basic_params(n=10, rate1=0.0, rate2=0.0)
    u0 = step_cdf()
    state = spde_init(params, u0, u0, scheme(), seed=7)
    mu = to_measure(state, 1)
    assert mu.n_atoms == 1
    assert mu.total_mass == pytest.approx(1.0)


def test_to_measure_linear_uniform_weights():
    grid = Grid(0.0, 1.0, 10)
    u = DistributionFunction.from_values(grid, np.linspace(0, 1, 11))
    mu = measure_of(u)
    assert mu.n_atoms == 10
    assert np.allclose(mu.weights, 0.1)


def test_cdf_roundtrip_on_grid(rng):
    grid = Grid(-2.0, 2.0, 32)
    for _ in range(25):
        vals = np.concatenate([[0.0], np.maximum(rng.normal(0.05, 0.1, 32), 0.0)]).cumsum()
        u = DistributionFunction.from_values(grid, vals)
        mu = measure_of(u)
        back = cdf(mu, grid)
        assert np.allclose(back.values, u.values, atol=1e-12)


# ---------------------------------------------------------------------------
# full runs


def test_run_all_zero_stays_zero():
    params = basic_params(n=10, rate1=0.0, rate2=0.0,
                          eta=MigrationIntensity(model="constant", c=0.2))
    rec = spde_run(params, 0.1, scheme(), flat_zero(), flat_zero(), [ONE], [ONE], seed=8)
    assert np.all(rec.mass1 == 0.0)
    assert np.all(rec.mass2 == 0.0)
    assert np.all(rec.observable("1:one").value == 0.0)


def test_run_residual_identity_and_l1_series():
    params = basic_params(n=100, rate1=20.0, rate2=20.0, sigma_sq=1.0, h=0.01,
                          eta=MigrationIntensity(model="constant", c=0.4))
    u0 = cdf(FiniteMeasure.from_atoms(np.linspace(-1, 1, 11), np.full(11, 0.1)), GRID)
    rec = spde_run(params, 0.2, scheme(a_max=6.0), u0, u0, [ONE], [ONE], seed=9,
                   snapshot_times=(0.1,))
    for key in ("1:one", "1:one+l1", "2:one", "2:one+l1"):
        obs = rec.observable(key)
        assert np.allclose(obs.residual, obs.value - obs.value[0] - obs.compensator)
    assert rec.snapshot(0.1, 1).values.shape == (GRID.cells + 1,)
    assert "proj_violation1" in rec.events


def test_migration_moves_mass_between_colonies():
    # strong constant migration, no branching: colony 1 loses mass at rate
    # c m1, colony 2 gains it (chi mass 1); compare replica means to the ODE
    params = basic_params(n=100, rate1=0.0, rate2=0.0, h=0.01,
                          eta=MigrationIntensity(model="constant", c=0.5))
    u0 = cdf(FiniteMeasure.from_atoms(np.linspace(-1, 1, 11), np.full(11, 0.1)), GRID)
    spec = scheme(dt=0.004, a_max=6.0)
    m0 = u0.right_end
    recs = [spde_run(params, 0.5, spec, u0, u0, [ONE], [ONE], seed=10, replica=r)
            for r in range(3)]
    for rec in recs:  # gamma = 0: single path is deterministic
        decay = math.exp(-0.5 * 0.5)
        assert rec.mass1[-1] == pytest.approx(m0 * decay, rel=0.01)
        assert rec.mass2[-1] == pytest.approx(m0 + m0 * (1.0 - decay), rel=0.01)
        # one-way migration conserves the total up to boundary truncation
        assert rec.mass1[-1] + rec.mass2[-1] == pytest.approx(2 * m0, rel=1e-4)


def test_run_determinism_same_seed():
    params = basic_params(n=100, rate1=20.0, rate2=20.0, sigma_sq=1.0, h=0.01,
                          eta=MigrationIntensity(model="constant", c=0.4))
    u0 = cdf(FiniteMeasure.from_atoms(np.linspace(-1, 1, 11), np.full(11, 0.1)), GRID)
    a = spde_run(params, 0.1, scheme(a_max=6.0), u0, u0, [ONE], [ONE], seed=77)
    b = spde_run(params, 0.1, scheme(a_max=6.0), u0, u0, [ONE], [ONE], seed=77)
    assert np.array_equal(a.mass1, b.mass1)
    assert np.array_equal(a.observable("1:one").residual, b.observable("1:one").residual)
    c = spde_run(params, 0.1, scheme(a_max=6.0), u0, u0, [ONE], [ONE], seed=78)
    assert not np.array_equal(a.observable("1:one").residual, c.observable("1:one").residual)


def test_residual_qv_matches_gamma_pairing():
    # realized QV of the measure-pairing residual for compactly supported f
    # approaches gamma * int <mu_s, f^2> ds; 15% at desk scale
    from colonysim.diagnostics import qv_test

    params = basic_params(n=100, rate1=40.0, rate2=40.0, sigma_sq=1.0, h=0.005)
    f = TestFunction.bump(0.0, 2.5)
    u0 = cdf(FiniteMeasure.from_atoms(np.linspace(-1, 1, 21), np.full(21, 0.05)), GRID)
    spec = scheme(dt=0.004, da=0.05, a_max=5.0)
    recs = [spde_run(params, 0.4, spec, u0, u0, [f], [f], seed=55, replica=r)
            for r in range(200)]
    for key in ("1:bump[0,2.5]", "2:bump[0,2.5]"):
        rep = qv_test(recs, key, mode="limit")
        assert 0.85 <= rep.estimate <= 1.15, (key, rep.estimate)
    # the <u,f>_1 pairing's variance target is gamma*int<mu, ftilde^2>
    rep = qv_test(recs, "1:bump[0,2.5]+l1", mode="limit")
    assert 0.85 <= rep.estimate <= 1.15, rep.estimate
