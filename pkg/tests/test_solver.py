"""Scheme structure: conservation, positivity, determinism, stepping."""

import numpy as np
import pytest

from crossdiff.core import DomainError, Grid1D, Parameters
from crossdiff.solver import (
    SchemeConfig,
    SolverBlowup,
    initial_data,
    interface_fluxes,
    refine_sequence,
    run,
    stable_dt,
    step,
)


def _mixed_config(n_cells=32, epsilon=1e-3, t_final=0.01, **kw):
    return SchemeConfig(
        n_cells=n_cells,
        epsilon=epsilon,
        t_final=t_final,
        scenario="mixed_oscillatory",
        **kw,
    )


def test_scheme_config_validation():
    with pytest.raises(DomainError):
        SchemeConfig(n_cells=4, epsilon=0.0, t_final=1.0)
    with pytest.raises(DomainError):
        SchemeConfig(n_cells=16, epsilon=-1e-3, t_final=1.0)
    with pytest.raises(DomainError):
        SchemeConfig(n_cells=16, epsilon=0.0, t_final=1.0, cfl=1.0)
    with pytest.raises(DomainError):
        SchemeConfig(n_cells=16, epsilon=0.0, t_final=-0.1)


def test_initial_data_presets(params2):
    grid = Grid1D(64)
    state = initial_data("constant", {"c_m": 1.0, "c_n": 1.0}, grid)
    assert np.all(state.m == 1.0) and np.all(state.n == 1.0)

    state = initial_data(
        "mixed_oscillatory",
        {"mean_m": 0.5, "mean_n": 0.5, "amp_m": 0.3, "amp_n": 0.3, "k_m": 4, "k_n": 4},
        grid,
    )
    assert state.m.min() >= 0.05 and state.n.min() >= 0.05

    seg = initial_data("segregated", {}, grid)
    overlap = grid.h * float(np.dot(seg.m, seg.n))
    assert overlap < 1e-8

    with pytest.raises(DomainError):
        initial_data("no_such_preset", {}, grid)
    with pytest.raises(DomainError):
        initial_data("constant", {"c_m": 1.0, "typo": 2.0}, grid)
    with pytest.raises(DomainError):
        initial_data("mixed_oscillatory", {"amp_m": 0.9}, grid)


def test_constant_state_is_exact_fixed_point(params2):
    grid = Grid1D(32)
    state = initial_data("constant", {}, grid)
    config = _mixed_config(t_final=1.0)
    dt = stable_dt(state, config, params2)
    new, clipped = step(state, config, params2, dt)
    assert clipped == 0.0
    assert np.array_equal(new.m, state.m)
    assert np.array_equal(new.n, state.n)
    flux_m, flux_n, u = interface_fluxes(state, config.epsilon, params2)
    assert np.all(u == 0.0) and np.all(flux_m == 0.0) and np.all(flux_n == 0.0)


def test_stable_dt_bounds(params2):
    config = _mixed_config()
    grid = Grid1D(32)
    state = initial_data("constant", {"c_m": 0.6, "c_n": 0.4}, grid)
    # no gradient: only the diffusive bound is active
    arho = 0.6 + params2.nu * 0.4
    expected = config.cfl * grid.h**2 / (2.0 * (config.epsilon + arho))
    assert stable_dt(state, config, params2) == pytest.approx(expected, rel=1e-12)

    fine = initial_data("constant", {"c_m": 0.6, "c_n": 0.4}, Grid1D(64))
    assert stable_dt(fine, config, params2) == pytest.approx(expected / 4.0, rel=1e-12)

    bumpy = initial_data("gaussian_bump", {}, grid)
    assert stable_dt(bumpy, config, params2) > 0.0


def test_mass_conserved_and_positive(params2):
    traj = run(_mixed_config(), params2)
    log = traj.step_log
    for series in (log.mass_m, log.mass_n):
        assert np.max(np.abs(series - series[0])) / series[0] < 1e-13
    assert log.clipped_cum[-1] == 0.0
    for state in traj.snapshots:
        assert state.m.min() >= 0.0 and state.n.min() >= 0.0


def test_max_principle_single_step_and_run(params2):
    grid = Grid1D(64)
    state = initial_data("gaussian_bump", {}, grid)
    config = SchemeConfig(
        n_cells=64, epsilon=1e-3, t_final=0.02, scenario="gaussian_bump"
    )
    rho0_max = float((state.m + state.n).max())
    new, _ = step(state, config, params2, stable_dt(state, config, params2))
    assert float((new.m + new.n).max()) <= rho0_max * (1.0 + 1e-12)

    traj = run(config, params2)
    assert float(np.max(traj.step_log.max_rho)) <= rho0_max * (1.0 + 1e-12)


def test_entropy_series_monotone(params2):
    traj = run(_mixed_config(t_final=0.02), params2)
    rises = np.diff(traj.step_log.entropy)
    assert np.all(rises <= 0.0)
    # constant data: entropy stays frozen
    const = run(
        SchemeConfig(n_cells=32, epsilon=1e-3, t_final=0.01, scenario="constant"),
        params2,
    )
    ent = const.step_log.entropy
    assert np.max(np.abs(ent - ent[0])) < 1e-13 * (1.0 + abs(ent[0]))


def test_determinism_bitwise(params2):
    a = run(_mixed_config(), params2)
    b = run(_mixed_config(), params2)
    assert a.step_log.data.tobytes() == b.step_log.data.tobytes()
    assert a.snapshots[-1].m.tobytes() == b.snapshots[-1].m.tobytes()
    assert a.snapshots[-1].n.tobytes() == b.snapshots[-1].n.tobytes()


def test_fused_run_matches_granular_stepping(params2):
    """run() fuses stable_dt/step/metrics; it must agree bit for bit."""
    config = _mixed_config(t_final=0.005)
    traj = run(config, params2)

    grid = Grid1D(config.n_cells)
    state = initial_data(config.scenario, config.scenario_params, grid)
    t = 0.0
    slack = 1e-13 * config.t_final
    while t < config.t_final - slack:
        dt0 = stable_dt(state, config, params2)
        landing = dt0 >= config.t_final - t
        dt = config.t_final - t if landing else dt0
        state, clipped = step(state, config, params2, dt)
        assert clipped == 0.0
        t = config.t_final if landing else t + dt
    assert state.m.tobytes() == traj.snapshots[-1].m.tobytes()
    assert state.n.tobytes() == traj.snapshots[-1].n.tobytes()


def test_snapshot_schedule(params2):
    config = _mixed_config(t_final=0.004, snapshot_every=25)
    traj = run(config, params2)
    times = traj.snapshot_times
    assert times[0] == 0.0 and times[-1] == config.t_final
    assert np.all(np.diff(times) > 0.0)
    assert len(traj.snapshots) >= 3


def test_zero_horizon_returns_initial_state_only(params2):
    traj = run(_mixed_config(t_final=0.0), params2)
    assert len(traj.snapshots) == 1
    assert traj.snapshots[0].t == 0.0
    assert len(traj.step_log) == 1


def test_run_with_explicit_snapshot_times(params2):
    config = _mixed_config(t_final=0.01)
    times = [0.0, 0.002, 0.007, 0.01]
    traj = run(config, params2, snapshot_times=times)
    np.testing.assert_array_equal(traj.snapshot_times, times)
    with pytest.raises(DomainError):
        run(config, params2, snapshot_times=[0.0, 0.02])
    with pytest.raises(DomainError):
        run(config, params2, snapshot_times=[0.0, 0.008, 0.004, 0.01])


def test_refine_sequence_rule_and_shared_times(params2):
    base = _mixed_config(n_cells=16, t_final=0.002)
    ladder = refine_sequence(base, params2, n_rungs=3)
    assert [(r.epsilon, r.n_cells) for r in ladder.rungs] == [
        (1e-3, 16),
        (5e-4, 32),
        (2.5e-4, 64),
    ]
    for rung in ladder.rungs:
        np.testing.assert_array_equal(
            rung.trajectory.snapshot_times, ladder.snapshot_times
        )
    with pytest.raises(DomainError):
        refine_sequence(base, params2, n_rungs=2)


def test_non_finite_initial_data_is_a_blowup(params2):
    config = SchemeConfig(
        n_cells=16,
        epsilon=1e-3,
        t_final=0.01,
        scenario="constant",
        scenario_params={"c_m": float("nan"), "c_n": 0.4},
    )
    with pytest.raises(SolverBlowup):
        run(config, params2)
