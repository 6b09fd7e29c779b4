"""Shared fixtures.

The expensive runs (default refinement ladder, nu = 1 reference study,
segregated trajectory) are session-scoped so the diagnostics, measure and
acceptance tests all read from one build. Everything is deterministic, so
sharing cannot leak state between tests.
"""

from __future__ import annotations

import numpy as np
import pytest

from crossdiff.core import Parameters, from_rho_a
from crossdiff.entropy import build_tables
from crossdiff.report import build_ladder_report
from crossdiff.solver import (
    RefinementLadder,
    Rung,
    SchemeConfig,
    StepLog,
    Trajectory,
    refine_sequence,
    run,
)

DEFAULT_S_LIST = (1.1, 1.25, 1.5, 1.75)


@pytest.fixture(scope="session")
def params2() -> Parameters:
    return Parameters(nu=2.0, epsilon=4e-3, t_final=0.25)


@pytest.fixture(scope="session")
def tables2(params2):
    return build_tables(DEFAULT_S_LIST, params2)


@pytest.fixture(scope="session")
def default_ladder(params2) -> RefinementLadder:
    """The desk-scale study: (4e-3, 128) -> (1e-3, 512), mixed_oscillatory."""
    config = SchemeConfig(
        n_cells=128, epsilon=4e-3, t_final=0.25, scenario="mixed_oscillatory"
    )
    return refine_sequence(config, params2, n_rungs=3)


@pytest.fixture(scope="session")
def default_report(default_ladder, params2, tables2):
    return build_ladder_report(
        default_ladder, params2, tables2, window_t=8, window_x=8
    )


@pytest.fixture(scope="session")
def nu1_study():
    """(params, ladder, reference): equal-mobility self-convergence setup.

    The reference continues the ladder rule one extra doubling twice, i.e.
    a 4x finer grid than the finest rung, on the shared output times.
    """
    params = Parameters(nu=1.0, epsilon=4e-3, t_final=0.05)
    config = SchemeConfig(
        n_cells=64, epsilon=4e-3, t_final=0.05, scenario="gaussian_bump"
    )
    ladder = refine_sequence(config, params, n_rungs=3)
    ref_config = SchemeConfig(
        n_cells=1024, epsilon=2.5e-4, t_final=0.05, scenario="gaussian_bump"
    )
    reference = run(ref_config, params, snapshot_times=ladder.snapshot_times)
    return params, ladder, reference


@pytest.fixture(scope="session")
def segregated_run(params2) -> Trajectory:
    config = SchemeConfig(
        n_cells=128, epsilon=1e-3, t_final=0.25, scenario="segregated"
    )
    return run(config, params2)


def synthetic_ladder(
    params: Parameters,
    a_of: callable,
    n_cells_list=(64, 128, 256),
    n_times: int = 32,
    seed: int = 7,
) -> RefinementLadder:
    """Fake ladder whose activity field is prescribed, not computed.

    rho carries a fixed smooth profile so xi is nonzero on most cells, and
    a comes from a_of(rng, shape); from_rho_a turns (rho, a) into species
    states. Used for the Dirac-synthetic and negative-control probes where
    the measure diagnostics must see known inputs.
    """
    rng = np.random.default_rng(seed)
    times = np.linspace(0.0, 1.0, n_times)
    rungs = []
    for k, n_cells in enumerate(n_cells_list):
        x = (np.arange(n_cells) + 0.5) / n_cells
        rho_profile = 1.0 + 0.3 * np.sin(2.0 * np.pi * x)
        snapshots = []
        for t in times:
            a_field = a_of(rng, n_cells)
            state = from_rho_a(rho_profile, a_field, params, t=float(t))
            snapshots.append(state)
        config = SchemeConfig(
            n_cells=n_cells, epsilon=4e-3 * 0.5**k, t_final=1.0, scenario="constant"
        )
        traj = Trajectory(
            params=params,
            config=config,
            snapshots=snapshots,
            step_log=StepLog(data=np.zeros((1, 9))),
        )
        rungs.append(Rung(epsilon=config.epsilon, n_cells=n_cells, trajectory=traj))
    return RefinementLadder(params=params, snapshot_times=times, rungs=rungs)


@pytest.fixture(scope="session")
def negative_control_ladder(params2) -> RefinementLadder:
    """Independent uniform a-samples per cell: oscillation that never collapses."""
    width = params2.beta - params2.alpha

    def a_of(rng, n_cells):
        return rng.uniform(
            params2.alpha + 0.05 * width, params2.beta - 0.05 * width, size=n_cells
        )

    return synthetic_ladder(params2, a_of)


@pytest.fixture(scope="session")
def dirac_ladder(params2) -> RefinementLadder:
    """Constant activity everywhere: every window is an exact point mass."""

    def a_of(rng, n_cells):
        return np.full(n_cells, 1.4)

    return synthetic_ladder(params2, a_of)
