"""Windowed empirical measures of the pair (a, xi) and their identities.

Macro-cells partition the space-time snapshot grid; each cell collects the
(activity, density-gradient) samples it covers, excluding vacuum cells. The
cell moments feed three families of checks: the first-hit identity
mean(a xi phi_s) = A_hat mean(phi_s), the covariance identity
Cov(a, M_s/a) + nu Cov(phi_s, 1/a) = 0, and the within-cell variance of a
whose decay under refinement is the oscillation-collapse signal.

When every a-sample in a cell is identical both identity residuals vanish
analytically (each side factors), so those cases return exact zeros rather
than round-off noise.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .core import DomainError, Parameters, to_rho_a
from .entropy import EntropyTable
from .solver import RefinementLadder, Trajectory

MIN_SAMPLES_FOR_A_HAT = 20
MIN_WINDOW = 4


@dataclass(frozen=True)
class CellMeasure:
    """Empirical (a, xi) samples of one space-time macro-cell."""

    cell_index: tuple[int, int]
    a_samples: np.ndarray
    xi_samples: np.ndarray

    @property
    def n_samples(self) -> int:
        return self.a_samples.size

    @property
    def absent(self) -> bool:
        return self.n_samples == 0

    @property
    def mean_a(self) -> float:
        return float(np.mean(self.a_samples)) if self.n_samples else float("nan")

    @property
    def var_a(self) -> float:
        return float(np.var(self.a_samples)) if self.n_samples else float("nan")

    @property
    def mean_xi(self) -> float:
        return float(np.mean(self.xi_samples)) if self.n_samples else float("nan")

    @property
    def mean_abs_xi(self) -> float:
        return float(np.mean(np.abs(self.xi_samples))) if self.n_samples else float("nan")

    @property
    def A_hat(self) -> float | None:
        """Sample mean of a xi; only trusted from 20 samples up."""
        if self.n_samples < MIN_SAMPLES_FOR_A_HAT:
            return None
        return float(np.mean(self.a_samples * self.xi_samples))


def measures_from_arrays(
    a_grid: np.ndarray,
    xi_grid: np.ndarray,
    valid_mask: np.ndarray,
    window_t: int,
    window_x: int,
) -> list[CellMeasure]:
    """Partition (time, space) grids into macro-cells of the given size.

    Leftover rows and columns that do not fill a whole window are dropped so
    different-resolution grids with proportionally scaled window_x produce
    the same physical layout.
    """
    if window_t < MIN_WINDOW or window_x < MIN_WINDOW:
        raise DomainError(f"macro-cells need at least {MIN_WINDOW}x{MIN_WINDOW} fine cells")
    nt, nx = a_grid.shape
    n_wt, n_wx = nt // window_t, nx // window_x
    if n_wt == 0 or n_wx == 0:
        raise DomainError("window exceeds the grid extent")
    out = []
    for it in range(n_wt):
        rows = slice(it * window_t, (it + 1) * window_t)
        for ix in range(n_wx):
            cols = slice(ix * window_x, (ix + 1) * window_x)
            ok = valid_mask[rows, cols]
            out.append(
                CellMeasure(
                    cell_index=(it, ix),
                    a_samples=a_grid[rows, cols][ok].copy(),
                    xi_samples=xi_grid[rows, cols][ok].copy(),
                )
            )
    return out


def activity_grids(
    traj: Trajectory, params: Parameters
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(a, xi, valid) stacked over snapshots, shape (n_snapshots, n_cells)."""
    a_rows, xi_rows, ok_rows = [], [], []
    for state in traj.snapshots:
        derived = to_rho_a(state, params)
        a_rows.append(derived.a)
        xi_rows.append(derived.xi)
        ok_rows.append(~derived.mask_vacuum)
    return np.stack(a_rows), np.stack(xi_rows), np.stack(ok_rows)


def estimate_cell_measures(
    traj: Trajectory, window_t: int, window_x: int, params: Parameters
) -> list[CellMeasure]:
    a_grid, xi_grid, valid = activity_grids(traj, params)
    return measures_from_arrays(a_grid, xi_grid, valid, window_t, window_x)


def default_xi_threshold(ladder: RefinementLadder, params: Parameters) -> float:
    """0.1 times the space-time RMS of xi on the finest rung."""
    _, xi_grid, _ = activity_grids(ladder.rungs[-1].trajectory, params)
    return 0.1 * float(np.sqrt(np.mean(xi_grid * xi_grid)))


# ---------------------------------------------------------------------------
# identity residuals on one cell


def first_hit_residual(
    cell: CellMeasure, params: Parameters, tables: Mapping[float, EntropyTable]
) -> dict[float, float]:
    """Normalized defect of mean(a xi phi_s) = A_hat mean(phi_s) per s.

    The defect is divided by the sampling scale
    (std(a xi phi_s) + |A_hat| std(phi_s)) / sqrt(n), so values are
    z-score-like: order one for pure sampling noise, large for a real
    violation. Cells whose a-samples are all equal return exact zeros.
    """
    if cell.A_hat is None:
        raise DomainError("cell has too few samples for A_hat")
    a, xi = cell.a_samples, cell.xi_samples
    if np.ptp(a) == 0.0:
        return {s: 0.0 for s in tables}
    a_hat = cell.A_hat
    root_n = np.sqrt(a.size)
    out = {}
    for s_val, table in tables.items():
        phi = table.phi_at(a)
        lhs = float(np.mean(a * xi * phi))
        rhs = a_hat * float(np.mean(phi))
        scale = (float(np.std(a * xi * phi)) + abs(a_hat) * float(np.std(phi))) / root_n
        out[s_val] = abs(lhs - rhs) / max(scale, 1e-300)
    return out


def mean_xi_consistency(cell: CellMeasure) -> tuple[float, float]:
    """(|mean(xi) - A_hat mean(1/a)|, 3-sigma sampling scale) for one cell."""
    if cell.A_hat is None:
        raise DomainError("cell has too few samples for A_hat")
    a, xi = cell.a_samples, cell.xi_samples
    if np.ptp(a) == 0.0:
        return 0.0, 0.0
    inv = 1.0 / a
    resid = abs(float(np.mean(xi)) - cell.A_hat * float(np.mean(inv)))
    scale = 3.0 * (float(np.std(xi)) + abs(cell.A_hat) * float(np.std(inv))) / np.sqrt(a.size)
    return resid, scale


def cell_is_masked(cell: CellMeasure, xi_threshold: float) -> bool:
    """Mask for covariance checks: A_hat missing or not clearly nonzero."""
    if cell.A_hat is None:
        return True
    spread = float(np.std(cell.a_samples * cell.xi_samples))
    return abs(cell.A_hat) <= xi_threshold * spread


def covariance_identity_residual(
    cell: CellMeasure,
    params: Parameters,
    tables: Mapping[float, EntropyTable],
    xi_threshold: float = 0.0,
) -> dict[float, float]:
    """|Cov(a, M_s/a) + nu Cov(phi_s, 1/a)| over the cell's a-marginal.

    Covariances are population covariances of the a-samples alone. Cells
    masked by cell_is_masked (A_hat compatible with zero) are rejected; an
    all-equal a-sample returns exact zeros before the mask is consulted.
    """
    a = cell.a_samples
    if a.size >= 2 and np.ptp(a) == 0.0:
        return {s: 0.0 for s in tables}
    if cell_is_masked(cell, xi_threshold):
        raise DomainError("cell masked: A_hat not distinguishable from zero")
    inv = 1.0 / a
    mean_a = float(np.mean(a))
    mean_inv = float(np.mean(inv))
    out = {}
    for s_val, table in tables.items():
        phi = table.phi_at(a)
        m_over_a = table.M_at(a) / a
        cov_am = float(np.mean(a * m_over_a)) - mean_a * float(np.mean(m_over_a))
        cov_pi = float(np.mean(phi * inv)) - float(np.mean(phi)) * mean_inv
        out[s_val] = abs(cov_am + params.nu * cov_pi)
    return out


# ---------------------------------------------------------------------------
# collapse metric across a ladder


@dataclass(frozen=True)
class CollapseSummary:
    epsilon: float
    n_cells: int
    median_var_a: float
    p90_var_a: float
    n_windows_used: int
    n_windows_excluded: int


def collapse_summary(
    cells: Sequence[CellMeasure],
    xi_threshold: float,
    epsilon: float = float("nan"),
    n_cells: int = 0,
) -> CollapseSummary:
    """Median/p90 of var_a over cells with mean |xi| above the threshold."""
    vals = [
        c.var_a
        for c in cells
        if not c.absent and c.mean_abs_xi > xi_threshold
    ]
    used = len(vals)
    if used:
        arr = np.asarray(vals)
        med, p90 = float(np.median(arr)), float(np.percentile(arr, 90.0))
    else:
        med, p90 = float("nan"), float("nan")
    return CollapseSummary(
        epsilon=epsilon,
        n_cells=n_cells,
        median_var_a=med,
        p90_var_a=p90,
        n_windows_used=used,
        n_windows_excluded=len(cells) - used,
    )


def dirac_collapse_metric(
    ladder: RefinementLadder,
    params: Parameters,
    xi_threshold: float,
    window_t: int = 8,
    window_x: int = 8,
) -> list[CollapseSummary]:
    """Per-rung var_a summaries on a shared macro-cell layout.

    window_t and window_x count fine cells on the coarsest rung; window_x is
    scaled with resolution so all rungs share the same physical windows
    (snapshot times are already shared).
    """
    if len(ladder.rungs) < 3:
        raise DomainError("collapse metric needs at least 3 rungs")
    base_n = ladder.rungs[0].n_cells
    out = []
    for rung in ladder.rungs:
        factor = rung.n_cells // base_n
        cells = estimate_cell_measures(
            rung.trajectory, window_t, window_x * factor, params
        )
        out.append(
            collapse_summary(cells, xi_threshold, epsilon=rung.epsilon, n_cells=rung.n_cells)
        )
    return out


# ---------------------------------------------------------------------------
# flux identification


@dataclass(frozen=True)
class FluxGapReport:
    algebraic: np.ndarray
    jm_window_gap: np.ndarray
    arho_window_gap: np.ndarray


def _window_means(grid: np.ndarray, window_t: int, window_x: int) -> np.ndarray:
    nt, nx = grid.shape
    n_wt, n_wx = nt // window_t, nx // window_x
    trimmed = grid[: n_wt * window_t, : n_wx * window_x]
    return trimmed.reshape(n_wt, window_t, n_wx, window_x).mean(axis=(1, 3))


def flux_identification_gap(
    ladder: RefinementLadder,
    params: Parameters,
    window_t: int = 8,
    window_x: int = 8,
) -> FluxGapReport:
    """Exact flux decomposition per rung plus cross-rung window-average gaps.

    Per rung the algebraic identity
    m xi = (nu/(nu-1)) rho xi - (1/(nu-1)) a rho xi is checked pointwise
    (round-off only). Across rungs, window means of J_m = m xi and of
    a rho xi on the shared layout are compared against the finest rung; the
    reported gap is the median absolute difference over windows.
    """
    if params.equal_mobilities:
        raise DomainError("flux decomposition is undefined at nu = 1")
    nu = params.nu
    base_n = ladder.rungs[0].n_cells
    algebraic = []
    jm_means = []
    ar_means = []
    for rung in ladder.rungs:
        traj = rung.trajectory
        m = np.stack([s.m for s in traj.snapshots])
        rho = m + np.stack([s.n for s in traj.snapshots])
        a_grid, xi_grid, _ = activity_grids(traj, params)
        jm = m * xi_grid
        arj = a_grid * rho * xi_grid
        decomp = nu / (nu - 1.0) * rho * xi_grid - arj / (nu - 1.0)
        algebraic.append(float(np.max(np.abs(jm - decomp))))
        factor = rung.n_cells // base_n
        jm_means.append(_window_means(jm, window_t, window_x * factor))
        ar_means.append(_window_means(arj, window_t, window_x * factor))
    jm_gap = [
        float(np.median(np.abs(jm_means[k] - jm_means[-1])))
        for k in range(len(jm_means) - 1)
    ]
    ar_gap = [
        float(np.median(np.abs(ar_means[k] - ar_means[-1])))
        for k in range(len(ar_means) - 1)
    ]
    return FluxGapReport(
        algebraic=np.array(algebraic),
        jm_window_gap=np.array(jm_gap),
        arho_window_gap=np.array(ar_gap),
    )
