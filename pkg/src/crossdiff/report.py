"""Ladder report assembly.

Gathers every per-rung and cross-rung diagnostic into one structure, then
renders it three ways: admissibility.csv (per-rung checks), residuals.csv
(norm tables), measures.csv (per-macro-cell moments and identity
residuals), plus the pass/fail summary the ladder command prints.

Checks come in two severities. Hard checks are run soundness (conservation,
boundedness, positivity accounting, entropy monotonicity, finite norms);
any hard failure is an InvariantViolation and the CLI exits 2. Trend checks
compare rungs and only affect the printed summary: they are scientific
findings, not runtime errors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DomainError, Parameters
from .diagnostics import (
    affine_residual_norms,
    check_basic,
    entropy_dissipation_balance,
    family_residual_norms,
    max_clamp_magnitude,
    rho_cauchy_differences,
    weak_solution_residual,
)
from .entropy import EntropyTable
from .measures import (
    CellMeasure,
    CollapseSummary,
    collapse_summary,
    covariance_identity_residual,
    default_xi_threshold,
    estimate_cell_measures,
    first_hit_residual,
    flux_identification_gap,
)
from .solver import RefinementLadder

MASS_DRIFT_TOL = 1e-12
MAX_RHO_GROWTH_TOL = 1e-3
CLAMP_TOL = 1e-12
CLIPPED_TOL = 1e-10
ENTROPY_SLACK_COEF = 1e-8
FAMILY_BAND_FACTOR = 2.0
WEAK_CONST_TOL = 1e-12


class InvariantViolation(RuntimeError):
    """A hard admissibility check failed; the CLI maps this to exit 2."""


@dataclass(frozen=True)
class RungReport:
    index: int
    epsilon: float
    n_cells: int
    mass_drift: float
    max_rho_growth: float
    clamp_magnitude: float
    clipped_fraction: float
    entropy_max_increase: float
    entropy_slack: float
    dissipation_defect_raw: float
    dissipation_defect: float
    r0_hminus1: float
    r1_hminus1: float
    family_l1: dict[float, float]
    source_gap_l1: dict[float, float]
    weak_res_m: float
    weak_res_n: float
    weak_const_m: float
    weak_const_n: float


@dataclass(frozen=True)
class CheckRow:
    name: str
    value: float
    passed: bool
    hard: bool
    note: str


@dataclass(frozen=True)
class LadderReport:
    params: Parameters
    s_values: tuple[float, ...]
    xi_threshold: float
    window_t: int
    window_x: int
    rungs: list[RungReport]
    rho_cauchy: np.ndarray
    collapse: list[CollapseSummary]
    flux_algebraic: np.ndarray | None
    flux_jm_gap: np.ndarray | None
    flux_arho_gap: np.ndarray | None
    measure_rows: list[tuple]


def _shared_layout_cells(
    ladder: RefinementLadder, params: Parameters, window_t: int, window_x: int
) -> list[list[CellMeasure]]:
    """Per-rung macro-cells over one shared physical (t, x) partition."""
    base_n = ladder.rungs[0].n_cells
    out = []
    for rung in ladder.rungs:
        factor = rung.n_cells // base_n
        if factor * base_n != rung.n_cells:
            raise DomainError("rung grid sizes must be multiples of the coarsest")
        cells = estimate_cell_measures(
            rung.trajectory, window_t, window_x * factor, params
        )
        out.append(cells)
    return out


def _cell_measure_rows(
    rung_index: int,
    cells: list[CellMeasure],
    params: Parameters,
    tables: dict[float, EntropyTable],
    xi_threshold: float,
) -> list[tuple]:
    rows = []
    for cell in cells:
        base = [rung_index, cell.cell_index[0], cell.cell_index[1], cell.n_samples]
        if cell.absent:
            rows.append(tuple(base + [None] * (4 + 2 * len(tables))))
            continue
        base += [cell.mean_a, cell.var_a, cell.mean_xi, cell.A_hat]
        try:
            hits = first_hit_residual(cell, params, tables)
        except DomainError:
            hits = None
        try:
            covs = covariance_identity_residual(cell, params, tables, xi_threshold)
        except DomainError:
            covs = None
        for source in (hits, covs):
            for s in tables:
                base.append(None if source is None else source[s])
        rows.append(tuple(base))
    return rows


def build_ladder_report(
    ladder: RefinementLadder,
    params: Parameters,
    tables: dict[float, EntropyTable],
    window_t: int = 8,
    window_x: int = 8,
    xi_threshold: float = 0.0,
) -> LadderReport:
    """Run every diagnostic over a finished ladder.

    xi_threshold <= 0 selects the data-driven default (0.1 RMS of xi on the
    finest rung). Pure post-processing: nothing here advances the solver.
    """
    if xi_threshold <= 0.0:
        xi_threshold = default_xi_threshold(ladder, params)

    rungs = []
    for k, rung in enumerate(ladder.rungs):
        traj = rung.trajectory
        drift, growth, entropy_inc = check_basic(traj, params)
        log = traj.step_log
        slack = ENTROPY_SLACK_COEF * (1.0 + abs(float(log.entropy[0])))
        mass0 = float(log.mass_m[0] + log.mass_n[0])
        raw_defect, defect = entropy_dissipation_balance(traj, params)
        r0, r1 = affine_residual_norms(traj, params)
        family = family_residual_norms(traj, params, tables)
        weak_m, weak_n = weak_solution_residual(traj, params, test_modes=3)
        const_m, const_n = weak_solution_residual(traj, params, test_modes=0)
        rungs.append(
            RungReport(
                index=k,
                epsilon=rung.epsilon,
                n_cells=rung.n_cells,
                mass_drift=drift,
                max_rho_growth=growth,
                clamp_magnitude=max_clamp_magnitude(traj, params),
                clipped_fraction=float(log.clipped_cum[-1]) / mass0,
                entropy_max_increase=entropy_inc,
                entropy_slack=slack,
                dissipation_defect_raw=raw_defect,
                dissipation_defect=defect,
                r0_hminus1=r0,
                r1_hminus1=r1,
                family_l1={s: f.l1_norm for s, f in family.items()},
                source_gap_l1={s: f.source_gap_l1 for s, f in family.items()},
                weak_res_m=weak_m,
                weak_res_n=weak_n,
                weak_const_m=const_m,
                weak_const_n=const_n,
            )
        )

    cells_per_rung = _shared_layout_cells(ladder, params, window_t, window_x)
    collapse = [
        collapse_summary(cells, xi_threshold, rung.epsilon, rung.n_cells)
        for cells, rung in zip(cells_per_rung, ladder.rungs)
    ]
    measure_rows: list[tuple] = []
    for k, cells in enumerate(cells_per_rung):
        measure_rows.extend(
            _cell_measure_rows(k, cells, params, tables, xi_threshold)
        )

    if params.equal_mobilities:
        flux_alg = flux_jm = flux_arho = None
    else:
        flux = flux_identification_gap(ladder, params, window_t, window_x)
        flux_alg, flux_jm, flux_arho = (
            flux.algebraic,
            flux.jm_window_gap,
            flux.arho_window_gap,
        )

    return LadderReport(
        params=params,
        s_values=tuple(tables),
        xi_threshold=xi_threshold,
        window_t=window_t,
        window_x=window_x,
        rungs=rungs,
        rho_cauchy=rho_cauchy_differences([r.trajectory for r in ladder.rungs]),
        collapse=collapse,
        flux_algebraic=flux_alg,
        flux_jm_gap=flux_jm,
        flux_arho_gap=flux_arho,
        measure_rows=measure_rows,
    )


# ---------------------------------------------------------------------------
# pass/fail evaluation


def _decreasing(values) -> bool:
    arr = np.asarray(values, dtype=float)
    return bool(np.all(np.diff(arr) < 0.0))


def _nonincreasing(values) -> bool:
    arr = np.asarray(values, dtype=float)
    return bool(np.all(np.diff(arr) <= 0.0))


def evaluate(report: LadderReport) -> list[CheckRow]:
    """Check rows for the summary table, hard rows first."""
    rows: list[CheckRow] = []
    for r in report.rungs:
        rows.append(
            CheckRow(
                f"rung{r.index}_mass_drift",
                r.mass_drift,
                r.mass_drift < MASS_DRIFT_TOL,
                True,
                f"< {MASS_DRIFT_TOL:g} relative",
            )
        )
        rows.append(
            CheckRow(
                f"rung{r.index}_max_rho_growth",
                r.max_rho_growth,
                r.max_rho_growth < MAX_RHO_GROWTH_TOL,
                True,
                f"< {MAX_RHO_GROWTH_TOL:g}",
            )
        )
        rows.append(
            CheckRow(
                f"rung{r.index}_a_clamp",
                r.clamp_magnitude,
                r.clamp_magnitude < CLAMP_TOL,
                True,
                f"< {CLAMP_TOL:g}",
            )
        )
        rows.append(
            CheckRow(
                f"rung{r.index}_clipped_mass",
                r.clipped_fraction,
                r.clipped_fraction < CLIPPED_TOL,
                True,
                f"< {CLIPPED_TOL:g} of total mass",
            )
        )
        rows.append(
            CheckRow(
                f"rung{r.index}_entropy_step_increase",
                r.entropy_max_increase,
                r.entropy_max_increase <= r.entropy_slack,
                True,
                f"<= {r.entropy_slack:g}",
            )
        )

    norms = []
    for r in report.rungs:
        norms += [r.r0_hminus1, r.r1_hminus1, r.dissipation_defect]
        norms += list(r.family_l1.values()) + list(r.source_gap_l1.values())
        norms += [r.weak_res_m, r.weak_res_n]
    finite = bool(np.all(np.isfinite(norms))) if norms else True
    rows.append(
        CheckRow("all_norms_finite", float(not finite), finite, True, "serializable")
    )

    defects = [r.dissipation_defect for r in report.rungs]
    rows.append(
        CheckRow(
            "dissipation_defect_decreasing",
            defects[-1] / defects[0] if defects[0] else 0.0,
            _decreasing(defects),
            False,
            "eps-corrected defect shrinks down the ladder",
        )
    )
    for name, series in (
        ("r0_hminus1_decreasing", [r.r0_hminus1 for r in report.rungs]),
        ("r1_hminus1_decreasing", [r.r1_hminus1 for r in report.rungs]),
        ("weak_residual_m_decreasing", [r.weak_res_m for r in report.rungs]),
        ("weak_residual_n_decreasing", [r.weak_res_n for r in report.rungs]),
    ):
        rows.append(
            CheckRow(
                name,
                series[-1] / series[0] if series[0] else 0.0,
                _decreasing(series),
                False,
                "strictly decreasing across rungs",
            )
        )

    for s in report.s_values:
        series = np.array([r.family_l1[s] for r in report.rungs])
        ratios = series[1:] / series[:-1]
        ok = bool(
            np.all(ratios <= FAMILY_BAND_FACTOR)
            and np.all(ratios >= 1.0 / FAMILY_BAND_FACTOR)
        )
        rows.append(
            CheckRow(
                f"family_band_s{s:g}",
                float(np.max(np.abs(np.log2(ratios)))) if ratios.size else 0.0,
                ok,
                False,
                "consecutive-rung L1 ratio within [1/2, 2]",
            )
        )
        gap = [r.source_gap_l1[s] for r in report.rungs]
        rows.append(
            CheckRow(
                f"source_gap_decreasing_s{s:g}",
                gap[-1] / gap[0] if gap[0] else 0.0,
                _decreasing(gap),
                False,
                "gap to the exact-balance source shrinks",
            )
        )

    const_worst = max(
        max(r.weak_const_m, r.weak_const_n) for r in report.rungs
    )
    rows.append(
        CheckRow(
            "weak_constant_mode",
            const_worst,
            const_worst < WEAK_CONST_TOL,
            False,
            f"< {WEAK_CONST_TOL:g} on every rung",
        )
    )
    rows.append(
        CheckRow(
            "rho_cauchy_decreasing",
            float(report.rho_cauchy[-1] / report.rho_cauchy[0]),
            _decreasing(report.rho_cauchy),
            False,
            "consecutive-rung L2 gaps shrink",
        )
    )

    medians = [c.median_var_a for c in report.collapse]
    rows.append(
        CheckRow(
            "collapse_median_nonincreasing",
            medians[-1] / medians[0] if medians[0] else 0.0,
            _nonincreasing(medians),
            False,
            "median var_a over active macro-cells",
        )
    )
    if report.flux_jm_gap is not None:
        rows.append(
            CheckRow(
                "flux_algebraic_identity",
                float(np.max(report.flux_algebraic)),
                bool(np.max(report.flux_algebraic) < 1e-13),
                False,
                "< 1e-13 on every rung",
            )
        )
        rows.append(
            CheckRow(
                "flux_window_gap_nonincreasing",
                float(report.flux_arho_gap[-1] / report.flux_arho_gap[0]),
                _nonincreasing(report.flux_arho_gap)
                and _nonincreasing(report.flux_jm_gap),
                False,
                "window-mean gaps to the finest rung",
            )
        )
    return rows


def require_hard_pass(rows: list[CheckRow]) -> None:
    bad = [r for r in rows if r.hard and not r.passed]
    if bad:
        worst = ", ".join(f"{r.name}={r.value:.3g} (want {r.note})" for r in bad)
        raise InvariantViolation(f"hard admissibility checks failed: {worst}")


def summary_lines(rows: list[CheckRow]) -> list[str]:
    width = max(len(r.name) for r in rows)
    lines = [f"{'check'.ljust(width)}  {'value':>12}  status"]
    for r in rows:
        status = "PASS" if r.passed else "FAIL"
        lines.append(f"{r.name.ljust(width)}  {r.value:>12.5g}  {status}")
    n_fail = sum(not r.passed for r in rows)
    lines.append(f"{n_fail} of {len(rows)} checks failed" if n_fail else "all checks passed")
    return lines


# ---------------------------------------------------------------------------
# CSV renderings


def admissibility_rows(report: LadderReport) -> list[tuple]:
    """(rung, check, value, pass) rows, hard checks plus per-rung trends."""
    rows = []
    for r in report.rungs:
        rows.append((r.index, "mass_drift", r.mass_drift, r.mass_drift < MASS_DRIFT_TOL))
        rows.append(
            (r.index, "max_rho_growth", r.max_rho_growth, r.max_rho_growth < MAX_RHO_GROWTH_TOL)
        )
        rows.append((r.index, "a_clamp", r.clamp_magnitude, r.clamp_magnitude < CLAMP_TOL))
        rows.append(
            (r.index, "clipped_mass", r.clipped_fraction, r.clipped_fraction < CLIPPED_TOL)
        )
        rows.append(
            (
                r.index,
                "entropy_step_increase",
                r.entropy_max_increase,
                r.entropy_max_increase <= r.entropy_slack,
            )
        )
        rows.append((r.index, "dissipation_defect_raw", r.dissipation_defect_raw, True))
        prev = report.rungs[r.index - 1].dissipation_defect if r.index else None
        rows.append(
            (
                r.index,
                "dissipation_defect",
                r.dissipation_defect,
                True if prev is None else r.dissipation_defect < prev,
            )
        )
    for k, gap in enumerate(report.rho_cauchy):
        ok = True if k == 0 else bool(gap < report.rho_cauchy[k - 1])
        rows.append((k, "rho_cauchy_to_next", float(gap), ok))
    for k, summ in enumerate(report.collapse):
        prev_med = report.collapse[k - 1].median_var_a if k else None
        rows.append(
            (
                k,
                "collapse_median_var_a",
                summ.median_var_a,
                True if prev_med is None else summ.median_var_a <= prev_med,
            )
        )
        rows.append((k, "collapse_p90_var_a", summ.p90_var_a, True))
        rows.append((k, "collapse_windows_used", summ.n_windows_used, True))
        rows.append((k, "collapse_windows_excluded", summ.n_windows_excluded, True))
    return rows


def residual_rows(report: LadderReport) -> list[tuple]:
    """(rung, quantity, s, norm) rows in a fixed quantity order."""
    rows = []
    for r in report.rungs:
        rows.append((r.index, "r0_hminus1", None, r.r0_hminus1))
        rows.append((r.index, "r1_hminus1", None, r.r1_hminus1))
        for s in report.s_values:
            rows.append((r.index, "family_l1", s, r.family_l1[s]))
        for s in report.s_values:
            rows.append((r.index, "source_gap_l1", s, r.source_gap_l1[s]))
        rows.append((r.index, "weak_m", None, r.weak_res_m))
        rows.append((r.index, "weak_n", None, r.weak_res_n))
        rows.append((r.index, "weak_m_const", None, r.weak_const_m))
        rows.append((r.index, "weak_n_const", None, r.weak_const_n))
    if report.flux_jm_gap is not None:
        for k, val in enumerate(report.flux_algebraic):
            rows.append((k, "flux_algebraic", None, float(val)))
        for k, val in enumerate(report.flux_jm_gap):
            rows.append((k, "flux_gap_jm", None, float(val)))
        for k, val in enumerate(report.flux_arho_gap):
            rows.append((k, "flux_gap_arho", None, float(val)))
    return rows


def measures_header(report: LadderReport) -> list[str]:
    labels = [f"{s:g}" for s in report.s_values]
    return (
        ["rung", "cell_t", "cell_x", "n_samples", "mean_a", "var_a", "mean_xi", "A_hat"]
        + [f"firsthit_s{lab}" for lab in labels]
        + [f"cov_s{lab}" for lab in labels]
    )
