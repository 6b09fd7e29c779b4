"""Command-line harness.

Three subcommands:

  simulate CONFIG    one trajectory; writes steps.csv, per-snapshot dumps
                     and checks.csv into output_dir
  ladder CONFIG      refinement study; writes admissibility.csv,
                     residuals.csv, measures.csv and prints the check table
  phi-table          tabulate the entropy weights on an equispaced a-grid

Exit codes: 0 success, 1 configuration error (unreadable or invalid
config, index outside the admissible strip, too few rungs), 2 invariant
violation (non-finite state, failed hard admissibility check). Errors
print one line "ERROR <code>: <message>" on stderr.
"""

from __future__ import annotations

import argparse
import sys
from collections.abc import Sequence
from pathlib import Path

import numpy as np

from .config import (
    ConfigError,
    RunConfig,
    describe_keys,
    load_config,
    parse_s_list,
)
from .core import DomainError, Parameters, to_rho_a
from .csvio import write_csv
from .diagnostics import check_basic, max_clamp_magnitude
from .entropy import build_tables, entropy_index, phi_eval_many
from .report import (
    InvariantViolation,
    admissibility_rows,
    build_ladder_report,
    evaluate,
    measures_header,
    require_hard_pass,
    residual_rows,
    summary_lines,
)
from .report import (
    CLAMP_TOL,
    CLIPPED_TOL,
    ENTROPY_SLACK_COEF,
    MASS_DRIFT_TOL,
    MAX_RHO_GROWTH_TOL,
)
from .solver import (
    SCENARIO_DEFAULTS,
    SchemeConfig,
    SolverBlowup,
    refine_sequence,
    run,
)

PHI_TABLE_DEFAULT_S = "0.7,0.8,0.9,1.0,1.1,1.2,1.3"


def _params_from(rc: RunConfig) -> Parameters:
    return Parameters(
        nu=rc.nu, epsilon=rc.epsilon, t_final=rc.t_final, rho_floor=rc.rho_floor
    )


def _scheme_from(rc: RunConfig) -> SchemeConfig:
    return SchemeConfig(
        n_cells=rc.n_cells,
        epsilon=rc.epsilon,
        t_final=rc.t_final,
        cfl=rc.cfl,
        snapshot_every=rc.snapshot_every,
        scenario=rc.scenario,
        scenario_params=rc.scenario_params,
    )


def _ensure_outdir(rc: RunConfig) -> Path:
    out = Path(rc.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_phi_table(
    nu: float, s_values: Sequence[float], n_nodes: int, out_path: str | Path
) -> None:
    if not s_values:
        raise ConfigError("phi table needs at least one index s")
    if n_nodes < 2:
        raise ConfigError(f"n_nodes must be >= 2, got {n_nodes}")
    params = Parameters(nu=nu)
    indices = [entropy_index(s, params) for s in s_values]
    a = np.linspace(params.alpha, params.beta, n_nodes)
    rows = []
    for idx in indices:
        phi = phi_eval_many(idx, a, params)
        rows.extend((a[i], idx.s, phi[i]) for i in range(n_nodes))
    write_csv(out_path, ["a", "s", "phi"], rows)


def _simulate(config_path: str) -> None:
    rc = load_config(config_path)
    params = _params_from(rc)
    scheme = _scheme_from(rc)
    traj = run(scheme, params)
    out = _ensure_outdir(rc)

    log = traj.step_log
    write_csv(
        out / "steps.csv",
        ["t", "dt", "mass_m", "mass_n", "entropy", "max_rho"],
        log.data[:, :6],
    )
    for i, state in enumerate(traj.snapshots):
        derived = to_rho_a(state, params)
        x = (np.arange(state.n_cells) + 0.5) * state.h
        write_csv(
            out / f"snapshot_{i:04d}.csv",
            ["x", "m", "n", "rho", "a", "xi"],
            np.column_stack([x, state.m, state.n, derived.rho, derived.a, derived.xi]),
        )

    if len(log) >= 2:
        drift, growth, entropy_inc = check_basic(traj, params)
    else:
        drift = growth = entropy_inc = 0.0
    slack = ENTROPY_SLACK_COEF * (1.0 + abs(float(log.entropy[0])))
    clamp = max_clamp_magnitude(traj, params)
    clipped = float(log.clipped_cum[-1]) / float(log.mass_m[0] + log.mass_n[0])
    checks = [
        ("mass_drift", drift, drift < MASS_DRIFT_TOL),
        ("max_rho_growth", growth, growth < MAX_RHO_GROWTH_TOL),
        ("entropy_step_increase", entropy_inc, entropy_inc <= slack),
        ("a_clamp", clamp, clamp < CLAMP_TOL),
        ("clipped_mass", clipped, clipped < CLIPPED_TOL),
    ]
    write_csv(out / "checks.csv", ["check", "value", "pass"], checks)
    if rc.emit_phi_table:
        _write_phi_table(rc.nu, rc.s_values, 101, out / "phi_table.csv")

    for name, value, ok in checks:
        print(f"{name:<24} {value:>12.5g}  {'PASS' if ok else 'FAIL'}")
    print(f"wrote {len(traj.snapshots)} snapshots to {out}")
    bad = [name for name, _, ok in checks if not ok]
    if bad:
        raise InvariantViolation(f"basic checks failed: {', '.join(bad)}")


def _ladder(config_path: str) -> None:
    rc = load_config(config_path)
    if rc.ladder_rungs < 3:
        raise ConfigError(f"ladder_rungs must be >= 3, got {rc.ladder_rungs}")
    params = _params_from(rc)
    scheme = _scheme_from(rc)
    tables = build_tables(rc.s_values, params)
    ladder = refine_sequence(scheme, params, n_rungs=rc.ladder_rungs)
    report = build_ladder_report(
        ladder, params, tables, rc.window_t, rc.window_x, rc.xi_threshold
    )
    out = _ensure_outdir(rc)
    write_csv(
        out / "admissibility.csv",
        ["rung", "check", "value", "pass"],
        admissibility_rows(report),
    )
    write_csv(
        out / "residuals.csv", ["rung", "quantity", "s", "norm"], residual_rows(report)
    )
    write_csv(out / "measures.csv", measures_header(report), report.measure_rows)
    if rc.emit_phi_table:
        _write_phi_table(rc.nu, rc.s_values, 101, out / "phi_table.csv")

    rows = evaluate(report)
    for line in summary_lines(rows):
        print(line)
    require_hard_pass(rows)


def _guard(fn) -> int:
    try:
        fn()
        return 0
    except ConfigError as exc:
        print(f"ERROR 1: {exc}", file=sys.stderr)
        return 1
    except DomainError as exc:
        print(f"ERROR 1: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"ERROR 1: {exc}", file=sys.stderr)
        return 1
    except (SolverBlowup, InvariantViolation) as exc:
        print(f"ERROR 2: {exc}", file=sys.stderr)
        return 2


def cli_simulate(config_path: str) -> int:
    return _guard(lambda: _simulate(config_path))


def cli_ladder(config_path: str) -> int:
    return _guard(lambda: _ladder(config_path))


def cli_phi_table(
    nu: float, s_values: Sequence[float], n_nodes: int, out_path: str | Path
) -> int:
    return _guard(lambda: _write_phi_table(nu, s_values, n_nodes, out_path))


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # usage problems are config errors (exit 1)
        raise ConfigError(message)


def _config_reference() -> str:
    lines = ["config file keys (one 'key = value' per line, '#' starts a comment):"]
    lines += describe_keys()
    lines.append(
        "  scenario.<param> = <number>  [scenario units]  preset parameters,"
        " defaults per scenario:"
    )
    for name in sorted(SCENARIO_DEFAULTS):
        pairs = ", ".join(f"{k}={v:g}" for k, v in SCENARIO_DEFAULTS[name].items())
        lines.append(f"    {name}: {pairs}")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    ref = _config_reference()
    parser = _Parser(
        prog="crossdiff",
        description="Finite-volume cross-diffusion runs with entropy-family,"
        " residual and empirical-measure diagnostics.",
        epilog=ref,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser(
        "simulate",
        help="run one trajectory and dump snapshots, step log and basic checks",
        epilog=ref,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p_sim.add_argument("config", help="path to a key = value config file")
    p_sim.set_defaults(func=lambda a: cli_simulate(a.config))

    p_lad = sub.add_parser(
        "ladder",
        help="run a refinement ladder and write the admissibility report",
        epilog=ref,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p_lad.add_argument("config", help="path to a key = value config file")
    p_lad.set_defaults(func=lambda a: cli_ladder(a.config))

    p_phi = sub.add_parser(
        "phi-table",
        help="tabulate the entropy weights phi_s on an equispaced a-grid",
    )
    p_phi.add_argument("--nu", type=float, default=2.0, help="mobility ratio (default 2.0)")
    p_phi.add_argument(
        "--s",
        default=PHI_TABLE_DEFAULT_S,
        help=f"comma-separated indices (default {PHI_TABLE_DEFAULT_S})",
    )
    p_phi.add_argument(
        "--nodes", type=int, default=101, help="equispaced a-values (default 101)"
    )
    p_phi.add_argument(
        "--out", default="phi_table.csv", help="output path (default phi_table.csv)"
    )
    p_phi.set_defaults(
        func=lambda a: _guard(
            lambda: _write_phi_table(a.nu, parse_s_list(a.s), a.nodes, a.out)
        )
    )
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        print(f"ERROR 1: {exc}", file=sys.stderr)
        return 1
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
