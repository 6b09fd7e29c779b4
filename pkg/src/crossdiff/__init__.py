"""Cross-diffusion finite-volume laboratory.

Two species on the unit torus share one pressure gradient with mobility
ratio nu. The package provides the explicit conservative scheme, the
entropy-weight family phi_s / M_s built from the activity variable, the
admissibility and balance-law diagnostics for refinement ladders, and
empirical-measure probes for oscillation detection.
"""

from .config import ConfigError, RunConfig, load_config, parse_config
from .core import (
    DerivedState,
    DomainError,
    Grid1D,
    Parameters,
    SpeciesState,
    entropy_functional,
    from_rho_a,
    to_rho_a,
)
from .diagnostics import (
    affine_residual_norms,
    balance_identity_oracle,
    check_basic,
    entropy_dissipation_balance,
    family_residual_norms,
    make_trig_fields,
    rho_cauchy_differences,
    self_convergence_order,
    segregation_overlap,
    weak_solution_residual,
)
from .entropy import (
    EntropyIndex,
    EntropyTable,
    M_eval,
    admissible_strip,
    build_table,
    build_tables,
    entropy_index,
    phi_eval,
    phi_eval_many,
    phi_prime_eval,
    two_point_positivity_margin,
    verify_M_identities,
    verify_ode_residual,
)
from .measures import (
    CellMeasure,
    CollapseSummary,
    covariance_identity_residual,
    default_xi_threshold,
    dirac_collapse_metric,
    estimate_cell_measures,
    first_hit_residual,
    flux_identification_gap,
)
from .report import InvariantViolation, LadderReport, build_ladder_report, evaluate
from .solver import (
    RefinementLadder,
    SchemeConfig,
    SolverBlowup,
    Trajectory,
    initial_data,
    refine_sequence,
    run,
    stable_dt,
    step,
)

__version__ = "0.1.0"

__all__ = [
    "CellMeasure",
    "CollapseSummary",
    "ConfigError",
    "DerivedState",
    "DomainError",
    "EntropyIndex",
    "EntropyTable",
    "Grid1D",
    "InvariantViolation",
    "LadderReport",
    "M_eval",
    "Parameters",
    "RefinementLadder",
    "RunConfig",
    "SchemeConfig",
    "SolverBlowup",
    "SpeciesState",
    "Trajectory",
    "admissible_strip",
    "affine_residual_norms",
    "balance_identity_oracle",
    "build_ladder_report",
    "build_table",
    "build_tables",
    "check_basic",
    "covariance_identity_residual",
    "default_xi_threshold",
    "dirac_collapse_metric",
    "entropy_dissipation_balance",
    "entropy_functional",
    "entropy_index",
    "estimate_cell_measures",
    "evaluate",
    "family_residual_norms",
    "first_hit_residual",
    "flux_identification_gap",
    "from_rho_a",
    "initial_data",
    "load_config",
    "make_trig_fields",
    "parse_config",
    "phi_eval",
    "phi_eval_many",
    "phi_prime_eval",
    "refine_sequence",
    "rho_cauchy_differences",
    "run",
    "segregation_overlap",
    "self_convergence_order",
    "stable_dt",
    "step",
    "to_rho_a",
    "two_point_positivity_margin",
    "verify_M_identities",
    "verify_ode_residual",
    "weak_solution_residual",
]
