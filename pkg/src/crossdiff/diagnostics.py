"""Trajectory diagnostics: conservation checks, balance-law residuals,
negative-Sobolev residual norms, self-convergence, and a finite-difference
oracle for the exact entropy balance identity.

Everything here is a pure function of trajectories (and entropy tables), so
re-running a diagnostic on the same trajectory reproduces its output bit for
bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .core import (
    B_eval,
    DomainError,
    Parameters,
    periodic_gradient,
    to_rho_a,
)
from .entropy import (
    EntropyIndex,
    EntropyTable,
    M_eval_many,
    entropy_index,
    phi_eval_many,
    phi_prime_eval,
)
from .solver import Trajectory


# ---------------------------------------------------------------------------
# basic invariants


def check_basic(traj: Trajectory, params: Parameters) -> tuple[float, float, float]:
    """(mass_drift, max_rho_growth, entropy_increase) for one run.

    mass_drift is the max relative deviation of either species mass from its
    initial value; max_rho_growth is max_t max_x rho / max_x rho_0 - 1;
    entropy_increase is the largest positive step increment of H.
    """
    log = traj.step_log
    if len(log) < 2:
        raise DomainError("trajectory has fewer than 2 log rows")
    drift_m = np.max(np.abs(log.mass_m - log.mass_m[0])) / max(abs(log.mass_m[0]), 1e-300)
    drift_n = np.max(np.abs(log.mass_n - log.mass_n[0])) / max(abs(log.mass_n[0]), 1e-300)
    growth = float(np.max(log.max_rho) / log.max_rho[0] - 1.0)
    rises = np.diff(log.entropy)
    entropy_increase = float(max(rises.max(), 0.0)) if rises.size else 0.0
    return float(max(drift_m, drift_n)), growth, entropy_increase


def max_clamp_magnitude(traj: Trajectory, params: Parameters) -> float:
    """Largest activity-range clamp over all snapshots."""
    worst = 0.0
    for state in traj.snapshots:
        derived = to_rho_a(state, params)
        worst = max(worst, float(derived.clamp_magnitude))
    return worst


def _cumulative_trapezoid(t: np.ndarray, f: np.ndarray) -> np.ndarray:
    out = np.zeros_like(f)
    out[1:] = np.cumsum(np.diff(t) * 0.5 * (f[1:] + f[:-1]))
    return out


def entropy_dissipation_balance(
    traj: Trajectory, params: Parameters
) -> tuple[float, float]:
    """Max defect of the discrete entropy identity over output intervals.

    For each pair of consecutive snapshot times (t1, t2) the defect is
    H(t2) - H(t1) + integral of the Dirichlet form, time-integrated by the
    trapezoid rule over the step log. Returned as (raw, eps_corrected) where
    the corrected form also subtracts the viscous dissipation estimate.
    The scheme's upwinding adds extra dissipation, so the defect is a
    consistency gap that shrinks under refinement, not a round-off check.
    """
    log = traj.step_log
    times = traj.snapshot_times
    cum_grad = _cumulative_trapezoid(log.t, log.grad_sq)
    cum_full = _cumulative_trapezoid(log.t, log.grad_sq + log.visc_sq)
    idx = np.searchsorted(log.t, times)
    if not np.array_equal(log.t[idx], times):
        raise DomainError("snapshot times missing from step log")
    d_entropy = log.entropy[idx[1:]] - log.entropy[idx[:-1]]
    raw = d_entropy + (cum_grad[idx[1:]] - cum_grad[idx[:-1]])
    corrected = d_entropy + (cum_full[idx[1:]] - cum_full[idx[:-1]])
    return float(np.max(np.abs(raw))), float(np.max(np.abs(corrected)))


# ---------------------------------------------------------------------------
# negative-Sobolev norms


def h_minus1_norm(values: np.ndarray) -> float:
    """Discrete H^-1 norm of one periodic field via Fourier weights.

    norm^2 = sum_kappa |c_kappa|^2 / (1 + (2 pi kappa)^2) over the full
    spectrum; a pure mode A sin(2 pi kappa x) comes out as
    A / sqrt(2) / sqrt(1 + (2 pi kappa)^2).
    """
    return float(np.sqrt(_h_minus1_sq(np.asarray(values, dtype=float))))


def _h_minus1_sq(values: np.ndarray) -> float:
    n = values.size
    coef = np.fft.rfft(values) / n
    kappa = np.arange(coef.size)
    weights = np.full(coef.size, 2.0)
    weights[0] = 1.0
    if n % 2 == 0:
        weights[-1] = 1.0
    return float(np.sum(weights * np.abs(coef) ** 2 / (1.0 + (2.0 * np.pi * kappa) ** 2)))


def _trapezoid_weights(times: np.ndarray) -> np.ndarray:
    w = np.zeros_like(times)
    dt = np.diff(times)
    w[:-1] += 0.5 * dt
    w[1:] += 0.5 * dt
    return w


# ---------------------------------------------------------------------------
# balance-law residuals on the snapshot grid


def _snapshot_stacks(
    traj: Trajectory, params: Parameters
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(times, m, n, rho, xi) stacked over snapshots, shape (J+1, N)."""
    times = traj.snapshot_times
    m = np.stack([s.m for s in traj.snapshots])
    n = np.stack([s.n for s in traj.snapshots])
    rho = m + n
    h = traj.snapshots[0].h
    xi = np.stack([periodic_gradient(r, h) for r in rho])
    return times, m, n, rho, xi


def affine_residual_norms(traj: Trajectory, params: Parameters) -> tuple[float, float]:
    """L^2(0,T; H^-1) norms of the two affine balance-law residuals.

    r0 = D_t rho - D_x(sigma xi) and r1 = D_t sigma - D_x(w xi), where
    sigma = m + nu n and w = m + nu^2 n are the conserved combinations whose
    fluxes close without any activity derivative. D_t is the forward
    difference between shared snapshots and the flux is averaged over the
    interval endpoints. The viscous term is left out on purpose: these are
    residuals against the vanishing-viscosity limit equations.
    """
    if len(traj.snapshots) < 3:
        raise DomainError("need at least 3 snapshots for residual norms")
    times, m, n, rho, xi = _snapshot_stacks(traj, params)
    nu = params.nu
    h = traj.snapshots[0].h
    sigma = m + nu * n
    w = m + nu * nu * n
    flux0 = sigma * xi
    flux1 = w * xi
    dt = np.diff(times)
    sq0 = 0.0
    sq1 = 0.0
    for j in range(dt.size):
        r0 = (rho[j + 1] - rho[j]) / dt[j] - periodic_gradient(
            0.5 * (flux0[j] + flux0[j + 1]), h
        )
        r1 = (sigma[j + 1] - sigma[j]) / dt[j] - periodic_gradient(
            0.5 * (flux1[j] + flux1[j + 1]), h
        )
        sq0 += dt[j] * _h_minus1_sq(r0)
        sq1 += dt[j] * _h_minus1_sq(r1)
    return float(np.sqrt(sq0)), float(np.sqrt(sq1))


@dataclass(frozen=True)
class FamilyResidual:
    l1_norm: float
    source_gap_l1: float


def family_residual_norms(
    traj: Trajectory,
    params: Parameters,
    tables: Mapping[float, EntropyTable],
) -> dict[float, FamilyResidual]:
    """Space-time L^1 norms of the entropy-family residuals r_s.

    r_s = D_t(rho^s phi_s(a)) - D_x(M_s(a) rho^s xi) on the snapshot grid.
    The exact balance law says r_s equals the source (1-s) M_s rho^(s-1) xi^2
    in the limit, so the gap to the interval-averaged source is reported too;
    the norms themselves are only expected to stay bounded under refinement.
    Vacuum cells contribute zero to both (rho^s and rho^(s-1) factors are
    zeroed there).
    """
    times, m, n, rho, xi = _snapshot_stacks(traj, params)
    h = traj.snapshots[0].h
    floor = params.rho_floor
    a = np.empty_like(rho)
    for j, state in enumerate(traj.snapshots):
        a[j] = to_rho_a(state, params).a
    dt = np.diff(times)
    out: dict[float, FamilyResidual] = {}
    for s_val, table in tables.items():
        s = table.index.s
        phi = table.phi_at(a.ravel()).reshape(a.shape)
        big_m = table.M_at(a.ravel()).reshape(a.shape)
        rho_s = np.where(rho > floor, rho, 0.0) ** s
        rho_sm1 = np.where(rho > floor, rho, 1.0) ** (s - 1.0) * (rho > floor)
        u_s = rho_s * phi
        f_s = big_m * rho_s * xi
        source = (1.0 - s) * big_m * rho_sm1 * xi * xi
        l1 = 0.0
        gap = 0.0
        for j in range(dt.size):
            r = (u_s[j + 1] - u_s[j]) / dt[j] - periodic_gradient(
                0.5 * (f_s[j] + f_s[j + 1]), h
            )
            l1 += dt[j] * h * float(np.sum(np.abs(r)))
            gap += dt[j] * h * float(
                np.sum(np.abs(r - 0.5 * (source[j] + source[j + 1])))
            )
        out[s_val] = FamilyResidual(l1_norm=l1, source_gap_l1=gap)
    return out


def weak_solution_residual(
    traj: Trajectory, params: Parameters, test_modes: int = 3
) -> tuple[float, float]:
    """Max weak-form residual for each species over a finite test family.

    Test functions are tensor products of (1 - t/T)^p, p in {1, 2}, with the
    Fourier modes 1, cos(2 pi j x), sin(2 pi j x) for j up to test_modes.
    The residual of a test function psi is

        sum_t w_t [ int f psi_t dx - mob int f xi psi_x dx ] + int f0 psi(0) dx

    with f the species density, mob its mobility (1 for m, nu for n), time
    integrals by the trapezoid rule over snapshot times. The time factors
    have degree <= 1 derivatives, so the psi_x = 0 member reduces to exact
    mass conservation. test_modes = 0 keeps only that member.
    """
    times, m, n, rho, xi = _snapshot_stacks(traj, params)
    h = traj.snapshots[0].h
    x = (np.arange(rho.shape[1]) + 0.5) * h
    t_final = times[-1]
    w_t = _trapezoid_weights(times)

    space: list[tuple[np.ndarray, np.ndarray]] = [(np.ones_like(x), np.zeros_like(x))]
    for j in range(1, test_modes + 1):
        arg = 2.0 * np.pi * j * x
        space.append((np.cos(arg), -2.0 * np.pi * j * np.sin(arg)))
        space.append((np.sin(arg), 2.0 * np.pi * j * np.cos(arg)))

    tau = times / t_final
    time_factors = [
        (1.0 - tau, np.full_like(times, -1.0 / t_final)),
        ((1.0 - tau) ** 2, -2.0 * (1.0 - tau) / t_final),
    ]

    res_m = 0.0
    res_n = 0.0
    for g, g_t in time_factors:
        for e, e_x in space:
            for f0, field, mob, acc in ((m[0], m, 1.0, "m"), (n[0], n, params.nu, "n")):
                bulk = w_t * (
                    g_t * (h * field @ e) - mob * g * (h * (field * xi) @ e_x)
                )
                r = float(np.sum(bulk) + g[0] * h * np.dot(f0, e))
                if acc == "m":
                    res_m = max(res_m, abs(r))
                else:
                    res_n = max(res_n, abs(r))
    return res_m, res_n


# ---------------------------------------------------------------------------
# exact balance identity, finite-difference oracle


@dataclass(frozen=True)
class ManufacturedFields:
    """Smooth periodic (rho, a) fields with analytic derivatives."""

    rho: Callable[[np.ndarray, np.ndarray], np.ndarray]
    rho_t: Callable[[np.ndarray, np.ndarray], np.ndarray]
    rho_x: Callable[[np.ndarray, np.ndarray], np.ndarray]
    rho_xx: Callable[[np.ndarray, np.ndarray], np.ndarray]
    a: Callable[[np.ndarray, np.ndarray], np.ndarray]
    a_t: Callable[[np.ndarray, np.ndarray], np.ndarray]
    a_x: Callable[[np.ndarray, np.ndarray], np.ndarray]


def make_trig_fields(
    params: Parameters,
    seed: int = 0,
    margin: float = 0.15,
    constant_a: float | None = None,
) -> ManufacturedFields:
    """Random low-mode trigonometric fields, a kept a margin inside [alpha, beta].

    With constant_a set, the activity is frozen at that interior value (its
    derivatives vanish), which isolates the density part of the identity.
    """
    rng = np.random.default_rng(seed)
    alpha, beta = params.alpha, params.beta
    width = beta - alpha

    kr = int(rng.integers(1, 4))
    ka = int(rng.integers(1, 4))
    wr = float(rng.uniform(0.5, 2.0))
    wa = float(rng.uniform(0.5, 2.0))
    pr, qr = rng.uniform(0.0, 2.0 * np.pi, size=2)
    pa, qa = rng.uniform(0.0, 2.0 * np.pi, size=2)
    amp_r = float(rng.uniform(0.2, 0.5))

    two_pi_kr = 2.0 * np.pi * kr
    two_pi_ka = 2.0 * np.pi * ka

    def rho(t, x):
        return 1.2 + amp_r * np.cos(two_pi_kr * x + pr) * np.cos(wr * t + qr)

    def rho_t(t, x):
        return -amp_r * wr * np.cos(two_pi_kr * x + pr) * np.sin(wr * t + qr)

    def rho_x(t, x):
        return -amp_r * two_pi_kr * np.sin(two_pi_kr * x + pr) * np.cos(wr * t + qr)

    def rho_xx(t, x):
        return -amp_r * two_pi_kr**2 * np.cos(two_pi_kr * x + pr) * np.cos(wr * t + qr)

    if constant_a is not None:
        if not alpha < constant_a < beta:
            raise DomainError("constant_a must be interior to [alpha, beta]")
        a_c = float(constant_a)

        def a(t, x):
            return np.full_like(np.broadcast_arrays(t, x)[1], a_c, dtype=float)

        def zero(t, x):
            return np.zeros_like(np.broadcast_arrays(t, x)[1], dtype=float)

        return ManufacturedFields(rho, rho_t, rho_x, rho_xx, a, zero, zero)

    mid = 0.5 * (alpha + beta)
    amp_a = (0.5 - margin) * width

    def a(t, x):
        return mid + amp_a * np.sin(two_pi_ka * x + pa) * np.cos(wa * t + qa)

    def a_t(t, x):
        return -amp_a * wa * np.sin(two_pi_ka * x + pa) * np.sin(wa * t + qa)

    def a_x(t, x):
        return amp_a * two_pi_ka * np.cos(two_pi_ka * x + pa) * np.cos(wa * t + qa)

    return ManufacturedFields(rho, rho_t, rho_x, rho_xx, a, a_t, a_x)


def balance_identity_oracle(
    s: EntropyIndex | float,
    params: Parameters,
    fields: ManufacturedFields,
    delta: float = 1e-3,
    n_probe_t: int = 3,
    n_probe_x: int = 8,
    quad_tol: float = 1e-12,
) -> float:
    """Max pointwise defect of the exact balance identity on a probe grid.

    The composites U_s = rho^s phi_s(a) and F_s = M_s(a) rho^s rho_x are
    differentiated by centered differences of step delta while the field
    residuals

        r_rho = rho_t - d_x(a rho rho_x)
        r_a   = a_t - (nu+1-a) rho_x a_x - B(a)(rho_xx + rho_x^2 / rho)

    use the analytic derivatives, so the defect of

        d_t U_s - d_x F_s - (1-s) M_s rho^(s-1) rho_x^2
            = s rho^(s-1) phi_s r_rho + rho^s phi_s' r_a

    measures only the finite-difference error: O(delta^2) for arbitrary
    smooth fields, whether or not they solve the system.
    """
    idx = entropy_index(s, params)
    alpha, beta = params.alpha, params.beta
    width = beta - alpha
    t = np.linspace(0.15, 0.85, n_probe_t)[:, None]
    x = ((np.arange(n_probe_x) + 0.3) / n_probe_x)[None, :]
    tt, xx = np.broadcast_arrays(t, x)

    a_c = fields.a(tt, xx)
    probe_all = np.concatenate(
        [
            a_c.ravel(),
            fields.a(tt + delta, xx).ravel(),
            fields.a(tt - delta, xx).ravel(),
            fields.a(tt, xx + delta).ravel(),
            fields.a(tt, xx - delta).ravel(),
        ]
    )
    if probe_all.min() - alpha < 1e-6 * width or beta - probe_all.max() < 1e-6 * width:
        raise DomainError("manufactured activity touches the admissible boundary")

    def u_at(ts, xs):
        av = fields.a(ts, xs)
        phi = phi_eval_many(idx, av.ravel(), params, tol=quad_tol).reshape(av.shape)
        return fields.rho(ts, xs) ** idx.s * phi

    def f_at(ts, xs):
        av = fields.a(ts, xs)
        big_m = M_eval_many(idx, av.ravel(), params, tol=quad_tol).reshape(av.shape)
        return big_m * fields.rho(ts, xs) ** idx.s * fields.rho_x(ts, xs)

    d_t_u = (u_at(tt + delta, xx) - u_at(tt - delta, xx)) / (2.0 * delta)
    d_x_f = (f_at(tt, xx + delta) - f_at(tt, xx - delta)) / (2.0 * delta)

    rho_c = fields.rho(tt, xx)
    rho_t = fields.rho_t(tt, xx)
    rho_x = fields.rho_x(tt, xx)
    rho_xx = fields.rho_xx(tt, xx)
    a_t = fields.a_t(tt, xx)
    a_x = fields.a_x(tt, xx)
    phi_c = phi_eval_many(idx, a_c.ravel(), params, tol=quad_tol).reshape(a_c.shape)
    phi_p = phi_prime_eval(idx, a_c, params)
    big_m = M_eval_many(idx, a_c.ravel(), params, tol=quad_tol).reshape(a_c.shape)

    source = (1.0 - idx.s) * big_m * rho_c ** (idx.s - 1.0) * rho_x**2
    r_rho = rho_t - (a_x * rho_c * rho_x + a_c * rho_x**2 + a_c * rho_c * rho_xx)
    r_a = a_t - (params.nu + 1.0 - a_c) * rho_x * a_x - B_eval(a_c, params) * (
        rho_xx + rho_x**2 / rho_c
    )
    rhs = idx.s * rho_c ** (idx.s - 1.0) * phi_c * r_rho + rho_c**idx.s * phi_p * r_a
    return float(np.max(np.abs(d_t_u - d_x_f - source - rhs)))


# ---------------------------------------------------------------------------
# self-convergence across a ladder


def restrict_cell_means(field: np.ndarray, factor: int) -> np.ndarray:
    """Average consecutive groups of `factor` cells (fine to coarse)."""
    if field.shape[-1] % factor != 0:
        raise DomainError("fine grid size not divisible by coarsening factor")
    shape = field.shape[:-1] + (field.shape[-1] // factor, factor)
    return field.reshape(shape).mean(axis=-1)


def _rho_stack(traj: Trajectory) -> np.ndarray:
    return np.stack([s.m + s.n for s in traj.snapshots])


def _spacetime_l2(diff: np.ndarray, h: float, times: np.ndarray) -> float:
    w_t = _trapezoid_weights(times)
    per_time = h * np.sum(diff * diff, axis=1)
    return float(np.sqrt(np.sum(w_t * per_time)))


def rho_cauchy_differences(rungs: Sequence[Trajectory]) -> np.ndarray:
    """Space-time L^2 gaps between consecutive rungs, finer restricted down."""
    if len(rungs) < 2:
        raise DomainError("need at least two rungs")
    gaps = []
    for coarse, fine in zip(rungs, rungs[1:]):
        times = coarse.snapshot_times
        if not np.array_equal(times, fine.snapshot_times):
            raise DomainError("rungs do not share snapshot times")
        n_coarse = coarse.snapshots[0].n_cells
        factor = fine.snapshots[0].n_cells // n_coarse
        diff = _rho_stack(coarse) - restrict_cell_means(_rho_stack(fine), factor)
        gaps.append(_spacetime_l2(diff, 1.0 / n_coarse, times))
    return np.array(gaps)


def self_convergence_order(
    rungs: Sequence[Trajectory], reference: Trajectory
) -> tuple[np.ndarray, np.ndarray]:
    """Errors of each rung against a restricted reference, and observed orders.

    orders[k] = log2(errors[k] / errors[k+1]); with first-order methods and a
    reference well below the coarsest rung this sits near 1.
    """
    ref_rho = _rho_stack(reference)
    n_ref = reference.snapshots[0].n_cells
    errors = []
    for rung in rungs:
        times = rung.snapshot_times
        if not np.array_equal(times, reference.snapshot_times):
            raise DomainError("reference does not share snapshot times")
        n_k = rung.snapshots[0].n_cells
        factor = n_ref // n_k
        diff = _rho_stack(rung) - restrict_cell_means(ref_rho, factor)
        errors.append(_spacetime_l2(diff, 1.0 / n_k, times))
    errors = np.array(errors)
    orders = np.log2(errors[:-1] / errors[1:])
    return errors, orders


def segregation_overlap(traj: Trajectory) -> np.ndarray:
    """Time series of the species overlap integral int m n dx."""
    h = traj.snapshots[0].h
    return np.array([h * float(np.dot(s.m, s.n)) for s in traj.snapshots])
