"""Grid, state containers, and the (rho, a) change of variables.

The model tracks two nonnegative species densities m(t, x) and n(t, x) on the
unit torus. Both diffuse down the gradient of the common pressure
rho = m + n, species n with mobility ratio nu. Everything downstream works in
the variables

    rho = m + n,        a = (m + nu * n) / rho,

where a lives in the interval I = [alpha, beta] with alpha = min(1, nu) and
beta = max(1, nu). The inverse map and the quadratic weight
B(a) = (a - 1)(nu - a) = (a - alpha)(beta - a) live here too, together with
periodic discrete calculus on a uniform cell-centered grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy


class DomainError(ValueError):
    """Raised when an input leaves the mathematical domain of an operation."""


# Tolerance for accepting a-values marginally outside [alpha, beta]; anything
# further out is a hard error rather than something to clamp silently.
A_RANGE_TOL = 1e-12


@dataclass(frozen=True)
class Parameters:
    """Physical and numerical constants shared across the package.

    nu is the mobility ratio of the second species. nu = 1 collapses the
    interval I to a point; the solver still runs there (the total density
    then follows a single degenerate diffusion equation) but the entropy
    family and the (rho, a) -> (m, n) inverse are undefined and refuse it.
    """

    nu: float
    epsilon: float = 0.0
    t_final: float = 0.25
    rho_floor: float = 1e-10

    def __post_init__(self) -> None:
        if not np.isfinite(self.nu) or self.nu <= 0.0:
            raise DomainError(f"nu must be a positive finite number, got {self.nu}")
        if not np.isfinite(self.epsilon) or self.epsilon < 0.0:
            raise DomainError(f"epsilon must be >= 0, got {self.epsilon}")
        if not np.isfinite(self.t_final) or self.t_final < 0.0:
            raise DomainError(f"t_final must be >= 0, got {self.t_final}")
        if not np.isfinite(self.rho_floor) or self.rho_floor <= 0.0:
            raise DomainError(f"rho_floor must be > 0, got {self.rho_floor}")

    @property
    def alpha(self) -> float:
        return min(1.0, self.nu)

    @property
    def beta(self) -> float:
        return max(1.0, self.nu)

    @property
    def equal_mobilities(self) -> bool:
        return self.nu == 1.0


@dataclass(frozen=True)
class Grid1D:
    """Uniform cell-centered grid on the unit torus."""

    n_cells: int

    def __post_init__(self) -> None:
        if self.n_cells < 2:
            raise DomainError(f"n_cells must be >= 2, got {self.n_cells}")

    @property
    def h(self) -> float:
        return 1.0 / self.n_cells

    @property
    def x(self) -> np.ndarray:
        return (np.arange(self.n_cells) + 0.5) * self.h


@dataclass(frozen=True)
class SpeciesState:
    """Species densities at one time level. Arrays are treated as immutable."""

    t: float
    m: np.ndarray
    n: np.ndarray

    def __post_init__(self) -> None:
        if self.m.shape != self.n.shape or self.m.ndim != 1:
            raise DomainError("m and n must be 1-d arrays of equal length")

    @property
    def n_cells(self) -> int:
        return self.m.size

    @property
    def h(self) -> float:
        return 1.0 / self.m.size


@dataclass(frozen=True)
class DerivedState:
    """(rho, a, xi) view of a SpeciesState.

    xi is the cell-centered periodic gradient of rho. mask_vacuum marks cells
    with rho <= rho_floor, where a carries the conventional midpoint value
    (alpha + beta) / 2. clamp_magnitude records the largest amount by which a
    had to be clipped back into [alpha, beta] (round-off scale by design).
    """

    rho: np.ndarray
    a: np.ndarray
    xi: np.ndarray
    mask_vacuum: np.ndarray
    clamp_magnitude: float


def periodic_gradient(f: np.ndarray, h: float) -> np.ndarray:
    """Second-order centered difference with wrap-around."""
    return (np.roll(f, -1) - np.roll(f, 1)) / (2.0 * h)


def periodic_laplacian(f: np.ndarray, h: float) -> np.ndarray:
    """Standard three-point Laplacian with wrap-around."""
    return (np.roll(f, -1) - 2.0 * f + np.roll(f, 1)) / (h * h)


def integrate(f: np.ndarray, h: float) -> float:
    """Midpoint quadrature over the torus (exact mean times domain length)."""
    return float(h * f.sum())


def B_eval(a, params: Parameters):
    """Quadratic weight B(a) = (a - 1)(nu - a), nonnegative on [alpha, beta]."""
    a = np.asarray(a, dtype=float)
    out = (a - 1.0) * (params.nu - a)
    return out if out.ndim else float(out)


def to_rho_a(state: SpeciesState, params: Parameters) -> DerivedState:
    """Forward change of variables (m, n) -> (rho, a, xi).

    Negative inputs are a hard error. In vacuum cells (rho <= rho_floor) the
    composition a is undefined and set to the midpoint of [alpha, beta].
    """
    m, n = state.m, state.n
    if np.any(m < 0.0) or np.any(n < 0.0):
        raise DomainError("species densities must be nonnegative")
    rho = m + n
    vacuum = rho <= params.rho_floor
    a_mid = 0.5 * (params.alpha + params.beta)
    denom = np.where(vacuum, 1.0, rho)
    a_raw = np.where(vacuum, a_mid, (m + params.nu * n) / denom)
    a = np.clip(a_raw, params.alpha, params.beta)
    clamp = float(np.max(np.abs(a - a_raw), initial=0.0))
    if clamp > A_RANGE_TOL:
        raise DomainError(
            f"composition left [alpha, beta] by {clamp:.3e}; state is corrupt"
        )
    xi = periodic_gradient(rho, state.h)
    return DerivedState(rho=rho, a=a, xi=xi, mask_vacuum=vacuum, clamp_magnitude=clamp)


def from_rho_a(rho: np.ndarray, a: np.ndarray, params: Parameters, t: float = 0.0) -> SpeciesState:
    """Inverse change of variables, m = rho (nu - a)/(nu - 1), n = rho (a - 1)/(nu - 1).

    Requires nu != 1 and a within [alpha, beta] up to round-off.
    """
    if params.equal_mobilities:
        raise DomainError("the inverse map is undefined for nu = 1")
    rho = np.asarray(rho, dtype=float)
    a = np.asarray(a, dtype=float)
    if np.any(rho < 0.0):
        raise DomainError("rho must be nonnegative")
    if np.any(a < params.alpha - A_RANGE_TOL) or np.any(a > params.beta + A_RANGE_TOL):
        raise DomainError("composition outside [alpha, beta]")
    inv = 1.0 / (params.nu - 1.0)
    m = rho * (params.nu - a) * inv
    n = rho * (a - 1.0) * inv
    # round-off can leave -1e-17 scale negatives at the endpoints
    np.maximum(m, 0.0, out=m)
    np.maximum(n, 0.0, out=n)
    return SpeciesState(t=t, m=m, n=n)


def entropy_functional(state: SpeciesState, params: Parameters) -> float:
    """Mixed Boltzmann entropy H = int h(m) + h(n)/nu dx with h(z) = z log z - z.

    xlogy handles z = 0 cells (h(0) = 0) without masking.
    """
    hm = xlogy(state.m, state.m) - state.m
    hn = xlogy(state.n, state.n) - state.n
    return integrate(hm + hn / params.nu, state.h)
