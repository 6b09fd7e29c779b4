"""State containers, change of variables, and grid calculus."""

import numpy as np
import pytest

from crossdiff.core import (
    DomainError,
    Grid1D,
    Parameters,
    SpeciesState,
    B_eval,
    entropy_functional,
    from_rho_a,
    integrate,
    periodic_gradient,
    periodic_laplacian,
    to_rho_a,
)


def test_parameters_interval_orientation():
    p = Parameters(nu=2.0)
    assert (p.alpha, p.beta) == (1.0, 2.0)
    q = Parameters(nu=0.25)
    assert (q.alpha, q.beta) == (0.25, 1.0)
    assert not p.equal_mobilities
    assert Parameters(nu=1.0).equal_mobilities


def test_parameters_validation():
    with pytest.raises(DomainError):
        Parameters(nu=0.0)
    with pytest.raises(DomainError):
        Parameters(nu=-2.0)
    with pytest.raises(DomainError):
        Parameters(nu=float("nan"))
    with pytest.raises(DomainError):
        Parameters(nu=2.0, rho_floor=0.0)


def test_grid_cells_cover_unit_torus():
    g = Grid1D(16)
    assert g.h == pytest.approx(1.0 / 16)
    assert g.x[0] == pytest.approx(g.h / 2)
    assert g.x[-1] == pytest.approx(1.0 - g.h / 2)
    with pytest.raises(DomainError):
        Grid1D(1)


def test_species_state_shape_validation():
    with pytest.raises(DomainError):
        SpeciesState(t=0.0, m=np.zeros(4), n=np.zeros(5))


def test_b_weight_endpoints_and_midpoint():
    p = Parameters(nu=2.0)
    assert B_eval(p.alpha, p) == 0.0
    assert B_eval(p.beta, p) == 0.0
    mid = 0.5 * (p.alpha + p.beta)
    assert B_eval(mid, p) == pytest.approx(((p.beta - p.alpha) / 2.0) ** 2)
    a = np.linspace(p.alpha + 1e-3, p.beta - 1e-3, 31)
    assert np.all(B_eval(a, p) > 0.0)


def test_change_of_variables_round_trip():
    p = Parameters(nu=2.0)
    rng = np.random.default_rng(42)
    m = rng.uniform(0.1, 1.0, size=64)
    n = rng.uniform(0.1, 1.0, size=64)
    state = SpeciesState(t=0.3, m=m, n=n)
    derived = to_rho_a(state, p)
    assert np.all(derived.a >= p.alpha) and np.all(derived.a <= p.beta)
    assert derived.clamp_magnitude == 0.0
    assert not derived.mask_vacuum.any()
    back = from_rho_a(derived.rho, derived.a, p, t=state.t)
    np.testing.assert_allclose(back.m, m, rtol=0.0, atol=1e-14)
    np.testing.assert_allclose(back.n, n, rtol=0.0, atol=1e-14)


def test_to_rho_a_rejects_negative_densities():
    p = Parameters(nu=2.0)
    m = np.full(8, 0.5)
    m[3] = -0.1
    with pytest.raises(DomainError):
        to_rho_a(SpeciesState(t=0.0, m=m, n=np.full(8, 0.5)), p)


def test_vacuum_cells_masked_with_inert_value():
    p = Parameters(nu=2.0, rho_floor=1e-10)
    m = np.full(8, 0.4)
    n = np.full(8, 0.6)
    m[2] = n[2] = 0.0
    derived = to_rho_a(SpeciesState(t=0.0, m=m, n=n), p)
    assert derived.mask_vacuum[2]
    assert derived.mask_vacuum.sum() == 1
    assert derived.a[2] == pytest.approx(0.5 * (p.alpha + p.beta))


def test_from_rho_a_requires_distinct_mobilities():
    p1 = Parameters(nu=1.0)
    with pytest.raises(DomainError):
        from_rho_a(np.ones(4), np.ones(4), p1)


def test_periodic_calculus_on_pure_mode():
    n = 256
    g = Grid1D(n)
    f = np.sin(2.0 * np.pi * g.x)
    grad = periodic_gradient(f, g.h)
    lap = periodic_laplacian(f, g.h)
    # centered stencils are second order: h^2 f'''/6 error for the gradient
    tol = (2.0 * np.pi) ** 3 / 6.0 * g.h**2 * 1.01
    assert np.max(np.abs(grad - 2.0 * np.pi * np.cos(2.0 * np.pi * g.x))) < tol
    assert np.max(np.abs(lap + (2.0 * np.pi) ** 2 * f)) < (2.0 * np.pi) ** 4 * g.h**2
    assert integrate(f, g.h) == pytest.approx(0.0, abs=1e-15)
    assert integrate(np.full(n, 3.5), g.h) == pytest.approx(3.5)


def test_entropy_functional_constant_state():
    p = Parameters(nu=2.0)
    m = np.full(32, 0.6)
    n = np.full(32, 0.4)
    state = SpeciesState(t=0.0, m=m, n=n)
    expected = (0.6 * np.log(0.6) - 0.6) + (0.4 * np.log(0.4) - 0.4) / 2.0
    assert entropy_functional(state, p) == pytest.approx(expected, rel=1e-14)


def test_entropy_functional_handles_vacuum():
    p = Parameters(nu=2.0)
    state = SpeciesState(t=0.0, m=np.zeros(8), n=np.zeros(8))
    assert entropy_functional(state, p) == 0.0
