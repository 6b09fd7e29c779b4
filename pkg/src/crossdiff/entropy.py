"""The one-parameter entropy family phi_s and its flux companion M_s.

For a mobility ratio nu != 1 set alpha = min(1, nu), beta = max(1, nu). On the
open interval (alpha, beta) define

    X(a) = (alpha * log(a - alpha) - beta * log(beta - a)) / (beta - alpha),

so that X'(a) = a / B(a) with B(a) = (a - alpha)(beta - a). For an index s in
the open strip S = (alpha/beta, beta/alpha) the generator and its flux weight
are

    phi_s(a)  = int_alpha^a exp(-(s - 1) X(r)) dr,
    M_s(a)    = s * a * phi_s(a) + B(a) * phi_s'(a).

phi_s' = exp(-(s-1) X) is an explicit product of two power laws,

    phi_s'(a) = (a - alpha)^(-p_a) * (beta - a)^(p_b),
    p_a = (s - 1) alpha / (beta - alpha),   p_b = (s - 1) beta / (beta - alpha),

integrable on I exactly when s stays inside S. The integration constant of X
is fixed to 0; every evaluator takes an `offset` argument that shifts X by a
constant C, which rescales phi_s and M_s by exp(-(s-1) C).

Quadrature is composite 16-point Gauss-Legendre on panels whose widths halve
geometrically toward the interval ends (the integrand has endpoint power
singularities and nothing else). phi_s is tabulated once per (s, nu) on 4096
Chebyshev nodes for the per-cell diagnostics; near the endpoints the table
interpolates the smooth factored forms phi/(a-alpha)^(1-p_a) and
(phi(beta)-phi)/(beta-a)^(1+p_b) so the fractional-power behavior does not eat
the interpolation budget.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping

import numpy as np
from scipy.interpolate import PchipInterpolator

from .core import A_RANGE_TOL, B_eval, DomainError, Parameters

logger = logging.getLogger(__name__)

_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)

# fraction of (beta - alpha) below/above which table queries switch to the
# factored endpoint forms; node windows extend to twice this so the stitched
# interpolants are queried well inside their data
_ZONE_CUT = 0.05

DEFAULT_QUAD_TOL = 1e-10
TABLE_NODES = 4096
TABLE_QUAD_TOL = 1e-12


@dataclass(frozen=True)
class EntropyIndex:
    """Validated entropy index. inside_J flags the collapse range 1 < s < beta/alpha."""

    s: float
    inside_J: bool


def admissible_strip(params: Parameters) -> tuple[float, float]:
    """Open interval of admissible indices, (alpha/beta, beta/alpha)."""
    return params.alpha / params.beta, params.beta / params.alpha


def entropy_index(s, params: Parameters) -> EntropyIndex:
    if isinstance(s, EntropyIndex):
        return s
    if params.equal_mobilities:
        raise DomainError("entropy family is undefined for nu = 1 (empty strip)")
    lo, hi = admissible_strip(params)
    s = float(s)
    if not (lo < s < hi):
        raise DomainError(f"index s={s} outside the admissible strip ({lo}, {hi})")
    return EntropyIndex(s=s, inside_J=1.0 < s < hi)


def _exponents(s_val: float, params: Parameters) -> tuple[float, float]:
    width = params.beta - params.alpha
    return (s_val - 1.0) * params.alpha / width, (s_val - 1.0) * params.beta / width


def X_eval(a, params: Parameters, offset: float = 0.0):
    """X(a) on the open interval; endpoint input is a domain error."""
    if params.equal_mobilities:
        raise DomainError("X is undefined for nu = 1")
    a_arr = np.asarray(a, dtype=float)
    if np.any(a_arr <= params.alpha) or np.any(a_arr >= params.beta):
        raise DomainError("X is only defined strictly inside (alpha, beta)")
    width = params.beta - params.alpha
    out = (
        params.alpha * np.log(a_arr - params.alpha)
        - params.beta * np.log(params.beta - a_arr)
    ) / width + offset
    return out if out.ndim else float(out)


def phi_prime_eval(s, a, params: Parameters, offset: float = 0.0):
    """phi_s'(a) = exp(-(s-1) X(a)) as an explicit power product.

    Endpoint inputs return the one-sided limit: 0.0 where the power vanishes,
    +inf where it diverges (detect with np.isinf). Interior values are finite
    and strictly positive.
    """
    idx = entropy_index(s, params)
    a_arr = np.asarray(a, dtype=float)
    _check_a_range(a_arr, params)
    a_arr = np.clip(a_arr, params.alpha, params.beta)
    pa, pb = _exponents(idx.s, params)
    scale = np.exp(-(idx.s - 1.0) * offset)
    with np.errstate(divide="ignore"):
        out = scale * (a_arr - params.alpha) ** (-pa) * (params.beta - a_arr) ** pb
    return out if out.ndim else float(out)


def _check_a_range(a_arr: np.ndarray, params: Parameters) -> None:
    if np.any(a_arr < params.alpha - A_RANGE_TOL) or np.any(
        a_arr > params.beta + A_RANGE_TOL
    ):
        raise DomainError("composition argument outside [alpha, beta]")


def _gl_panel(w: Callable, lo: float, hi: float) -> float:
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    return half * float(np.dot(w(mid + half * _GL_X), _GL_W))


def _graded_down(f: Callable, lo: float, hi: float, tol: float, p_sing: float) -> float:
    """Composite GL16 over [lo, hi] with panel widths halving toward lo.

    p_sing is the known power of the integrand at the graded end
    (f ~ (u - lo)^(-p_sing), p_sing < 1). Panels are added until the last
    contribution times the geometric tail factor 2^-(1-p)/(1 - 2^-(1-p))
    drops below tol/10; for p_sing = 0 this reduces to the plain last-panel
    rule.
    """
    p = min(max(p_sing, 0.0), 0.999)
    ratio = 0.5 ** (1.0 - p)
    tail = max(ratio / (1.0 - ratio), 1.0)
    total = 0.0
    right = hi
    while True:
        left = lo + 0.5 * (right - lo)
        if not (lo < left < right):
            break
        c = _gl_panel(f, left, right)
        total += c
        if abs(c) * tail < 0.1 * tol:
            break
        right = left
    return total


_HEAD_FRACTION = 1e-3


def _head_segment(u1: float, u2: float, width: float, p_end: float, p_far: float) -> float:
    """int_{u1}^{u2} u^(-p_end) (width - u)^(p_far) du by binomial series.

    Valid for u2 << width (truncation below (u2/width)^12) and any
    p_end < 1, including p_end arbitrarily close to 1 where graded panels
    cannot terminate: the k = 0 term carries the near-flat power u^(1-p_end)
    exactly. Used for the slice next to a singular endpoint.
    """
    out = 0.0
    coef = width**p_far
    log_ratio = np.log(u2 / u1) if u1 > 0.0 else 0.0
    for k in range(12):
        c = k + 1.0 - p_end
        if u1 > 0.0:
            term = u1**c * np.expm1(c * log_ratio) / c
        else:
            term = u2**c / c
        out += coef * term
        coef *= (k - p_far) / (k + 1.0) / width
    return out


def _integrate_weight(
    idx: EntropyIndex,
    params: Parameters,
    r1: float,
    r2: float,
    tol: float,
    offset: float,
) -> float:
    """int_{r1}^{r2} phi_s'(r) dr by graded panels in endpoint coordinates.

    The interval is split at the strip center, never at its own midpoint:
    everything left of center is integrated in u = r - alpha, everything
    right of it in v = beta - r, each graded toward its endpoint. The split
    point must not depend on [r1, r2], because a segment sitting next to
    alpha would otherwise send its upper half through the beta-coordinate
    path, where width - v cancels to a few ulp and the grading points away
    from the peak; that combination loses ~1e-8 per segment regardless of
    tol. Working in distance-to-endpoint coordinates keeps full float
    resolution next to the singular point (panels in absolute coordinates
    bottom out at eps(alpha) and silently drop an eps^(1-p) - sized tail).
    The slice closer to the endpoint than _HEAD_FRACTION * width is summed
    analytically: when an exponent approaches -1 the power decays too
    slowly for bisection to ever reach the panel-size stopping rule.
    """
    if r2 <= r1:
        return 0.0
    pa, pb = _exponents(idx.s, params)
    alpha, beta = params.alpha, params.beta
    width = beta - alpha
    scale = np.exp(-(idx.s - 1.0) * offset)

    def from_alpha(u: np.ndarray) -> np.ndarray:
        return scale * u ** (-pa) * (width - u) ** pb

    def from_beta(v: np.ndarray) -> np.ndarray:
        return scale * (width - v) ** (-pa) * v**pb

    center = alpha + 0.5 * width
    head_w = _HEAD_FRACTION * width

    def one_side(f, lo, hi, p_end, p_far):
        cut = min(head_w, hi)
        if lo < cut:
            head = scale * _head_segment(lo, cut, width, p_end, p_far)
            return head + _graded_down(f, cut, hi, 0.5 * tol, max(p_end, 0.0))
        return _graded_down(f, lo, hi, 0.5 * tol, max(p_end, 0.0))

    total = 0.0
    if r1 < center:
        total += one_side(from_alpha, r1 - alpha, min(r2, center) - alpha, pa, pb)
    if r2 > center:
        total += one_side(from_beta, beta - r2, beta - max(r1, center), -pb, -pa)
    return total


def phi_eval(
    s, a, params: Parameters, tol: float = DEFAULT_QUAD_TOL, offset: float = 0.0
) -> float:
    """phi_s(a) by graded quadrature; phi_s(alpha) = 0 exactly.

    s = 1 has integrand identically 1 and returns a - alpha without
    quadrature.
    """
    idx = entropy_index(s, params)
    a = float(a)
    _check_a_range(np.asarray(a), params)
    a = min(max(a, params.alpha), params.beta)
    if idx.s == 1.0:
        return a - params.alpha
    if a == params.alpha:
        return 0.0
    return _integrate_weight(idx, params, params.alpha, a, tol, offset)


def phi_eval_many(
    s,
    a_values: np.ndarray,
    params: Parameters,
    tol: float = DEFAULT_QUAD_TOL,
    offset: float = 0.0,
) -> np.ndarray:
    """phi_s at many points via cumulative segment quadrature (one sweep)."""
    idx = entropy_index(s, params)
    vals = np.asarray(a_values, dtype=float)
    _check_a_range(vals, params)
    vals = np.clip(vals, params.alpha, params.beta)
    if idx.s == 1.0:
        return vals - params.alpha
    order = np.argsort(vals, kind="stable")
    seg_tol = tol / (vals.size + 1)
    out = np.empty_like(vals)
    acc = 0.0
    prev = params.alpha
    for k in order:
        v = vals[k]
        acc += _integrate_weight(idx, params, prev, v, seg_tol, offset)
        out[k] = acc
        prev = v
    return out


def _b_phi_prime(idx: EntropyIndex, a, params: Parameters, offset: float):
    """B(a) * phi_s'(a) in the combined form (a-alpha)^(1-p_a) (beta-a)^(1+p_b).

    Both exponents are positive on the admissible strip, so the product is
    finite on all of [alpha, beta] and vanishes at the endpoints.
    """
    pa, pb = _exponents(idx.s, params)
    a_arr = np.asarray(a, dtype=float)
    scale = np.exp(-(idx.s - 1.0) * offset)
    out = (
        scale
        * (a_arr - params.alpha) ** (1.0 - pa)
        * (params.beta - a_arr) ** (1.0 + pb)
    )
    return out if out.ndim else float(out)


def M_eval(
    s, a, params: Parameters, tol: float = DEFAULT_QUAD_TOL, offset: float = 0.0
) -> float:
    """M_s(a) = s a phi_s(a) + B(a) phi_s'(a), finite on the closed interval.

    The endpoint products are evaluated through their finite limits:
    M_s(alpha) = 0 and M_s(beta) = s beta phi_s(beta).
    """
    idx = entropy_index(s, params)
    a = float(a)
    _check_a_range(np.asarray(a), params)
    a = min(max(a, params.alpha), params.beta)
    return idx.s * a * phi_eval(idx, a, params, tol, offset) + _b_phi_prime(
        idx, a, params, offset
    )


def M_eval_many(
    s,
    a_values: np.ndarray,
    params: Parameters,
    tol: float = DEFAULT_QUAD_TOL,
    offset: float = 0.0,
) -> np.ndarray:
    """Vectorized M_s via one cumulative phi sweep."""
    idx = entropy_index(s, params)
    vals = np.asarray(a_values, dtype=float)
    _check_a_range(vals, params)
    vals = np.clip(vals, params.alpha, params.beta)
    phi = phi_eval_many(idx, vals, params, tol, offset)
    return idx.s * vals * phi + _b_phi_prime(idx, vals, params, offset)


@dataclass(frozen=True)
class EntropyTable:
    """phi_s tabulated on Chebyshev nodes with stitched monotone interpolation.

    nodes/phi/phi_prime/M are the raw tabulated arrays (phi_prime holds the
    one-sided limits at the endpoints, which may be inf). Evaluation goes
    through three PCHIP interpolants: the factored endpoint forms near
    alpha/beta and plain phi in the middle.
    """

    index: EntropyIndex
    params: Parameters
    nodes: np.ndarray
    phi: np.ndarray
    phi_prime: np.ndarray
    M: np.ndarray
    quad_tol: float
    offset: float
    _interp_lo: PchipInterpolator
    _interp_mid: PchipInterpolator
    _interp_hi: PchipInterpolator

    @property
    def phi_total(self) -> float:
        return float(self.phi[-1])

    def phi_at(self, a) -> np.ndarray:
        p = self.params
        a_arr = np.asarray(a, dtype=float)
        _check_a_range(a_arr, p)
        a_arr = np.clip(a_arr, p.alpha, p.beta)
        pa, pb = _exponents(self.index.s, p)
        width = p.beta - p.alpha
        cut_lo = p.alpha + _ZONE_CUT * width
        cut_hi = p.beta - _ZONE_CUT * width
        out = np.empty(a_arr.shape, dtype=float)
        lo = a_arr < cut_lo
        hi = a_arr > cut_hi
        mid = ~(lo | hi)
        if lo.any():
            out[lo] = self._interp_lo(a_arr[lo]) * (a_arr[lo] - p.alpha) ** (1.0 - pa)
        if hi.any():
            out[hi] = self.phi_total - self._interp_hi(a_arr[hi]) * (
                p.beta - a_arr[hi]
            ) ** (1.0 + pb)
        if mid.any():
            out[mid] = self._interp_mid(a_arr[mid])
        return out if out.ndim else float(out)

    def phi_prime_at(self, a) -> np.ndarray:
        return phi_prime_eval(self.index, a, self.params, self.offset)

    def M_at(self, a) -> np.ndarray:
        a_arr = np.asarray(a, dtype=float)
        return self.index.s * a_arr * self.phi_at(a_arr) + _b_phi_prime(
            self.index, a_arr, self.params, self.offset
        )


def build_table(
    s,
    params: Parameters,
    n_nodes: int = TABLE_NODES,
    tol: float = TABLE_QUAD_TOL,
    offset: float = 0.0,
) -> EntropyTable:
    """Tabulate phi_s on Chebyshev-Lobatto nodes by cumulative quadrature."""
    idx = entropy_index(s, params)
    if n_nodes < 16:
        raise DomainError("n_nodes must be at least 16")
    alpha, beta = params.alpha, params.beta
    width = beta - alpha
    theta = np.pi * np.arange(n_nodes) / (n_nodes - 1)
    nodes = 0.5 * (alpha + beta) - 0.5 * width * np.cos(theta)
    nodes[0], nodes[-1] = alpha, beta

    pa, pb = _exponents(idx.s, params)
    seg_tol = min(tol, 1e-13)
    phi = np.zeros(n_nodes)
    if idx.s == 1.0:
        phi[:] = nodes - alpha
    else:
        acc = 0.0
        for j in range(n_nodes - 1):
            acc += _integrate_weight(idx, params, nodes[j], nodes[j + 1], seg_tol, offset)
            phi[j + 1] = acc

    phi_prime = phi_prime_eval(idx, nodes, params, offset)
    M = idx.s * nodes * phi + _b_phi_prime(idx, nodes, params, offset)

    scale = np.exp(-(idx.s - 1.0) * offset)
    zone = 2.0 * _ZONE_CUT * width
    i_lo = nodes <= alpha + zone
    i_hi = nodes >= beta - zone
    g = np.empty(int(i_lo.sum()))
    g_nodes = nodes[i_lo]
    g[0] = scale * width**pb / (1.0 - pa)
    g[1:] = phi[i_lo][1:] / (g_nodes[1:] - alpha) ** (1.0 - pa)
    h_nodes = nodes[i_hi]
    hh = np.empty(h_nodes.size)
    hh[-1] = scale * width ** (-pa) / (1.0 + pb)
    hh[:-1] = (phi[-1] - phi[i_hi][:-1]) / (beta - h_nodes[:-1]) ** (1.0 + pb)
    i_mid = (nodes >= alpha + 0.4 * zone) & (nodes <= beta - 0.4 * zone)

    return EntropyTable(
        index=idx,
        params=params,
        nodes=nodes,
        phi=phi,
        phi_prime=phi_prime,
        M=M,
        quad_tol=seg_tol,
        offset=offset,
        _interp_lo=PchipInterpolator(g_nodes, g),
        _interp_mid=PchipInterpolator(nodes[i_mid], phi[i_mid]),
        _interp_hi=PchipInterpolator(h_nodes, hh),
    )


def build_tables(
    s_values: Iterable, params: Parameters, **kwargs
) -> dict[float, EntropyTable]:
    """One EntropyTable per index, keyed by the float value of s."""
    out: dict[float, EntropyTable] = {}
    for s in s_values:
        idx = entropy_index(s, params)
        out[idx.s] = build_table(idx, params, **kwargs)
    return out


def verify_ode_residual(s, params: Parameters, n_probe: int = 201) -> float:
    """Max residual of B phi'' + (s-1) a phi' = 0 on an interior probe grid.

    phi'' comes from the closed form -(s-1) X'(a) phi'(a); the residual is
    analytically zero, so this checks the implementation's internal
    consistency to round-off.
    """
    idx = entropy_index(s, params)
    width = params.beta - params.alpha
    probes = np.linspace(
        params.alpha + 0.05 * width, params.beta - 0.05 * width, n_probe
    )
    b = B_eval(probes, params)
    phip = phi_prime_eval(idx, probes, params)
    phipp = -(idx.s - 1.0) * (probes / b) * phip
    res = b * phipp + (idx.s - 1.0) * probes * phip
    return float(np.max(np.abs(res)))


def verify_M_identities(
    s,
    params: Parameters,
    delta: float = 1e-2,
    n_probe: int = 41,
    tol: float = 1e-12,
) -> tuple[float, float]:
    """Centered-difference checks of M_s' and (M_s/a)' against closed forms.

    Returns (res1, res2) with
        res1 = max |D_delta M_s - (s phi_s + (nu + 1 - a) phi_s')|,
        res2 = max |D_delta (M_s/a) - nu phi_s' / a^2|.
    Both decay at order delta^2 until quadrature noise (~tol/delta) takes
    over. The probe grid sits a fixed margin of 0.1(beta-alpha) inside the
    interval and does not move with delta (otherwise the blow-up of the
    higher derivatives toward the endpoints pollutes the observed order).
    """
    idx = entropy_index(s, params)
    width = params.beta - params.alpha
    margin = 0.1 * width
    if delta >= 0.4 * margin:
        raise DomainError("delta too large for the fixed probe margin")
    probes = np.linspace(params.alpha + margin, params.beta - margin, n_probe)
    pts = np.concatenate([probes - delta, probes, probes + delta])
    phi_all = phi_eval_many(idx, pts, params, tol)
    phi_m, phi_0, phi_p = np.split(phi_all, 3)
    bphi = lambda a: _b_phi_prime(idx, a, params, 0.0)
    M_m = idx.s * (probes - delta) * phi_m + bphi(probes - delta)
    M_0 = idx.s * probes * phi_0 + bphi(probes)
    M_p = idx.s * (probes + delta) * phi_p + bphi(probes + delta)

    phip = phi_prime_eval(idx, probes, params)
    dM_fd = (M_p - M_m) / (2.0 * delta)
    dM_exact = idx.s * phi_0 + (params.nu + 1.0 - probes) * phip
    res1 = float(np.max(np.abs(dM_fd - dM_exact)))

    dMa_fd = (M_p / (probes + delta) - M_m / (probes - delta)) / (2.0 * delta)
    dMa_exact = params.nu * phip / probes**2
    res2 = float(np.max(np.abs(dMa_fd - dMa_exact)))
    return res1, res2


def two_point_positivity_margin(
    s,
    r: float,
    q: float,
    params: Parameters,
    tol: float = 1e-10,
) -> float:
    """(q-r) int phi'/u^2 - (int phi')(int u^-2) over [r, q]; positive for s > 1.

    phi' and 1/u^2 are both strictly decreasing for s > 1, so the Chebyshev
    integral inequality is strict. int phi' = phi(q) - phi(r) comes from the
    quadrature sweep and int u^-2 = 1/r - 1/q is analytic; the weighted
    integral uses bisected panels graded toward r where phi' is steepest.
    """
    idx = entropy_index(s, params)
    if not params.alpha < r < q < params.beta:
        raise DomainError("need alpha < r < q < beta")

    def integrand(u: np.ndarray) -> np.ndarray:
        return phi_prime_eval(idx, u, params) / (u * u)

    mid = 0.5 * (r + q)
    left = _graded_down(lambda v: integrand(r + v), 0.0, mid - r, 0.5 * tol, 0.0)
    right = _graded_down(lambda v: integrand(q - v), 0.0, q - mid, 0.5 * tol, 0.0)
    weighted = left + right
    phi_r, phi_q = phi_eval_many(idx, np.array([r, q]), params, tol)
    return (q - r) * weighted - (phi_q - phi_r) * (1.0 / r - 1.0 / q)


def approximate_in_span(
    a_grid: np.ndarray,
    target: np.ndarray,
    s_values: Iterable,
    params: Parameters,
    tol: float = 1e-12,
) -> tuple[np.ndarray, float]:
    """Least-squares fit of target samples by span{1, phi_s : s in s_values}.

    Returns (coefficients, sup_error) with coefficients ordered as
    [constant, phi_{s_1}, ...]. A rank-deficient design matrix falls back to
    the minimum-norm solution and logs the condition estimate.
    """
    a_grid = np.asarray(a_grid, dtype=float)
    target = np.asarray(target, dtype=float)
    if a_grid.shape != target.shape or a_grid.ndim != 1:
        raise DomainError("a_grid and target must be 1-d arrays of equal length")
    cols = [np.ones_like(a_grid)]
    for s in s_values:
        cols.append(phi_eval_many(s, a_grid, params, tol))
    design = np.column_stack(cols)
    coeffs, _, rank, svals = np.linalg.lstsq(design, target, rcond=None)
    if rank < design.shape[1]:
        cond = float(svals[0] / svals[-1]) if svals[-1] > 0.0 else np.inf
        logger.warning(
            "rank-deficient span fit (rank %d of %d, cond ~ %.3e); "
            "using minimum-norm solution",
            rank,
            design.shape[1],
            cond,
        )
    sup_error = float(np.max(np.abs(design @ coeffs - target)))
    return coeffs, sup_error


def table_rows(table: EntropyTable) -> list[tuple[float, float, float, float]]:
    """(a, phi, phi_prime, M) rows for the per-index table dump."""
    return [
        (float(a), float(p), float(pp), float(mm))
        for a, p, pp, mm in zip(table.nodes, table.phi, table.phi_prime, table.M)
    ]
