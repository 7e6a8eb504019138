"""Limiting constants and limiting covariances for spatial wave averages.

Everything here is deterministic: the ball-pair and disk-pair constants reduce
to one-dimensional integrals with algebraic endpoint weights (handled by
Gauss-Jacobi rules), the cross-kernel and mixed constants have closed or
semi-closed forms, and the limiting covariance is the regime constant times an
explicit double time integral.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy import special

from . import hilbert
from ._quad import _leggauss, adaptive_gl
from .errors import BudgetError, DomainError, UnsupportedRegimeError
from .noise_model import (
    Constant,
    Product,
    RieszSpace,
    RieszTime,
    Scenario,
    SmoothIntegrable,
    big_gamma,
    gamma_antider1,
    gamma_antider2,
    riesz_constant,
)

_DEFAULT_REL_TOL = 1e-10
_DEFAULT_MAX_EVALS = 2_000_000


# ---------------------------------------------------------------------------
# geometric reductions shared by the ball-pair constants
#
# For two independent uniform points of the unit disk the difference vector
# has density A(|delta|)/pi^2 with A the lens area
#   A(rho) = 2 arccos(rho/2) - (rho/2) sqrt(4 - rho^2),  0 <= rho <= 2,
# and A(2u) = 2 g(u) with g(u) = arccos(u) - u sqrt(1-u^2).  Every disk-pair
# constant below is a moment int_0^1 u^p g(u) du.  Near u=1 the factor g
# vanishes like (1-u)^(3/2) times an analytic function, so a Gauss-Jacobi rule
# with exponents (3/2, p) integrates it to machine precision.


def _lens_g(u):
    u = np.asarray(u, dtype=float)
    return np.arccos(u) - u * np.sqrt(np.clip(1.0 - u * u, 0.0, None))


@lru_cache(maxsize=None)
def _g_moment(p: float) -> float:
    """int_0^1 u^p g(u) du for p > -1, by Gauss-Jacobi in both endpoints."""
    nodes, weights = special.roots_jacobi(64, 1.5, p)
    u = 0.5 * (nodes + 1.0)
    f = _lens_g(u) / (1.0 - u) ** 1.5
    # u = (1+x)/2 maps the weight (1-x)^1.5 (1+x)^p onto (1-u)^1.5 u^p with
    # total scale 2^-(1.5 + p + 1)
    return float(2.0 ** (-(1.5 + p + 1.0)) * np.dot(weights, f))


def kappa(beta: float, d: int) -> float:
    """Ball-pair Riesz energy: the integral of |x-y|^-beta over B_1 x B_1.

    d=1 has the closed form 2^(3-beta)/((1-beta)(2-beta)); d=2 reduces to a
    lens-density moment.
    """
    if d not in (1, 2):
        raise DomainError(f"dimension must be 1 or 2, got {d}")
    if not (0.0 < beta < d):
        raise DomainError(f"need 0 < beta < {d}, got beta={beta}")
    if d == 1:
        return 2.0 ** (3.0 - beta) / ((1.0 - beta) * (2.0 - beta))
    return 2.0 * math.pi * 2.0 ** (3.0 - beta) * _g_moment(1.0 - beta)


def kbeta12(beta1: float, beta2: float) -> float:
    """Disk-pair energy for the split kernel |x1-y1|^-b1 |x2-y2|^-b2.

    Writing x - y in polar coordinates separates the integral into an angular
    Beta function and a radial lens-density moment, so no Monte Carlo is
    needed; both factors are evaluated to machine precision.
    """
    for b in (beta1, beta2):
        if not (0.0 < b < 1.0):
            raise DomainError(f"each exponent must lie in (0,1), got {b}")
    sigma = beta1 + beta2
    angular = 2.0 * special.beta(0.5 * (1.0 - beta1), 0.5 * (1.0 - beta2))
    radial = 2.0 ** (3.0 - sigma) * _g_moment(1.0 - sigma)
    return angular * radial


def lbeta(beta: float) -> float:
    """Mixed constant: int 1{x1^2+x2^2<=1} 1{x1^2+x3^2<=1} |x2-x3|^-beta.

    The inner (x2,x3) integral over a square of side 2 sqrt(1-x1^2) is the
    d=1 ball-pair energy rescaled, and the remaining x1 integral is a Beta
    function, giving a fully closed form.
    """
    if not (0.0 < beta < 1.0):
        raise DomainError(f"beta must lie in (0,1), got {beta}")
    nu = 0.5 * (2.0 - beta)
    profile = math.sqrt(math.pi) * special.gamma(nu + 1.0) / special.gamma(nu + 1.5)
    return kappa(beta, 1) * profile


# ---------------------------------------------------------------------------
# closed spectral pairing of two centered wave cones against a Riesz kernel


def _cos_diff_constant(nu: float) -> float:
    """C(nu) with int_0^inf r^(nu-1) (cos(ar) - cos(br)) dr = C(nu)(a^-nu - b^-nu).

    Valid by analytic continuation for -2 < nu < 1, nu != 0; equals
    pi / (2 sin(pi nu / 2) Gamma(1 - nu)).
    """
    return math.pi / (2.0 * math.sin(0.5 * math.pi * nu) * special.gamma(1.0 - nu))


def riesz_cone_inner(d: int, beta: float, s: float, sp: float) -> float:
    """<G_s, G_sp>_0 for gamma = |x|^-beta in dimension d, in closed form.

    The spectral integral reduces to cosine-difference moments of order
    beta - 2, giving  K * ((s+sp)^(2-beta) - |s-sp|^(2-beta))  with
    K = c_{d,beta} * pi^(d-1) * pi / (2 sin(pi beta/2) Gamma(3-beta)).
    """
    if not (s >= 0.0 and sp >= 0.0):
        raise DomainError("cone radii must be nonnegative")
    c = riesz_constant(d, beta)
    K = c * math.pi ** (d - 1) * (-_cos_diff_constant(beta - 2.0))
    return K * ((s + sp) ** (2.0 - beta) - abs(s - sp) ** (2.0 - beta))


# ---------------------------------------------------------------------------
# singular 1-d quadrature on geometrically graded panels


def _graded_edges(a: float, b: float, n: int) -> np.ndarray:
    # panels shrink geometrically toward a; the first edge is exactly a
    r = 0.5 ** np.arange(n, -1, -1.0)
    return a + (b - a) * np.concatenate(([0.0], r))


def _sing_quad(fn, a: float, b: float, p_min: float, order: int = 16) -> float:
    """Integrate fn over (a,b) with an algebraic singularity u^p_min at a.

    Geometric grading toward the endpoint makes the truncated head of the
    integral decay like ratio^(n(1+p_min)), so the panel count scales with
    1/(1+p_min).
    """
    if b <= a:
        return 0.0
    n = max(60, int(math.ceil(40.0 / max(1.0 + p_min, 0.05))))
    edges = _graded_edges(a, b, n)
    xg, wg = _leggauss(order)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    xs = (mid[:, None] + half[:, None] * xg[None, :]).ravel()
    ws = (half[:, None] * wg[None, :]).ravel()
    return float(np.dot(ws, fn(xs)))


# ---------------------------------------------------------------------------
# limiting covariance


def _time_weighted(temporal, t: float, s: float) -> float:
    """int_0^t int_0^s gamma0(r - r') (t - r)(s - r') dr' dr."""
    if isinstance(temporal, Constant):
        return temporal.c * (t * t / 2.0) * (s * s / 2.0)
    alpha = temporal.alpha0

    def W(u):
        # inner profile: integral of (t-r)(s-r'+...) along the line r-r'=u
        u = np.asarray(u, dtype=float)
        lo = np.maximum(0.0, u)
        hi = np.minimum(t, s + u)

        def P(r):
            return t * (s + u) * r - (t + s + u) * r * r / 2.0 + r ** 3 / 3.0

        return np.where(hi > lo, P(hi) - P(lo), 0.0)

    total = 0.0
    # split at the profile's breakpoints and at the kernel singularity u=0
    brk = sorted({-s, 0.0, t - s, t})
    for a, b in zip(brk[:-1], brk[1:]):
        if b <= a:
            continue
        if a == 0.0:
            total += _sing_quad(lambda u: u ** (-alpha) * W(u), 0.0, b, -alpha)
        elif b == 0.0:
            total += _sing_quad(lambda w: w ** (-alpha) * W(-w), 0.0, -a, -alpha)
        else:
            val, _, ok = adaptive_gl(
                lambda u: np.abs(u) ** (-alpha) * W(u), a, b, 1e-11, 500_000
            )
            if not ok:
                raise BudgetError("time-weighted covariance quadrature stalled", partial=val)
            total += val
    return total


def limit_cov(sc: Scenario, t: float, s: float) -> float:
    """Limiting covariance of normalized spatial averages at times (t, s).

    The value is the regime's constant times the weighted double time
    integral of gamma0; the short-range regime has no such constant and
    raises UnsupportedRegimeError.
    """
    for v in (t, s):
        if not (v >= 0.0 and math.isfinite(v)):
            raise DomainError(f"times must be finite and nonnegative, got {v}")
    regime = sc.regime
    if regime == "Part1":
        raise UnsupportedRegimeError(
            "short-range regime has no single limiting constant; "
            "use the chaos series for its variance"
        )
    if t == 0.0 or s == 0.0:
        return 0.0
    v = sc.spatial.variant
    if regime == "Part2":
        const = kappa(v.beta, sc.dim)
    elif regime == "Part3a'":
        const = kbeta12(v.factor1.beta, v.factor2.beta)
    else:  # Part3b'
        if isinstance(v.factor1, SmoothIntegrable):
            smooth, riesz = v.factor1, v.factor2
        else:
            smooth, riesz = v.factor2, v.factor1
        const = smooth.mass * lbeta(riesz.beta)
    return const * _time_weighted(sc.temporal, t, s)


# ---------------------------------------------------------------------------
# short-time kernel masses for the density lower-bound machinery


def _two_cone_mass(variant, s: float, sp: float):
    """<G_s, G_sp>_0 in d=1: quarter of the two-box kernel mass, exact."""
    d = abs(s - sp)
    D = s + sp
    m = min(s, sp)

    def A(u):
        return gamma_antider1(variant, u)

    def B1(u):
        # int_0^u v gamma(v) dv via integration by parts
        return u * gamma_antider1(variant, u) - gamma_antider2(variant, u)

    val = 2.0 * (2.0 * m * A(d) + D * (A(D) - A(d)) - (B1(D) - B1(d)))
    return 0.25 * val


def _two_cone_mass_vec(variant, s_arr, u: float):
    """Vectorized <G_s, G_(s-u)>_0 over an array of s at fixed gap u >= 0."""
    s_arr = np.asarray(s_arr, dtype=float)
    D = 2.0 * s_arr - u
    m = s_arr - u
    A_d = gamma_antider1(variant, u)
    B1_d = u * A_d - gamma_antider2(variant, u)
    A_D = gamma_antider1(variant, D)
    B1_D = D * A_D - gamma_antider2(variant, D)
    val = 2.0 * (2.0 * m * A_d + D * (A_D - A_d) - (B1_D - B1_d))
    return 0.25 * val


def _phi_direct_1d(sc: Scenario, delta: float) -> float:
    """phi(delta) = int int_[0,delta]^2 gamma0(s-s') <G_s, G_s'>_0 ds ds'."""
    variant = sc.spatial.variant
    xg, wg = _leggauss(16)

    def inner(u_arr):
        # int_u^delta <G_s, G_(s-u)>_0 ds by composite Gauss-Legendre
        out = np.empty_like(u_arr)
        for i, u in enumerate(u_arr):
            edges = np.linspace(u, delta, 5)
            mid = 0.5 * (edges[1:] + edges[:-1])
            half = 0.5 * (edges[1:] - edges[:-1])
            ss = (mid[:, None] + half[:, None] * xg[None, :]).ravel()
            ww = (half[:, None] * wg[None, :]).ravel()
            out[i] = np.dot(ww, _two_cone_mass_vec(variant, ss, u))
        return out

    temporal = sc.temporal
    if isinstance(temporal, Constant):
        # the integrand is bounded; grading only has to resolve the Hoelder
        # curvature u^(1-beta) left by a Riesz spatial kernel
        fn = lambda u: temporal.c * inner(u)
        p_min = 0.0
    else:
        alpha = temporal.alpha0
        fn = lambda u: u ** (-alpha) * inner(u)
        p_min = -alpha
    return 2.0 * _sing_quad(fn, 0.0, delta, p_min)


def _psi0_riesz_2d(beta: float, delta: float) -> float:
    K = riesz_constant(2, beta) * math.pi * (-_cos_diff_constant(beta - 2.0))
    return K * 2.0 ** (2.0 - beta) * delta ** (3.0 - beta) / (3.0 - beta)


def _phi_riesz_2d(temporal, beta: float, delta: float) -> float:
    K = riesz_constant(2, beta) * math.pi * (-_cos_diff_constant(beta - 2.0))
    if isinstance(temporal, Constant):
        near = 2.0 * delta ** (4.0 - beta) / ((3.0 - beta) * (4.0 - beta))
        # int int (s+s')^(2-beta) over the square, closed via w = s+s'
        far = (
            delta ** (4.0 - beta) / (4.0 - beta)
            + 2.0 * delta * ((2.0 * delta) ** (3.0 - beta) - delta ** (3.0 - beta)) / (3.0 - beta)
            - ((2.0 * delta) ** (4.0 - beta) - delta ** (4.0 - beta)) / (4.0 - beta)
        )
        return temporal.c * K * (far - near)
    alpha = temporal.alpha0
    # gap variable u = s - s': the |s-s'| part closes, the (s+s') part needs
    # one singular quadrature
    near = 2.0 * delta ** (4.0 - beta - alpha) / ((3.0 - beta - alpha) * (4.0 - beta - alpha))

    def far_fn(u):
        return u ** (-alpha) * ((2.0 * delta - u) ** (3.0 - beta) - u ** (3.0 - beta)) / (3.0 - beta)

    far = _sing_quad(far_fn, 0.0, delta, -alpha)
    return K * (far - near)


def density_integrals(sc: Scenario, delta: float):
    """Short-time kernel masses (psi0, phi, Gamma_delta) with phi <= Gamma*psi0.

    psi0 is the one-time mass int_0^delta ||G_r||_0^2 dr, phi the two-time
    mass weighted by gamma0, and Gamma_delta the temporal dominance constant;
    the returned triple always satisfies the domination inequality (checked
    up to quadrature slack).
    """
    if not (0.0 < delta < min(sc.t_horizon, 1.0)):
        raise DomainError(f"need 0 < delta < min(t_horizon, 1), got {delta}")
    gamma_delta = big_gamma(sc.temporal, delta)
    if sc.dim == 1:
        q = hilbert.QuadSpec(rel_tol=1e-9, max_evals=_DEFAULT_MAX_EVALS)
        psi0 = hilbert.h0_chaos_norm(delta, 0.0, 1, sc, q)
        phi = _phi_direct_1d(sc, delta)
    else:
        v = sc.spatial.variant
        if not isinstance(v, RieszSpace):
            raise UnsupportedRegimeError(
                "d=2 short-time masses are implemented for radial Riesz kernels only"
            )
        psi0 = _psi0_riesz_2d(v.beta, delta)
        phi = _phi_riesz_2d(sc.temporal, v.beta, delta)
    if phi > gamma_delta * psi0 * (1.0 + 1e-6) + 1e-12:
        raise BudgetError(
            f"two-time mass {phi} exceeds the dominance bound {gamma_delta * psi0}",
            partial=phi,
        )
    return psi0, phi, gamma_delta
