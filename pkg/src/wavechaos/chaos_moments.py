"""Chaos-level covariance series and windowed variance components.

The solution's centered second moment decomposes over chaos levels: level p
contributes Phi_p(t, s; z)/p! to E[u(t,x) u(s,y)] at lag z = x - y, and the
window average F_R picks up an independent variance contribution from each
level.  This module evaluates the low levels -- deterministic frequency
quadrature at p = 1, permutation-exact Monte Carlo over the double time
simplex at p = 2, 3 -- and certifies everything above the truncation with
factorial-decay bounds: the colored-in-time pairing is dominated by the
white-in-time one at the price of a Gamma_t per level, each frequency slot
of the spectral chain is bounded by c_b * w^e in the adjacent time gap, and
the Dirichlet integral of prod w_j^e over the gap simplex supplies the
factorial.

Monte Carlo conventions: QuadSpec.rel_tol is the target standard error
relative to max(1, |estimate|), QuadSpec.max_evals the sampling budget.
Draws are seeded from (operation, scenario, times, level) only -- not from
the probe lag z or the window radius R -- so symmetry pairs and radius
ratios share their random numbers and their errors largely cancel.  All p!
slot pairings are enumerated exactly; only times and frequencies are
sampled.  Power-law temporal kernels are accepted on the sampled paths, but
their importance weights are heavy-tailed for alpha0 >= 1/2 and the
reported standard errors are then optimistic.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from . import _quad
from .errors import BudgetError, ContractError, DomainError, UnsupportedRegimeError
from .hilbert import QuadSpec
from .noise_model import (
    Constant,
    RieszSpace,
    RieszTime,
    Scenario,
    SmoothIntegrable,
    big_gamma,
    dalang_integral,
    gamma0_eval,
    riesz_constant,
    scenario_hash,
    spectral_density,
)

__all__ = [
    "P_MAX",
    "PhiSeries",
    "phi_series",
    "phi_p",
    "phi_p_with_se",
    "second_moment_u",
    "var_J1R",
    "var_FR",
    "var_FR_with_se",
    "var_tail_bound",
    "chaos_series_tail",
    "qp_bound",
]

#: hard truncation level of this build; tails above it are certified, never sampled
P_MAX = 3

_BATCH = 65_536


# ---------------------------------------------------------------------------
# small stable primitives


def _ghat(w, eta):
    """sin(w * eta) / eta elementwise, stable near eta = 0 (limit w)."""
    s = w * eta
    small = np.abs(s) < 1e-4
    safe = np.where(np.abs(eta) < 1e-30, 1.0, eta)
    return np.where(small, w * (1.0 - s * s / 6.0), np.sin(s) / safe)


def _window_sq(R, zeta):
    """Squared Fourier transform of the window indicator of [-R, R]:
    |2 sin(R zeta)/zeta|^2, with the limit 4 R^2 at zeta = 0."""
    g = _ghat(R, zeta)
    return 4.0 * g * g


def _one_minus_sinc_over_sq(a, xi):
    """(1 - sin(a xi)/(a xi)) / xi^2, stable down to xi = 0 (limit a^2/6)."""
    s = a * xi
    small = np.abs(s) < 1e-2
    safe = np.where(np.abs(s) < 1e-300, 1.0, s)
    xsafe = np.where(np.abs(xi) < 1e-300, 1.0, xi)
    series = (a * a / 6.0) * (1.0 - s * s / 20.0 * (1.0 - s * s / 42.0))
    return np.where(small, series, (1.0 - np.sin(safe) / safe) / (xsafe * xsafe))


def _variant_1d(sc: Scenario):
    if sc.dim != 1:
        raise UnsupportedRegimeError(
            "chaos-series evaluation is implemented for dim=1 scenarios"
        )
    return sc.spatial.variant


def _check_time_pair(sc: Scenario, t: float, s: float, ordered: bool = True):
    if not (math.isfinite(t) and math.isfinite(s)):
        raise DomainError("times must be finite")
    if ordered and not (0.0 < s <= t):
        raise DomainError(f"need 0 < s <= t, got s={s}, t={t}")
    if not ordered and not (0.0 < min(t, s)):
        raise DomainError("times must be positive")
    if max(t, s) > sc.t_horizon * (1.0 + 1e-12):
        raise DomainError(f"time beyond scenario horizon {sc.t_horizon}")


def _check_level(p, hi=P_MAX):
    if not isinstance(p, (int, np.integer)) or not (1 <= p <= hi):
        raise DomainError(f"chaos level must be an integer in 1..{hi}, got {p}")


# ---------------------------------------------------------------------------
# certified tail bounds
#
# One frequency slot of the squared spectral chain, integrated against the
# spectral density shifted by the rest of the chain, is bounded by
#     sup_c int phi(xi - c) min(w^2, xi^-2) dxi <= c_b * w^e
# with w the adjacent time gap (e = 1 for a bounded density, e = 2 - beta
# for the power law; the envelope min(w^2, xi^-2) dominates the squared
# wave multiplier and is symmetric decreasing, so the sup sits at c = 0).
# The slot carrying the window factor is bounded the same way with the
# envelope of the window transform, giving lam * R^e in place of c_b w^e.


def _slot_coeff(variant) -> Tuple[float, float]:
    if isinstance(variant, SmoothIntegrable):
        return 2.0 * variant.mass / math.pi, 1.0
    b = variant.beta
    c = riesz_constant(1, b)
    return 2.0 * c * (1.0 / b + 1.0 / (2.0 - b)), 2.0 - b


def _window_coeff(variant) -> Tuple[float, float]:
    if isinstance(variant, SmoothIntegrable):
        # exact int of the window transform (4 pi R) against the density sup
        return 2.0 * variant.mass, 1.0
    c_b, e = _slot_coeff(variant)
    return 4.0 * c_b, e


def var_tail_bound(
    sc: Scenario, t: float, R: float, p_max: int, s: Optional[float] = None
) -> float:
    """Certified bound on sum_{p > p_max} |E[J_{p,R}(t) J_{p,R}(s)]|.

    s defaults to t, giving the variance-series tail of the window average.
    Level p obeys

        Var(J_{p,R}(t)) <= Gamma_t^p * lam R^e * c_b^{p-1}
                           * 2 G(e+1)^{p-1} t^{3+(p-1)(e+1)} / G(4+(p-1)(e+1))

    where the ordered chain kernel occupies a single ordering of the sliced
    white-in-time norm (one Gamma_t per level, no permutation count), each
    interior frequency slot contributes c_b w_j^e, the top slot carries the
    window bound lam R^e together with w_1^2, and the Dirichlet integral of
    w_1^2 prod_{j>=2} w_j^e over the gap simplex evaluates in Gamma
    factors.  Cross terms in (t, s) are bounded by Cauchy-Schwarz.
    """
    variant = _variant_1d(sc)
    if not (R > 0.0 and math.isfinite(R)):
        raise DomainError(f"window radius must be positive, got {R}")
    if not isinstance(p_max, (int, np.integer)) or p_max < 0:
        raise DomainError(f"p_max must be a nonnegative integer, got {p_max}")
    if s is None:
        s = t
    _check_time_pair(sc, t, s, ordered=False)

    c_b, e = _slot_coeff(variant)
    lam, e_r = _window_coeff(variant)
    ln_lam = math.log(lam) + e_r * math.log(R)
    ln_slot = math.log(c_b) + math.lgamma(e + 1.0)

    def ln_term(tau: float, p: int) -> float:
        return (
            p * math.log(big_gamma(sc.temporal, tau))
            + ln_lam
            + (p - 1) * ln_slot
            + math.log(2.0)
            + (3.0 + (p - 1) * (e + 1.0)) * math.log(tau)
            - math.lgamma(4.0 + (p - 1) * (e + 1.0))
        )

    total = 0.0
    for p in range(p_max + 1, p_max + 240):
        term = math.exp(0.5 * (ln_term(t, p) + ln_term(s, p)))
        total += term
        if term <= 1e-17 * total:
            break
    return total


def chaos_series_tail(sc: Scenario, t: float, s: float, p_max: int) -> float:
    """Certified bound on sum_{p > p_max} Phi_p(t, s; z)/p!, uniform in z.

    Via Cauchy-Schwarz and the white-in-time domination,
    Phi_p/p! <= (Gamma_t Gamma_s)^{p/2} sqrt(Xbar_p(t) Xbar_p(s)) with
    Xbar_p(tau) = c_b^p G(e+1)^p tau^{p(e+1)} / G(1 + p(e+1)) bounding the
    sliced squared chain norm through the same per-slot estimate.
    """
    variant = _variant_1d(sc)
    if not isinstance(p_max, (int, np.integer)) or p_max < 0:
        raise DomainError(f"p_max must be a nonnegative integer, got {p_max}")
    _check_time_pair(sc, t, s, ordered=False)
    c_b, e = _slot_coeff(variant)
    ln_slot = math.log(c_b) + math.lgamma(e + 1.0)

    def ln_xbar(tau: float, p: int) -> float:
        return p * ln_slot + p * (e + 1.0) * math.log(tau) - math.lgamma(1.0 + p * (e + 1.0))

    lg_t = math.log(big_gamma(sc.temporal, t))
    lg_s = math.log(big_gamma(sc.temporal, s))
    total = 0.0
    for p in range(p_max + 1, p_max + 240):
        term = math.exp(0.5 * p * (lg_t + lg_s) + 0.5 * (ln_xbar(t, p) + ln_xbar(s, p)))
        total += term
        if term <= 1e-17 * total:
            break
    return total


@dataclass(frozen=True)
class PhiSeries:
    """A truncated chaos covariance series: levels 1..p_max are meant to be
    evaluated numerically, everything above is covered by tail_bound."""

    scenario: Scenario
    p_max: int
    tail_bound: float

    def __post_init__(self):
        if not isinstance(self.p_max, (int, np.integer)) or not (0 <= self.p_max <= P_MAX):
            raise DomainError(f"p_max must be an integer in 0..{P_MAX}, got {self.p_max}")
        if not (self.tail_bound >= 0.0 and math.isfinite(self.tail_bound)):
            raise DomainError(f"tail_bound must be finite and >= 0, got {self.tail_bound}")


def phi_series(sc: Scenario, t: float, s: float, p_max: int = P_MAX) -> PhiSeries:
    """Build the series descriptor for the pair (t, s) with a certified tail."""
    return PhiSeries(sc, int(p_max), chaos_series_tail(sc, t, s, int(p_max)))


# ---------------------------------------------------------------------------
# level 1: deterministic spectral quadrature
#
# Phi_1(t, s; z) = 2 int_0^inf phi(xi) cos(z xi) q(xi) dxi with the time
# factor q(xi) = int_0^t int_0^s gamma0(r - r') ghat_{t-r}(xi) ghat_{s-r'}(xi),
# and E[J_{1,R}(t) J_{1,R}(s)] is the same integral with cos(z xi) replaced
# by the squared window transform.


def _w_int(t, xi):
    """int_0^t sin((t-r) xi)/xi dr = (1 - cos(t xi))/xi^2, stable at 0."""
    x = t * xi
    small = np.abs(x) < 1e-4
    safe = np.where(np.abs(xi) < 1e-30, 1.0, xi)
    return np.where(
        small, 0.5 * t * t * (1.0 - x * x / 12.0), (1.0 - np.cos(x)) / (safe * safe)
    )


def _timefac_constant(temporal: Constant, t: float, s: float):
    c = temporal.c

    def tf(xi):
        return c * _w_int(t, xi) * _w_int(s, xi)

    return tf


def _timefac_riesz_time(temporal: RieszTime, t: float, s: float):
    """Time factor for the power-law temporal kernel.

    Reduced to a single integral over the gap g = r - r': the inner r
    integral of sin((t-r)xi) sin((s+g-r)xi) is elementary, and rewriting it
    as products of sin(a xi)/xi factors keeps the xi -> 0 limit stable.
    The gap integral uses panels graded into the |g|^-alpha singularity.
    """
    a0 = temporal.alpha0
    parts = []
    for hi_side, sign in ((t, 1.0), (s, -1.0)):
        x_n, w_n = _quad.graded_panel_nodes(0.0, hi_side, -a0, order=12)
        if x_n.size:
            parts.append((sign * x_n, w_n * x_n ** (-a0)))
    g = np.concatenate([p[0] for p in parts])
    w = np.concatenate([p[1] for p in parts])
    lo = np.maximum(0.0, g)
    hi = np.minimum(t, s + g)
    keep = hi > lo
    g, w, lo, hi = g[keep], w[keep], lo[keep], hi[keep]
    length = hi - lo
    x_arg = t - s - g                      # constant phase of the product
    y_arg = (t + s + g) - lo - hi          # mean phase of the boundary terms

    def tf(xi):
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        out = np.empty_like(xi)
        for i0 in range(0, xi.shape[0], 2048):
            xb = xi[i0 : i0 + 2048, None]
            # (cos(x xi) - cos(y xi))/xi^2 as a stable product of two sincs
            half_sum = _ghat(0.5 * (x_arg + y_arg)[None, :], xb)
            half_dif = _ghat(0.5 * (x_arg - y_arg)[None, :], xb)
            coscos = -2.0 * half_sum * half_dif
            corr = np.cos(y_arg[None, :] * xb) * _one_minus_sinc_over_sq(
                length[None, :], xb
            )
            out[i0 : i0 + 2048] = (0.5 * length[None, :] * (coscos + corr)) @ w
        return out

    return tf


def _timefac(temporal, t: float, s: float):
    if isinstance(temporal, Constant):
        return _timefac_constant(temporal, t, s)
    return _timefac_riesz_time(temporal, t, s)


def _spectral_cov(sc: Scenario, t: float, s: float, weight, q: QuadSpec) -> float:
    """Shared frequency integral behind Phi_1 and the level-1 window variance.

    weight is ("cos", z) for the point covariance kernel or ("window", R)
    for ball averages.  Power-law densities get panels graded into the
    origin; each span is adaptive with the panel count seeded from the
    oscillation scale, and the integration range is extended octave by
    octave until the last octave's contribution drops below tolerance, so
    the truncation point is verified rather than assumed.
    """
    variant = _variant_1d(sc)
    kind, par = weight
    tf = _timefac(sc.temporal, t, s)
    phi = lambda xi: spectral_density(sc.spatial, xi)

    if kind == "cos":
        wfn = lambda xi: np.cos(par * xi)
        osc = abs(par) + t + s
    else:
        wfn = lambda xi: _window_sq(par, xi)
        osc = 2.0 * par + t + s

    def integrand(xi):
        return phi(xi) * wfn(xi) * tf(xi)

    # magnitude scale of the result (closed integral of the nonnegative
    # envelope): it supplies the absolute tolerance floor for lags where
    # the oscillatory integral cancels to nearly zero
    tmax, tmin = max(t, s), min(t, s)
    v0 = tmin * big_gamma(sc.temporal, tmax)
    c_slot, e_slot = _slot_coeff(variant)
    if kind == "window":
        lam, e_r = _window_coeff(variant)
        m_scale = max(1.0, t * s) * v0 * lam * par ** e_r
    else:
        m_scale = 2.0 * v0 * c_slot * (t * s) ** (0.5 * e_slot)
    floor = q.rel_tol * m_scale

    smooth = isinstance(variant, SmoothIntegrable)
    if smooth:
        cut = 10.0 / variant.scale + 5.0
    else:
        cut = max(20.0, 12.0 / tmin)
    budget = q.max_evals

    used = 0
    total = 0.0
    a = 0.0
    if not smooth:
        h0 = min(1.0, cut / 8.0)
        if kind == "window":
            h0 = min(h0, 1.0 / max(par, 1e-12))
        xh, wh = _quad.graded_panel_nodes(0.0, h0, variant.beta - 1.0, order=12)
        total += float(np.dot(wh, integrand(xh)))
        used += xh.size
        a = h0

    lo = a
    hi = cut
    while True:
        n0 = int(math.ceil((hi - lo) * osc / 6.0)) + 8
        if n0 * 16 > budget - used:
            raise BudgetError(
                f"frequency quadrature not converged within {budget} evaluations",
                partial=2.0 * total,
            )
        val, n_used, ok = _quad.adaptive_gl(
            integrand, lo, hi, q.rel_tol, max(budget - used, 2000),
            n0=n0, abs_tol=0.25 * floor,
        )
        used += n_used
        if not ok:
            raise BudgetError(
                f"frequency quadrature not converged within {budget} evaluations",
                partial=2.0 * (total + val),
            )
        total += val
        block_tol = 0.5 * max(q.rel_tol * abs(total), 0.5 * floor)
        if smooth or abs(val) <= block_tol:
            return 2.0 * total
        lo, hi = hi, 2.0 * hi


# ---------------------------------------------------------------------------
# levels 2, 3: permutation-exact Monte Carlo over the double time simplex
#
# Phi_p(t, s; z) = p! sum_{sigma in S_p} <chain_t, chain_s o sigma> where the
# pairing integrates both ordered simplexes, couples time slots through
# gamma0(r_sigma(k) - v_k), and couples frequencies through the two spectral
# chains evaluated on tail sums of a common frequency vector (the s-side in
# sigma order).  The window variance of J_{p,R} is the same sum without the
# p! prefactor and with the squared window transform of the total frequency
# in place of cos(z .).


def _chain_cross_mc(
    sc: Scenario, t: float, s: float, p: int, q: QuadSpec, weight, seed_parts
) -> Tuple[float, float]:
    variant = _variant_1d(sc)
    temporal = sc.temporal
    heavy_gamma = isinstance(temporal, RieszTime)
    kind, par = weight
    rng = np.random.default_rng(_quad.stable_seed(*seed_parts))
    draw = _quad.freq_sampler(variant)
    perms = [np.array(pp, dtype=int) for pp in itertools.permutations(range(p))]
    cost = (len(perms) + 3) * p + 6
    n_samples = int(max(20_000, min(50_000_000, q.max_evals // cost)))
    fact = math.factorial(p)
    w_simplex = (t ** p) * (s ** p) / (fact * fact)
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < n_samples:
        m = min(_BATCH, n_samples - done)
        r = _quad.sorted_times_desc(rng, t, p, m)
        v = _quad.sorted_times_desc(rng, s, p, m)
        xi, wts = draw(rng, (m, p))
        gaps_r = np.empty_like(r)
        gaps_r[:, 0] = t - r[:, 0]
        gaps_r[:, 1:] = r[:, :-1] - r[:, 1:]
        gaps_v = np.empty_like(v)
        gaps_v[:, 0] = s - v[:, 0]
        gaps_v[:, 1:] = v[:, :-1] - v[:, 1:]
        eta_r = np.cumsum(xi[:, ::-1], axis=1)[:, ::-1]
        g_t = np.prod(_ghat(gaps_r, eta_r), axis=1)
        zeta = np.sum(xi, axis=1)
        wz = np.cos(par * zeta) if kind == "cos" else _window_sq(par, zeta)
        acc = np.zeros(m)
        for sig in perms:
            xs = xi[:, sig]
            eta_s = np.cumsum(xs[:, ::-1], axis=1)[:, ::-1]
            g_s = np.prod(_ghat(gaps_v, eta_s), axis=1)
            gam = gamma0_eval(temporal, r[:, sig] - v)
            if heavy_gamma:
                # exact ties are a measure-zero event; dropping them keeps
                # the estimator unbiased and the accumulator finite
                gam = np.where(np.isfinite(gam), gam, 0.0)
            acc += np.prod(gam, axis=1) * g_s
        vals = (w_simplex * np.prod(wts, axis=1)) * g_t * wz * acc
        total += float(np.sum(vals))
        total_sq += float(np.sum(vals * vals))
        done += m
    mean = total / done
    var = max(total_sq / done - mean * mean, 0.0)
    return mean, math.sqrt(var / done)


def _mc_gate(est: float, se: float, q: QuadSpec, what: str) -> None:
    if est < -3.0 * se - 1e-12:
        raise ContractError(
            f"{what}: negative estimate {est:.6e} beyond three standard errors "
            f"({se:.3e}); the integrand should have nonnegative mean"
        )
    if se > q.rel_tol * max(1.0, abs(est)):
        raise BudgetError(
            f"{what}: standard error {se:.3e} above target "
            f"{q.rel_tol:.1e} * max(1, |value|) with {q.max_evals} evaluations",
            partial=est,
        )


# ---------------------------------------------------------------------------
# public operations


def phi_p_with_se(
    sc: Scenario, t: float, s: float, z: float, p: int, q: Optional[QuadSpec] = None
) -> Tuple[float, float]:
    """Phi_p(t, s; z) together with its standard error (zero at p = 1)."""
    q = q if q is not None else QuadSpec()
    _check_time_pair(sc, t, s)
    _check_level(p)
    z = float(z)
    if not math.isfinite(z):
        raise DomainError("lag z must be finite")
    z = abs(z)  # the kernel is even in the lag; normalizing makes that exact
    if p == 1:
        return _spectral_cov(sc, t, s, ("cos", z), q), 0.0
    est, se = _chain_cross_mc(
        sc, t, s, p, q, ("cos", z),
        ("phi_p", scenario_hash(sc), float(t), float(s), int(p)),
    )
    fact = float(math.factorial(p))
    est *= fact
    se *= fact
    _mc_gate(est, se, q, f"phi_p[p={p}]")
    return max(est, 0.0), se


def phi_p(
    sc: Scenario, t: float, s: float, z: float, p: int, q: Optional[QuadSpec] = None
) -> float:
    """The level-p covariance kernel Phi_p(t, s; z) >= 0.

    Level 1 is deterministic quadrature; levels 2..3 are seeded Monte Carlo
    with every slot pairing enumerated exactly.  An estimate more than three
    standard errors below zero raises ContractError.
    """
    return phi_p_with_se(sc, t, s, z, p, q)[0]


def second_moment_u(
    sc: Scenario,
    t: float,
    x: float,
    s: float,
    y: float,
    p_max: int = P_MAX,
    q: Optional[QuadSpec] = None,
) -> Tuple[float, float]:
    """Truncated series for E[u(t,x) u(s,y)] with a certified tail bound.

    Returns (value, tail) where value = 1 + sum_{p<=p_max} Phi_p(t,s;x-y)/p!
    and tail bounds the discarded levels uniformly in the spatial lag.
    """
    q = q if q is not None else QuadSpec()
    _check_time_pair(sc, t, s)
    if not isinstance(p_max, (int, np.integer)) or not (0 <= p_max <= P_MAX):
        raise DomainError(f"p_max must be an integer in 0..{P_MAX}, got {p_max}")
    x = float(x)
    y = float(y)
    if not (math.isfinite(x) and math.isfinite(y)):
        raise DomainError("spatial points must be finite")
    value = 1.0
    for p in range(1, p_max + 1):
        vp, _ = phi_p_with_se(sc, t, s, x - y, p, q)
        value += vp / math.factorial(p)
    return value, chaos_series_tail(sc, t, s, p_max)


def var_J1R(sc: Scenario, t: float, s: float, R: float, q: Optional[QuadSpec] = None) -> float:
    """E[J_{1,R}(t) J_{1,R}(s)]: the first-chaos covariance of window averages.

    Deterministic frequency quadrature of the spectral density times the
    squared window transform times the closed/singular time factor.  Exactly
    symmetric in (t, s) -- the pair is put in canonical order first.
    """
    q = q if q is not None else QuadSpec()
    if not (R > 0.0 and math.isfinite(R)):
        raise DomainError(f"window radius must be positive, got {R}")
    _check_time_pair(sc, t, s, ordered=False)
    hi, lo = max(t, s), min(t, s)
    return max(_spectral_cov(sc, hi, lo, ("window", float(R)), q), 0.0)


def var_FR_with_se(
    sc: Scenario, t: float, R: float, p_max: int = P_MAX, q: Optional[QuadSpec] = None
):
    """Per-level window variances with their standard errors and the tail.

    Returns (per_p, se_p, tail): per_p[k] = Var(J_{k+1,R}(t)) for levels
    1..p_max, se_p the Monte Carlo standard errors (zero for level 1), and
    tail the certified bound on all levels above p_max.
    """
    q = q if q is not None else QuadSpec()
    if not isinstance(p_max, (int, np.integer)) or not (1 <= p_max <= P_MAX):
        raise DomainError(f"p_max must be an integer in 1..{P_MAX}, got {p_max}")
    if not (R > 0.0 and math.isfinite(R)):
        raise DomainError(f"window radius must be positive, got {R}")
    _check_time_pair(sc, t, t)
    per = np.zeros(p_max)
    ses = np.zeros(p_max)
    per[0] = var_J1R(sc, t, t, R, q)
    for p in range(2, p_max + 1):
        est, se = _chain_cross_mc(
            sc, t, t, p, q, ("window", float(R)),
            ("var_FR", scenario_hash(sc), float(t), int(p)),
        )
        _mc_gate(est, se, q, f"var_FR[p={p}]")
        per[p - 1] = max(est, 0.0)
        ses[p - 1] = se
    return per, ses, var_tail_bound(sc, t, R, p_max)


def var_FR(
    sc: Scenario, t: float, R: float, p_max: int = P_MAX, q: Optional[QuadSpec] = None
):
    """Chaos decomposition of Var(F_R(t)): (per-level vector, certified tail)."""
    per, _, tail = var_FR_with_se(sc, t, R, p_max, q)
    return per, tail


def qp_bound(sc: Scenario, p: int, q: Optional[QuadSpec] = None) -> float:
    """The topless chain integral Q_{p-1} at the scenario horizon.

    Q_0 = t exactly; for p >= 2 the ordered simplex and the p - 1 interior
    frequency slots are sampled (the top gap t - r_1 carries no factor).
    The certified ceiling Q_{p-1} <= C^p/p! with
    C = max(1, 2 (t^2 v 1) * dalang) * max(1, t) is enforced on exit.
    """
    q = q if q is not None else QuadSpec()
    _check_level(p, hi=P_MAX + 1)
    variant = _variant_1d(sc)
    t = float(sc.t_horizon)
    dal = dalang_integral(sc.spatial)
    ceiling_base = max(1.0, 2.0 * max(t * t, 1.0) * dal) * max(1.0, t)
    ceiling = ceiling_base ** p / math.factorial(p)
    if p == 1:
        return t
    rng = np.random.default_rng(
        _quad.stable_seed("qp_bound", scenario_hash(sc), int(p))
    )
    draw = _quad.freq_sampler(variant)
    n_samples = int(max(20_000, min(50_000_000, q.max_evals // (4 * p))))
    w_simplex = t ** p / math.factorial(p)
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < n_samples:
        m = min(_BATCH, n_samples - done)
        r = _quad.sorted_times_desc(rng, t, p, m)
        gaps = r[:, :-1] - r[:, 1:]
        xi, wts = draw(rng, (m, p - 1))
        eta = np.cumsum(xi[:, ::-1], axis=1)[:, ::-1]
        gh = _ghat(gaps, eta)
        vals = w_simplex * np.prod(wts, axis=1) * np.prod(gh * gh, axis=1)
        total += float(np.sum(vals))
        total_sq += float(np.sum(vals * vals))
        done += m
    mean = total / done
    var = max(total_sq / done - mean * mean, 0.0)
    se = math.sqrt(var / done)
    if mean - 3.0 * se > ceiling:
        raise ContractError(
            f"qp_bound: sampled Q_{p-1} = {mean:.6e} exceeds the certified "
            f"ceiling {ceiling:.6e} beyond three standard errors"
        )
    if se > q.rel_tol * max(1.0, abs(mean)):
        raise BudgetError(
            f"qp_bound: standard error {se:.3e} above target with "
            f"{q.max_evals} evaluations",
            partial=mean,
        )
    return mean
