"""Shared quadrature primitives.

The workhorse is an exact integrator for  int k(u) * C(u) du  where k is one
of the correlation kernels (gaussian bump, power law, constant) and C is the
piecewise-linear interpolant of lattice samples: each cell contributes
c0*[A] + c1*[B1] with A an antiderivative of k and B1 an antiderivative of
u*k(u), both in closed form.  Power-law singularities need no special casing
because A and B1 stay continuous through u = 0.

Also here: exact lattice cross-correlation of piecewise-linear functions,
Gauss-Legendre panel helpers, ordered-time simplex sampling, and spectral
importance samplers whose proposal matches the spectral density (so the
importance weights are flat or at worst max(1, xi^2)-bounded).
"""

from __future__ import annotations

import hashlib
import math
from functools import lru_cache

import numpy as np
from scipy import special
from scipy.signal import correlate, correlation_lags

from .errors import DomainError
from .noise_model import Constant, RieszSpace, RieszTime, SmoothIntegrable, riesz_constant

_SQRT_TWO_PI = math.sqrt(2.0 * math.pi)


# ---------------------------------------------------------------------------
# 1-d kernel protocol: pointwise value + the two antiderivatives


def kernel_eval(kern, u):
    """Pointwise value of a 1-d correlation kernel (space or time variant)."""
    arr = np.asarray(u, dtype=float)
    if isinstance(kern, Constant):
        return np.full_like(arr, kern.c)
    if isinstance(kern, SmoothIntegrable):
        s = kern.scale
        return kern.mass / (s * _SQRT_TWO_PI) * np.exp(-0.5 * (arr / s) ** 2)
    a = kern.alpha0 if isinstance(kern, RieszTime) else kern.beta
    with np.errstate(divide="ignore"):
        return np.abs(arr) ** (-a)


def kernel_A(kern, u):
    """Odd antiderivative A(u) = int_0^u k(v) dv."""
    arr = np.asarray(u, dtype=float)
    if isinstance(kern, Constant):
        return kern.c * arr
    if isinstance(kern, SmoothIntegrable):
        return kern.mass * (special.ndtr(arr / kern.scale) - 0.5)
    a = kern.alpha0 if isinstance(kern, RieszTime) else kern.beta
    return np.sign(arr) * np.abs(arr) ** (1.0 - a) / (1.0 - a)


def kernel_B1(kern, u):
    """Even antiderivative B1(u) = int_0^u v k(v) dv of the first moment."""
    arr = np.asarray(u, dtype=float)
    if isinstance(kern, Constant):
        return 0.5 * kern.c * arr * arr
    if isinstance(kern, SmoothIntegrable):
        s = kern.scale
        z = arr / s
        return kern.mass * s / _SQRT_TWO_PI * (1.0 - np.exp(-0.5 * z * z))
    a = kern.alpha0 if isinstance(kern, RieszTime) else kern.beta
    return np.abs(arr) ** (2.0 - a) / (2.0 - a)


def kernel_pl_weights(kern, u_min: float, h: float, n: int, exact: bool = True):
    """Weight vector W with W @ C = int k(u) * PL(u) du for samples C on the
    lattice u_min + h*arange(n) (PL interpolation, zero outside).

    exact=True integrates k analytically on every cell through the closed-form
    antiderivatives, which is what makes power-law singularities harmless.
    exact=False is the naive midpoint-kernel rule (cells whose midpoint hits
    the singularity are dropped); it exists so the singular handling can be
    switched off and compared.
    """
    u = u_min + h * np.arange(n)
    W = np.zeros(n)
    if exact:
        dA = np.diff(kernel_A(kern, u))
        dB1 = np.diff(kernel_B1(kern, u))
        # cell j contributes (C_j - s_j u_j) dA_j + s_j dB1_j, s_j = (C_{j+1}-C_j)/h
        left = dA - (dB1 - u[:-1] * dA) / h
        right = (dB1 - u[:-1] * dA) / h
        W[:-1] += left
        W[1:] += right
    else:
        mids = 0.5 * (u[:-1] + u[1:])
        kv = kernel_eval(kern, mids)
        kv = np.where(np.isfinite(kv), kv, 0.0)
        W[:-1] += 0.5 * h * kv
        W[1:] += 0.5 * h * kv
    return W


def kernel_weighted_pl(kern, u_min: float, h: float, C, exact: bool = True) -> float:
    """int k(u) * PL(u) du with PL the piecewise-linear interpolant of the
    samples C on the lattice u_min + h*arange(len(C)), zero outside."""
    C = np.asarray(C, dtype=float)
    W = kernel_pl_weights(kern, u_min, h, C.shape[0], exact=exact)
    return float(W @ C)


# ---------------------------------------------------------------------------
# exact piecewise-linear lattice cross-correlation


def pl_xcorr(fvals, gvals, h: float, offset: float = 0.0):
    """Exact samples of C(u) = int f(z) g(z-u) dz for piecewise-linear f, g.

    f and g live on lattices with common spacing h; `offset` is
    (f's left endpoint) - (g's left endpoint).  Returns (u_min, C) where C
    holds the exact values on u_min + h*arange(len(C)) including the zero
    endpoints at the edge of the support, so C is ready for
    kernel_weighted_pl.
    """
    fvals = np.asarray(fvals, dtype=float)
    gvals = np.asarray(gvals, dtype=float)
    a, b = fvals[:-1], np.diff(fvals)
    c, d = gvals[:-1], np.diff(gvals)
    # cell pair (i, j) meets at shift k = i - j; correlate() sums a_{j+k} c_j
    r = (
        correlate(a, c, mode="full", method="auto")
        + 0.5 * (correlate(a, d, mode="full", method="auto") + correlate(b, c, mode="full", method="auto"))
        + correlate(b, d, mode="full", method="auto") / 3.0
    )
    lags = correlation_lags(a.shape[0], c.shape[0], mode="full")
    C = np.zeros(r.shape[0] + 2)
    C[1:-1] = h * r
    u_min = offset + (lags[0] - 1) * h
    return u_min, C


def pl_upsample(vals):
    """Insert exact midpoints of a piecewise-linear function (lossless)."""
    vals = np.asarray(vals, dtype=float)
    out = np.empty(2 * vals.shape[0] - 1)
    out[::2] = vals
    out[1::2] = 0.5 * (vals[:-1] + vals[1:])
    return out


# ---------------------------------------------------------------------------
# Gauss-Legendre panels


@lru_cache(maxsize=32)
def _leggauss(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


def gl_panels(edges, order: int):
    """Gauss-Legendre nodes/weights on consecutive panels [e0,e1],[e1,e2],..."""
    edges = np.asarray(edges, dtype=float)
    x0, w0 = _leggauss(order)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * np.diff(edges)
    x = (mid[:, None] + half[:, None] * x0[None, :]).ravel()
    w = (half[:, None] * w0[None, :]).ravel()
    return x, w


def graded_panel_nodes(a: float, b: float, p_min: float, order: int = 16):
    """Nodes/weights on (a, b) graded toward an algebraic singularity at a.

    Panels shrink geometrically toward a, so that the truncated head of an
    integral of u^p_min decays like 2^(-n(1+p_min)); the panel count scales
    with 1/(1+p_min).  Returns (x, w) ready for a weighted dot product.
    """
    if b <= a:
        return np.empty(0), np.empty(0)
    n = max(60, int(math.ceil(40.0 / max(1.0 + p_min, 0.05))))
    edges = a + (b - a) * np.concatenate(([0.0], 0.5 ** np.arange(n, -1, -1.0)))
    return gl_panels(edges, order)


def adaptive_gl(fn, a: float, b: float, rel_tol: float, max_evals: int,
                order: int = 16, n0: int = 8, abs_tol: float = 0.0):
    """Integrate a vectorized callable by doubling uniform GL panels.

    Converges when successive doublings agree to rel_tol relatively or to
    abs_tol absolutely (the latter matters when the integral cancels to
    nearly zero).  Returns (value, evals_used, converged); the caller
    decides what an exhausted budget means.
    """
    n = n0
    prev = None
    used = 0
    while True:
        x, w = gl_panels(np.linspace(a, b, n + 1), order)
        val = float(np.dot(w, fn(x)))
        used += x.shape[0]
        if prev is not None and abs(val - prev) <= max(rel_tol * abs(val), abs_tol):
            return val, used, True
        if used > max_evals:
            return val, used, False
        prev = val
        n *= 2


# ---------------------------------------------------------------------------
# simplex sampling and deterministic seeds


def sorted_times_desc(rng, t: float, n: int, size: int):
    """Uniform draws on the simplex t > t_1 > ... > t_n > 0, sorted descending.

    The density is n!/t^n on the simplex, so an expectation under these draws
    carries the weight t^n/n! per sample.
    """
    u = rng.random((size, n)) * t
    u.sort(axis=1)
    return u[:, ::-1]


def stable_seed(*parts) -> int:
    """Deterministic 64-bit seed from the reprs of the arguments."""
    payload = "|".join(repr(p) for p in parts).encode()
    return int.from_bytes(hashlib.sha256(payload).digest()[:8], "little")


# ---------------------------------------------------------------------------
# spectral importance samplers


def freq_sampler(variant):
    """Sampler for xi with density proportional to the spectral density.

    Returns draw(rng, size) -> (xi, weight) with weight = phi(xi)/pdf(xi):
    a flat constant for the gaussian family, and 2 Z c max(1, xi^2) for the
    power-law family (head pdf ~ |xi|^(beta-1), tail pdf ~ |xi|^(beta-3)).
    """
    if isinstance(variant, SmoothIntegrable):
        w0 = variant.mass / (variant.scale * _SQRT_TWO_PI)
        inv_scale = 1.0 / variant.scale

        def draw(rng, size):
            xi = rng.normal(0.0, inv_scale, size)
            return xi, np.full(size, w0)

        return draw

    b = variant.beta
    c = riesz_constant(1, b)
    mass_head = 1.0 / b
    mass_tail = 1.0 / (2.0 - b)
    z = mass_head + mass_tail
    p_head = mass_head / z

    def draw(rng, size):
        take_head = rng.random(size) < p_head
        u = rng.random(size)
        r = np.where(take_head, u ** (1.0 / b), np.maximum(u, 1e-300) ** (-1.0 / (2.0 - b)))
        sign = np.where(rng.random(size) < 0.5, -1.0, 1.0)
        xi = sign * r
        w = 2.0 * z * c * np.maximum(1.0, r) ** 2
        return xi, w

    return draw
