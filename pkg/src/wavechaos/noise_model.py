"""Correlation structure of the driving Gaussian noise.

The noise has covariance E[W'(t,x) W'(s,y)] = gamma0(t-s) gamma(x-y) with a
temporal kernel gamma0 (constant, or power law |s|^(-alpha0)) and a spatial
kernel gamma (gaussian bump, Riesz power |x|^(-beta), or a d=2 product of two
1-d factors).  This module evaluates the kernels, their spectral densities,
the accumulated temporal mass Gamma_t = 2 int_0^t gamma0, and the Dalang
integral int phi(xi)/(1+|xi|^2) dxi, and tags (temporal, spatial) pairs with
the variance-growth regime that downstream asymptotics depend on.

Fourier convention
------------------
gamma(x) = int e^{-i xi.x} phi(xi) dxi, i.e. phi = (2 pi)^(-d) * classical
Fourier transform of gamma.  Under this convention the Riesz kernel
|x|^(-beta) has density c_{d,beta} |xi|^(beta-d) with

    c_{d,beta} = (2 pi)^(-d) 2^(d-beta) pi^(d/2) Gamma((d-beta)/2) / Gamma(beta/2).

The constant is not taken on faith: validate_fourier_convention() checks it
through the Parseval identity on gaussian test functions (closed-form left
side against quadrature of the spectral side) and a pointwise transform
round-trip; the CLI selftest gates on it.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import integrate, special

from .errors import BudgetError, ConfigError, ContractError, DomainError

_TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# temporal kernels


@dataclass(frozen=True)
class Constant:
    """gamma0(s) = c."""

    c: float = 1.0

    def __post_init__(self):
        if not (self.c > 0.0) or not math.isfinite(self.c):
            raise DomainError(f"constant temporal kernel needs c > 0, got {self.c}")


@dataclass(frozen=True)
class RieszTime:
    """gamma0(s) = |s|^(-alpha0), locally integrable for alpha0 in (0,1)."""

    alpha0: float

    def __post_init__(self):
        if not (0.0 < self.alpha0 < 1.0):
            raise DomainError(f"alpha0 must lie in (0,1), got {self.alpha0}")


TemporalKernel = Union[Constant, RieszTime]


def gamma0_eval(k: TemporalKernel, s):
    """Evaluate gamma0(s); vectorized, symmetric, +inf sentinel at s=0 for
    the power-law kernel (callers never feed the singular point to quadrature)."""
    arr = np.asarray(s, dtype=float)
    scalar_in = arr.shape == ()
    arr = np.atleast_1d(arr)
    if isinstance(k, Constant):
        out = np.full_like(arr, k.c)
    else:
        with np.errstate(divide="ignore"):
            out = np.abs(arr) ** (-k.alpha0)
    return float(out[0]) if scalar_in else out


def big_gamma(k: TemporalKernel, t: float) -> float:
    """Gamma_t = 2 int_0^t gamma0(s) ds, in closed form."""
    if not (t >= 0.0) or not math.isfinite(t):
        raise DomainError(f"big_gamma needs t >= 0, got {t}")
    if isinstance(k, Constant):
        return 2.0 * k.c * t
    return 2.0 * t ** (1.0 - k.alpha0) / (1.0 - k.alpha0)


# ---------------------------------------------------------------------------
# spatial kernels


@dataclass(frozen=True)
class SmoothIntegrable:
    """Gaussian-shaped covariance m * (2 pi s^2)^(-d/2) exp(-|x|^2/(2 s^2)).

    `mass` is the total integral of gamma; scale=1, mass=sqrt(2 pi) gives the
    canonical exp(-x^2/2) in d=1.
    """

    scale: float = 1.0
    mass: float = 1.0

    def __post_init__(self):
        if not (self.scale > 0.0 and math.isfinite(self.scale)):
            raise DomainError(f"scale must be positive, got {self.scale}")
        if not (self.mass > 0.0 and math.isfinite(self.mass)):
            raise DomainError(f"mass must be positive, got {self.mass}")


@dataclass(frozen=True)
class RieszSpace:
    """gamma(x) = |x|^(-beta)."""

    beta: float

    def __post_init__(self):
        if not (0.0 < self.beta < 2.0):
            raise DomainError(f"beta must lie in (0,2), got {self.beta}")


@dataclass(frozen=True)
class Product:
    """d=2 covariance gamma(x1,x2) = gamma_1(x1) gamma_2(x2) of 1-d factors."""

    factor1: Union[SmoothIntegrable, RieszSpace]
    factor2: Union[SmoothIntegrable, RieszSpace]

    def __post_init__(self):
        for f in (self.factor1, self.factor2):
            if not isinstance(f, (SmoothIntegrable, RieszSpace)):
                raise DomainError(f"product factors must be 1-d kernels, got {type(f).__name__}")
            if isinstance(f, RieszSpace) and not (f.beta < 1.0):
                raise DomainError(f"product Riesz factors need beta < 1, got {f.beta}")


SpatialVariant = Union[SmoothIntegrable, RieszSpace, Product]


@dataclass(frozen=True)
class SpatialKernel:
    variant: SpatialVariant
    dim: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise DomainError(f"spatial dimension must be 1 or 2, got {self.dim}")
        v = self.variant
        if isinstance(v, Product):
            if self.dim != 2:
                raise ConfigError("product covariance is only defined in d=2")
        elif isinstance(v, RieszSpace):
            if not (v.beta < min(2, self.dim)):
                raise ConfigError(
                    f"Riesz covariance in d={self.dim} needs beta < {min(2, self.dim)},"
                    f" got {v.beta}"
                )
        elif not isinstance(v, SmoothIntegrable):
            raise ConfigError(f"unknown spatial kernel variant {type(v).__name__}")


def _phi_factor(f, xi):
    """Spectral density of a 1-d factor kernel on an array of frequencies."""
    if isinstance(f, SmoothIntegrable):
        return f.mass / _TWO_PI * np.exp(-0.5 * (f.scale * xi) ** 2)
    c = riesz_constant(1, f.beta)
    with np.errstate(divide="ignore"):
        return c * np.abs(xi) ** (f.beta - 1.0)


def _gamma_factor(f, x):
    """1-d factor covariance on an array of lags."""
    if isinstance(f, SmoothIntegrable):
        s = f.scale
        return f.mass / math.sqrt(_TWO_PI * s * s) * np.exp(-0.5 * (x / s) ** 2)
    with np.errstate(divide="ignore"):
        return np.abs(x) ** (-f.beta)


def gamma_eval(k: SpatialKernel, x):
    """Evaluate gamma(x); +inf sentinel at the Riesz origin.

    `x` is scalar / array for d=1, or an array with trailing axis 2 for d=2.
    """
    arr = np.asarray(x, dtype=float)
    v = k.variant
    if k.dim == 1:
        scalar_in = arr.shape == ()
        arr = np.atleast_1d(arr)
        out = _gamma_factor(v, arr)
        return float(out[0]) if scalar_in else out
    if arr.shape == () or arr.shape[-1] != 2:
        raise DomainError(f"d=2 lag needs trailing axis of length 2, got shape {arr.shape}")
    scalar_in = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if isinstance(v, Product):
        out = _gamma_factor(v.factor1, arr[..., 0]) * _gamma_factor(v.factor2, arr[..., 1])
    elif isinstance(v, SmoothIntegrable):
        s = v.scale
        r2 = np.sum(arr * arr, axis=-1)
        out = v.mass / (_TWO_PI * s * s) * np.exp(-0.5 * r2 / (s * s))
    else:
        r = np.sqrt(np.sum(arr * arr, axis=-1))
        with np.errstate(divide="ignore"):
            out = r ** (-v.beta)
    return float(out[0]) if scalar_in else out


def spectral_density(k: SpatialKernel, xi):
    """Spectral density phi(xi) of gamma; +inf sentinel at the Riesz origin."""
    arr = np.asarray(xi, dtype=float)
    v = k.variant
    if k.dim == 1:
        scalar_in = arr.shape == ()
        arr = np.atleast_1d(arr)
        out = _phi_factor(v, arr)
        return float(out[0]) if scalar_in else out
    if arr.shape == () or arr.shape[-1] != 2:
        raise DomainError(f"d=2 frequency needs trailing axis of length 2, got shape {arr.shape}")
    scalar_in = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if isinstance(v, Product):
        out = _phi_factor(v.factor1, arr[..., 0]) * _phi_factor(v.factor2, arr[..., 1])
    elif isinstance(v, SmoothIntegrable):
        r2 = np.sum(arr * arr, axis=-1)
        out = v.mass / (_TWO_PI**2) * np.exp(-0.5 * v.scale**2 * r2)
    else:
        r = np.sqrt(np.sum(arr * arr, axis=-1))
        c = riesz_constant(2, v.beta)
        with np.errstate(divide="ignore"):
            out = c * r ** (v.beta - 2.0)
    return float(out[0]) if scalar_in else out


def spatial_total_mass(k: SpatialKernel) -> float:
    """gamma(R^d) = int gamma; +inf for Riesz variants."""
    v = k.variant
    if isinstance(v, SmoothIntegrable):
        return v.mass
    if isinstance(v, Product):
        m1 = v.factor1.mass if isinstance(v.factor1, SmoothIntegrable) else math.inf
        m2 = v.factor2.mass if isinstance(v.factor2, SmoothIntegrable) else math.inf
        return m1 * m2
    return math.inf


def riesz_constant(d: int, beta: float) -> float:
    """c_{d,beta} in phi(xi) = c_{d,beta} |xi|^(beta-d) for gamma = |x|^(-beta)."""
    if d not in (1, 2):
        raise DomainError(f"dimension must be 1 or 2, got {d}")
    if not (0.0 < beta < d):
        # beta >= d makes |x|^(-beta) non locally-integrable, so no density
        raise DomainError(f"need beta in (0,{d}), got beta={beta}")
    return (
        (_TWO_PI) ** (-d)
        * 2.0 ** (d - beta)
        * math.pi ** (d / 2.0)
        * special.gamma((d - beta) / 2.0)
        / special.gamma(beta / 2.0)
    )


# ---------------------------------------------------------------------------
# antiderivatives of 1-d factors (used by exact cell/lattice integrators)


def gamma_antider1(f, u):
    """Odd antiderivative A(u) = int_0^u gamma_f(v) dv of a 1-d factor."""
    arr = np.asarray(u, dtype=float)
    if isinstance(f, SmoothIntegrable):
        return f.mass * (special.ndtr(arr / f.scale) - 0.5)
    b = f.beta
    return np.sign(arr) * np.abs(arr) ** (1.0 - b) / (1.0 - b)


def gamma_antider2(f, u):
    """Even second antiderivative B(u) = int_0^u A(v) dv, B'' = gamma_f."""
    arr = np.asarray(u, dtype=float)
    if isinstance(f, SmoothIntegrable):
        s = f.scale
        z = arr / s
        pdf0 = 1.0 / math.sqrt(_TWO_PI)
        pdf = pdf0 * np.exp(-0.5 * z * z)
        return f.mass * (arr * (special.ndtr(z) - 0.5) + s * (pdf - pdf0))
    b = f.beta
    return np.abs(arr) ** (2.0 - b) / ((1.0 - b) * (2.0 - b))


# ---------------------------------------------------------------------------
# Dalang integral


def _dalang_inner(f, a):
    """int_0^inf phi_f(xi) / (a^2 + xi^2) dxi in closed form, a > 0."""
    if isinstance(f, SmoothIntegrable):
        # int_0^inf e^{-c xi^2}/(a^2+xi^2) dxi = pi/(2a) e^{a^2 c} erfc(a sqrt(c))
        arg = a * f.scale / math.sqrt(2.0)
        return f.mass / _TWO_PI * math.pi / (2.0 * a) * special.erfcx(arg)
    b = f.beta
    c = riesz_constant(1, b)
    # int_0^inf xi^{b-1}/(a^2 + xi^2) dxi = a^{b-2} (pi/2) / sin(pi b / 2)
    return c * a ** (b - 2.0) * (math.pi / 2.0) / math.sin(math.pi * b / 2.0)


def _quad_checked(fn, lo, hi, rel_tol, what, **kw):
    out = integrate.quad(
        fn, lo, hi, full_output=1, limit=200,
        epsabs=1e-14, epsrel=min(rel_tol, 1e-10), **kw
    )
    val, abserr = out[0], out[1]
    if abserr > rel_tol * max(abs(val), 1e-12):
        raise BudgetError(f"quadrature for {what} did not converge", partial=val)
    return val


def dalang_integral(k: SpatialKernel, rel_tol: float = 1e-9) -> float:
    """int_{R^d} phi(xi) / (1 + |xi|^2) dxi by radial / iterated quadrature."""
    v = k.variant
    if isinstance(v, Product):
        # inner factor integral in closed form, outer by quadrature
        f1, f2 = v.factor1, v.factor2

        def outer(x1):
            a = math.sqrt(1.0 + x1 * x1)
            return float(_phi_factor(f1, np.asarray(x1))) * _dalang_inner(f2, a)

        if isinstance(f1, RieszSpace):
            b1 = f1.beta
            # substitute x1 = w^(1/b1) to flatten the origin singularity
            val = _quad_checked(
                lambda w: outer(w ** (1.0 / b1)) * (1.0 / b1) * w ** (1.0 / b1 - 1.0),
                0.0,
                1.0,
                rel_tol,
                "dalang product head",
            )
            val += _quad_checked(outer, 1.0, np.inf, rel_tol, "dalang product tail")
        else:
            val = _quad_checked(outer, 0.0, np.inf, rel_tol, "dalang product")
        return 4.0 * val

    if isinstance(v, RieszSpace):
        c = riesz_constant(k.dim, v.beta)
        w = 2.0 * c if k.dim == 1 else _TWO_PI * c
        # r = tan(theta) turns int_0^inf r^{beta-1}/(1+r^2) dr into
        # int_0^{pi/2} tan(theta)^{beta-1} d(theta)
        val = _quad_checked(
            lambda th: math.tan(th) ** (v.beta - 1.0),
            0.0,
            math.pi / 2.0,
            rel_tol,
            "dalang riesz",
            points=[math.pi / 4.0],
        )
        return w * val

    # gaussian
    if k.dim == 1:
        return 2.0 * _quad_checked(
            lambda r: float(_phi_factor(v, np.asarray(r))) / (1.0 + r * r),
            0.0,
            np.inf,
            rel_tol,
            "dalang gaussian d1",
        )
    m, s = v.mass, v.scale
    return _TWO_PI * _quad_checked(
        lambda r: m / (_TWO_PI**2) * math.exp(-0.5 * (s * r) ** 2) * r / (1.0 + r * r),
        0.0,
        np.inf,
        rel_tol,
        "dalang gaussian d2",
    )


# ---------------------------------------------------------------------------
# scenario


_REGIMES = ("Part1", "Part2", "Part3a'", "Part3b'")


@dataclass(frozen=True)
class Scenario:
    """A complete noise specification plus the time horizon of interest.

    The derived `regime` tag drives which variance scaling and limiting
    constant apply:

      Part1   - spatial covariance with finite total mass (variance ~ R^d)
      Part2   - Riesz covariance |x|^-beta            (variance ~ R^(2d-beta))
      Part3a' - d=2 product of two Riesz factors (variance ~ R^(4-b1-b2))
      Part3b' - d=2 product of one integrable and one Riesz factor
                                                      (variance ~ R^(3-beta))
    """

    dim: int
    temporal: TemporalKernel
    spatial: SpatialKernel
    t_horizon: float

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ConfigError(f"dimension must be 1 or 2, got {self.dim}")
        if self.dim != self.spatial.dim:
            raise ConfigError(
                f"scenario dim {self.dim} != spatial kernel dim {self.spatial.dim}"
            )
        if not isinstance(self.temporal, (Constant, RieszTime)):
            raise ConfigError(f"unknown temporal kernel {type(self.temporal).__name__}")
        if not (self.t_horizon > 0.0 and math.isfinite(self.t_horizon)):
            raise ConfigError(f"t_horizon must be positive, got {self.t_horizon}")
        _ = self.regime  # force classification so bad combos fail here

    @property
    def regime(self) -> str:
        v = self.spatial.variant
        if isinstance(v, SmoothIntegrable):
            return "Part1"
        if isinstance(v, RieszSpace):
            return "Part2"
        riesz1 = isinstance(v.factor1, RieszSpace)
        riesz2 = isinstance(v.factor2, RieszSpace)
        if riesz1 and riesz2:
            return "Part3a'"
        if riesz1 or riesz2:
            return "Part3b'"
        return "Part1"  # both factors integrable: finite total mass


def scenario_hash(sc: Scenario) -> str:
    """Short stable digest of a scenario, for audit columns in CSV output."""
    return hashlib.sha256(repr(sc).encode()).hexdigest()[:12]


# ---------------------------------------------------------------------------
# convention self-test


_CONVENTION_OK = False


def validate_fourier_convention(rtol: float = 1e-6) -> None:
    """Gate the spectral constants against independent routes.

    Checks (raising ContractError on disagreement beyond `rtol`):
      1. pointwise inversion gamma(x) = int e^{-i xi x} phi(xi) dxi for the
         d=1 gaussian family, at several lags;
      2. Parseval for the d=1 Riesz measure on a gaussian test function:
         the closed-form double integral  iint h(x) h(y) |x-y|^{-beta}
         against quadrature of  c_{1,beta} int |xi|^{beta-1} |Fh(xi)|^2 dxi;
      3. the same in d=2 (radial quadrature).
    """
    global _CONVENTION_OK
    if _CONVENTION_OK:
        return

    # 1. transform round-trip, d=1 gaussian (canonical and a skewed one)
    for scale, mass in ((1.0, math.sqrt(_TWO_PI)), (0.7, 2.3)):
        k = SpatialKernel(SmoothIntegrable(scale=scale, mass=mass), dim=1)
        xi = np.linspace(0.0, 40.0 / scale, 8001)
        phi = spectral_density(k, xi)
        for x in np.linspace(0.0, 2.5, 10):
            recon = 2.0 * integrate.simpson(phi * np.cos(xi * x), x=xi)
            want = gamma_eval(k, x)
            if abs(recon - want) > rtol * max(abs(want), 1.0):
                raise ContractError(
                    f"gaussian transform round-trip failed at x={x}: {recon} vs {want}"
                )

    # 2. Riesz Parseval, d=1: h = standard normal density
    for beta in (0.3, 0.5, 1.2):
        if beta >= 1.0:
            continue
        lhs = 2.0 ** (-beta) * special.gamma((1.0 - beta) / 2.0) / math.sqrt(math.pi)
        c = riesz_constant(1, beta)
        rhs = 2.0 * c * integrate.quad(
            lambda x, b=beta: x ** (b - 1.0) * math.exp(-x * x), 0.0, np.inf
        )[0]
        if abs(lhs - rhs) > rtol * abs(lhs):
            raise ContractError(f"d=1 Riesz Parseval failed at beta={beta}: {lhs} vs {rhs}")

    # 3. Riesz Parseval, d=2: h = standard normal density in the plane
    for beta in (0.5, 1.5):
        lhs = 2.0 ** (-beta) * special.gamma(1.0 - beta / 2.0)
        c = riesz_constant(2, beta)
        rhs = c * _TWO_PI * integrate.quad(
            lambda r, b=beta: r ** (b - 1.0) * math.exp(-r * r), 0.0, np.inf
        )[0]
        if abs(lhs - rhs) > rtol * abs(lhs):
            raise ContractError(f"d=2 Riesz Parseval failed at beta={beta}: {lhs} vs {rhs}")

    _CONVENTION_OK = True
