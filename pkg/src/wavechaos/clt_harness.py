"""Quantitative checks on the window averages: variance-scaling exponents,
distributional distances to the normal law, the fourth-integral bound behind
the second-order Poincare inequality, and the time-increment moment test.

Everything here consumes the covariance series of `chaos_moments` or raw
Monte Carlo samples and reduces them to the handful of numbers the scaling
theory predicts: a log-log slope, a KS or binned-TV distance, a bound A_R
whose growth in R tracks the variance rate, and an increment norm that is
Lipschitz in the time gap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from . import _quad
from .errors import (
    BudgetError,
    ContractError,
    DomainError,
    InsufficientDataError,
    UnsupportedRegimeError,
)
from .hilbert import QuadSpec
from .noise_model import (
    RieszSpace,
    Scenario,
    SmoothIntegrable,
    scenario_hash,
    spectral_density,
)
from .chaos_moments import (
    P_MAX,
    _chain_cross_mc,
    _ghat,
    _mc_gate,
    var_FR_with_se,
    var_J1R,
    var_tail_bound,
)
from .malliavin import _series_sum, _time_pair_draws

_BATCH = 32768


# ---------------------------------------------------------------------------
# variance scan and exponent fit


@dataclass(frozen=True)
class VarianceRow:
    """One radius of a variance scan: per-level window variances for levels
    1..p_max, the certified bound on everything above p_max, and the Monte
    Carlo standard error of the truncated total (level 1 is deterministic)."""

    R: float
    t: float
    per_p: Tuple[float, ...]
    tail_bound: float
    stderr: float

    @property
    def total(self) -> float:
        return float(sum(self.per_p))


def variance_scan(
    sc: Scenario,
    t: float,
    radii: Sequence[float],
    p_max: int = P_MAX,
    q: Optional[QuadSpec] = None,
) -> list:
    """Chaos-level variance decomposition of F_R(t) at each radius.

    Radii must be strictly increasing with at least two entries; each row is
    one var_FR evaluation, so errors from the underlying quadrature or Monte
    Carlo propagate unchanged.
    """
    rr = [float(R) for R in radii]
    if len(rr) < 2:
        raise DomainError(f"need at least two radii, got {len(rr)}")
    for a, b in zip(rr, rr[1:]):
        if not (b > a):
            raise DomainError(f"radii must be strictly increasing, got {rr}")
    rows = []
    for R in rr:
        per, ses, tail = var_FR_with_se(sc, t, R, p_max, q)
        rows.append(
            VarianceRow(
                R=R,
                t=float(t),
                per_p=tuple(float(v) for v in per),
                tail_bound=float(tail),
                stderr=float(math.sqrt(float(np.dot(ses, ses)))),
            )
        )
    return rows


def fit_exponent(rows: Sequence[VarianceRow]) -> Tuple[float, float]:
    """Least-squares slope of log(total variance) against log R.

    Returns (slope, stderr); slope/2 estimates the exponent of the standard
    deviation rate.  Requires at least three rows so the residual degree of
    freedom is positive; totals must be strictly positive to take logs.
    """
    if len(rows) < 3:
        raise InsufficientDataError(
            f"exponent fit needs at least 3 rows, got {len(rows)}"
        )
    x = np.array([math.log(row.R) for row in rows])
    totals = np.array([row.total for row in rows])
    if np.any(totals <= 0.0) or not np.all(np.isfinite(totals)):
        raise DomainError("all row totals must be positive and finite")
    y = np.log(totals)
    xc = x - x.mean()
    sxx = float(np.dot(xc, xc))
    if sxx <= 0.0:
        raise DomainError("radii must not be all equal")
    slope = float(np.dot(xc, y) / sxx)
    resid = y - y.mean() - slope * xc
    dof = len(rows) - 2
    se = math.sqrt(max(float(np.dot(resid, resid)), 0.0) / dof / sxx)
    return slope, se


# ---------------------------------------------------------------------------
# distributional distances
#
# Both distances studentize internally (subtract the sample mean, divide by
# the sample standard deviation), so they measure shape only and are exactly
# invariant under affine maps of the sample vector.


def _clean_samples(samples, n_min: int, what: str) -> np.ndarray:
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < n_min:
        raise InsufficientDataError(
            f"{what} needs at least {n_min} samples, got {x.size}"
        )
    if not np.all(np.isfinite(x)):
        raise DomainError(f"{what}: samples must be finite")
    return x


def _studentize(x: np.ndarray, what: str) -> np.ndarray:
    sd = float(np.std(x, ddof=1))
    if not (sd > 0.0):
        raise DomainError(f"{what}: degenerate samples (zero variance)")
    return (x - float(np.mean(x))) / sd


def ks_distance(samples) -> float:
    """Kolmogorov-Smirnov distance of the studentized sample to N(0, 1).

    The sup-distance between the empirical CDF of (x - mean)/sd and the
    standard normal CDF; needs >= 100 samples with positive variance.
    """
    x = _clean_samples(samples, 100, "ks_distance")
    z = _studentize(x, "ks_distance")
    return float(stats.kstest(z, "norm").statistic)


def tv_binned(samples, bins: int, studentize: bool = True) -> float:
    """Half-L1 distance between binned empirical mass and exact normal mass.

    The bins are the equal-probability normal cells with edges at the
    quantiles k/bins, so every cell has exact reference mass 1/bins and the
    two outer cells are half-infinite.  With `studentize` off the raw
    samples are binned against N(0, 1) directly, which exposes location and
    scale errors instead of shape only.
    """
    x = _clean_samples(samples, 1000, "tv_binned")
    if not isinstance(bins, (int, np.integer)) or bins < 10:
        raise DomainError(f"bins must be an integer >= 10, got {bins}")
    if studentize:
        x = _studentize(x, "tv_binned")
    edges = np.concatenate(
        [[-np.inf], stats.norm.ppf(np.arange(1, bins) / bins), [np.inf]]
    )
    counts, _ = np.histogram(x, bins=edges)
    emp = counts / x.size
    return float(0.5 * np.sum(np.abs(emp - 1.0 / bins)))


# ---------------------------------------------------------------------------
# second-order Poincare bound
#
# The total-variation distance of the normalized average is controlled by
# sqrt(A_R)/sigma_R^2 where A_R is a sum of four sixfold time integrals, each
# coupling two copies of the second-derivative chain kernel and two window
# smears of the propagator through three temporal and three spatial
# covariance pairings.  In d = 1 the spatial pairings diagonalize in
# frequency: with the window smear  Ahat_w(xi) = 2 sin(R xi) sin(w xi)/xi^2
# and the propagator transform  Ghat_w(xi) = sin(w xi)/xi,
#
#   sum_j A_{R,j} = (1/4) int gamma0(r-r') gamma0(s-s') gamma0(h-h')
#       phi(x1) phi(x2) phi(x3) S1(r,h; x1,x2) S2(s,h'; x2,x3)
#       Ahat_{t-r'}(x1) Ahat_{t-s'}(x3),
#
#   S1 = Ahat_{t-r}(x1+x2) Ghat_{r-h}(x2)   on r > h,
#        Ahat_{t-h}(x1+x2) Ghat_{h-r}(x1)   on r < h,
#
# and S2 the mirror image in (s, h', x3, -x2).  The four regions (r vs h) x
# (s vs h') sum automatically when both branches are kept.  Time pairs are
# importance-sampled from the temporal covariance; frequencies need a
# proposal aware of the window scale, because the product of four window
# smears concentrates nearly all of the integral on |xi| <~ 1/R and a plain
# spectral-density proposal leaves the relative error growing like R^(3/2).
# Each frequency is drawn from an even mixture of a Cauchy at scale 1/R
# (captures the peak; heavy tails keep the midrange covered) and the
# spectral-density-shaped base law (bounds the weight where the density is
# singular or dominates).  The importance weight is the exact density ratio.


def _regime_check(sc: Scenario, what: str):
    if sc.dim != 1 or sc.regime not in ("Part1", "Part2"):
        raise UnsupportedRegimeError(
            f"{what} supports d=1 Part1/Part2 scenarios only, got "
            f"d={sc.dim} {sc.regime}"
        )
    return sc.spatial.variant


def _base_freq_pdf(variant, xi):
    """Density of the spectral-density-shaped component of the proposal.

    Matches the two-sided laws behind `_quad.freq_sampler`: a centered
    normal at the inverse length scale for the integrable family, and the
    head/tail power-law mixture for the Riesz family (|xi|^(b-1) inside the
    unit interval, |xi|^(b-3) outside, both over the normalizer 2z)."""
    if isinstance(variant, SmoothIntegrable):
        s = variant.scale
        return s / math.sqrt(2.0 * math.pi) * np.exp(-0.5 * (s * xi) ** 2)
    b = variant.beta
    z = 1.0 / b + 1.0 / (2.0 - b)
    a = np.abs(xi)
    a = np.where(a < 1e-300, 1e-300, a)
    return a ** (b - 1.0) / (2.0 * z * np.maximum(1.0, a * a))


def _poincare_freq_draw(sc: Scenario, R: float):
    """Window-adapted frequency sampler: even Cauchy(1/R) + base mixture.

    Returns draw(rng, shape) -> (xi, weight) with weight = phi(xi)/q(xi);
    the stream consumption per call is fixed, so one seed gives coupled
    draws across radii (the Cauchy component scales them by 1/R)."""
    variant = sc.spatial.variant
    s_c = 1.0 / R
    smooth = isinstance(variant, SmoothIntegrable)
    if not smooth:
        b = variant.beta
        z = 1.0 / b + 1.0 / (2.0 - b)
        p_head = (1.0 / b) / z

    def draw(rng, shape):
        pick = rng.random(shape)
        u = np.clip(rng.random(shape), 1e-15, 1.0 - 1e-15)
        aux = rng.random(shape)
        sgn = np.where(rng.random(shape) < 0.5, -1.0, 1.0)
        xi_c = s_c * np.tan(math.pi * (u - 0.5))
        if smooth:
            xi_b = stats.norm.ppf(u) / variant.scale
        else:
            head = aux < p_head
            xi_b = sgn * np.where(head, u ** (1.0 / b), u ** (-1.0 / (2.0 - b)))
        xi = np.where(pick < 0.5, xi_c, xi_b)
        q = 0.5 * s_c / (math.pi * (s_c * s_c + xi * xi)) + 0.5 * _base_freq_pdf(
            variant, xi
        )
        phi = spectral_density(sc.spatial, np.abs(xi))
        return xi, phi / q

    return draw


def sigma_rate(sc: Scenario, R: float) -> float:
    """The standard-deviation growth rate of F_R in R, without constants.

    R^(d/2) for integrable covariances, R^(d - beta/2) for the Riesz family,
    and the two d=2 product rates.  This is the normalization under which
    the averages have a nondegenerate limit.
    """
    if not (R > 0.0 and math.isfinite(R)):
        raise DomainError(f"window radius must be positive, got {R}")
    v = sc.spatial.variant
    regime = sc.regime
    if regime == "Part1":
        return R ** (0.5 * sc.dim)
    if regime == "Part2":
        return R ** (sc.dim - 0.5 * v.beta)
    if regime == "Part3a'":
        return R ** (2.0 - 0.5 * (v.factor1.beta + v.factor2.beta))
    b = v.factor1.beta if isinstance(v.factor1, RieszSpace) else v.factor2.beta
    return R ** (0.5 * (3.0 - b))


def _poincare_mc(
    sc: Scenario, t: float, R: float, q: QuadSpec
) -> Tuple[float, float]:
    """Monte Carlo estimate of sum_j A_{R,j} with its standard error."""
    rng = np.random.default_rng(
        _quad.stable_seed("poincare", scenario_hash(sc), float(t))
    )
    draw = _poincare_freq_draw(sc, R)
    temporal = sc.temporal
    cost = 48
    n_samples = int(max(20_000, min(50_000_000, q.max_evals // cost)))

    def ahat(w, z):
        return 2.0 * _ghat(R, z) * _ghat(w, z)

    total = 0.0
    total_sq = 0.0
    done = 0
    while done < n_samples:
        m = min(_BATCH, n_samples - done)
        r, r2, w1 = _time_pair_draws(temporal, t, rng, m)
        s, s2, w2 = _time_pair_draws(temporal, t, rng, m)
        h, h2, w3 = _time_pair_draws(temporal, t, rng, m)
        xi, wx = draw(rng, (m, 3))
        x1, x2, x3 = xi[:, 0], xi[:, 1], xi[:, 2]
        side1 = np.where(
            r > h,
            ahat(t - r, x1 + x2) * _ghat(r - h, x2),
            ahat(t - h, x1 + x2) * _ghat(h - r, x1),
        )
        side2 = np.where(
            s > h2,
            ahat(t - s, x3 - x2) * _ghat(s - h2, x2),
            ahat(t - h2, x3 - x2) * _ghat(h2 - s, x3),
        )
        common = ahat(t - r2, x1) * ahat(t - s2, x3)
        vals = (
            0.25 * w1 * w2 * w3 * np.prod(wx, axis=1) * side1 * side2 * common
        )
        total += float(np.sum(vals))
        total_sq += float(np.sum(vals * vals))
        done += m
    mean = total / done
    var = max(total_sq / done - mean * mean, 0.0)
    return mean, math.sqrt(var / done)


def poincare_bound(
    sc: Scenario, t: float, R: float, q: Optional[QuadSpec] = None
) -> float:
    """The four-integral bound A_R controlling the normal approximation.

    Returns K_cal^4 * sum_j A_{R,j} where the four region integrals are
    estimated jointly by importance Monte Carlo and K_cal is the computable
    series constant bounding the first two derivative moments at time t (the
    sharp constant in the underlying moment theorem is not explicit; it
    depends on the noise, the order and t, but never on R, so scaling in R
    is the meaningful content and is K_cal-independent).

    The growth is the regime's fourth-moment rate: R in Part1, R^(4 - 3 beta)
    in Part2.  The frequency draws are seeded independently of R, so ratios
    across radii share the randomness and the growth check is low-noise.
    """
    q = q if q is not None else QuadSpec()
    _regime_check(sc, "poincare_bound")
    if not (0.0 < t <= sc.t_horizon) or not math.isfinite(t):
        raise DomainError(
            f"t must lie in (0, horizon {sc.t_horizon}], got {t}"
        )
    if not (R > 0.0 and math.isfinite(R)):
        raise DomainError(f"window radius must be positive, got {R}")

    k_cal = max(
        _series_sum(sc, float(t), 1, 2.0, 1), _series_sum(sc, float(t), 2, 2.0, 2)
    )
    mean, se = _poincare_mc(sc, t, R, q)
    _mc_gate(mean, se, q, "poincare_bound")
    if mean <= 0.0:
        return 0.0
    # compose in logs: the calibration constant alone can sit near the
    # float64 ceiling for strongly singular noises at long horizons
    with np.errstate(over="ignore"):
        return float(np.exp(np.float64(4.0 * math.log(k_cal) + math.log(mean))))


# ---------------------------------------------------------------------------
# tightness of the time increments


def tightness_check(
    sc: Scenario,
    s: float,
    t: float,
    R: float,
    p_max: int = P_MAX,
    q: Optional[QuadSpec] = None,
) -> Tuple[float, float]:
    """L2 norm of the increment F_R(t) - F_R(s) against its Lipschitz scale.

    Returns (lhs, rhs_scale): lhs is built from the chaos expansion of the
    increment -- levels up to p_max numerically, everything above through
    the certified cross-covariance tail bound -- and rhs_scale = |t - s|
    times the regime rate sigma_R.  The contract is lhs <= K * rhs_scale
    with a constant K independent of (s, t, R); callers report the observed
    ratio.  The pair is put in canonical order first, so the result depends
    only on {s, t}.

    Levels >= 2 reuse one seeded frequency/time stream for the three
    covariance evaluations at (t,t), (t,s), (s,s); the shared draws make the
    quadratic form a paired difference, exactly zero at s = t and smooth in
    the gap.
    """
    q = q if q is not None else QuadSpec()
    if not isinstance(p_max, (int, np.integer)) or not (1 <= p_max <= P_MAX):
        raise DomainError(f"p_max must be an integer in 1..{P_MAX}, got {p_max}")
    for name, val in (("s", s), ("t", t)):
        if not (0.0 < val <= sc.t_horizon) or not math.isfinite(val):
            raise DomainError(
                f"{name} must lie in (0, horizon {sc.t_horizon}], got {val}"
            )
    if not (sc.t_horizon <= R):
        raise DomainError(
            f"window radius must dominate the horizon ({sc.t_horizon}), got {R}"
        )
    lo, hi = (s, t) if s <= t else (t, s)
    if lo == hi:
        return 0.0, 0.0

    core = (
        var_J1R(sc, hi, hi, R, q)
        - 2.0 * var_J1R(sc, hi, lo, R, q)
        + var_J1R(sc, lo, lo, R, q)
    )
    for p in range(2, p_max + 1):
        seed = ("tightness", scenario_hash(sc), float(R), int(p))
        ctt, _ = _chain_cross_mc(sc, hi, hi, p, q, ("window", float(R)), seed)
        cts, _ = _chain_cross_mc(sc, hi, lo, p, q, ("window", float(R)), seed)
        css, _ = _chain_cross_mc(sc, lo, lo, p, q, ("window", float(R)), seed)
        core += ctt - 2.0 * cts + css
    tail_sq = (
        var_tail_bound(sc, hi, R, p_max)
        + 2.0 * var_tail_bound(sc, hi, R, p_max, s=lo)
        + var_tail_bound(sc, lo, R, p_max)
    )
    lhs = math.sqrt(max(core, 0.0) + tail_sq)
    return lhs, (hi - lo) * sigma_rate(sc, R)
