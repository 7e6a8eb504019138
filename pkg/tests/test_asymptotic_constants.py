"""Tests for the limiting-constant and limiting-covariance evaluators."""

import math

import numpy as np
import pytest
from scipy import integrate

from hypothesis import given, settings, strategies as st

from wavechaos import asymptotic_constants as AC
from wavechaos.errors import DomainError, UnsupportedRegimeError
from wavechaos.noise_model import (
    Constant,
    Product,
    RieszSpace,
    RieszTime,
    Scenario,
    SmoothIntegrable,
    SpatialKernel,
    big_gamma,
    riesz_constant,
)


# ---------------------------------------------------------------------------
# kappa


def test_kappa_d1_closed_form_vs_quadrature():
    # independent oracle: correlation reduction over the interval pair,
    # 2 * int_0^2 u^-beta (2-u) du
    for beta in np.arange(0.1, 0.95, 0.1):
        orc, _ = integrate.quad(lambda u: u ** (-beta) * (2 - u), 0, 2, epsabs=1e-12)
        assert AC.kappa(float(beta), 1) == pytest.approx(2 * orc, rel=1e-6)


def test_kappa_d1_frozen_value_and_limit():
    assert AC.kappa(0.5, 1) == pytest.approx(7.542472332656508, rel=1e-12)
    assert AC.kappa(1e-9, 1) == pytest.approx(4.0, rel=1e-6)


def test_kappa_d2_vs_radial_quadrature():
    # oracle: pair-distance density reduction, 2 pi int_0^2 rho^(1-beta) A(rho)
    for beta in (0.5, 1.0, 1.5):
        orc, _ = integrate.quad(
            lambda s: s ** (1 - beta) * (2 * math.acos(s / 2) - (s / 2) * math.sqrt(4 - s * s)),
            0, 2, epsabs=1e-12,
        )
        assert AC.kappa(beta, 2) == pytest.approx(2 * math.pi * orc, rel=1e-9)


def test_kappa_d2_small_beta_limit_is_disk_area_squared():
    assert AC.kappa(1e-9, 2) == pytest.approx(math.pi ** 2, rel=1e-6)


def test_kappa_d2_stratified_mc_cross_check():
    beta = 1.0
    rng = np.random.default_rng(2024)
    n = 400_000
    strata = np.arange(n) % 100
    r1 = np.sqrt((strata + rng.random(n)) / 100.0)
    th1 = 2 * np.pi * rng.random(n)
    r2 = np.sqrt(rng.random(n))
    th2 = 2 * np.pi * rng.random(n)
    dx = r1 * np.cos(th1) - r2 * np.cos(th2)
    dy = r1 * np.sin(th1) - r2 * np.sin(th2)
    w = (dx * dx + dy * dy) ** (-0.5 * beta) * np.pi ** 2
    est, se = w.mean(), w.std() / math.sqrt(n)
    assert se < 0.01 * est
    assert abs(AC.kappa(beta, 2) - est) < 4 * se


def test_kappa_validation():
    with pytest.raises(DomainError):
        AC.kappa(0.0, 1)
    with pytest.raises(DomainError):
        AC.kappa(1.0, 1)
    with pytest.raises(DomainError):
        AC.kappa(2.0, 2)
    with pytest.raises(DomainError):
        AC.kappa(0.5, 3)


# ---------------------------------------------------------------------------
# kbeta12 / lbeta


def test_kbeta12_symmetry_exact():
    assert AC.kbeta12(0.3, 0.45) == AC.kbeta12(0.45, 0.3)


def test_kbeta12_small_beta_limit():
    assert AC.kbeta12(1e-7, 1e-7) == pytest.approx(math.pi ** 2, rel=1e-5)


def test_kbeta12_monte_carlo_oracle():
    b1, b2 = 0.3, 0.45  # both < 1/2 so the plain estimator has finite variance
    rng = np.random.default_rng(42)
    n = 1_000_000
    strata = np.arange(n) % 100
    r1 = np.sqrt((strata + rng.random(n)) / 100.0)
    th1 = 2 * np.pi * rng.random(n)
    r2 = np.sqrt(rng.random(n))
    th2 = 2 * np.pi * rng.random(n)
    w = (
        np.abs(r1 * np.cos(th1) - r2 * np.cos(th2)) ** (-b1)
        * np.abs(r1 * np.sin(th1) - r2 * np.sin(th2)) ** (-b2)
        * np.pi ** 2
    )
    est, se = w.mean(), w.std() / math.sqrt(n)
    assert se < 0.01 * est
    assert abs(AC.kbeta12(b1, b2) - est) < 4 * se


def test_kbeta12_validation():
    for bad in ((0.0, 0.5), (0.5, 1.0), (-0.1, 0.5)):
        with pytest.raises(DomainError):
            AC.kbeta12(*bad)


def test_lbeta_small_beta_limit():
    assert AC.lbeta(1e-9) == pytest.approx(16.0 / 3.0, rel=1e-6)


def test_lbeta_vs_profile_quadrature():
    for beta in (0.25, 0.5, 0.75):
        prof, _ = integrate.quad(
            lambda x1: (1 - x1 * x1) ** (0.5 * (2 - beta)), -1, 1, epsabs=1e-13
        )
        orc = 2.0 ** (3 - beta) / ((1 - beta) * (2 - beta)) * prof
        assert AC.lbeta(beta) == pytest.approx(orc, rel=1e-12)


def test_lbeta_vs_3d_monte_carlo():
    beta = 0.3
    rng = np.random.default_rng(7)
    n = 2_000_000
    x1, x2, x3 = rng.uniform(-1, 1, (3, n))
    hit = (x1 * x1 + x2 * x2 <= 1) & (x1 * x1 + x3 * x3 <= 1)
    w = np.where(hit, np.abs(x2 - x3) ** (-beta), 0.0) * 8.0
    est, se = w.mean(), w.std() / math.sqrt(n)
    assert abs(AC.lbeta(beta) - est) < 4 * se


def test_lbeta_monotone_in_beta():
    vals = [AC.lbeta(float(b)) for b in np.arange(0.1, 0.95, 0.1)]
    assert all(a < b for a, b in zip(vals, vals[1:]))
    with pytest.raises(DomainError):
        AC.lbeta(1.0)


# ---------------------------------------------------------------------------
# closed cone pairing


def test_riesz_cone_inner_matches_interval_pair_energy():
    # equal unit cones in d=1: quarter of the interval-pair energy
    assert AC.riesz_cone_inner(1, 0.5, 1.0, 1.0) == pytest.approx(
        AC.kappa(0.5, 1) / 4.0, rel=1e-12
    )


def test_riesz_cone_inner_matches_exact_two_box_mass():
    # the closed spectral form against the antiderivative-based real-space
    # mass: two independent derivations, equal to machine precision
    rng = np.random.default_rng(1)
    for beta in (0.25, 0.5, 0.75):
        for _ in range(10):
            s, sp = rng.random() * 1.5 + 0.01, rng.random() * 1.5 + 0.01
            real = AC._two_cone_mass(RieszSpace(beta), s, sp)
            spectral = AC.riesz_cone_inner(1, beta, s, sp)
            assert real == pytest.approx(spectral, rel=1e-12)


def test_riesz_cone_inner_symmetric_and_positive():
    assert AC.riesz_cone_inner(2, 1.5, 0.4, 0.9) == AC.riesz_cone_inner(2, 1.5, 0.9, 0.4)
    assert AC.riesz_cone_inner(2, 1.5, 0.4, 0.9) > 0
    assert AC.riesz_cone_inner(1, 0.5, 0.0, 1.0) == 0.0


# ---------------------------------------------------------------------------
# limit_cov


SC_P2_CONST = Scenario(1, Constant(1.0), SpatialKernel(RieszSpace(0.5), 1), 2.0)
SC_P2_RT = Scenario(1, RieszTime(0.5), SpatialKernel(RieszSpace(0.5), 1), 2.0)


def test_limit_cov_part2_constant_temporal_reference_value():
    got = AC.limit_cov(SC_P2_CONST, 1.0, 1.0)
    assert got == pytest.approx(AC.kappa(0.5, 1) / 4.0, rel=1e-12)
    assert got == pytest.approx(1.885618083164127, rel=1e-10)


def test_limit_cov_vanishes_at_zero_times():
    assert AC.limit_cov(SC_P2_CONST, 0.0, 1.0) == 0.0
    assert AC.limit_cov(SC_P2_RT, 1.0, 0.0) == 0.0


def test_limit_cov_symmetric_in_times():
    assert AC.limit_cov(SC_P2_CONST, 0.8, 0.3) == AC.limit_cov(SC_P2_CONST, 0.3, 0.8)
    a = AC.limit_cov(SC_P2_RT, 1.0, 0.6)
    b = AC.limit_cov(SC_P2_RT, 0.6, 1.0)
    assert a == pytest.approx(b, rel=1e-12)


def _time_factor_oracle(alpha, t, s):
    """Semi-analytic oracle: closed inner integral, scipy quad outer."""

    def A(u):
        return math.copysign(abs(u) ** (1 - alpha) / (1 - alpha), u)

    def B1(u):
        return abs(u) ** (2 - alpha) / (2 - alpha)

    def inner(r):
        return (s - r) * (A(r) - A(r - s)) + (B1(r) - B1(r - s))

    pts = [s] if s < t else None
    val, _ = integrate.quad(lambda r: (t - r) * inner(r), 0, t, points=pts,
                            limit=400, epsabs=1e-12)
    return val


@pytest.mark.parametrize("t,s", [(1.0, 0.6), (0.7, 0.7), (0.4, 1.3)])
def test_limit_cov_riesz_time_vs_semianalytic_oracle(t, s):
    got = AC.limit_cov(SC_P2_RT, t, s)
    orc = AC.kappa(0.5, 1) * _time_factor_oracle(0.5, t, s)
    assert got == pytest.approx(orc, rel=1e-8)


def test_limit_cov_product_regimes():
    sc3a = Scenario(2, Constant(2.0), SpatialKernel(Product(RieszSpace(0.3), RieszSpace(0.45)), 2), 2.0)
    assert AC.limit_cov(sc3a, 1.0, 1.0) == pytest.approx(
        AC.kbeta12(0.3, 0.45) * 2.0 * 0.25, rel=1e-12
    )
    mixed1 = Scenario(2, Constant(1.0), SpatialKernel(Product(SmoothIntegrable(1.0, 2.5), RieszSpace(0.5)), 2), 2.0)
    mixed2 = Scenario(2, Constant(1.0), SpatialKernel(Product(RieszSpace(0.5), SmoothIntegrable(1.0, 2.5)), 2), 2.0)
    want = 2.5 * AC.lbeta(0.5) * 0.25
    assert AC.limit_cov(mixed1, 1.0, 1.0) == pytest.approx(want, rel=1e-12)
    assert AC.limit_cov(mixed2, 1.0, 1.0) == pytest.approx(want, rel=1e-12)


def test_limit_cov_short_range_regime_rejected():
    sc1 = Scenario(1, Constant(1.0), SpatialKernel(SmoothIntegrable(1.0, 1.0), 1), 2.0)
    with pytest.raises(UnsupportedRegimeError):
        AC.limit_cov(sc1, 1.0, 1.0)
    with pytest.raises(DomainError):
        AC.limit_cov(SC_P2_CONST, -0.5, 1.0)


@settings(max_examples=30, deadline=None)
@given(
    alpha=st.floats(0.2, 0.8),
    t1=st.floats(0.1, 1.4),
    dt=st.floats(0.0, 0.5),
    s=st.floats(0.1, 1.9),
)
def test_limit_cov_nondecreasing_in_each_time(alpha, t1, dt, s):
    sc = Scenario(1, RieszTime(alpha), SpatialKernel(RieszSpace(0.5), 1), 2.0)
    lo = AC.limit_cov(sc, t1, s)
    hi = AC.limit_cov(sc, t1 + dt, s)
    assert hi >= lo * (1.0 - 1e-9)


# ---------------------------------------------------------------------------
# lens-density moments


def test_g_moment_vs_scipy_quadrature():
    for p in (-0.9, -0.5, 0.0, 0.7, 1.0):
        orc, _ = integrate.quad(
            lambda u: u ** p * (math.acos(u) - u * math.sqrt(1 - u * u)),
            0, 1, epsabs=1e-13,
        )
        assert AC._g_moment(p) == pytest.approx(orc, rel=1e-9)
    assert AC._g_moment(1.0) == pytest.approx(math.pi / 16.0, rel=1e-12)


# ---------------------------------------------------------------------------
# density_integrals


SC_D1_RC = Scenario(1, Constant(1.0), SpatialKernel(RieszSpace(0.5), 1), 2.0)
SC_D1_RR = Scenario(1, RieszTime(0.5), SpatialKernel(RieszSpace(0.5), 1), 2.0)
SC_D1_SR = Scenario(1, RieszTime(0.3), SpatialKernel(SmoothIntegrable(1.0, 1.0), 1), 2.0)
SC_D2_RC = Scenario(2, Constant(1.0), SpatialKernel(RieszSpace(1.5), 2), 2.0)
SC_D2_RR = Scenario(2, RieszTime(0.5), SpatialKernel(RieszSpace(1.5), 2), 2.0)


def test_density_integrals_one_time_mass_closed_form():
    psi0, _, _ = AC.density_integrals(SC_D1_RC, 0.5)
    beta = 0.5
    K = riesz_constant(1, beta) * (-AC._cos_diff_constant(beta - 2.0))
    closed = K * 2 ** (2 - beta) * 0.5 ** (3 - beta) / (3 - beta)
    assert psi0 == pytest.approx(closed, rel=1e-8)


def test_density_integrals_two_time_mass_spectral_oracle():
    # flat temporal kernel: phi(delta) = 2 int phi(xi) (1-cos(delta xi))^2 / xi^4
    _, phi, _ = AC.density_integrals(SC_D1_RC, 0.5)
    c = riesz_constant(1, 0.5)
    orc, _ = integrate.quad(
        lambda x: c * x ** (-0.5) * (1 - math.cos(0.5 * x)) ** 2 / x ** 4,
        0, 400, limit=2000, epsabs=1e-13,
    )
    assert phi == pytest.approx(2 * orc, rel=1e-7)


@pytest.mark.parametrize("sc", [SC_D1_RC, SC_D1_RR, SC_D1_SR, SC_D2_RC, SC_D2_RR],
                         ids=["d1-riesz-const", "d1-riesz-rt", "d1-smooth-rt",
                              "d2-riesz-const", "d2-riesz-rt"])
def test_density_integrals_domination_on_delta_grid(sc):
    for delta in np.arange(0.1, 0.95, 0.1):
        psi0, phi, gd = AC.density_integrals(sc, float(delta))
        assert psi0 > 0 and phi > 0
        assert gd == pytest.approx(big_gamma(sc.temporal, float(delta)), rel=1e-14)
        assert phi <= gd * psi0 * (1 + 1e-9)


def test_density_integrals_small_delta_vanishes():
    psi0, phi, gd = AC.density_integrals(SC_D1_RC, 1e-3)
    assert 0 < psi0 < 1e-6
    assert 0 < phi < 1e-6


def test_density_integrals_d2_oracles():
    psi0, phi, _ = AC.density_integrals(SC_D2_RC, 0.4)
    orc, _ = integrate.dblquad(
        lambda sp, s: AC.riesz_cone_inner(2, 1.5, s, sp), 0, 0.4, 0, 0.4, epsabs=1e-12
    )
    assert phi == pytest.approx(orc, rel=1e-8)
    # one-time mass against a truncated spectral quadrature with analytic tail
    c = riesz_constant(2, 1.5)
    d = 0.4
    head, _ = integrate.quad(
        lambda r: 2 * math.pi * c * r ** (1.5 - 2.0) * (d / 2 - math.sin(2 * d * r) / (4 * r)) / r,
        1e-9, 300, limit=2000, epsabs=1e-13,
    )
    tail = 2 * math.pi * c * (d / 2) * 300.0 ** (1.5 - 2.0) / (2.0 - 1.5)
    assert psi0 == pytest.approx(head + tail, rel=1e-4)


def test_density_integrals_d2_riesz_time_oracle():
    _, phi, _ = AC.density_integrals(SC_D2_RR, 0.4)
    orc, _ = integrate.dblquad(
        lambda sp, s: abs(s - sp) ** (-0.5) * AC.riesz_cone_inner(2, 1.5, s, sp)
        if abs(s - sp) > 1e-13 else 0.0,
        0, 0.4, 0, 0.4, epsabs=1e-11,
    )
    assert phi == pytest.approx(orc, rel=1e-5)


def test_density_integrals_validation():
    with pytest.raises(DomainError):
        AC.density_integrals(SC_D1_RC, 0.0)
    with pytest.raises(DomainError):
        AC.density_integrals(SC_D1_RC, 1.0)
    product_sc = Scenario(2, Constant(1.0), SpatialKernel(Product(RieszSpace(0.3), RieszSpace(0.3)), 2), 2.0)
    with pytest.raises(UnsupportedRegimeError):
        AC.density_integrals(product_sc, 0.3)
