"""Tests for the derivative moment sandwich.

The order-(m+1) correction term of dm_l2 has an exact reference in closed
corner form: with one free pair the spatial integral is a box-pair mass
against gamma, leaving a 2-d time integral that scipy can do directly.  The
order-(m+2) term is cross-checked by an independent Monte Carlo estimator
with a different proposal (uniform in both endpoints, explicit gamma
couplings) -- same integral, different importance weights, so weight or
support bugs cannot cancel.
"""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from wavechaos.errors import BudgetError, DomainError, UnsupportedRegimeError
from wavechaos.hilbert import QuadSpec
from wavechaos.malliavin import (
    _canonical,
    _chain_vec,
    _correction_term,
    _space_lag_draws,
    _time_pair_draws,
    dm_l2,
    dm_lower,
    dm_upper_series,
    moment_constant,
)
from wavechaos.noise_model import (
    Constant,
    RieszSpace,
    RieszTime,
    Scenario,
    SmoothIntegrable,
    SpatialKernel,
    gamma0_eval,
    gamma_antider2,
    gamma_eval,
)
from wavechaos.wave_kernels import ChaosKernelPoint, chaos_kernel_eval

_SQ2PI = math.sqrt(2.0 * math.pi)

SC_G = Scenario(1, Constant(1.0), SpatialKernel(SmoothIntegrable(1.0, _SQ2PI), 1), 2.0)
SC_R = Scenario(1, Constant(1.0), SpatialKernel(RieszSpace(0.5), 1), 2.0)
SC_TR = Scenario(1, RieszTime(0.5), SpatialKernel(SmoothIntegrable(1.0, _SQ2PI), 1), 2.0)

Q = QuadSpec(1e-3, 2_000_000)

# frozen output of _term2_oracle below at epsabs=1e-13
TERM2_REF = {"gauss": 0.007613938851, "riesz": 0.026286272352}


def _bmass(variant, p, q, r, s):
    B = lambda u: gamma_antider2(variant, u)
    return B(q - r) - B(p - r) - B(q - s) + B(p - s)


def _term2_oracle(variant, t, x, s0, y0):
    # m=1, n=2: the free-pair profile is a single interval in space with a
    # piecewise-constant coefficient, so the H-norm reduces to Bmass under a
    # 2-d time integral (constant gamma0)
    def prof(th):
        if th < s0:
            if abs(x - y0) >= t - s0:
                return None
            return (0.125, y0 - (s0 - th), y0 + (s0 - th))
        lo = max(x - (t - th), y0 - (th - s0))
        hi = min(x + (t - th), y0 + (th - s0))
        return (0.125, lo, hi) if hi > lo else None

    def S(th, thp):
        a, b = prof(th), prof(thp)
        if a is None or b is None:
            return 0.0
        return a[0] * b[0] * _bmass(variant, a[1], a[2], b[1], b[2])

    tot = 0.0
    for lo1, hi1 in [(0, s0), (s0, t)]:
        for lo2, hi2 in [(0, s0), (s0, t)]:
            val, _ = integrate.dblquad(
                lambda thp, th: S(th, thp), lo1, hi1, lo2, hi2,
                epsabs=1e-12, epsrel=1e-10,
            )
            tot += val
    return 4.0 * tot


def _uniform_oracle(sc, t, x, m, times, points, n, n_samp=600_000, seed=4242):
    """Same chaos-term integral as _correction_term, different proposal."""
    k = n - m
    rng = np.random.default_rng(seed)
    th = t * rng.random((n_samp, k))
    thp = t * rng.random((n_samp, k))
    w = (x - t) + 2.0 * t * rng.random((n_samp, k))
    wp = (x - t) + 2.0 * t * rng.random((n_samp, k))
    ft = np.broadcast_to(np.asarray(times, float), (n_samp, m))
    fy = np.broadcast_to(np.asarray(points, float), (n_samp, m))
    cu = _chain_vec(t, x, np.concatenate([ft, th], 1), np.concatenate([fy, w], 1))
    cp = _chain_vec(t, x, np.concatenate([ft, thp], 1), np.concatenate([fy, wp], 1))
    gam = np.ones(n_samp)
    for i in range(k):
        gam = gam * gamma_eval(sc.spatial, w[:, i] - wp[:, i])
    vals = (t * t) ** k * (2.0 * t) ** (2 * k) * gam * cu * cp
    return vals.mean() / math.factorial(k), vals.std() / math.sqrt(n_samp) / math.factorial(k)


class TestLower:
    def test_single_pair_is_half_inside_cone(self):
        assert dm_lower(SC_G, 1.0, 0.0, 1, [0.5], [0.2]) == 0.5

    def test_two_pairs_product_of_propagators(self):
        assert dm_lower(SC_G, 1.0, 0.0, 2, [0.6, 0.3], [0.1, 0.2]) == pytest.approx(0.25)

    def test_outside_cone_is_zero(self):
        assert dm_lower(SC_G, 1.0, 0.0, 1, [0.5], [0.9]) == 0.0
        assert dm_lower(SC_G, 1.0, 0.0, 1, [-0.1], [0.0]) == 0.0
        assert dm_lower(SC_G, 1.0, 0.0, 1, [1.2], [0.0]) == 0.0

    def test_pair_order_does_not_matter(self):
        a = dm_lower(SC_G, 1.0, 0.0, 2, [0.6, 0.3], [0.1, 0.2])
        b = dm_lower(SC_G, 1.0, 0.0, 2, [0.3, 0.6], [0.2, 0.1])
        assert a == b

    def test_order_three_supported(self):
        v = dm_lower(SC_G, 1.0, 0.0, 3, [0.8, 0.5, 0.2], [0.1, 0.0, -0.1])
        assert v == pytest.approx(6.0 * 0.5**3 / 6.0)

    def test_d2_uses_cone_density(self):
        sc2 = Scenario(2, Constant(1.0), SpatialKernel(SmoothIntegrable(1.0, 1.0), 2), 2.0)
        r = math.hypot(0.1, 0.2)
        want = 1.0 / (2.0 * math.pi * math.sqrt(0.25 - r * r))
        assert dm_lower(sc2, 1.0, [0.0, 0.0], 1, [0.5], [[0.1, 0.2]]) == pytest.approx(want)

    def test_validation(self):
        with pytest.raises(DomainError):
            dm_lower(SC_G, 1.0, 0.0, 0, [], [])
        with pytest.raises(DomainError):
            dm_lower(SC_G, 1.0, 0.0, 4, [0.1] * 4, [0.0] * 4)
        with pytest.raises(DomainError):
            dm_lower(SC_G, 3.0, 0.0, 1, [0.5], [0.2])
        with pytest.raises(DomainError):
            dm_lower(SC_G, 1.0, 0.0, 2, [0.5], [0.2])


class TestChainVec:
    def test_matches_scalar_chain_on_sorted_args(self):
        rng = np.random.default_rng(11)
        times = rng.uniform(-0.2, 1.2, size=(50, 3))
        locs = rng.uniform(-1.5, 1.5, size=(50, 3))
        got = _chain_vec(1.0, 0.0, times, locs)
        for i in range(50):
            order = np.argsort(-times[i], kind="stable")
            ts, ys = times[i][order], locs[i][order]
            if np.any(ts <= 0.0) or np.any(ts >= 1.0):
                want = 0.0
            else:
                pt = ChaosKernelPoint(t=1.0, x=np.array([0.0]), times=ts, points=ys)
                want = chaos_kernel_eval(pt)
            assert got[i] == want


class TestSamplers:
    def test_time_pair_weights_integrate_gamma0(self):
        # E[w f(theta) g(theta')] must equal the gamma0-paired integral
        t = 1.0
        f = lambda th: 1.0 + th
        g = lambda th: 2.0 + th * th
        for temporal in (Constant(1.0), RieszTime(0.5)):
            def lagged(u):
                lo, hi = max(0.0, u), min(t, t + u)
                val, _ = integrate.quad(lambda th: f(th) * g(th - u), lo, hi)
                return gamma0_eval(temporal, u) * val

            want, _ = integrate.quad(lagged, -t, t, points=[0.0], limit=200)
            rng = np.random.default_rng(5)
            th, thp, w = _time_pair_draws(temporal, t, rng, (400_000, 1))
            vals = w[:, 0] * f(th[:, 0]) * g(thp[:, 0])
            se = vals.std() / math.sqrt(len(vals))
            assert abs(vals.mean() - want) < 5.0 * se

    def test_space_lag_weights_integrate_gamma(self):
        t = 1.0
        f = lambda u: np.exp(-u * u)
        for sc in (SC_G, SC_R):
            def lagged(u):
                return gamma_eval(sc.spatial, u) * f(u)

            want, _ = integrate.quad(lagged, -2.0 * t, 2.0 * t, points=[0.0], limit=200)
            rng = np.random.default_rng(6)
            u, w = _space_lag_draws(sc.spatial.variant, t, rng, (400_000, 1))
            vals = w[:, 0] * f(u[:, 0])
            se = vals.std() / math.sqrt(len(vals))
            assert abs(vals.mean() - want) < 5.0 * se


class TestL2:
    def test_nmax_equals_m_reduces_to_lower(self):
        for sc in (SC_G, SC_R):
            lo = dm_lower(sc, 1.0, 0.0, 1, [0.5], [0.2])
            val, tail = dm_l2(sc, 1.0, 0.0, 1, [0.5], [0.2], 1, Q)
            assert val == lo
            assert tail > 0.0

    def test_first_correction_matches_closed_oracle(self):
        ts, ys = _canonical(np.array([0.5]), np.array([0.2]))
        for sc, name in [(SC_G, "gauss"), (SC_R, "riesz")]:
            got = _correction_term(sc, 1.0, 0.0, 1, 2, ts, ys, Q)
            assert got == pytest.approx(TERM2_REF[name], rel=0.02)

    def test_frozen_oracle_still_reproducible(self):
        got = _term2_oracle(SC_G.spatial.variant, 1.0, 0.0, 0.5, 0.2)
        assert got == pytest.approx(TERM2_REF["gauss"], rel=1e-8)

    def test_second_correction_matches_uniform_proposal(self):
        ts, ys = _canonical(np.array([0.5]), np.array([0.2]))
        got = _correction_term(SC_G, 1.0, 0.0, 1, 3, ts, ys, Q)
        ora, se = _uniform_oracle(SC_G, 1.0, 0.0, 1, ts, ys, 3)
        assert abs(got - ora) < 6.0 * se

    def test_m2_corrections_match_uniform_proposal(self):
        ts, ys = _canonical(np.array([0.7, 0.3]), np.array([0.15, -0.1]))
        for n in (3, 4):
            got = _correction_term(SC_G, 1.0, 0.0, 2, n, ts, ys, Q)
            ora, se = _uniform_oracle(SC_G, 1.0, 0.0, 2, ts, ys, n)
            assert abs(got - ora) < 6.0 * max(se, 1e-9)

    def test_zero_kernel_short_circuits(self):
        assert dm_l2(SC_G, 1.0, 0.0, 1, [0.5], [0.9], None, Q) == (0.0, 0.0)

    def test_permutation_symmetry_exact(self):
        for sc in (SC_G, SC_R, SC_TR):
            a, _ = dm_l2(sc, 1.0, 0.0, 2, [0.7, 0.3], [0.15, -0.1], None, Q)
            b, _ = dm_l2(sc, 1.0, 0.0, 2, [0.3, 0.7], [-0.1, 0.15], None, Q)
            assert a == b

    def test_riesz_time_temporal_supported(self):
        lo = dm_lower(SC_TR, 1.0, 0.0, 1, [0.5], [0.2])
        val, tail = dm_l2(SC_TR, 1.0, 0.0, 1, [0.5], [0.2], None, Q)
        up = dm_upper_series(SC_TR, 1.0, 0.0, 1, [0.5], [0.2])
        assert lo <= val <= up
        assert val > lo  # the corrections are strictly positive here

    def test_validation(self):
        with pytest.raises(DomainError):
            dm_l2(SC_G, 1.0, 0.0, 3, [0.5] * 3, [0.0] * 3, None, Q)
        with pytest.raises(DomainError):
            dm_l2(SC_G, 1.0, 0.0, 1, [0.5], [0.2], 4, Q)
        with pytest.raises(DomainError):
            dm_l2(SC_G, 1.0, 0.0, 1, [0.5], [0.2], 0, Q)
        sc2 = Scenario(2, Constant(1.0), SpatialKernel(SmoothIntegrable(1.0, 1.0), 2), 2.0)
        with pytest.raises(UnsupportedRegimeError):
            dm_l2(sc2, 1.0, [0.0, 0.0], 1, [0.5], [[0.1, 0.2]], None, Q)

    def test_budget_gate(self):
        with pytest.raises(BudgetError):
            dm_l2(SC_G, 1.0, 0.0, 1, [0.5], [0.2], None, QuadSpec(1e-3, 1000))


class TestUpperSeries:
    def test_factorizes_through_kernel_value(self):
        pts = [([0.5], [0.2]), ([0.8], [0.1]), ([0.2], [-0.05])]
        ratios = []
        for tt, yy in pts:
            lo = dm_lower(SC_G, 1.0, 0.0, 1, tt, yy)
            up = dm_upper_series(SC_G, 1.0, 0.0, 1, tt, yy)
            ratios.append(up / lo)
        assert ratios[0] == pytest.approx(ratios[1], rel=1e-12)
        assert ratios[0] == pytest.approx(ratios[2], rel=1e-12)

    def test_horizon_ratio_is_moment_constant(self):
        lo = dm_lower(SC_G, 2.0, 0.0, 1, [0.5], [0.2])
        up = dm_upper_series(SC_G, 2.0, 0.0, 1, [0.5], [0.2])
        assert up / lo == pytest.approx(moment_constant(SC_G, 1), rel=1e-12)

    def test_series_finite(self):
        for sc in (SC_G, SC_R, SC_TR):
            for m in (1, 2):
                k = moment_constant(sc, m)
                assert math.isfinite(k) and k > 1.0

    def test_zero_kernel_gives_zero(self):
        assert dm_upper_series(SC_G, 1.0, 0.0, 1, [0.5], [0.9]) == 0.0

    def test_validation(self):
        with pytest.raises(DomainError):
            dm_upper_series(SC_G, 1.0, 0.0, 3, [0.5] * 3, [0.0] * 3)
        with pytest.raises(DomainError):
            moment_constant(SC_G, 1, p=1.5)


class TestSandwich:
    def test_twenty_random_points(self):
        rng = np.random.default_rng(99)
        checked = 0
        for sc in (SC_G, SC_R):
            for m in (1, 2):
                done = 0
                while done < 5:
                    tt = np.sort(rng.random(m))[::-1] * 0.95
                    yy = rng.uniform(-1.0, 1.0, m)
                    lo = dm_lower(sc, 1.0, 0.0, m, tt, yy)
                    if lo == 0.0:
                        continue
                    done += 1
                    checked += 1
                    val, _ = dm_l2(sc, 1.0, 0.0, m, tt, yy, None, Q)
                    up = dm_upper_series(sc, 1.0, 0.0, m, tt, yy)
                    assert lo <= val * (1.0 + 1e-4)
                    assert val <= up * (1.0 + 1e-4)
        assert checked == 20

    @settings(max_examples=15, deadline=None)
    @given(
        s=st.floats(0.05, 0.9),
        y=st.floats(-0.8, 0.8),
    )
    def test_lower_never_exceeds_upper(self, s, y):
        lo = dm_lower(SC_G, 1.0, 0.0, 1, [s], [y])
        up = dm_upper_series(SC_G, 1.0, 0.0, 1, [s], [y])
        assert lo <= up


class TestAggregateBound:
    def test_spatial_pairing_of_propagators_bounded_by_series_base(self):
        # the one-derivative aggregate is controlled by the same constant
        # that drives the series: for every w <= t the gamma-paired mass of
        # G_w against itself stays below 2 (t^2 v 1) dalang
        from wavechaos.malliavin import _series_base

        t = 1.0
        for sc in (SC_G, SC_R):
            cap = _series_base(sc, t)
            for w in np.linspace(0.05, t, 12):
                mass = 0.25 * _bmass(sc.spatial.variant, -w, w, -w, w)
                assert mass <= cap
