import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from wavechaos.errors import DomainError
from wavechaos.wave_kernels import (
    ChaosKernelPoint,
    WaveKernel,
    chaos_kernel_eval,
    chaos_kernel_sym,
    green_eval,
    green_fourier,
    green_lp_norm,
)


# ---------------------------------------------------------------------------
# propagator values


def test_green_d1_values():
    assert green_eval(1, 1.0, 0.0) == 0.5
    assert green_eval(1, 1.0, 0.999) == 0.5
    assert green_eval(1, 1.0, 1.0) == 0.0  # open cone: boundary excluded
    assert green_eval(1, 1.0, -1.5) == 0.0
    assert green_eval(1, 0.0, 0.0) == 0.0
    assert green_eval(1, -2.0, 0.1) == 0.0


def test_green_d2_values():
    v = green_eval(2, 1.0, np.array([0.0, 0.0]))
    assert v == pytest.approx(1.0 / (2.0 * math.pi))
    r = 0.6
    v = green_eval(2, 1.0, np.array([r, 0.0]))
    assert v == pytest.approx(1.0 / (2.0 * math.pi * math.sqrt(1.0 - r * r)))
    assert green_eval(2, 1.0, np.array([1.0, 0.0])) == 0.0
    assert green_eval(2, 1.0, np.array([0.8, 0.8])) == 0.0
    assert green_eval(2, -1.0, np.array([0.0, 0.0])) == 0.0


def test_green_vectorized():
    z = np.linspace(-2.0, 2.0, 41)
    g = green_eval(1, 1.0, z)
    assert g.shape == z.shape
    assert np.all(g[np.abs(z) < 1.0] == 0.5)
    assert np.all(g[np.abs(z) >= 1.0] == 0.0)

    pts = np.stack([np.linspace(0.0, 1.5, 16), np.zeros(16)], axis=-1)
    g2 = green_eval(2, 1.0, pts)
    assert g2.shape == (16,)
    assert np.all(g2 >= 0.0)
    assert np.all(g2[pts[:, 0] >= 1.0] == 0.0)


def test_green_nonnegative_and_cone_support():
    rng = np.random.default_rng(7)
    for _ in range(200):
        t = rng.uniform(0.05, 3.0)
        z = rng.uniform(-4.0, 4.0)
        g = green_eval(1, t, z)
        assert g >= 0.0
        if abs(z) >= t:
            assert g == 0.0
        zz = rng.uniform(-4.0, 4.0, size=2)
        g2 = green_eval(2, t, zz)
        assert g2 >= 0.0
        if np.hypot(*zz) >= t:
            assert g2 == 0.0


def test_green_mass_d1():
    # integral of G_t over R is t; midpoint rule is exact for the indicator
    for t in (0.3, 1.0, 2.5):
        edges = np.linspace(-t, t, 4001)
        centers = 0.5 * (edges[:-1] + edges[1:])
        mass = np.sum(green_eval(1, t, centers)) * (edges[1] - edges[0])
        assert mass == pytest.approx(t, rel=1e-12)


def test_green_mass_d2():
    # radial integral with r = t sin(theta) to tame the edge singularity
    for t in (0.5, 1.0, 2.0):
        theta = np.linspace(0.0, math.pi / 2.0 - 1e-6, 20001)
        r = t * np.sin(theta)
        vals = green_eval(2, t, np.stack([r, np.zeros_like(r)], axis=-1))
        integrand = vals * 2.0 * math.pi * r * t * np.cos(theta)
        mass = np.trapezoid(integrand, theta)
        assert mass == pytest.approx(t, rel=1e-5)


# ---------------------------------------------------------------------------
# Fourier transform


def test_green_fourier_values():
    assert green_fourier(1.0, 0.0) == pytest.approx(1.0)
    assert green_fourier(2.5, 0.0) == pytest.approx(2.5)
    xi = 3.0
    assert green_fourier(1.2, xi) == pytest.approx(math.sin(1.2 * xi) / xi)
    arr = green_fourier(1.0, np.array([0.0, 1.0, 10.0]))
    assert arr == pytest.approx([1.0, math.sin(1.0), math.sin(10.0) / 10.0])


def test_green_fourier_series_branch_continuity():
    t = 1.7
    lo, hi = 0.99e-4 / t, 1.01e-4 / t  # straddle the series cutoff |t xi| = 1e-4
    assert green_fourier(t, lo) == pytest.approx(green_fourier(t, hi), rel=1e-9)


def test_green_fourier_domain_errors():
    with pytest.raises(DomainError):
        green_fourier(0.0, 1.0)
    with pytest.raises(DomainError):
        green_fourier(-1.0, 1.0)
    with pytest.raises(DomainError):
        green_fourier(1.0, -0.5)


def test_green_fourier_square_bound():
    # sin(t u)^2 / u^2 <= 2 max(t^2, 1) / (1 + u^2), checked on a log grid
    for t in (0.2, 1.0, 3.7):
        u = np.logspace(-6, 4, 300)
        lhs = green_fourier(t, u) ** 2
        rhs = 2.0 * max(t * t, 1.0) / (1.0 + u * u)
        assert np.all(lhs <= rhs * (1.0 + 1e-12))


def test_green_fourier_matches_numeric_transform_d1():
    # trapezoid FT of the indicator kernel on [-t, t] against the closed form
    t = 1.3
    z = np.linspace(-t, t, 50001)
    g = green_eval(1, t, z)
    g[0] = g[-1] = 0.5  # boundary points carry zero trapezoid weight anyway
    for xi in np.logspace(-1, 1.5, 20):
        num = np.trapezoid(g * np.cos(xi * z), z)
        assert abs(num - green_fourier(t, xi)) < 1e-6


# ---------------------------------------------------------------------------
# L^p norm (d=2)


def test_green_lp_norm_frozen_value():
    assert green_lp_norm(2, 1.0, 1.5) == pytest.approx(0.860254013828, rel=1e-10)


def test_green_lp_norm_quadrature_oracle():
    t, p = 1.3, 1.2

    def radial(r):
        return (2.0 * math.pi * math.sqrt(t * t - r * r)) ** (-p) * 2.0 * math.pi * r

    val, _ = quad(radial, 0.0, t)
    assert green_lp_norm(2, t, p) == pytest.approx(val ** (1.0 / p), rel=1e-8)


def test_green_lp_norm_domain_errors():
    for bad in ((1, 1.0, 1.5), (2, 1.0, 2.0), (2, 1.0, 0.0), (2, 0.0, 1.5)):
        with pytest.raises(DomainError):
            green_lp_norm(*bad)


# ---------------------------------------------------------------------------
# chaos kernels


def test_chaos_kernel_order1_example():
    pt = ChaosKernelPoint(t=1.0, x=0.0, times=[0.5], points=[0.2])
    assert chaos_kernel_eval(pt) == pytest.approx(0.5)
    assert chaos_kernel_sym(pt) == pytest.approx(0.5)


def test_chaos_kernel_order2_example():
    pt = ChaosKernelPoint(t=1.0, x=0.0, times=[0.6, 0.3], points=[0.1, 0.2])
    # chain: G_{0.4}(-0.1) * G_{0.3}(-0.1) = 0.5 * 0.5
    assert chaos_kernel_eval(pt) == pytest.approx(0.25)
    # only the ordered arrangement survives, so sym = 0.25 / 2!
    assert chaos_kernel_sym(pt) == pytest.approx(0.125)


def test_chaos_kernel_out_of_order_is_zero():
    pt = ChaosKernelPoint(t=1.0, x=0.0, times=[0.3, 0.6], points=[0.1, 0.2])
    assert chaos_kernel_eval(pt) == 0.0
    assert chaos_kernel_sym(pt) == pytest.approx(0.125)  # sym sees the sorted chain


def test_chaos_kernel_cone_violations():
    # spatial step outside the light cone
    pt = ChaosKernelPoint(t=1.0, x=0.0, times=[0.5], points=[0.7])
    assert chaos_kernel_eval(pt) == 0.0
    # inner time at/below zero
    pt = ChaosKernelPoint(t=1.0, x=0.0, times=[0.5, -0.1], points=[0.2, 0.2])
    assert chaos_kernel_eval(pt) == 0.0
    # tied times
    pt = ChaosKernelPoint(t=1.0, x=0.0, times=[0.5, 0.5], points=[0.2, 0.2])
    assert chaos_kernel_eval(pt) == 0.0
    assert chaos_kernel_sym(pt) == 0.0


def test_chaos_kernel_d2():
    pt = ChaosKernelPoint(
        t=1.0,
        x=np.array([0.0, 0.0]),
        times=[0.6],
        points=np.array([[0.1, 0.1]]),
    )
    expect = 1.0 / (2.0 * math.pi * math.sqrt(0.4**2 - 0.02))
    assert chaos_kernel_eval(pt) == pytest.approx(expect)


def test_chaos_kernel_point_validation():
    with pytest.raises(DomainError):
        ChaosKernelPoint(t=0.0, x=0.0, times=[0.5], points=[0.2])
    with pytest.raises(DomainError):
        ChaosKernelPoint(t=1.0, x=0.0, times=[], points=[])
    with pytest.raises(DomainError):
        ChaosKernelPoint(t=1.0, x=0.0, times=[0.5, 0.4], points=[0.2])
    with pytest.raises(DomainError):
        ChaosKernelPoint(t=1.0, x=0.0, times=[math.nan], points=[0.2])


def test_wave_kernel_facade():
    k = WaveKernel(dim=1)
    assert k.green_eval(1.0, 0.2) == 0.5
    assert k.green_fourier(1.0, 0.0) == pytest.approx(1.0)
    pt = ChaosKernelPoint(t=1.0, x=0.0, times=[0.5], points=[0.2])
    assert k.chaos_kernel_eval(pt) == pytest.approx(0.5)
    with pytest.raises(DomainError):
        WaveKernel(dim=3)
    with pytest.raises(DomainError):
        k.green_lp_norm(1.0, 1.5)  # L^p closed form is d=2 only
    k2 = WaveKernel(dim=2)
    with pytest.raises(DomainError):
        k2.chaos_kernel_eval(pt)  # dim mismatch


# ---------------------------------------------------------------------------
# symmetrization properties


@st.composite
def _random_point(draw, n_min=1, n_max=5):
    n = draw(st.integers(n_min, n_max))
    t = draw(st.floats(0.5, 2.0))
    rnd = draw(st.randoms(use_true_random=False))
    times = [rnd.uniform(0.01, t) for _ in range(n)]
    points = [rnd.uniform(-1.0, 1.0) for _ in range(n)]
    return ChaosKernelPoint(t=t, x=0.0, times=times, points=points)


@given(_random_point())
@settings(max_examples=60, deadline=None)
def test_sym_equals_sorted_chain_over_factorial(pt):
    # enumeration (n <= 8 path) must agree with the sorted-chain shortcut
    order = np.argsort(-pt.times)
    sorted_pt = ChaosKernelPoint(
        t=pt.t, x=pt.x, times=pt.times[order], points=pt.points[order]
    )
    direct = chaos_kernel_eval(sorted_pt) / math.factorial(pt.n)
    assert chaos_kernel_sym(pt) == pytest.approx(direct, abs=1e-15)


@given(_random_point(), st.randoms(use_true_random=False))
@settings(max_examples=60, deadline=None)
def test_sym_is_permutation_invariant(pt, rnd):
    idx = list(range(pt.n))
    rnd.shuffle(idx)
    idx = np.array(idx)
    shuffled = ChaosKernelPoint(t=pt.t, x=pt.x, times=pt.times[idx], points=pt.points[idx])
    assert chaos_kernel_sym(shuffled) == pytest.approx(chaos_kernel_sym(pt), abs=1e-15)


def test_sym_equals_eval_over_factorial_on_ordered_cone():
    # strictly inside the cone and strictly ordered: one permutation survives
    pt = ChaosKernelPoint(
        t=2.0, x=0.0, times=[1.5, 1.0, 0.4], points=[0.3, 0.2, 0.1]
    )
    v = chaos_kernel_eval(pt)
    assert v > 0.0
    assert chaos_kernel_sym(pt) == pytest.approx(v / math.factorial(3))


def test_sym_large_n_shortcut():
    # n = 9 exercises the sorted-chain path; compare against the direct chain
    n = 9
    times = np.linspace(0.9, 0.1, n)
    points = np.zeros(n)
    pt = ChaosKernelPoint(t=1.0, x=0.0, times=times, points=points)
    assert chaos_kernel_sym(pt) == pytest.approx(0.5**n / math.factorial(n))
