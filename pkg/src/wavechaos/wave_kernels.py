"""Wave propagator kernels and the iterated (chaos) kernels built from them.

The fundamental solution of the wave equation with unit speed is

    d = 1:  G_t(z) = 1/2            on  |z| < t,
    d = 2:  G_t(z) = 1 / (2 pi sqrt(t^2 - |z|^2))   on  |z| < t,

and zero elsewhere (in particular for t <= 0).  The support is the *open*
backward light cone; evaluation on the boundary |z| = t returns 0.

Iterated kernels are products of propagators along a strictly ordered chain
of space-time points,

    f(t, x; t_1, y_1, ..., t_n, y_n)
        = G_{t - t_1}(x - y_1) G_{t_1 - t_2}(y_1 - y_2) ... G_{t_{n-1} - t_n}(y_{n-1} - y_n),

which vanishes unless t > t_1 > ... > t_n > 0.  The symmetrized version
averages over permutations of the n (time, point) pairs.  Because the chain
vanishes off the simplex, at most one permutation (times sorted decreasing)
contributes, which gives a fast exact path for large n.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

# Above this order, symmetrization uses the sorted-chain identity instead of
# enumerating all n! permutations.  Both paths are exact (see chaos_kernel_sym).
N_MAX_FACTORIAL = 8

_TWO_PI = 2.0 * math.pi


def _radius(dim: int, z) -> np.ndarray:
    """Euclidean norm along the last axis for dim=2, |z| for dim=1."""
    arr = np.asarray(z, dtype=float)
    if dim == 1:
        return np.abs(arr)
    if arr.shape == () or arr.shape[-1] != 2:
        raise DomainError(f"dim=2 points need a trailing axis of length 2, got shape {arr.shape}")
    return np.sqrt(np.sum(arr * arr, axis=-1))


def green_eval(dim: int, t: float, z):
    """Evaluate the wave propagator G_t(z) pointwise.

    Total function: returns 0 for t <= 0 and for |z| >= t (open cone).
    `z` may be a scalar / array of positions (dim=1) or an array with
    trailing axis of length 2 (dim=2).
    """
    if dim not in (1, 2):
        raise DomainError(f"spatial dimension must be 1 or 2, got {dim}")
    r = _radius(dim, z)
    scalar_in = r.shape == ()
    r = np.atleast_1d(r)
    out = np.zeros_like(r)
    if t > 0.0:
        inside = r < t
        if dim == 1:
            out[inside] = 0.5
        else:
            with np.errstate(invalid="ignore"):
                out[inside] = 1.0 / (_TWO_PI * np.sqrt(t * t - r[inside] ** 2))
    return float(out[0]) if scalar_in else out


def green_fourier(t: float, xi_norm):
    """Spatial Fourier transform of G_t, as a function of the frequency radius.

    F[G_t](xi) = sin(t |xi|) / |xi|, with the limiting value t at |xi| = 0.
    `xi_norm` is a scalar or array of nonnegative radii.  Requires t > 0.
    """
    if not (t > 0.0) or not math.isfinite(t):
        raise DomainError(f"green_fourier needs t > 0, got t={t}")
    u = np.asarray(xi_norm, dtype=float)
    if np.any(u < 0.0):
        raise DomainError("frequency radius must be nonnegative")
    scalar_in = u.shape == ()
    u = np.atleast_1d(u)
    tu = t * u
    # Series for small arguments avoids 0/0 and loss of significance.
    small = np.abs(tu) < 1e-4
    out = np.empty_like(u)
    out[small] = t * (1.0 - tu[small] ** 2 / 6.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        out[~small] = np.sin(tu[~small]) / u[~small]
    return float(out[0]) if scalar_in else out


def green_lp_norm(dim: int, t: float, p: float) -> float:
    """L^p norm of G_t for d=2, where the kernel is unbounded but p-integrable.

    Closed form: ||G_t||_p = ((2 pi)^(1-p) / (2-p))^(1/p) * t^(2/p - 1),
    valid for p in (0, 2).  The d=1 propagator is bounded so this helper
    deliberately rejects dim != 2.
    """
    if dim != 2:
        raise DomainError("green_lp_norm is only defined for dim=2")
    if not (0.0 < p < 2.0):
        raise DomainError(f"p must lie in (0, 2), got {p}")
    if not (t > 0.0):
        raise DomainError(f"t must be positive, got {t}")
    return ((_TWO_PI) ** (1.0 - p) / (2.0 - p)) ** (1.0 / p) * t ** (2.0 / p - 1.0)


@dataclass(frozen=True)
class ChaosKernelPoint:
    """A space-time apex (t, x) plus n inner (time, point) pairs.

    `times` has shape (n,), `points` has shape (n,) for dim=1 or (n, 2) for
    dim=2.  The pairs need not be ordered; evaluation returns 0 off the
    ordered cone t > times[0] > ... > times[n-1] > 0.
    """

    t: float
    x: np.ndarray
    times: np.ndarray
    points: np.ndarray

    def __post_init__(self):
        t = float(self.t)
        if not (t > 0.0) or not math.isfinite(t):
            raise DomainError(f"apex time must be positive and finite, got {self.t}")
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        if x.ndim != 1 or x.shape[0] not in (1, 2):
            raise DomainError(f"apex point must live in R^1 or R^2, got shape {x.shape}")
        times = np.atleast_1d(np.asarray(self.times, dtype=float))
        pts = np.asarray(self.points, dtype=float)
        if x.shape[0] == 1:
            pts = pts.reshape(-1, 1)
        else:
            pts = pts.reshape(-1, 2)
        if times.ndim != 1 or times.shape[0] < 1:
            raise DomainError("need at least one inner (time, point) pair")
        if pts.shape[0] != times.shape[0]:
            raise DomainError(
                f"times/points length mismatch: {times.shape[0]} vs {pts.shape[0]}"
            )
        if not (np.all(np.isfinite(times)) and np.all(np.isfinite(pts)) and np.all(np.isfinite(x))):
            raise DomainError("chaos kernel point has non-finite entries")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "points", pts)

    @property
    def dim(self) -> int:
        return int(self.x.shape[0])

    @property
    def n(self) -> int:
        return int(self.times.shape[0])


def _chain_value(dim: int, t: float, x: np.ndarray, times: np.ndarray, points: np.ndarray) -> float:
    """Product of propagators along one ordered chain; 0 off the cone."""
    val = 1.0
    prev_t, prev_x = t, x
    for i in range(times.shape[0]):
        ti = times[i]
        gap = prev_t - ti
        if gap <= 0.0 or ti <= 0.0:
            return 0.0
        g = green_eval(dim, gap, (prev_x - points[i]) if dim == 2 else float(prev_x[0] - points[i, 0]))
        if g == 0.0:
            return 0.0
        val *= g
        prev_t, prev_x = ti, points[i]
    return val


def chaos_kernel_eval(pt: ChaosKernelPoint) -> float:
    """Evaluate the order-n iterated kernel at the given pairs (unsymmetrized)."""
    return _chain_value(pt.dim, pt.t, pt.x, pt.times, pt.points)


def chaos_kernel_sym(pt: ChaosKernelPoint) -> float:
    """Symmetrized iterated kernel: average of chain values over pair permutations.

    For n <= N_MAX_FACTORIAL the permutations are enumerated.  For larger n
    we use that only the time-decreasing arrangement can be nonzero (strict
    ordering kills every other permutation, including any with tied times),
    so the symmetrization equals chain(sorted) / n! exactly.
    """
    n = pt.n
    if n <= N_MAX_FACTORIAL:
        total = 0.0
        for perm in itertools.permutations(range(n)):
            idx = np.fromiter(perm, dtype=int)
            total += _chain_value(pt.dim, pt.t, pt.x, pt.times[idx], pt.points[idx])
        return total / math.factorial(n)
    order = np.argsort(-pt.times, kind="stable")
    val = _chain_value(pt.dim, pt.t, pt.x, pt.times[order], pt.points[order])
    return val / math.factorial(n)


@dataclass(frozen=True)
class WaveKernel:
    """Dimension-tagged facade over the propagator helpers."""

    dim: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise DomainError(f"spatial dimension must be 1 or 2, got {self.dim}")

    def green_eval(self, t: float, z):
        return green_eval(self.dim, t, z)

    def green_fourier(self, t: float, xi_norm):
        return green_fourier(t, xi_norm)

    def green_lp_norm(self, t: float, p: float) -> float:
        return green_lp_norm(self.dim, t, p)

    def chaos_kernel_eval(self, pt: ChaosKernelPoint) -> float:
        if pt.dim != self.dim:
            raise DomainError(f"point has dim {pt.dim}, kernel has dim {self.dim}")
        return chaos_kernel_eval(pt)

    def chaos_kernel_sym(self, pt: ChaosKernelPoint) -> float:
        if pt.dim != self.dim:
            raise DomainError(f"point has dim {pt.dim}, kernel has dim {self.dim}")
        return chaos_kernel_sym(pt)
