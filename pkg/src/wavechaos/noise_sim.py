"""Discretized colored noise and Wick multiple integrals on a space-time grid.

The noise is represented by one Gaussian variable per space-time cell,
xi_k = W(1_cell_k), whose covariance is the exact double cell integral of
gamma0(t - t') gamma(x - x').  Both kernel axes admit closed second
antiderivatives, so every entry is assembled from four corner evaluations
rather than quadrature, and the separable kernel keeps the matrix in
Kronecker-factor form (time factor x space factor) throughout: memory and
factorization cost stay at the one-axis scale, and the Cholesky factor of
the full matrix is the Kronecker product of the per-axis factors.

Sampling uses one counter-based Philox stream per (seed, sample index), so
any subset of indices can be regenerated bit-exactly in any order by any
number of workers.  Wick monomials implement the discrete multiple
integrals for p <= 3; simulation of window averages keeps p <= 2, where the
quadratic form per sample is a dense matrix-vector product.
"""

from dataclasses import dataclass
import math
from typing import List, Optional

import numpy as np

from .errors import ContractError, DomainError, UnsupportedRegimeError
from .noise_model import (
    Constant,
    RieszTime,
    Scenario,
    gamma_antider2,
    scenario_hash,
)

_MAX_CELLS = 20_000
_JITTER_LADDER = (0.0, 1e-12, 1e-10, 1e-8)
_GL3 = np.polynomial.legendre.leggauss(3)


def _t_antider2(temporal, u):
    """Even second antiderivative of the temporal correlation."""
    arr = np.asarray(u, dtype=float)
    if isinstance(temporal, Constant):
        return 0.5 * temporal.c * arr * arr
    a = temporal.alpha0
    return np.abs(arr) ** (2.0 - a) / ((1.0 - a) * (2.0 - a))


def _cell_cov(B, edges: np.ndarray) -> np.ndarray:
    """Exact cell-pair masses of a kernel from its second antiderivative."""
    T = B(edges[:, None] - edges[None, :])
    M = T[1:, :-1] - T[:-1, :-1] - T[1:, 1:] + T[:-1, 1:]
    return 0.5 * (M + M.T)


def _chol_jitter(A: np.ndarray, label: str):
    """Cholesky with an escalating diagonal jitter; the matrices here are
    Gram matrices of cell indicators, so anything past roundoff-level jitter
    signals a kernel bug rather than legitimate indefiniteness."""
    top = float(np.max(np.diag(A)))
    for eps_rel in _JITTER_LADDER:
        try:
            L = np.linalg.cholesky(A + (eps_rel * top) * np.eye(A.shape[0]))
            return L, eps_rel * top
        except np.linalg.LinAlgError:
            continue
    raise ContractError(
        f"{label} covariance factor is not positive semidefinite within the "
        f"jitter ladder (up to {_JITTER_LADDER[-1]:.0e} of max diagonal); "
        "this indicates a discretization bug"
    )


@dataclass(eq=False)
class NoiseGrid:
    """Uniform space-time cell grid with factored cell covariance.

    Cells are the tensor product of n_t time cells on [0, t_horizon] and
    n_x space cells on [-L, L]; flat index k = a * n_x + i.
    """

    scenario: Scenario
    R: float
    n_t: int
    n_x: int
    L: float
    t_edges: np.ndarray
    x_edges: np.ndarray
    sigma_t: np.ndarray
    sigma_x: np.ndarray
    chol_t: np.ndarray
    chol_x: np.ndarray
    jitter_t: float
    jitter_x: float

    @property
    def n_cells(self) -> int:
        return self.n_t * self.n_x

    @property
    def dt(self) -> float:
        return float(self.t_edges[1] - self.t_edges[0])

    @property
    def dx(self) -> float:
        return float(self.x_edges[1] - self.x_edges[0])

    @property
    def t_mid(self) -> np.ndarray:
        return 0.5 * (self.t_edges[:-1] + self.t_edges[1:])

    @property
    def x_mid(self) -> np.ndarray:
        return 0.5 * (self.x_edges[:-1] + self.x_edges[1:])

    def sigma(self) -> np.ndarray:
        """Assembled full covariance (diagnostic; O(n_cells^2) memory)."""
        return np.kron(self.sigma_t, self.sigma_x)

    def chol(self) -> np.ndarray:
        """Assembled full factor M with M M^T = Sigma + jitter terms."""
        return np.kron(self.chol_t, self.chol_x)


@dataclass(eq=False)
class NoiseSample:
    xi: np.ndarray
    seed: int
    index: int


def build_grid(sc: Scenario, R: float, n_t: int, n_x: int) -> NoiseGrid:
    """Discretize the noise over the light cone of the radius-R window."""
    if sc.dim != 1:
        raise UnsupportedRegimeError("noise simulation supports d=1 scenarios only")
    if not (isinstance(n_t, (int, np.integer)) and isinstance(n_x, (int, np.integer))):
        raise DomainError("n_t and n_x must be integers")
    if n_t < 1 or n_x < 2:
        raise DomainError(f"need n_t >= 1 and n_x >= 2, got ({n_t}, {n_x})")
    if n_t * n_x > _MAX_CELLS:
        raise DomainError(
            f"cell count {n_t * n_x} exceeds the desk-scale guard {_MAX_CELLS}"
        )
    if not (R > 0.0 and math.isfinite(R)):
        raise DomainError(f"window radius must be positive, got {R}")
    L = R + sc.t_horizon
    t_edges = np.linspace(0.0, sc.t_horizon, int(n_t) + 1)
    x_edges = np.linspace(-L, L, int(n_x) + 1)
    sigma_t = _cell_cov(lambda u: _t_antider2(sc.temporal, u), t_edges)
    sigma_x = _cell_cov(lambda u: gamma_antider2(sc.spatial.variant, u), x_edges)
    chol_t, jit_t = _chol_jitter(sigma_t, "temporal")
    chol_x, jit_x = _chol_jitter(sigma_x, "spatial")
    return NoiseGrid(sc, float(R), int(n_t), int(n_x), L, t_edges, x_edges,
                     sigma_t, sigma_x, chol_t, chol_x, jit_t, jit_x)


def _draw_z(seed: int, index: int, n: int) -> np.ndarray:
    key = np.array([seed, index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key)).standard_normal(n)


def sample_noise(g: NoiseGrid, seed: int, count: int) -> List[NoiseSample]:
    """Draw `count` noise vectors; sample `index` is reproducible on its own."""
    if count < 0:
        raise DomainError(f"count must be nonnegative, got {count}")
    out = []
    for index in range(count):
        Z = _draw_z(int(seed), index, g.n_cells).reshape(g.n_t, g.n_x)
        xi = (g.chol_t @ Z @ g.chol_x.T).ravel()
        out.append(NoiseSample(xi, int(seed), index))
    return out


def _sigma_factors_eff(g: NoiseGrid):
    st = g.sigma_t + g.jitter_t * np.eye(g.n_t)
    sx = g.sigma_x + g.jitter_x * np.eye(g.n_x)
    return st, sx


def _check_symmetric(F: np.ndarray, p: int):
    scale = float(np.max(np.abs(F))) or 1.0
    if p == 2:
        worst = float(np.max(np.abs(F - F.T)))
    else:
        worst = max(
            float(np.max(np.abs(F - np.transpose(F, perm))))
            for perm in ((0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0))
        )
    if worst > 1e-8 * scale:
        raise ContractError(
            f"order-{p} kernel is not permutation symmetric "
            f"(max asymmetry {worst:.3e} vs scale {scale:.3e})"
        )


def _center2(g: NoiseGrid, F: np.ndarray) -> float:
    st, sx = _sigma_factors_eff(g)
    F4 = F.reshape(g.n_t, g.n_x, g.n_t, g.n_x)
    return float(np.einsum("aibj,ab,ij->", F4, st, sx))


def wick_integral(g: NoiseGrid, kernel_values: np.ndarray, xi: NoiseSample, p: int) -> float:
    """Discrete multiple integral sum_k f(k_1..k_p) :xi_k1 ... xi_kp:.

    The Wick monomials subtract the sampling covariance, so the result is
    exactly centered and for symmetric f reproduces the isometry
    E[I_p(f)^2] = p! <f, f> under the cell covariance.
    """
    if p not in (1, 2, 3):
        raise DomainError(f"wick order must be 1, 2 or 3, got {p}")
    N = g.n_cells
    F = np.asarray(kernel_values, dtype=float)
    if F.shape != (N,) * p:
        raise DomainError(f"kernel must have shape {(N,) * p}, got {F.shape}")
    v = np.asarray(xi.xi, dtype=float)
    if v.shape != (N,):
        raise DomainError("sample does not match the grid size")
    if p == 1:
        return float(F @ v)
    _check_symmetric(F, p)
    if p == 2:
        return float(v @ F @ v) - _center2(g, F)
    st, sx = _sigma_factors_eff(g)
    cube = float(np.einsum("klm,k,l,m->", F, v, v, v))
    c = np.einsum("kaibj,ab,ij->k", F.reshape(N, g.n_t, g.n_x, g.n_t, g.n_x), st, sx)
    return cube - 3.0 * float(c @ v)


# ---------------------------------------------------------------------------
# window-average chaos kernels


def _ball_smoothed(t: float, R: float, w, y):
    """Wave kernel integrated over the window: int_{B_R} G_w(x - y) dx,
    a trapezoid of height min(w, R) in y; zero for w <= 0."""
    w = np.maximum(w, 0.0)
    return 0.5 * np.maximum(0.0, np.minimum(R, y + w) - np.maximum(-R, y - w))


def _boxcar_antider2(u, w):
    au = np.abs(u)
    return np.where(au <= w, 0.5 * u * u, w * au - 0.5 * w * w)


def _avg_points(edges: np.ndarray):
    nodes, wts = _GL3
    h = edges[1] - edges[0]
    pts = edges[:-1, None] + 0.5 * h * (nodes[None, :] + 1.0)
    return pts, 0.5 * wts


def _f1_kernel(g: NoiseGrid, t: float, R: float) -> np.ndarray:
    """Cell averages of the first-chaos window kernel, shape (n_t, n_x)."""
    r, wr = _avg_points(g.t_edges)
    y, wy = _avg_points(g.x_edges)
    A = _ball_smoothed(t, R, (t - r)[:, :, None, None], y[None, None, :, :])
    return np.einsum("g,h,agih->ai", wr, wy, A)


def _link_avg(g: NoiseGrid, t: float) -> np.ndarray:
    """Cell-pair averages of the one-step wave link G_{r-r'}(y - y'),
    exact in space via the boxcar antiderivative, GL-3 averaged in the two
    times; zero unless r > r'.  Shape (n_t, n_t, n_x, n_x)."""
    r, wr = _avg_points(g.t_edges)
    inv = 1.0 / (g.dx * g.dx)
    D = g.x_edges[:, None] - g.x_edges[None, :]
    nt = g.n_t
    out = np.zeros((nt, nt, g.n_x, g.n_x))
    for a in range(nt):
        if r[a, 0] >= t:
            continue
        for b in range(a, -1, -1):
            acc = None
            for ga in range(r.shape[1]):
                for gb in range(r.shape[1]):
                    w = r[a, ga] - r[b, gb]
                    if w <= 0.0:
                        continue
                    T = _boxcar_antider2(D, w)
                    M = T[1:, :-1] - T[:-1, :-1] - T[1:, 1:] + T[:-1, 1:]
                    term = (wr[ga] * wr[gb] * 0.5 * inv) * M
                    acc = term if acc is None else acc + term
            if acc is not None:
                out[a, b] = acc
    return out


def _f2_kernel(g: NoiseGrid, t: float, R: float) -> np.ndarray:
    """Symmetrized second-chaos window kernel over cell pairs, (N, N)."""
    A = _f1_kernel(g, t, R)
    link = _link_avg(g, t)
    F = np.einsum("ai,abij->aibj", A, link).reshape(g.n_cells, g.n_cells)
    return 0.5 * (F + F.T)


def simulate_FR(
    sc: Scenario,
    t: float,
    R: float,
    g: NoiseGrid,
    p_max: int,
    seed: int,
    count: int,
    chunk: int = 512,
) -> np.ndarray:
    """Truncated-chaos samples of the centered window average F_R(t).

    Each sample is the sum over p <= p_max of the Wick integral of the
    cell-averaged chaos kernel; p_max = 1 gives exactly Gaussian output.
    """
    if scenario_hash(sc) != scenario_hash(g.scenario):
        raise DomainError("grid was built for a different scenario")
    if p_max not in (1, 2):
        raise DomainError(f"simulation supports p_max in {{1, 2}}, got {p_max}")
    if not (0.0 < t <= sc.t_horizon * (1.0 + 1e-12)):
        raise DomainError(f"need 0 < t <= horizon {sc.t_horizon}, got {t}")
    if not (R > 0.0 and math.isfinite(R)):
        raise DomainError(f"window radius must be positive, got {R}")
    if g.L + 1e-12 < R + t:
        raise DomainError(
            f"grid box half-width {g.L} does not cover the light cone {R + t}"
        )
    if count < 0:
        raise DomainError(f"count must be nonnegative, got {count}")
    f1 = _f1_kernel(g, t, R).ravel()
    F2 = _f2_kernel(g, t, R) if p_max == 2 else None
    center = _center2(g, F2) if F2 is not None else 0.0
    out = np.empty(count)
    for lo in range(0, count, chunk):
        hi = min(lo + chunk, count)
        Z = np.stack([
            _draw_z(int(seed), idx, g.n_cells).reshape(g.n_t, g.n_x)
            for idx in range(lo, hi)
        ])
        Xi = np.einsum("tu,mux,yx->mty", g.chol_t, Z, g.chol_x).reshape(hi - lo, -1)
        vals = Xi @ f1
        if F2 is not None:
            vals = vals + np.einsum("mn,mn->m", Xi @ F2, Xi) - center
        out[lo:hi] = vals
    return out
