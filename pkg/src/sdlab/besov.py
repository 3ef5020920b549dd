"""Littlewood-Paley blocks, Besov norms and paraproducts on the torus.

Profile
-------
``psi`` is a C-infinity step equal to 1 on ``r <= 1`` and 0 on ``r >= 4/3``::

    psi(r) = 1 - S((r - 1) / (1/3)),   S(t) = e(t) / (e(t) + e(1 - t)),   e(t) = exp(-1/t)

Block ``-1`` has symbol ``chi(|k|) = psi(|k|)``; block ``j >= 0`` has
``phi(2^-j |k|)`` with ``phi(r) = psi(r/2) - psi(r)``, supported in
``[1, 8/3]``.  The sum over blocks telescopes to ``psi(2^{-J-1}|k|)``,
which equals 1 on every resolvable wavenumber once ``J = j_max``.

Two blocks whose indices differ by at least ``ANNULUS_K = 2`` have
disjoint supports, which is the offset used in the paraproduct.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .spectral import (
    SpectralField,
    TorusGrid,
    _check_same_grid,
    forward_transform,
    lebesgue_norm,
    pointwise_norm_squared,
    resample,
)

ANNULUS_K = 2


def _smooth_step(t):
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


def psi(r):
    """Low-pass profile: 1 on ``[0, 1]``, 0 on ``[4/3, inf)``, smooth in between."""
    return 1.0 - _smooth_step((np.asarray(r, dtype=float) - 1.0) * 3.0)


def chi(r):
    return psi(r)


def phi(r):
    r = np.asarray(r, dtype=float)
    return psi(r / 2) - psi(r)


@dataclass(frozen=True)
class BesovParams:
    s: float
    p: float
    q: float

    def __post_init__(self):
        if self.p < 1 or self.q < 1:
            raise ValueError("Besov integrability p and summability q must lie in [1, inf]")


@dataclass(frozen=True)
class DyadicPartition:
    """Littlewood-Paley block system for one grid."""

    grid: TorusGrid

    @property
    def j_max(self) -> int:
        return math.ceil(math.log2(self.grid.N / 2)) + 1

    @property
    def indices(self) -> range:
        return range(-1, self.j_max + 1)

    def weight(self, j: int) -> np.ndarray:
        """Block symbol on the grid's wavenumbers (zero for ``j > j_max``)."""
        return _block_weights(self.grid)[j + 1] if -1 <= j <= self.j_max else np.zeros(self.grid.shape)

    def weights(self) -> np.ndarray:
        """All block symbols, shape ``(j_max + 2,) + grid.shape``; row ``j + 1`` is block ``j``."""
        return _block_weights(self.grid)

    def block_of(self, k) -> list[int]:
        """Blocks whose symbol is nonzero at wavenumber ``k``."""
        r = float(np.linalg.norm(k))
        out = [] if chi(r) == 0 else [-1]
        out += [j for j in range(self.j_max + 1) if phi(r / 2**j) != 0]
        return out


@lru_cache(maxsize=16)
def _block_weights(grid: TorusGrid) -> np.ndarray:
    r = np.sqrt(grid.k_squared)
    jm = DyadicPartition(grid).j_max
    w = np.stack([chi(r)] + [phi(r / 2.0**j) for j in range(jm + 1)])
    w.flags.writeable = False
    return w


def lp_block(u: SpectralField, j: int) -> SpectralField:
    """Littlewood-Paley block ``Delta_j u`` (``j = -1`` is the low-pass block)."""
    if j < -1:
        raise ValueError("block index must be >= -1")
    return u.with_coeffs(u.coeffs * DyadicPartition(u.grid).weight(j))


def lp_blocks(u: SpectralField) -> list[SpectralField]:
    W = DyadicPartition(u.grid).weights()
    return [u.with_coeffs(u.coeffs * w) for w in W]


def tail_projection(u: SpectralField, j: int) -> SpectralField:
    """``Pi_{>=j} u = sum_{i >= j} Delta_i u``."""
    W = DyadicPartition(u.grid).weights()
    return u.with_coeffs(u.coeffs * W[max(j, -1) + 1:].sum(axis=0))


def block_norms(u: SpectralField, p: float) -> np.ndarray:
    """``||Delta_j u||_{L^p}`` for ``j = -1 .. j_max``."""
    return np.array([lebesgue_norm(b, p) for b in lp_blocks(u)])


def _sum_q(terms: np.ndarray, q: float) -> float:
    if np.isinf(q):
        return float(np.max(terms)) if terms.size else 0.0
    return float(np.sum(terms**q) ** (1.0 / q))


def besov_norm(u: SpectralField, params: BesovParams) -> float:
    """``(sum_j 2^{s j q} ||Delta_j u||_{L^p}^q)^{1/q}``, supremum over ``j`` for ``q = inf``."""
    js = np.arange(-1, DyadicPartition(u.grid).j_max + 1)
    return _sum_q(2.0 ** (params.s * js) * block_norms(u, params.p), params.q)


def b012_norm(u: SpectralField, p: float) -> float:
    """Square-summed tail norm ``(sum_j ||Pi_{>=j} u||_{B^0_{p,1}}^2)^{1/2}``.

    Each tail is re-split into blocks, so overlap between neighbouring
    blocks is accounted for exactly rather than approximated.
    """
    return float(np.sqrt(np.sum(tail_b0p1_norms(u, p) ** 2)))


def tail_b0p1_norms(u: SpectralField, p: float) -> np.ndarray:
    """``||Pi_{>=j} u||_{B^0_{p,1}}`` for ``j = -1 .. j_max``."""
    W = DyadicPartition(u.grid).weights()
    tails = np.cumsum(W[::-1], axis=0)[::-1]
    out = np.zeros(len(W))
    for j in range(len(W)):
        total = 0.0
        # blocks below j - 1 do not meet the support of the tail
        for i in range(max(j - 1, 0), len(W)):
            total += lebesgue_norm(u.with_coeffs(u.coeffs * W[i] * tails[j]), p)
        out[j] = total
    return out


def paraproduct_split(f: SpectralField, g: SpectralField, *, padded: bool = True):
    """Bony decomposition ``f g = (f < g) + (f o g) + (f > g)``.

    ``f < g = sum_j S_{j-1} f Delta_j g`` with ``S_{j-1} = sum_{i <= j-2} Delta_i``;
    the resonant part collects block pairs with ``|i - i'| <= 1``.  Products
    are formed on the 2x zero-padded grid, so with ``padded=True`` the three
    parts sum to the exact product of the two trigonometric polynomials.
    """
    _check_same_grid(f, g)
    if f.rank or g.rank:
        raise ValueError("paraproducts are defined for scalar fields")
    N = f.grid.N
    fb = np.stack([resample(b, 2 * N).samples for b in lp_blocks(f)])
    gb = np.stack([resample(b, 2 * N).samples for b in lp_blocks(g)])
    n = len(fb)
    low, res, high = (np.zeros(fb.shape[1:], dtype=fb.dtype) for _ in range(3))
    for i in range(n):
        for ip in range(n):
            term = fb[i] * gb[ip]
            if i <= ip - ANNULUS_K:
                low = low + term
            elif ip <= i - ANNULUS_K:
                high = high + term
            else:
                res = res + term
    fine = TorusGrid(f.grid.dim, 2 * N)
    real = f.real and g.real
    parts = tuple(forward_transform(v, fine, real=real) for v in (low, res, high))
    if padded:
        return parts
    return tuple(resample(x, N) for x in parts)


def square_norm_ratio(b: SpectralField, p: float) -> float:
    """``|| |b|^2 ||_{B^0_{p,1}} / ||b||_{B^0_{2p,1,2}}^2`` with ``|b|^2`` formed dealiased."""
    if b.rank != 1:
        raise ValueError("square_norm_ratio expects a vector field")
    denom = b012_norm(b, 2 * p) ** 2
    if denom == 0:
        return 0.0
    sq = pointwise_norm_squared(b, padded=True)
    return besov_norm(sq, BesovParams(0.0, p, 1.0)) / denom


def mixed_time_norm(values, times, q: float) -> float:
    """``L^q_T`` norm of sampled per-slice norms by trapezoid quadrature."""
    values = np.asarray(values, dtype=float)
    times = np.asarray(times, dtype=float)
    if values.shape != times.shape:
        raise ValueError("one norm value per time slice is required")
    if np.isinf(q):
        return float(np.max(values))
    if values.size == 1:
        return float(values[0])
    return float(np.trapezoid(values**q, times) ** (1.0 / q))


def time_besov_norm(slices, times, q: float, params: BesovParams | None = None,
                    p: float | None = None) -> float:
    """``L^q_T B^s_{p,r}`` (``params``) or ``L^q_T B^0_{p,1,2}`` (``p``) over time slices."""
    if (params is None) == (p is None):
        raise ValueError("give exactly one of params (Besov) or p (B^0_{p,1,2})")
    vals = [besov_norm(s, params) if params is not None else b012_norm(s, p) for s in slices]
    return mixed_time_norm(vals, times, q)
