"""Truncated Fourier fields on the unit torus.

A :class:`SpectralField` stores the coefficients

    u_hat(k) = N^{-d} sum_j u(x_j) exp(-2 pi i k . x_j),     x_j = j / N,

for every resolvable wavenumber ``-N/2 < k_i <= N/2``, laid out in FFT
order along the trailing ``dim`` axes.  Leading axes carry the tensor
components (none for scalars, ``(d,)`` for vectors, ``(d, d)`` for
matrices).  The Nyquist plane ``|k_i| = N/2`` is kept by the transforms
but every odd symbol (derivatives) annihilates it, which is the usual way
to keep real fields real under differentiation.

All operations return new fields; the coefficient arrays are read-only.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property, lru_cache
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

RANKS = {0: "scalar", 1: "vector", 2: "matrix"}
DEFAULT_DIRECT_SUM_BUDGET = 50_000_000
SNAPSHOT_MAGIC = b"SDLF"
SNAPSHOT_VERSION = 1


class GridMismatchError(ValueError):
    """Raised when fields or sample arrays live on incompatible grids."""


class BudgetExceededError(RuntimeError):
    """Raised when an exact evaluation would exceed its cost budget."""


@dataclass(frozen=True)
class TorusGrid:
    """Collocation grid with ``N`` points per axis on the unit torus."""

    dim: int
    N: int

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if self.N < 4 or self.N % 2:
            raise ValueError(f"N must be an even integer >= 4, got {self.N}")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.dim

    @property
    def size(self) -> int:
        return self.N**self.dim

    @property
    def cell_volume(self) -> float:
        return float(self.N) ** -self.dim

    @cached_property
    def k(self) -> np.ndarray:
        """Integer wavenumbers, shape ``(dim, N, ..., N)``, values in (-N/2, N/2]."""
        return _wavenumbers(self.dim, self.N)

    @cached_property
    def k_squared(self) -> np.ndarray:
        return np.sum(self.k.astype(float) ** 2, axis=0)

    @cached_property
    def nyquist_mask(self) -> np.ndarray:
        return np.any(np.abs(self.k) == self.N // 2, axis=0)

    @cached_property
    def points(self) -> np.ndarray:
        """Collocation coordinates, shape ``(dim, N, ..., N)``."""
        axes = [np.arange(self.N) / self.N] * self.dim
        return np.stack(np.meshgrid(*axes, indexing="ij"))

    def refine(self, factor: int = 2) -> "TorusGrid":
        return TorusGrid(self.dim, self.N * factor)


@lru_cache(maxsize=32)
def _wavenumbers(dim: int, N: int) -> np.ndarray:
    k1 = np.fft.fftfreq(N, 1.0 / N).astype(np.int64)
    k1[N // 2] = N // 2
    k = np.stack(np.meshgrid(*([k1] * dim), indexing="ij"))
    k.flags.writeable = False
    return k


class SpectralField:
    """Immutable truncated Fourier representation of a periodic field."""

    __slots__ = ("grid", "coeffs", "real", "__dict__")

    def __init__(self, grid: TorusGrid, coeffs, real: bool = True):
        coeffs = np.array(coeffs, dtype=np.complex128, copy=True)
        if coeffs.ndim < grid.dim or coeffs.shape[coeffs.ndim - grid.dim:] != grid.shape:
            raise GridMismatchError(
                f"coefficient shape {coeffs.shape} does not end with grid shape {grid.shape}")
        rank = coeffs.ndim - grid.dim
        if rank not in RANKS:
            raise ValueError(f"unsupported tensor rank {rank}")
        if rank and any(n != grid.dim for n in coeffs.shape[:rank]):
            raise ValueError(f"component axes {coeffs.shape[:rank]} must all equal dim={grid.dim}")
        coeffs.flags.writeable = False
        self.grid = grid
        self.coeffs = coeffs
        self.real = bool(real)

    @property
    def rank(self) -> int:
        return self.coeffs.ndim - self.grid.dim

    @property
    def kind(self) -> str:
        return RANKS[self.rank]

    @property
    def component_shape(self) -> tuple[int, ...]:
        return self.coeffs.shape[: self.rank]

    @cached_property
    def samples(self) -> np.ndarray:
        """Values at the collocation points (real array when ``real``)."""
        axes = tuple(range(self.rank, self.coeffs.ndim))
        vals = np.fft.ifftn(self.coeffs, axes=axes) * self.grid.size
        if self.real:
            vals = vals.real
        vals.flags.writeable = False
        return vals

    @property
    def mean(self):
        idx = (Ellipsis,) + (0,) * self.grid.dim
        c = self.coeffs[idx]
        return c.real.copy() if self.real else c.copy()

    def component(self, *index) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs[index], self.real)

    def with_coeffs(self, coeffs, real: bool | None = None) -> "SpectralField":
        return SpectralField(self.grid, coeffs, self.real if real is None else real)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        _check_same_grid(self, other)
        return SpectralField(self.grid, self.coeffs + other.coeffs, self.real and other.real)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _check_same_grid(self, other)
        return SpectralField(self.grid, self.coeffs - other.coeffs, self.real and other.real)

    def __neg__(self) -> "SpectralField":
        return SpectralField(self.grid, -self.coeffs, self.real)

    def __mul__(self, scalar) -> "SpectralField":
        if isinstance(scalar, SpectralField):
            raise TypeError("use product() for field products")
        real = self.real and np.isrealobj(scalar)
        return SpectralField(self.grid, self.coeffs * scalar, real)

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"SpectralField({self.kind}, dim={self.grid.dim}, N={self.grid.N}, real={self.real})"


def _check_same_grid(*fields: SpectralField) -> None:
    g = fields[0].grid
    for f in fields[1:]:
        if f.grid != g:
            raise GridMismatchError(f"grid mismatch: {g} vs {f.grid}")


def zeros(grid: TorusGrid, rank: int = 0) -> SpectralField:
    return SpectralField(grid, np.zeros((grid.dim,) * rank + grid.shape))


def constant(grid: TorusGrid, value) -> SpectralField:
    """Field equal to ``value`` (scalar, vector or matrix) everywhere."""
    value = np.asarray(value, dtype=complex)
    coeffs = np.zeros(value.shape + grid.shape, dtype=complex)
    coeffs[(Ellipsis,) + (0,) * grid.dim] = value
    return SpectralField(grid, coeffs, real=bool(np.all(value.imag == 0)))


def fourier_mode(grid: TorusGrid, k: Sequence[int], amplitude: complex = 1.0) -> SpectralField:
    """The complex exponential ``amplitude * exp(2 pi i k.x)`` (not real)."""
    coeffs = np.zeros(grid.shape, dtype=complex)
    coeffs[tuple(int(ki) % grid.N for ki in k)] = amplitude
    return SpectralField(grid, coeffs, real=False)


def forward_transform(samples, grid: TorusGrid, real: bool | None = None) -> SpectralField:
    """Discrete Fourier coefficients of collocation samples.

    Parameters
    ----------
    samples : array_like
        Values at ``x_j = j/N``; trailing ``grid.dim`` axes must have length
        ``grid.N``; leading axes are tensor components.
    grid : TorusGrid
    real : bool, optional
        Mark the result as a real field. Defaults to whether ``samples`` is real.
    """
    samples = np.asarray(samples)
    if samples.ndim < grid.dim or samples.shape[samples.ndim - grid.dim:] != grid.shape:
        raise GridMismatchError(f"samples of shape {samples.shape} do not match grid {grid.shape}")
    if real is None:
        real = not np.iscomplexobj(samples)
    axes = tuple(range(samples.ndim - grid.dim, samples.ndim))
    return SpectralField(grid, np.fft.fftn(samples, axes=axes) / grid.size, real=real)


def inverse_transform(f: SpectralField) -> np.ndarray:
    return np.array(f.samples)


def from_function(fn: Callable[..., np.ndarray], grid: TorusGrid) -> SpectralField:
    """Sample ``fn(x1, ..., xd)`` on the collocation grid and transform."""
    return forward_transform(np.asarray(fn(*grid.points)), grid)


# --------------------------------------------------------------------------- multipliers


@dataclass(frozen=True)
class Multiplier:
    """Fourier multiplier ``u_hat(k) -> symbol(k) u_hat(k)``.

    ``symbol`` receives the integer wavenumber mesh of shape ``(dim, ...)``
    and returns either an array broadcastable to the grid (scalar symbol) or
    an array of shape ``(out, in) + grid.shape`` (component-mixing symbol,
    ``matrix=True``).
    """

    symbol: Callable[[np.ndarray], np.ndarray]
    zero_mode: str = "keep"
    matrix: bool = False
    name: str = "multiplier"

    def __post_init__(self):
        if self.zero_mode not in ("keep", "annihilate"):
            raise ValueError(f"zero_mode must be 'keep' or 'annihilate', got {self.zero_mode!r}")

    def evaluate(self, grid: TorusGrid) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.asarray(self.symbol(grid.k), dtype=complex)
        if not self.matrix:
            s = np.broadcast_to(s, grid.shape).copy()
        else:
            s = s.copy()
        if self.zero_mode == "annihilate":
            s[(Ellipsis,) + (0,) * grid.dim] = 0.0
        return s

    def __mul__(self, other: "Multiplier") -> "Multiplier":
        if self.matrix or other.matrix:
            raise NotImplementedError("composition of component-mixing multipliers")
        zm = "annihilate" if "annihilate" in (self.zero_mode, other.zero_mode) else "keep"
        s1, s2 = self.symbol, other.symbol
        return Multiplier(lambda k: s1(k) * s2(k), zm, name=f"{self.name}*{other.name}")

    def hermitian(self, grid: TorusGrid, atol: float = 0.0) -> bool:
        """Whether ``m(-k) = conj(m(k))`` on the grid (Nyquist aliasing included)."""
        return _symbol_is_hermitian(self.evaluate(grid), grid, atol)


def _symbol_is_hermitian(s: np.ndarray, grid: TorusGrid, atol: float) -> bool:
    axes = tuple(range(s.ndim - grid.dim, s.ndim))
    return bool(np.allclose(_reflect(s, axes), np.conj(s), rtol=0, atol=atol))


def _reflect(a: np.ndarray, axes) -> np.ndarray:
    """Array indexed by -k (mod N) along ``axes``."""
    out = a
    for ax in axes:
        out = np.roll(np.flip(out, axis=ax), 1, axis=ax)
    return out


def apply_multiplier(f: SpectralField, m: Multiplier) -> SpectralField:
    s = m.evaluate(f.grid)
    if not np.all(np.isfinite(s)):
        raise FloatingPointError(f"multiplier {m.name} has non-finite symbol values on this grid")
    if m.matrix:
        n_in = s.shape[1]
        if f.rank != 1 or f.component_shape[0] != n_in:
            raise ValueError(f"matrix multiplier expects a vector field with {n_in} components")
        coeffs = np.einsum("ij...,j...->i...", s, f.coeffs)
        if coeffs.shape[0] == 1:
            coeffs = coeffs[0]
    else:
        coeffs = s * f.coeffs
    real = f.real and _symbol_is_hermitian(s, f.grid, 1e-12 * max(1.0, float(np.max(np.abs(s)))))
    return SpectralField(f.grid, coeffs, real=real)


def _odd_mask(k: np.ndarray, i: int) -> np.ndarray:
    N = 2 * int(np.max(k))
    return np.where(np.abs(k[i]) == N // 2, 0.0, 1.0)


def derivative(i: int) -> Multiplier:
    """Partial derivative along axis ``i``; symbol ``2 pi i k_i`` (Nyquist plane -> 0)."""
    return Multiplier(lambda k: 2j * np.pi * k[i] * _odd_mask(k, i), name=f"d{i}")


def laplacian() -> Multiplier:
    return Multiplier(lambda k: -4 * np.pi**2 * np.sum(k.astype(float) ** 2, axis=0), name="lap")


def inverse_laplacian() -> Multiplier:
    return Multiplier(lambda k: -1.0 / (4 * np.pi**2 * np.sum(k.astype(float) ** 2, axis=0)),
                      zero_mode="annihilate", name="lap^-1")


def fractional_laplacian(alpha: float) -> Multiplier:
    """``(-Delta)^alpha`` with symbol ``1_{|k|>0} (2 pi |k|)^{2 alpha}``."""
    return Multiplier(lambda k: (2 * np.pi * np.sqrt(np.sum(k.astype(float) ** 2, axis=0))) ** (2 * alpha),
                      zero_mode="annihilate", name=f"(-lap)^{alpha}")


def bessel_potential(beta: float) -> Multiplier:
    """``(1 - Delta)^{-beta}``."""
    return Multiplier(lambda k: (1 + 4 * np.pi**2 * np.sum(k.astype(float) ** 2, axis=0)) ** (-beta),
                      name=f"(1-lap)^-{beta}")


def log_bessel(alpha: float) -> Multiplier:
    """``log(1 - Delta)^{-alpha}``: symbol ``log(1 + 4 pi^2 |k|^2)^{-alpha}``, 0 at k = 0."""
    def symbol(k):
        return np.log1p(4 * np.pi**2 * np.sum(k.astype(float) ** 2, axis=0)) ** (-alpha)
    return Multiplier(symbol, zero_mode="annihilate", name=f"log(1-lap)^-{alpha}")


def gradient(f: SpectralField) -> SpectralField:
    if f.rank != 0:
        raise ValueError("gradient expects a scalar field")
    return SpectralField(f.grid, np.stack([apply_multiplier(f, derivative(i)).coeffs
                                           for i in range(f.grid.dim)]), f.real)


def divergence(f: SpectralField) -> SpectralField:
    """Divergence of a vector field, or of each column of a matrix field.

    For a matrix ``A`` the result is the vector ``b^i = sum_j d_j A_{ji}``.
    """
    d = f.grid.dim
    sym = np.stack([derivative(j).evaluate(f.grid) for j in range(d)])
    if f.rank == 1:
        return SpectralField(f.grid, np.sum(sym * f.coeffs, axis=0), f.real)
    if f.rank == 2:
        return SpectralField(f.grid, np.einsum("j...,ji...->i...", sym, f.coeffs), f.real)
    raise ValueError("divergence expects a vector or matrix field")


# --------------------------------------------------------------------------- grids and products


def _resize_axis(c: np.ndarray, axis: int, N: int, M: int, nyquist: str) -> np.ndarray:
    shape = list(c.shape)
    shape[axis] = M
    out = np.zeros(shape, dtype=complex)
    h = min(N, M) // 2

    def sl(a, b):
        s = [slice(None)] * c.ndim
        s[axis] = slice(a, b)
        return tuple(s)

    if M >= N:
        out[sl(0, h)] = c[sl(0, h)]
        out[sl(M - h + 1, M)] = c[sl(N - h + 1, N)]
        half = c[sl(h, h + 1)] / 2
        out[sl(h, h + 1)] += half
        out[sl(M - h, M - h + 1)] += half
    else:
        out[sl(0, h)] = c[sl(0, h)]
        out[sl(M - h + 1, M)] = c[sl(N - h + 1, N)]
        if nyquist == "fold":
            out[sl(h, h + 1)] = c[sl(h, h + 1)] + c[sl(N - h, N - h + 1)]
    return out


def resample(f: SpectralField, N: int, nyquist: str = "drop") -> SpectralField:
    """Same trigonometric polynomial on a grid with ``N`` points per axis.

    Refining splits the Nyquist coefficient evenly between ``+N/2`` and
    ``-N/2``; coarsening truncates and either drops (default) or folds the
    new Nyquist plane.
    """
    if nyquist not in ("drop", "fold"):
        raise ValueError("nyquist must be 'drop' or 'fold'")
    grid = TorusGrid(f.grid.dim, N)
    c = f.coeffs
    for ax in range(f.rank, c.ndim):
        c = _resize_axis(c, ax, f.grid.N, N, nyquist)
    return SpectralField(grid, c, f.real)


def strip_nyquist(f: SpectralField) -> SpectralField:
    c = np.array(f.coeffs)
    c[..., f.grid.nyquist_mask] = 0.0
    return SpectralField(f.grid, c, f.real)


def product(f: SpectralField, g: SpectralField, *, padded: bool = False,
            contract: str | None = None) -> SpectralField:
    """Dealiased pointwise product on a 2x zero-padded grid.

    ``contract`` is an einsum spec over the component axes only
    (e.g. ``"ij,j->i"`` for matrix-vector); the default multiplies
    component-wise with broadcasting.  With ``padded=True`` the exact
    product is returned on the refined grid; otherwise it is projected back
    onto the modes strictly below the original Nyquist frequency.
    """
    _check_same_grid(f, g)
    N = f.grid.N
    fp, gp = resample(f, 2 * N), resample(g, 2 * N)
    fs, gs = fp.samples, gp.samples
    if contract is not None:
        lhs, out = contract.split("->")
        a, b = lhs.split(",")
        vals = np.einsum(f"{a}...,{b}...->{out}...", fs, gs)
    else:
        vals = fs * gs
    prod = forward_transform(vals, fp.grid, real=f.real and g.real)
    if padded:
        return prod
    return resample(prod, N, nyquist="drop")


def pointwise_norm_squared(f: SpectralField, padded: bool = True) -> SpectralField:
    """``|f|^2`` (sum over components), formed on the 2x padded grid."""
    if f.rank == 0:
        return product(f, f, padded=padded)
    spec = "i,i->" if f.rank == 1 else "ij,ij->"
    return product(f, f, padded=padded, contract=spec)


# --------------------------------------------------------------------------- norms and pairings


def pointwise_magnitude(f: SpectralField) -> np.ndarray:
    """Euclidean / Frobenius magnitude of the samples."""
    s = np.abs(f.samples)
    if f.rank:
        s = np.sqrt(np.sum(s**2, axis=tuple(range(f.rank))))
    return s


def lebesgue_norm(f: SpectralField, p: float) -> float:
    """Collocation quadrature ``(N^{-d} sum_j |f(x_j)|^p)^{1/p}``; max for ``p = inf``."""
    if p < 1:
        raise ValueError("p must lie in [1, inf]")
    s = pointwise_magnitude(f)
    if np.isinf(p):
        return float(np.max(s))
    return float(np.mean(s**p) ** (1.0 / p))


def sobolev_norm(f: SpectralField, s: float) -> float:
    """``(sum_k (1 + 4 pi^2 |k|^2)^s |f_hat(k)|^2)^{1/2}``, summed over components."""
    w = (1 + 4 * np.pi**2 * f.grid.k_squared) ** s
    return float(np.sqrt(np.sum(w * np.abs(f.coeffs) ** 2)))


def inner(f: SpectralField, g: SpectralField) -> complex:
    """L^2 pairing ``int conj(f) g``, exact for the truncated series (Parseval)."""
    _check_same_grid(f, g)
    return complex(np.vdot(f.coeffs, g.coeffs))


def hermitian_defect(f: SpectralField) -> float:
    """``max |f_hat(-k) - conj(f_hat(k))|``; zero for real fields."""
    axes = tuple(range(f.rank, f.coeffs.ndim))
    return float(np.max(np.abs(_reflect(f.coeffs, axes) - np.conj(f.coeffs))))


def mode_mass_above(f: SpectralField, kmax: float) -> float:
    """Fraction of L^2 mass carried by ``|k| > kmax``."""
    total = np.sum(np.abs(f.coeffs) ** 2)
    if total == 0:
        return 0.0
    mask = np.sqrt(f.grid.k_squared) > kmax
    return float(np.sum(np.abs(f.coeffs[..., mask]) ** 2) / total)


# --------------------------------------------------------------------------- point evaluation


def _axis_basis(x: np.ndarray, N: int) -> np.ndarray:
    k1 = _wavenumbers(1, N)[0]
    E = np.exp(2j * np.pi * np.outer(x, k1))
    E[:, N // 2] = np.cos(np.pi * N * x)
    return E


def evaluate_at(f: SpectralField, points, mode: str = "grid_interp",
                budget: int = DEFAULT_DIRECT_SUM_BUDGET) -> np.ndarray:
    """Values of ``f`` at arbitrary points of ``[0, 1)^d``.

    Parameters
    ----------
    points : array_like, shape (P, d)
    mode : {"grid_interp", "direct_sum"}
        ``direct_sum`` is the exact truncated series (Nyquist terms taken as
        cosines so real fields stay real); ``grid_interp`` is periodic
        multilinear interpolation of the collocation samples.
    budget : int
        Maximum ``P * N^d`` accepted by ``direct_sum``.

    Returns
    -------
    ndarray of shape ``component_shape + (P,)``
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    d, N = f.grid.dim, f.grid.N
    if pts.shape[1] != d:
        raise GridMismatchError(f"points have {pts.shape[1]} coordinates, field has dim {d}")
    if mode == "direct_sum":
        cost = pts.shape[0] * f.grid.size
        if cost > budget:
            raise BudgetExceededError(f"direct_sum cost {cost} exceeds budget {budget}")
        bases = [_axis_basis(pts[:, a], N) for a in range(d)]
        letters = "abc"[:d]
        spec = ",".join(f"p{l}" for l in letters) + f",...{letters}->...p"
        vals = np.einsum(spec, *bases, f.coeffs)
        return vals.real if f.real else vals
    if mode == "grid_interp":
        return interpolate_samples(f.samples, pts)
    raise ValueError(f"unknown evaluation mode {mode!r}")


def evaluate_sparse(f: SpectralField, points, budget: int = DEFAULT_DIRECT_SUM_BUDGET,
                    rtol: float = 1e-13) -> np.ndarray:
    """Exact series evaluation restricted to the significant coefficients of ``f``.

    Intended for band-limited test functions with a handful of modes, where
    ``direct_sum`` over the full grid would be wasteful.  Coefficients below
    ``rtol`` times the largest one (transform round-off) are skipped.
    Nyquist terms are taken as cosines, as in :func:`evaluate_at`.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    d, N = f.grid.dim, f.grid.N
    if pts.shape[1] != d:
        raise GridMismatchError(f"points have {pts.shape[1]} coordinates, field has dim {d}")
    comp = f.component_shape
    flat = f.coeffs.reshape((-1,) + f.grid.shape)
    mag = np.max(np.abs(flat), axis=0)
    idx = np.argwhere(mag > rtol * mag.max()) if mag.max() > 0 else np.zeros((0, d), dtype=int)
    if pts.shape[0] * len(idx) > budget:
        raise BudgetExceededError(f"sparse evaluation cost {pts.shape[0] * len(idx)} exceeds budget {budget}")
    k = f.grid.k[(slice(None),) + tuple(idx.T)].T.astype(float)  # (m, d)
    coef = flat[(slice(None),) + tuple(idx.T)]  # (c, m)
    nyq = (np.abs(k) == N / 2) if N % 2 == 0 else np.zeros(k.shape, dtype=bool)
    if np.any(nyq):
        basis = np.ones((pts.shape[0], len(idx)), dtype=complex)
        for a in range(d):
            e = np.exp(2j * np.pi * np.outer(pts[:, a], k[:, a]))
            basis *= np.where(nyq[:, a], np.cos(np.pi * N * pts[:, a])[:, None], e)
    else:
        basis = np.exp(2j * np.pi * (pts @ k.T))
    out = (basis @ coef.T).T.reshape(comp + (pts.shape[0],))
    return out.real if f.real else out


def interpolate_samples(samples: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Periodic multilinear interpolation of collocation samples at ``pts`` (P, d)."""
    d = pts.shape[1]
    N = samples.shape[-1]
    comp_shape = samples.shape[: samples.ndim - d]
    flat = samples.reshape((-1,) + samples.shape[samples.ndim - d:])
    s = pts * N
    i0 = np.floor(s)
    w1 = s - i0
    i0 = i0.astype(np.int64) % N
    i1 = (i0 + 1) % N
    out = np.zeros((flat.shape[0], pts.shape[0]), dtype=samples.dtype)
    for corner in range(2**d):
        idx = []
        w = np.ones(pts.shape[0])
        for a in range(d):
            if corner >> a & 1:
                idx.append(i1[:, a])
                w = w * w1[:, a]
            else:
                idx.append(i0[:, a])
                w = w * (1.0 - w1[:, a])
        out += w * flat[(slice(None),) + tuple(idx)]
    return out.reshape(comp_shape + (pts.shape[0],))


# --------------------------------------------------------------------------- random fields


def random_field(grid: TorusGrid, rank: int = 0, rng=None, *, kmax: float | None = None,
                 decay: float = 0.0, mean_zero: bool = False) -> SpectralField:
    """Random real field with Gaussian coefficients.

    ``kmax`` band-limits to ``|k_i| <= kmax`` (and always strips the Nyquist
    plane when given); ``decay`` damps coefficients by ``(1 + |k|^2)^{-decay/2}``.
    """
    rng = np.random.default_rng(rng)
    samples = rng.standard_normal((grid.dim,) * rank + grid.shape)
    f = forward_transform(samples, grid)
    c = np.array(f.coeffs)
    if kmax is not None:
        keep = np.all(np.abs(grid.k) <= kmax, axis=0) & ~grid.nyquist_mask
        c[..., ~keep] = 0.0
    if decay:
        c *= (1 + grid.k_squared) ** (-decay / 2)
    if mean_zero:
        c[(Ellipsis,) + (0,) * grid.dim] = 0.0
    return SpectralField(grid, c, real=True)


# --------------------------------------------------------------------------- snapshot format


def save_field(f: SpectralField, path) -> None:
    """Write the binary snapshot: magic, version, dim, N, rank, real flag, coefficients.

    Header integers are little-endian unsigned 32-bit; coefficients follow
    as interleaved little-endian float64 ``(re, im)`` pairs in row-major
    ``(component, k)`` order with ``k`` in FFT order.
    """
    header = SNAPSHOT_MAGIC + struct.pack("<5I", SNAPSHOT_VERSION, f.grid.dim, f.grid.N,
                                          f.rank, int(f.real))
    body = np.ascontiguousarray(f.coeffs).view("<f8").tobytes()
    Path(path).write_bytes(header + body)


def load_field(path) -> SpectralField:
    data = Path(path).read_bytes()
    if data[:4] != SNAPSHOT_MAGIC:
        raise ValueError(f"{path}: not a field snapshot (bad magic)")
    version, dim, N, rank, real = struct.unpack("<5I", data[4:24])
    if version != SNAPSHOT_VERSION:
        raise ValueError(f"{path}: unsupported snapshot version {version}")
    grid = TorusGrid(dim, N)
    shape = (dim,) * rank + grid.shape
    vals = np.frombuffer(data[24:], dtype="<f8")
    if vals.size != 2 * int(np.prod(shape)):
        raise ValueError(f"{path}: truncated coefficient block")
    coeffs = vals.view(np.complex128).reshape(shape)
    return SpectralField(grid, coeffs, real=bool(real))
