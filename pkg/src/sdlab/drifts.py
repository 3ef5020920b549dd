"""Drifts: Helmholtz splitting, potentials, example fields and cutoff functions.

A drift is ``b = b1 + b2 + mean`` where ``b1`` is divergence free and mean
zero, stored either through an antisymmetric matrix potential ``A`` (with
``b1^i = sum_j d_j A_ji``) or as raw coefficients, and ``b2`` is an
arbitrary vector field.  Stored fields are band-limited strictly below the
Nyquist frequency, where odd symbols cannot act on real fields.
"""
from __future__ import annotations

import hashlib
import itertools
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import spectral as sp
from .besov import _smooth_step
from .mollify import MollifierKernel, bump, mollify_space
from .reports import DiagnosticsReport
from .spectral import SpectralField, TorusGrid

GFF_REFERENCE_N = 256
ANTISYMMETRY_RTOL = 1e-12
RAW_DIVERGENCE_RTOL = 1e-8


class ResolutionError(ValueError):
    """Raised when a requested scale is not resolvable on the grid."""


class UnsupportedError(ValueError):
    """Raised for dimension/configuration combinations outside the model."""


# --------------------------------------------------------------------------- DriftSpec


def _antisymmetry_defect(A: SpectralField) -> float:
    c = A.coeffs
    scale = max(float(np.max(np.abs(c))), 1e-300)
    return float(np.max(np.abs(c + np.swapaxes(c, 0, 1)))) / scale


def _h_norm(f: SpectralField, s: float) -> float:
    return sp.sobolev_norm(f, s)


@dataclass(frozen=True)
class DriftSpec:
    """Drift on the torus, static or sampled at uniform times.

    Sampled drifts keep one static ``DriftSpec`` per time in ``frames``
    and are evaluated piecewise constant from the left.
    """

    grid: TorusGrid
    A: SpectralField | None = None
    b1_raw: SpectralField | None = None
    b2: SpectralField | None = None
    mean: tuple = ()
    times: tuple | None = None
    frames: tuple | None = None
    name: str = "custom"
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        d = self.grid.dim
        if not self.mean:
            object.__setattr__(self, "mean", (0.0,) * d)
        if len(self.mean) != d:
            raise ValueError(f"mean must have {d} components")
        object.__setattr__(self, "mean", tuple(float(m) for m in self.mean))
        if self.frames is not None:
            if self.times is None or len(self.times) != len(self.frames):
                raise ValueError("sampled drift needs one time per frame")
            return
        if self.A is not None and self.b1_raw is not None:
            raise ValueError("give b1 either as a potential A or as raw coefficients, not both")
        if self.A is not None:
            if self.A.rank != 2 or self.A.grid != self.grid:
                raise ValueError("A must be a matrix field on the drift grid")
            if _antisymmetry_defect(self.A) > ANTISYMMETRY_RTOL:
                raise ValueError("potential A is not antisymmetric")
            object.__setattr__(self, "A", sp.strip_nyquist(self.A))
        if self.b1_raw is not None:
            b1 = sp.strip_nyquist(self.b1_raw)
            b1 = b1.with_coeffs(np.where(self.grid.k_squared == 0, 0.0, b1.coeffs))
            div = sp.divergence(b1)
            if _h_norm(div, -2) > RAW_DIVERGENCE_RTOL * max(_h_norm(b1, -1), 1e-300):
                raise ValueError("raw b1 is not divergence free")
            object.__setattr__(self, "b1_raw", b1)
        if self.b2 is not None:
            if self.b2.rank != 1 or self.b2.grid != self.grid:
                raise ValueError("b2 must be a vector field on the drift grid")
            b2 = sp.strip_nyquist(self.b2)
            object.__setattr__(self, "b2", b2.with_coeffs(np.where(self.grid.k_squared == 0, 0.0, b2.coeffs)))

    # ---- static accessors
    @property
    def is_static(self) -> bool:
        return self.frames is None

    @property
    def divergence_free(self) -> bool:
        if not self.is_static:
            return all(f.divergence_free for f in self.frames)
        return self.b2 is None or not np.any(self.b2.coeffs)

    @property
    def b1(self) -> SpectralField:
        self._require_static()
        if self.A is not None:
            return drift_from_A(self.A)
        if self.b1_raw is not None:
            return self.b1_raw
        return sp.zeros(self.grid, 1)

    @property
    def potential(self) -> SpectralField:
        """``A`` for ``b1``; computed by Helmholtz splitting when stored raw."""
        self._require_static()
        if self.A is not None:
            return self.A
        if self.b1_raw is not None:
            return helmholtz_decompose(self.b1_raw)[0]
        return sp.zeros(self.grid, 2)

    @property
    def b2_field(self) -> SpectralField:
        self._require_static()
        return self.b2 if self.b2 is not None else sp.zeros(self.grid, 1)

    def field(self, t: float | None = None) -> SpectralField:
        """Total vector field ``b1 + b2 + mean`` (at time ``t`` for sampled drifts)."""
        if not self.is_static:
            return self.frame(t).field()
        return self.b1 + self.b2_field + sp.constant(self.grid, np.array(self.mean))

    def frame(self, t: float | None) -> "DriftSpec":
        if self.is_static:
            return self
        if t is None:
            t = self.times[0]
        idx = int(np.searchsorted(np.asarray(self.times), t + 1e-12, side="right")) - 1
        return self.frames[min(max(idx, 0), len(self.frames) - 1)]

    def _require_static(self):
        if not self.is_static:
            raise ValueError("operation needs a static drift; use frame(t)")

    def map_fields(self, fn) -> "DriftSpec":
        """Apply a linear field map to every stored component (mean included via ``fn`` on constants)."""
        if not self.is_static:
            return replace(self, frames=tuple(f.map_fields(fn) for f in self.frames))
        kw = {}
        for name in ("A", "b1_raw", "b2"):
            v = getattr(self, name)
            kw[name] = None if v is None else fn(v)
        mean = fn(sp.constant(self.grid, np.array(self.mean))).mean
        return replace(self, mean=tuple(np.real(mean)), **kw)

    def digest(self) -> str:
        """Content hash used as provenance tag in reports and ensembles."""
        h = hashlib.sha256()
        h.update(f"{self.name}:{self.grid.dim}:{self.grid.N}".encode())
        frames = self.frames if self.frames is not None else (self,)
        for t, f in zip(self.times or (0.0,), frames):
            h.update(np.float64(t).tobytes())
            h.update(np.asarray(f.mean, dtype=np.float64).tobytes())
            for name in ("A", "b1_raw", "b2"):
                v = getattr(f, name)
                if v is not None:
                    h.update(name.encode())
                    h.update(np.ascontiguousarray(v.coeffs).tobytes())
        return h.hexdigest()[:16]

    @classmethod
    def sampled(cls, frames: Sequence["DriftSpec"], times: Sequence[float], name: str = "sampled") -> "DriftSpec":
        frames = tuple(frames)
        grid = frames[0].grid
        if any(f.grid != grid or not f.is_static for f in frames):
            raise ValueError("frames must be static drifts on one grid")
        return cls(grid, times=tuple(float(t) for t in times), frames=frames, name=name)


# --------------------------------------------------------------------------- Helmholtz


def helmholtz_decompose(b: SpectralField):
    """Split ``b`` into ``(A, V, mean)``.

    ``A_ij = Lap^{-1}(d_i b^j - d_j b^i)``, ``V = Lap^{-1} div b`` and
    ``mean = b_hat(0)``, so that ``b^i = sum_j d_j A_ji + d_i V + mean^i``
    for every mode below the Nyquist plane.
    """
    if b.rank != 1:
        raise ValueError("helmholtz_decompose expects a vector field")
    g = b.grid
    d = g.dim
    D = np.stack([sp.derivative(i).evaluate(g) for i in range(d)])
    inv = sp.inverse_laplacian().evaluate(g)
    c = b.coeffs
    A = inv * (D[:, None] * c[None, :] - D[None, :] * c[:, None])
    V = inv * np.sum(D * c, axis=0)
    return SpectralField(g, A, b.real), SpectralField(g, V, b.real), np.real_if_close(b.mean)


def drift_from_A(A: SpectralField) -> SpectralField:
    """Divergence-free drift ``b^i = sum_j d_j A_ji`` of an antisymmetric potential."""
    if A.rank != 2:
        raise ValueError("drift_from_A expects a matrix field")
    if _antisymmetry_defect(A) > ANTISYMMETRY_RTOL:
        raise ValueError("potential A is not antisymmetric")
    return sp.divergence(A)


def helmholtz_reconstruct(A: SpectralField, V: SpectralField, mean) -> SpectralField:
    return sp.divergence(A) + sp.gradient(V) + sp.constant(A.grid, np.asarray(mean))


def antisymmetric_from_upper(grid: TorusGrid, entries: dict) -> SpectralField:
    """Build ``A`` from ``{(i, j): scalar field}`` with ``i < j``; ``A_ji = -A_ij``."""
    c = np.zeros((grid.dim, grid.dim) + grid.shape, dtype=complex)
    real = True
    for (i, j), f in entries.items():
        if i == j:
            raise ValueError("diagonal entries of an antisymmetric matrix vanish")
        c[i, j] = f.coeffs
        c[j, i] = -f.coeffs
        real = real and f.real
    return SpectralField(grid, c, real)


# --------------------------------------------------------------------------- Gaussian free field


def _hermitian_normals(shape, rng) -> np.ndarray:
    """Complex normals with unit variance and ``g(-k) = conj(g(k))``; self-conjugate modes real."""
    a = rng.standard_normal(shape)
    b = rng.standard_normal(shape)
    gamma = (a + 1j * b) / np.sqrt(2)
    refl = sp._reflect(gamma, tuple(range(len(shape))))
    return (gamma + np.conj(refl)) / np.sqrt(2)


def sample_gff(grid: TorusGrid, seed) -> SpectralField:
    """Massless Gaussian free field: ``xi_hat(k) = gamma_k / (2 pi |k|)``, zero mean mode.

    Normals are drawn on a reference grid of ``max(N, GFF_REFERENCE_N)``
    points per axis and truncated, so fields with the same seed agree on
    their common modes across resolutions up to the reference size.  The
    Nyquist plane is left empty.
    """
    if grid.dim != 2:
        raise UnsupportedError("the Gaussian free field sampler is two-dimensional")
    ref = TorusGrid(2, max(grid.N, GFF_REFERENCE_N))
    gamma = _hermitian_normals(ref.shape, np.random.default_rng(seed))
    with np.errstate(divide="ignore", invalid="ignore"):
        c = gamma / (2 * np.pi * np.sqrt(ref.k_squared))
    c[0, 0] = 0.0
    c[ref.nyquist_mask] = 0.0
    xi = SpectralField(ref, c, real=True)
    if ref.N != grid.N:
        xi = sp.resample(xi, grid.N)
    return sp.strip_nyquist(xi)


def gff_curl_drift(xi: SpectralField, alpha: float) -> DriftSpec:
    """Curl drift of the log-regularized field: ``A_12 = -A_21 = -log(1-Lap)^{-alpha} xi``."""
    if xi.grid.dim != 2:
        raise UnsupportedError("the GFF curl drift is two-dimensional")
    a12 = -sp.apply_multiplier(xi, sp.log_bessel(alpha))
    A = antisymmetric_from_upper(xi.grid, {(0, 1): a12})
    return DriftSpec(xi.grid, A=A, name="gff_curl", params={"alpha": alpha})


# --------------------------------------------------------------------------- singular examples


def smooth_window(r, radius: float = 0.25):
    """``exp(1 - 1/(1 - (r/R)^2))`` inside the ball of radius ``R``; equals 1 at the centre."""
    r = np.asarray(r, dtype=float) / radius
    out = np.zeros_like(r)
    inside = r < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - r[inside] ** 2))
    return out


def _torus_offsets(grid: TorusGrid, center) -> np.ndarray:
    x = grid.points - np.asarray(center, dtype=float).reshape((-1,) + (1,) * grid.dim)
    return x - np.round(x)


def default_antisymmetric(dim: int) -> np.ndarray:
    B = np.zeros((dim, dim))
    B[0, 1], B[1, 0] = 1.0, -1.0
    return B


def _check_B(B, dim) -> np.ndarray:
    B = np.asarray(B, dtype=float)
    if B.shape != (dim, dim) or not np.array_equal(B, -B.T):
        raise ValueError(f"B must be an antisymmetric {dim}x{dim} matrix")
    return B


def point_singularity_A(grid: TorusGrid, alpha: float, B=None, radius: float = 0.25,
                        center=None) -> SpectralField:
    """``A(x) = w(x) |x - x0|^{-alpha} B`` sampled on the grid.

    ``x0`` defaults to the centre ``(1/2, ..., 1/2)``, a grid node; the node
    sitting on the singularity uses ``|x - x0| = h/2``.
    """
    if grid.dim < 2:
        raise UnsupportedError("point singularities need dim >= 2")
    if alpha >= grid.dim / 2:
        warnings.warn(f"alpha={alpha} >= d/2: the field is not locally square integrable", stacklevel=2)
    B = _check_B(default_antisymmetric(grid.dim) if B is None else B, grid.dim)
    center = (0.5,) * grid.dim if center is None else center
    r = np.sqrt(np.sum(_torus_offsets(grid, center) ** 2, axis=0))
    r_eff = np.maximum(r, 0.5 / grid.N)
    profile = smooth_window(r, radius) * r_eff ** (-alpha)
    return sp.forward_transform(B.reshape(B.shape + (1,) * grid.dim) * profile, grid)


@dataclass(frozen=True)
class MorreyField:
    A: SpectralField
    centers: tuple
    eps: tuple
    alphas: tuple
    dropped: int
    B_norm: float

    @property
    def centered_expected(self) -> np.ndarray:
        """``eps_n^-2 alpha_n^2 |B|^2``: the exact centred functional of each bump."""
        return np.array([a**2 * self.B_norm**2 / e**2 for a, e in zip(self.alphas, self.eps)])


def morrey_counterexample_A(grid: TorusGrid, alpha_seq, eps_seq, v=None, B=None) -> MorreyField:
    """``|A| = sum_n alpha_n sqrt(rho^{eps_n})(x - 2^{-n} v)``, ``A = |A| B``.

    Bumps whose radius is below two grid cells are dropped and counted.
    """
    alpha_seq, eps_seq = list(alpha_seq), list(eps_seq)
    if len(alpha_seq) != len(eps_seq):
        raise ValueError("alpha and eps sequences must have equal length")
    d = grid.dim
    for n, e in enumerate(eps_seq, start=1):
        if e > 2.0 ** (-n - 3) * (1 + 1e-12):
            raise ValueError(f"eps_{n} = {e} exceeds 2^-(n+3); bumps would overlap")
    v = np.eye(d)[0] if v is None else np.asarray(v, dtype=float)
    if abs(np.linalg.norm(v) - 1) > 1e-12:
        raise ValueError("v must be a unit vector")
    B = _check_B(default_antisymmetric(d) if B is None else B, d)
    kernel = MollifierKernel(d)
    h = 1.0 / grid.N
    total = np.zeros(grid.shape)
    centers, eps_kept, alphas = [], [], []
    dropped = 0
    for n, (a, e) in enumerate(zip(alpha_seq, eps_seq), start=1):
        if a == 0:
            continue
        if e < 2 * h:
            dropped += 1
            continue
        c = 2.0 ** (-n) * v
        x = _torus_offsets(grid, c)
        dens = kernel.normalization * bump(np.sqrt(np.sum(x**2, axis=0)) / e) / e**d
        total += a * np.sqrt(dens)
        centers.append(tuple(c % 1.0))
        eps_kept.append(e)
        alphas.append(a)
    A = sp.forward_transform(B.reshape(B.shape + (1,) * d) * total, grid)
    return MorreyField(A, tuple(centers), tuple(eps_kept), tuple(alphas), dropped, float(np.linalg.norm(B)))


# --------------------------------------------------------------------------- particle systems


def _is_even(f: SpectralField, atol: float = 1e-14) -> bool:
    axes = tuple(range(f.rank, f.coeffs.ndim))
    scale = max(float(np.max(np.abs(f.coeffs))), 1e-300)
    return bool(np.max(np.abs(sp._reflect(f.coeffs, axes) - f.coeffs)) <= atol * scale)


def _pair_coeffs(base: np.ndarray, base_grid: TorusGrid, n_particles: int, k: int, l: int) -> np.ndarray:
    """Coefficients on the product grid of ``x -> f(x^k - x^l)`` (``f`` given by ``base``)."""
    d, N = base_grid.dim, base_grid.N
    comp = base.shape[: base.ndim - d]
    out = np.zeros(comp + (N,) * (d * n_particles), dtype=complex)
    idx = np.indices(base_grid.shape).reshape(d, -1)
    neg = (-idx) % N
    for flat in range(idx.shape[1]):
        m = idx[:, flat]
        val = base[(Ellipsis,) + tuple(m)]
        if not np.any(val):
            continue
        target = [0] * (d * n_particles)
        target[k * d:(k + 1) * d] = m
        target[l * d:(l + 1) * d] = neg[:, flat]
        out[(Ellipsis,) + tuple(target)] += val
    return out


def lift_vector(b: SpectralField, n_particles: int) -> SpectralField:
    """Vector field ``(b(x^k - sum over l != k of x^l))_k`` on the product torus."""
    g = b.grid
    D = g.dim * n_particles
    big = TorusGrid(D, g.N)
    c = np.zeros((D,) + big.shape, dtype=complex)
    for k in range(n_particles):
        for l in range(n_particles):
            if k != l:
                c[k * g.dim:(k + 1) * g.dim] += _pair_coeffs(b.coeffs, g, n_particles, k, l)
    return SpectralField(big, c, b.real)


@dataclass(frozen=True)
class LiftedDrift:
    """Coefficient-space particle drift for product dimensions above 3.

    Only exact pointwise evaluation is available:
    ``b_k(x) = sum_{l != k} b(x^k - x^l)`` through the base series.  When
    the base potential ``A`` is even, the block potential with block
    ``(k, l)`` equal to ``-A(x^l - x^k)`` generates this drift; the minus
    sign is what makes its column divergence come out as ``+b``.
    """

    base: SpectralField
    n_particles: int
    A: SpectralField | None = None

    @property
    def dim(self) -> int:
        return self.base.grid.dim * self.n_particles

    def _pairs(self):
        n = self.n_particles
        return [(k, l) for k in range(n) for l in range(n) if k != l]

    def evaluate(self, points, budget: int = sp.DEFAULT_DIRECT_SUM_BUDGET) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        d = self.base.grid.dim
        out = np.zeros((self.dim, pts.shape[0]))
        for k, l in self._pairs():
            diff = (pts[:, k * d:(k + 1) * d] - pts[:, l * d:(l + 1) * d]) % 1.0
            out[k * d:(k + 1) * d] += sp.evaluate_at(self.base, diff, "direct_sum", budget).real
        return out

    def potential_at(self, points, budget: int = sp.DEFAULT_DIRECT_SUM_BUDGET) -> np.ndarray:
        """Block potential at ``points``, shape ``(dim, dim, P)``."""
        if self.A is None:
            raise ValueError("no even base potential available")
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        d = self.base.grid.dim
        out = np.zeros((self.dim, self.dim, pts.shape[0]))
        for k, l in self._pairs():
            diff = (pts[:, l * d:(l + 1) * d] - pts[:, k * d:(k + 1) * d]) % 1.0
            out[k * d:(k + 1) * d, l * d:(l + 1) * d] = -sp.evaluate_at(self.A, diff, "direct_sum", budget).real
        return out


def particle_lift(base: DriftSpec, n_particles: int, *, budget: int = 2_000_000):
    """Interacting-particle drift ``dX^k = sum_{l != k} b(X^k - X^l) dt + ...``.

    Returns a :class:`DriftSpec` on the product torus when it has at most
    three dimensions, otherwise a :class:`LiftedDrift`.
    """
    if n_particles not in (2, 3):
        raise ValueError("particle_lift supports 2 or 3 particles")
    base._require_static()
    g = base.grid
    D = g.dim * n_particles
    modes = g.size * n_particles * (n_particles - 1)
    if modes > budget:
        raise sp.BudgetExceededError(f"lift needs {modes} coefficient writes, budget is {budget}")
    if D > 3:
        even_A = base.A if base.A is not None and _is_even(base.A) else None
        return LiftedDrift(base.field(), n_particles, even_A)
    # a product torus of dimension <= 3 has one-dimensional particles, whose b1 vanishes
    mean = np.tile(np.asarray(base.mean) * (n_particles - 1), n_particles)
    b1_raw = b2 = None
    if base.A is not None or base.b1_raw is not None:
        b1_raw = lift_vector(base.b1, n_particles)
    if base.b2 is not None:
        b2 = lift_vector(base.b2, n_particles)
    params = {"base": base.name, "n_particles": n_particles, **base.params}
    return DriftSpec(TorusGrid(D, g.N), b1_raw=b1_raw, b2=b2, mean=tuple(mean),
                     name="particle_lift", params=params)


# --------------------------------------------------------------------------- compact sets and cutoffs


@dataclass(frozen=True)
class CompactSet:
    """Finite union of points and axis-aligned segments on the torus."""

    points: tuple = ()
    segments: tuple = ()  # ((start...), (end...)) pairs differing in one coordinate

    def __post_init__(self):
        for a, b in self.segments:
            if sum(x != y for x, y in zip(a, b)) > 1:
                raise ValueError("segments must be axis aligned")
        if not self.points and not self.segments:
            raise ValueError("compact set is empty")

    def distance(self, x: np.ndarray) -> np.ndarray:
        """Torus distance to the set; ``x`` has shape ``(d, ...)``."""
        d = x.shape[0]
        best = np.full(x.shape[1:], np.inf)
        shifts = list(itertools.product((-1, 0, 1), repeat=d))
        for p in self.points:
            p = np.asarray(p, dtype=float).reshape((d,) + (1,) * (x.ndim - 1))
            for s in shifts:
                sv = np.asarray(s, dtype=float).reshape(p.shape)
                best = np.minimum(best, np.sqrt(np.sum((x - p - sv) ** 2, axis=0)))
        for a, b in self.segments:
            lo = np.minimum(a, b).reshape((d,) + (1,) * (x.ndim - 1))
            hi = np.maximum(a, b).reshape(lo.shape)
            for s in shifts:
                y = x - np.asarray(s, dtype=float).reshape(lo.shape)
                proj = np.clip(y, lo, hi)
                best = np.minimum(best, np.sqrt(np.sum((y - proj) ** 2, axis=0)))
        return best

    def to_dict(self) -> dict:
        return {"points": [list(p) for p in self.points], "segments": [[list(a), list(b)] for a, b in self.segments]}


def cutoff_profile(t):
    """Smooth ``g``: 0 on ``[0, 5/8]``, 1 on ``[7/8, inf)``."""
    return _smooth_step((np.asarray(t, dtype=float) - 5 / 8) * 4)


def _fd_gradient_max(samples: np.ndarray) -> float:
    N = samples.shape[0]
    sq = np.zeros_like(samples)
    for ax in range(samples.ndim):
        diff = (np.roll(samples, -1, axis=ax) - np.roll(samples, 1, axis=ax)) * (N / 2)
        sq += diff**2
    return float(np.sqrt(np.max(sq)))


@dataclass(frozen=True)
class CutoffSequence:
    K: CompactSet
    eps: float
    delta: float
    g_field: SpectralField
    grad_bound: float  # recorded C with ||grad g||_inf <= C / eps
    smoothing_error: float
    nodal: np.ndarray = field(default=None, repr=False, compare=False)  # g at the grid nodes

    @property
    def samples(self) -> np.ndarray:
        """Nodal values; the spectral field carries transform round-off on top of them."""
        return self.nodal if self.nodal is not None else self.g_field.samples

    def invariants(self) -> dict:
        """Grid-node checks of the defining properties."""
        dist = self.K.distance(self.g_field.grid.points)
        g = self.samples
        far, near = dist > self.eps, dist < self.eps / 2
        return {
            "one_far": bool(np.all(g[far] == 1.0)),
            "zero_near": bool(np.all(g[near] == 0.0)),
            "in_unit_interval": bool(np.all((g >= 0) & (g <= 1))),
            "gradient_bound": bool(_fd_gradient_max(g) <= self.grad_bound / self.eps * (1 + 1e-12)),
        }

    @property
    def valid(self) -> bool:
        return all(self.invariants().values())


def build_cutoff(grid: TorusGrid, K: CompactSet, eps: float) -> CutoffSequence:
    """``g_eps = g(eps^{-1} rho_delta * d(., K))`` on the collocation grid.

    ``delta`` starts at ``eps/16`` (enough for a 1-Lipschitz distance) and is
    halved until the grid sup of ``|rho_delta * d - d|`` drops below ``eps/8``.
    """
    if eps <= 4.0 / grid.N:
        raise ResolutionError(f"eps={eps} is not above 4/N = {4.0 / grid.N}")
    dist = K.distance(grid.points)
    dfield = sp.forward_transform(dist, grid)
    delta = eps / 16
    for _ in range(40):
        smooth = mollify_space(dfield, 1.0 / delta).samples
        err = float(np.max(np.abs(smooth - dist)))
        if err < eps / 8:
            break
        delta /= 2
    else:
        raise ResolutionError("could not reach the smoothing tolerance")
    g = cutoff_profile(smooth / eps)
    C = eps * _fd_gradient_max(g)
    g.flags.writeable = False
    return CutoffSequence(K, eps, delta, sp.forward_transform(g, grid), C, err, g)


def cutoff_gradient(c: CutoffSequence) -> np.ndarray:
    """Centred finite-difference gradient samples of ``g_eps``, shape ``(d, ...)``."""
    g = c.samples
    N = g.shape[0]
    return np.stack([(np.roll(g, -1, axis=a) - np.roll(g, 1, axis=a)) * (N / 2) for a in range(g.ndim)])


# --------------------------------------------------------------------------- structural conditions


def ball_functional(A: SpectralField, center, eps: float) -> float:
    """``eps^-2 int_{B_eps(center)} |A|^2`` by collocation quadrature."""
    r = np.sqrt(np.sum(_torus_offsets(A.grid, center) ** 2, axis=0))
    mag2 = sp.pointwise_magnitude(A) ** 2
    return float(np.sum(mag2[r < eps]) * A.grid.cell_volume / eps**2)


def _test_bank(grid: TorusGrid, size: int = 4) -> list[np.ndarray]:
    rng = np.random.default_rng(20240611)
    return [sp.random_field(grid, 1, rng, kmax=3).samples for _ in range(size)]


def verify_structural_conditions(A: SpectralField, K: CompactSet, eps_list, *, shifted=None,
                                 growth_factor: float = 4.0) -> DiagnosticsReport:
    """Tabulate the local-integrability functionals of a potential near ``K``.

    For each ``eps``: ``eps^-2 Leb(B^eps)``, ``eps^-2 int_{B^eps} |A|^2`` and
    ``sup |A|`` off ``B^eps``, plus the cutoff witnesses ``|int grad g . h|``
    and ``|int h^T A grad g|`` whenever the cutoff is resolvable.  The field
    passes when the ``|A|^2`` functional never exceeds ``growth_factor``
    times its value at the coarsest ``eps``.

    ``shifted`` optionally lists ``(center, eps)`` pairs at which the same
    functional is evaluated off ``K`` (the Morrey-type supremum); its growth
    is reported but does not enter the verdict.
    """
    grid = A.grid
    eps_list = sorted(eps_list, reverse=True)
    dist = K.distance(grid.points)
    mag2 = sp.pointwise_magnitude(A) ** 2
    mag = np.sqrt(mag2)
    vol = grid.cell_volume
    bank = _test_bank(grid)
    rows = []
    for eps in eps_list:
        inside = dist < eps
        row = {
            "eps": eps,
            "leb": float(np.sum(inside) * vol / eps**2),
            "energy": float(np.sum(mag2[inside]) * vol / eps**2),
            "sup_outside": float(np.max(mag[~inside])) if np.any(~inside) else 0.0,
        }
        if eps > 4.0 / grid.N:
            cut = build_cutoff(grid, K, eps)
            grad = cutoff_gradient(cut)
            Agrad = np.einsum("ij...,j...->i...", A.samples, grad)
            row["witness_grad"] = max(abs(float(np.sum(grad * h) * vol)) for h in bank)
            row["witness_A"] = max(abs(float(np.sum(h * Agrad) * vol)) for h in bank)
            row["cutoff_valid"] = cut.valid
        rows.append(row)
    energy = np.array([r["energy"] for r in rows])
    ratio = float(np.max(energy) / energy[0]) if energy[0] > 0 else (0.0 if not np.any(energy) else math.inf)
    details = {"table": rows}
    if shifted:
        vals = [ball_functional(A, c, e) for c, e in shifted]
        details["shifted"] = [{"center": list(c), "eps": e, "value": v} for (c, e), v in zip(shifted, vals)]
        details["shifted_growth"] = float(max(vals) / vals[0]) if vals[0] > 0 else math.inf
    return DiagnosticsReport(
        "structural_conditions", ratio, growth_factor, None,
        "pass" if ratio <= growth_factor else "fail",
        f"max_eps energy functional / coarsest value <= {growth_factor}",
        metadata={"N": grid.N, "dim": grid.dim, "K": K.to_dict()}, details=details)


def resolution_ledger(f: SpectralField) -> dict:
    """Share of L^2 mass above ``|k| > N/4``: what the grid is about to lose."""
    return {"N": f.grid.N, "mass_above_quarter": sp.mode_mass_above(f, f.grid.N / 4)}


# --------------------------------------------------------------------------- library


def shear_drift(grid: TorusGrid, amplitude: float = 1.0) -> DriftSpec:
    """``b(x) = (a sin 2 pi x_2, 0, ...)`` through ``A_21 = -a cos(2 pi x_2) / (2 pi)``."""
    if grid.dim < 2:
        raise UnsupportedError("shear needs dim >= 2")
    a21 = sp.from_function(lambda *x: -amplitude * np.cos(2 * np.pi * x[1]) / (2 * np.pi), grid)
    A = antisymmetric_from_upper(grid, {(0, 1): -a21})
    return DriftSpec(grid, A=A, name="shear", params={"amplitude": amplitude})


def _param_matrix(params, key, dim):
    return None if key not in params else np.asarray(params[key], dtype=float)


def build_drift(name: str, grid: TorusGrid, params: dict | None = None, seed: int = 0) -> DriftSpec:
    """Construct a library drift by name."""
    params = dict(params or {})
    if name == "zero":
        return DriftSpec(grid, name="zero")
    if name == "constant":
        c = params.get("c", [0.0] * grid.dim)
        return DriftSpec(grid, mean=tuple(c), name="constant", params={"c": list(c)})
    if name == "shear":
        return shear_drift(grid, float(params.get("amplitude", 1.0)))
    if name == "gff_curl":
        alpha = float(params.get("alpha", 1.5))
        d = gff_curl_drift(sample_gff(grid, int(params.get("seed", seed))), alpha)
        return replace(d, params={"alpha": alpha, "seed": int(params.get("seed", seed))})
    if name == "point_singularity":
        alpha = float(params.get("alpha", (grid.dim - 2) / 2))
        A = point_singularity_A(grid, alpha, _param_matrix(params, "B", grid.dim))
        return DriftSpec(grid, A=A, name=name, params={"alpha": alpha})
    if name == "morrey":
        n_bumps = int(params.get("n_bumps", 6))
        alphas = params.get("alpha_seq", [2.0 ** -n for n in range(1, n_bumps + 1)])
        eps = params.get("eps_seq", [2.0 ** (-2 * n - 2) for n in range(1, n_bumps + 1)])
        m = morrey_counterexample_A(grid, alphas, eps, params.get("v"), _param_matrix(params, "B", grid.dim))
        return DriftSpec(grid, A=m.A, name=name, params={"alpha_seq": list(alphas), "eps_seq": list(eps)})
    if name == "particle_lift":
        n_particles = int(params.get("n_particles", 2))
        base_dim = grid.dim // n_particles
        if base_dim * n_particles != grid.dim:
            raise ValueError(f"grid dim {grid.dim} is not a multiple of n_particles={n_particles}")
        base_grid = TorusGrid(base_dim, grid.N)
        base_name = params.get("base", "sine")
        if base_name == "sine":
            amp = float(params.get("amplitude", 1.0))
            b = sp.from_function(lambda *x: amp * np.sin(2 * np.pi * x[0]), base_grid)
            comps = np.zeros((base_dim,) + base_grid.shape, dtype=complex)
            comps[0] = b.coeffs
            base = DriftSpec(base_grid, b2=SpectralField(base_grid, comps), name="sine")
        else:
            base = build_drift(base_name, base_grid, params.get("base_params", {}), seed)
        return particle_lift(base, n_particles)
    raise KeyError(f"unknown drift {name!r}")


DRIFT_LIBRARY = ("zero", "constant", "shear", "gff_curl", "point_singularity", "morrey", "particle_lift")
