"""Mollification ``b -> rho^n * b`` in space and (for sampled drifts) in time.

The kernel is the normalized bump ``rho(x) = c_d exp(-1/(1-|x|^2))`` on the
unit ball.  Its Fourier transform is radial; it is tabulated once per
dimension by Gauss-Legendre quadrature of the Hankel integral and read back
through a cubic spline.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import j0

from .spectral import SpectralField

TABLE_S_MAX = 64.0
TABLE_STEP = 1.0 / 256
_PANELS = 64
_NODES_PER_PANEL = 16
_SPHERE_AREA = {1: 2.0, 2: 2 * np.pi, 3: 4 * np.pi}


def bump(r):
    """Unnormalized profile ``exp(-1/(1-r^2))`` for ``|r| < 1``, zero outside."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = np.abs(r) < 1
    out[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
    return out


@lru_cache(maxsize=None)
def _radial_nodes():
    x, w = np.polynomial.legendre.leggauss(_NODES_PER_PANEL)
    edges = np.linspace(0.0, 1.0, _PANELS + 1)
    h = np.diff(edges)
    r = (edges[:-1, None] + (x[None, :] + 1) * h[:, None] / 2).ravel()
    wr = (w[None, :] * h[:, None] / 2).ravel()
    return r, wr


def _radial_kernel(dim: int, z: np.ndarray) -> np.ndarray:
    if dim == 1:
        return np.cos(z)
    if dim == 2:
        return j0(z)
    return np.sinc(z / np.pi)


@dataclass(frozen=True)
class MollifierKernel:
    """Unit-mass bump on the unit ball of R^dim with a tabulated transform."""

    dim: int

    @property
    def normalization(self) -> float:
        return _normalization(self.dim)

    def density(self, x) -> np.ndarray:
        """``rho(x)`` for points of shape ``(..., dim)``."""
        x = np.asarray(x, dtype=float)
        return self.normalization * bump(np.linalg.norm(x, axis=-1))

    def transform_direct(self, s) -> np.ndarray:
        """``rho_hat(|xi| = s)`` by quadrature (reference path for the table)."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        r, w = _radial_nodes()
        weights = self.normalization * _SPHERE_AREA[self.dim] * w * bump(r) * r ** (self.dim - 1)
        out = np.empty_like(s)
        for start in range(0, s.size, 2048):
            blk = s.ravel()[start:start + 2048]
            out.ravel()[start:start + 2048] = _radial_kernel(self.dim, 2 * np.pi * np.outer(blk, r)) @ weights
        return out

    def transform(self, s) -> np.ndarray:
        """``rho_hat(s)``: spline table for ``s <= TABLE_S_MAX``, quadrature beyond."""
        s = np.abs(np.asarray(s, dtype=float))
        out = np.empty_like(s)
        inside = s <= TABLE_S_MAX
        out[inside] = _table(self.dim)(s[inside])
        if np.any(~inside):
            out[~inside] = self.transform_direct(s[~inside])
        return out


@lru_cache(maxsize=None)
def _normalization(dim: int) -> float:
    r, w = _radial_nodes()
    return 1.0 / (_SPHERE_AREA[dim] * np.sum(w * bump(r) * r ** (dim - 1)))


@lru_cache(maxsize=None)
def _table(dim: int) -> CubicSpline:
    s = np.arange(0.0, TABLE_S_MAX + TABLE_STEP / 2, TABLE_STEP)
    vals = MollifierKernel(dim).transform_direct(s)
    # rho_hat is even in s, so the clamped end at 0 has zero slope
    return CubicSpline(s, vals, bc_type=((1, 0.0), "not-a-knot"))


def mollify_space(f: SpectralField, n: float) -> SpectralField:
    """Periodized convolution with ``n^d rho(n x)``: multiply by ``rho_hat(k / n)``."""
    if n <= 0:
        raise ValueError("mollification level must be positive")
    kernel = MollifierKernel(f.grid.dim)
    symbol = kernel.transform(np.sqrt(f.grid.k_squared) / n)
    return f.with_coeffs(f.coeffs * symbol)


def time_weights(times: np.ndarray, n: float) -> np.ndarray:
    """Matrix ``W[i, j] = dt * rho_t^n(t_i - t_j)`` of the zero-extended time convolution.

    Weights are normalized so each row sums to one for a time point whose
    ``1/n`` neighbourhood lies inside the sampled window.
    """
    times = np.asarray(times, dtype=float)
    if times.size < 2:
        return np.ones((times.size, times.size))
    dt = np.diff(times)
    if not np.allclose(dt, dt[0], rtol=1e-9, atol=0):
        raise ValueError("time samples must be uniform")
    dt = dt[0]
    if dt > 1.0 / (2 * n):
        raise ValueError(f"time step {dt} is coarser than 1/(2n) = {1 / (2 * n)}; cannot resolve the time kernel")
    m = int(np.ceil(1.0 / (n * dt)))
    offsets = np.arange(-m, m + 1) * dt
    w = bump(n * offsets)
    w /= w.sum()
    lag = np.rint((times[:, None] - times[None, :]) / dt).astype(int)
    W = np.zeros(lag.shape)
    inside = np.abs(lag) <= m
    W[inside] = w[lag[inside] + m]
    return W


def mollify_drift(drift, n: float):
    """Spatial mollification of every stored component of a drift."""
    return drift.map_fields(lambda f: mollify_space(f, n))


def mollify_time(drift, n: float):
    """Time-then-space mollification of a sampled drift.

    The drift is extended by zero outside its sampled window before the
    time convolution, so frames within ``1/n`` of either end lose mass.
    """
    if drift.is_static:
        return mollify_drift(drift, n)
    W = time_weights(np.asarray(drift.times), n)
    frames = drift.frames
    mixed = [dict() for _ in frames]
    for name in ("A", "b1_raw", "b2"):
        present = [getattr(f, name) for f in frames]
        if all(v is None for v in present):
            continue
        ref = next(v for v in present if v is not None)
        stack = np.stack([np.zeros_like(ref.coeffs) if v is None else v.coeffs for v in present])
        combined = np.tensordot(W, stack, axes=(1, 0))
        for i, c in enumerate(combined):
            mixed[i][name] = mollify_space(ref.with_coeffs(c), n)
    means = W @ np.array([f.mean for f in frames])
    new_frames = tuple(replace(f, mean=tuple(m), **kw) for f, m, kw in zip(frames, means, mixed))
    return replace(drift, frames=new_frames)
