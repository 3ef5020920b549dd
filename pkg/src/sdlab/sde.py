"""Euler-Maruyama ensembles for ``dX = b^n(t, X) dt + sqrt(2) dB`` on the torus.

Every path owns a noise stream ``Generator(PCG64(SeedSequence(master_seed,
spawn_key=(path,))))`` and paths are processed in fixed-size chunks, so an
ensemble is a pure function of (drift, config, initial positions) however
many worker threads run the chunks.
"""
from __future__ import annotations

import csv
import math
import os
import struct
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import spectral as sp
from .mollify import mollify_drift, mollify_time
from .spectral import SpectralField

CHUNK_SIZE = 512
NOISE_BLOCK = 256
ENSEMBLE_MAGIC = b"SDLE"
ENSEMBLE_VERSION = 1
MAX_DENSITY_RATIO = 1e6


def thread_count() -> int:
    """Worker cap from ``SDL_THREADS`` (default: all cores)."""
    env = os.environ.get("SDL_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass(frozen=True)
class SimConfig:
    dt: float
    T: float
    n_paths: int
    save_stride: int = 1
    master_seed: int = 0
    eval_mode: str = "grid_interp"

    def __post_init__(self):
        if self.dt <= 0 or self.T <= 0 or self.n_paths < 1 or self.save_stride < 1:
            raise ValueError("dt, T, n_paths and save_stride must be positive")
        if abs(self.T / self.dt - round(self.T / self.dt)) > 1e-9:
            raise ValueError(f"T={self.T} is not an integer multiple of dt={self.dt}")
        if self.n_steps % self.save_stride:
            raise ValueError(f"save_stride={self.save_stride} does not divide {self.n_steps} steps")
        if self.eval_mode not in ("grid_interp", "direct_sum"):
            raise ValueError(f"unknown eval_mode {self.eval_mode!r}")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def times(self) -> np.ndarray:
        return np.arange(0, self.n_steps + 1, self.save_stride) * self.dt


def wrap(u: np.ndarray) -> np.ndarray:
    """Reduce to ``[0, 1)``; the rare ``1.0`` produced by rounding maps to 0."""
    w = np.mod(u, 1.0)
    w[w >= 1.0] = 0.0
    return w


def path_seed_sequence(master_seed: int, path: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master_seed, spawn_key=(path,))


def path_seed(master_seed: int, path: int) -> int:
    return int(path_seed_sequence(master_seed, path).generate_state(1, np.uint64)[0])


# --------------------------------------------------------------------------- tracked functionals


@dataclass(frozen=True)
class Tracker:
    """Functional accumulated at every Euler step.

    ``kind="time"``: ``fn(t, x, b) -> (P,)``; trapezoid ``int_0^T fn ds`` and
    the running ``sup_t |int_0^t fn ds|``.
    ``kind="ito"``: ``fn(t, x, b) -> (P, d)``; left-point ``int_0^T a . dB``
    and ``int_0^T |a|^2 ds``.
    """

    name: str
    fn: Callable
    kind: str = "time"

    def __post_init__(self):
        if self.kind not in ("time", "ito"):
            raise ValueError("tracker kind must be 'time' or 'ito'")


@dataclass(frozen=True)
class Ensemble:
    times: np.ndarray
    wrapped: np.ndarray  # (paths, times, d)
    unwrapped: np.ndarray
    path_seeds: np.ndarray
    config: SimConfig
    drift_id: str
    aborted: np.ndarray = None
    tracked: dict = field(default_factory=dict)
    initial_law: str = "uniform"

    @property
    def n_paths(self) -> int:
        return self.wrapped.shape[0]

    @property
    def dim(self) -> int:
        return self.wrapped.shape[2]

    @property
    def x0(self) -> np.ndarray:
        return self.wrapped[:, 0]

    @property
    def final(self) -> np.ndarray:
        return self.wrapped[:, -1]

    def valid(self) -> np.ndarray:
        return ~self.aborted if self.aborted is not None else np.ones(self.n_paths, bool)


# --------------------------------------------------------------------------- initial law


def sample_initial(density: SpectralField | None, n_paths: int, seed: int, dim: int | None = None):
    """Initial positions from a grid density (rejection sampling) or uniform.

    Returns ``(positions, info)`` where ``info`` records the clipped negative
    mass and acceptance rate.
    """
    rng = np.random.default_rng(seed)
    if density is None:
        if dim is None:
            raise ValueError("uniform sampling needs dim")
        return rng.random((n_paths, dim)), {"law": "uniform", "clipped_mass": 0.0, "acceptance": 1.0}
    vals = np.asarray(density.samples, dtype=float)
    if np.min(vals) < -1e-8 * max(np.max(np.abs(vals)), 1.0):
        raise ValueError("initial density is negative on the grid")
    clipped = float(-np.sum(np.minimum(vals, 0)) * density.grid.cell_volume)
    vals = np.maximum(vals, 0.0)
    mass = float(np.mean(vals))
    if mass <= 0:
        raise ValueError("initial density has zero mass")
    vals = vals / mass
    top = float(np.max(vals))
    if top > MAX_DENSITY_RATIO:
        raise ValueError(f"density max/mean ratio {top:.3g} exceeds {MAX_DENSITY_RATIO:g}; rejection would stall")
    d = density.grid.dim
    out = np.empty((0, d))
    tries = 0
    while out.shape[0] < n_paths:
        m = max(2 * (n_paths - out.shape[0]) * int(math.ceil(top)), 64)
        cand = rng.random((m, d))
        u = rng.random(m) * top
        keep = cand[u < sp.interpolate_samples(vals, cand)]
        out = np.concatenate([out, keep])
        tries += m
    return out[:n_paths], {"law": "density", "clipped_mass": clipped, "acceptance": n_paths / tries}


# --------------------------------------------------------------------------- simulation


class _DriftEvaluator:
    def __init__(self, drift, mode: str):
        self.mode = mode
        self.static = drift.is_static
        if self.static:
            self.fields = [drift.field()]
            self.times = np.array([0.0])
        else:
            self.fields = [f.field() for f in drift.frames]
            self.times = np.asarray(drift.times)
        self.samples = [np.asarray(f.samples) for f in self.fields]
        self.sup = max(float(np.max(sp.pointwise_magnitude(f))) for f in self.fields)

    def __call__(self, t: float, x: np.ndarray) -> np.ndarray:
        i = 0 if self.static else max(int(np.searchsorted(self.times, t + 1e-12, side="right")) - 1, 0)
        if self.mode == "grid_interp":
            return sp.interpolate_samples(self.samples[i], x).T
        return sp.evaluate_at(self.fields[i], x, "direct_sum").T


def stability_bound(sup_b: float) -> float:
    return 0.1 / (1.0 + sup_b**2)


def _run_chunk(paths: np.ndarray, x0: np.ndarray, evaluator: _DriftEvaluator, cfg: SimConfig, trackers):
    P, d = x0.shape
    dt = cfg.dt
    n_steps = cfg.n_steps
    n_save = n_steps // cfg.save_stride + 1
    gens = [np.random.Generator(np.random.PCG64(path_seed_sequence(cfg.master_seed, int(p)))) for p in paths]
    U = np.array(x0, dtype=float)
    X = wrap(U)
    wr = np.empty((P, n_save, d))
    un = np.empty((P, n_save, d))
    wr[:, 0], un[:, 0] = X, U
    alive = np.ones(P, bool)
    acc = {}
    prev = {}
    b = evaluator(0.0, X)
    for tr in trackers:
        if tr.kind == "time":
            prev[tr.name] = np.asarray(tr.fn(0.0, X, b), dtype=float)
            acc[tr.name] = [np.zeros(P), np.zeros(P)]
        else:
            acc[tr.name] = [np.zeros(P), np.zeros(P)]
    sq = math.sqrt(2 * dt)
    noise = None
    for m in range(n_steps):
        if m % NOISE_BLOCK == 0:
            block = min(NOISE_BLOCK, n_steps - m)
            noise = np.stack([g.standard_normal((block, d)) for g in gens], axis=1)
        zeta = noise[m % NOISE_BLOCK]
        t = m * dt
        for tr in trackers:
            if tr.kind == "ito":
                a = np.asarray(tr.fn(t, X, b), dtype=float)
                acc[tr.name][0] += np.sum(a * zeta, axis=1) * math.sqrt(dt)
                acc[tr.name][1] += np.sum(a * a, axis=1) * dt
        U = U + b * dt + sq * zeta
        bad = alive & ~np.all(np.isfinite(U), axis=1)
        if np.any(bad):
            alive &= ~bad
            U[~alive] = np.nan
        Xs = wrap(U)
        X = Xs if alive.all() else np.where(alive[:, None], Xs, 0.0)
        t1 = (m + 1) * dt
        b = evaluator(t1, X)
        for tr in trackers:
            if tr.kind == "time":
                cur = np.asarray(tr.fn(t1, X, b), dtype=float)
                acc[tr.name][0] += 0.5 * dt * (prev[tr.name] + cur)
                np.maximum(acc[tr.name][1], np.abs(acc[tr.name][0]), out=acc[tr.name][1])
                prev[tr.name] = cur
        if (m + 1) % cfg.save_stride == 0:
            j = (m + 1) // cfg.save_stride
            wr[:, j], un[:, j] = Xs, U
    return wr, un, ~alive, acc


def prepare_drift(drift, mollify_n):
    """Mollified drift actually simulated (``None``: use ``drift`` as given)."""
    if mollify_n is None:
        return drift
    return mollify_drift(drift, mollify_n) if drift.is_static else mollify_time(drift, mollify_n)


def simulate(drift, mollify_n, init, config: SimConfig, *, trackers=(), threads: int | None = None,
             initial_law: str = "custom") -> Ensemble:
    """Euler-Maruyama ensemble.

    Parameters
    ----------
    drift : DriftSpec
    mollify_n : float or None
        Mollification level; ``None`` simulates ``drift`` unchanged.
    init : ndarray, shape (n_paths, d)
        Initial positions (see :func:`sample_initial`).
    config : SimConfig
    trackers : sequence of Tracker
        Functionals accumulated along the fine time grid.
    """
    bn = prepare_drift(drift, mollify_n)
    x0 = np.asarray(init, dtype=float)
    d = bn.grid.dim
    if x0.shape != (config.n_paths, d):
        raise ValueError(f"initial positions must have shape {(config.n_paths, d)}")
    evaluator = _DriftEvaluator(bn, config.eval_mode)
    if config.dt > stability_bound(evaluator.sup):
        warnings.warn(f"dt={config.dt} exceeds the advisory bound {stability_bound(evaluator.sup):.3g}",
                      stacklevel=2)
    names = [t.name for t in trackers]
    if len(set(names)) != len(names):
        raise ValueError("tracker names must be unique")
    starts = range(0, config.n_paths, CHUNK_SIZE)
    jobs = [np.arange(s, min(s + CHUNK_SIZE, config.n_paths)) for s in starts]
    workers = min(threads or thread_count(), len(jobs))

    def run(idx):
        return _run_chunk(idx, x0[idx], evaluator, config, trackers)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]
    wrapped = np.concatenate([r[0] for r in results])
    unwrapped = np.concatenate([r[1] for r in results])
    aborted = np.concatenate([r[2] for r in results])
    tracked = {}
    for tr in trackers:
        a = np.concatenate([r[3][tr.name][0] for r in results])
        b = np.concatenate([r[3][tr.name][1] for r in results])
        tracked[tr.name] = {"integral": a, "sup": b} if tr.kind == "time" else {"ito": a, "quadratic": b}
    seeds = np.array([path_seed(config.master_seed, p) for p in range(config.n_paths)], dtype=np.uint64)
    return Ensemble(config.times, wrapped, unwrapped, seeds, config, bn.digest(), aborted, tracked, initial_law)


# --------------------------------------------------------------------------- functionals of saved paths


def additive_functional(ens: Ensemble, f, times=None):
    """Trapezoid ``int_0^t f(s, X_s) ds`` along saved paths.

    ``f`` is a scalar field (static), a list of scalar fields (one per saved
    time, checked against ``times``) or a callable ``f(t, x) -> (P,)``.
    Returns ``(integral, running_sup)`` per path.
    """
    n_t = len(ens.times)
    if isinstance(f, SpectralField):
        vals = [sp.interpolate_samples(f.samples, ens.wrapped[:, i]) for i in range(n_t)]
    elif callable(f):
        vals = [np.asarray(f(t, ens.wrapped[:, i])) for i, t in enumerate(ens.times)]
    else:
        f = list(f)
        if len(f) != n_t or (times is not None and not np.allclose(times, ens.times)):
            raise ValueError("time-sampled integrand does not match the ensemble's saved times")
        vals = [sp.interpolate_samples(fi.samples, ens.wrapped[:, i]) for i, fi in enumerate(f)]
    vals = np.stack(vals, axis=1)
    dts = np.diff(ens.times)
    running = np.concatenate([np.zeros((ens.n_paths, 1)),
                              np.cumsum(0.5 * dts * (vals[:, 1:] + vals[:, :-1]), axis=1)], axis=1)
    return running[:, -1], np.max(np.abs(running), axis=1)


# --------------------------------------------------------------------------- export


def export_csv(ens: Ensemble, path) -> None:
    """Columns ``path, t, x1..xd, u1..ud`` (wrapped then unwrapped coordinates)."""
    d = ens.dim
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path", "t"] + [f"x{i + 1}" for i in range(d)] + [f"u{i + 1}" for i in range(d)])
        for p in range(ens.n_paths):
            for j, t in enumerate(ens.times):
                w.writerow([p, repr(float(t))] + [repr(float(v)) for v in ens.wrapped[p, j]]
                           + [repr(float(v)) for v in ens.unwrapped[p, j]])


def export_binary(ens: Ensemble, path) -> None:
    """``SDLE`` framing: magic, version, dim, paths, times (u32 LE), then float64 LE blocks."""
    header = ENSEMBLE_MAGIC + struct.pack("<4I", ENSEMBLE_VERSION, ens.dim, ens.n_paths, len(ens.times))
    body = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes()
                    for a in (ens.times, ens.wrapped, ens.unwrapped))
    Path(path).write_bytes(header + ens.path_seeds.astype("<u8").tobytes() + body)


def load_binary(path) -> dict:
    data = Path(path).read_bytes()
    if data[:4] != ENSEMBLE_MAGIC:
        raise ValueError(f"{path}: not an ensemble file")
    version, d, P, T = struct.unpack("<4I", data[4:20])
    if version != ENSEMBLE_VERSION:
        raise ValueError(f"{path}: unsupported ensemble version {version}")
    off = 20
    seeds = np.frombuffer(data, "<u8", P, off)
    off += 8 * P
    times = np.frombuffer(data, "<f8", T, off)
    off += 8 * T
    wrapped = np.frombuffer(data, "<f8", P * T * d, off).reshape(P, T, d)
    off += 8 * P * T * d
    unwrapped = np.frombuffer(data, "<f8", P * T * d, off).reshape(P, T, d)
    return {"path_seeds": seeds, "times": times, "wrapped": wrapped, "unwrapped": unwrapped}
