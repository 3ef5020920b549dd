"""Statistical witnesses for energy-solution properties of simulated ensembles.

Every check returns a :class:`DiagnosticsReport`.  Constants hidden in
``<~`` estimates are handled by calibration: run the check once on the
Brownian baseline (``b = 0``), keep the reported ratio, and pass it back as
``calibration`` for other drifts.  Unless stated otherwise, statistical
comparisons use 3-standard-error bands.

Test functions are evaluated at path positions by their exact Fourier
series (:func:`sdlab.spectral.evaluate_sparse`), so they should be
band-limited with few modes.  Drifts are evaluated exactly as in the
simulation (grid interpolation of the simulated field).
"""
from __future__ import annotations

import math

import numpy as np
from scipy import stats

from . import spectral as sp
from .reports import DiagnosticsReport, one_sided, two_sided
from .sde import Ensemble, SimConfig, Tracker, simulate
from .spectral import SpectralField

__all__ = [
    "DiagnosticsReport",
    "PreconditionError",
    "TimeProfile",
    "running_integral",
    "ito_trick_oracle",
    "ito_trick_check",
    "ito_trick_scaling",
    "incompressibility_check",
    "energy_estimate_check",
    "martingale_check",
    "duality_check",
    "novikov_tracker",
    "novikov_check",
    "wasserstein_1d",
    "mollified_convergence",
    "variance_growth",
]

SE_BAND = 3.0
HEAVY_TAIL_RATIO = 0.5


class PreconditionError(ValueError):
    """Raised when an ensemble does not satisfy a check's precondition."""


class TimeProfile:
    """Separable test function ``f(t, x) = g(t) h(x)``.

    ``g`` and its derivative ``dg`` are vectorised callables of ``t``.
    """

    def __init__(self, h: SpectralField, g=None, dg=None):
        if h.rank != 0:
            raise ValueError("test functions are scalar fields")
        self.h = h
        self.g = g if g is not None else (lambda t: np.ones_like(np.asarray(t, dtype=float)))
        self.dg = dg if dg is not None else (lambda t: np.zeros_like(np.asarray(t, dtype=float)))

    @classmethod
    def coerce(cls, f) -> "TimeProfile":
        return f if isinstance(f, cls) else cls(f)


def _meta(ens: Ensemble, **extra) -> dict:
    cfg = ens.config
    out = {"n_paths": int(ens.n_paths), "dt": cfg.dt, "T": cfg.T, "master_seed": cfg.master_seed,
           "drift_id": ens.drift_id, "initial_law": ens.initial_law}
    out.update(extra)
    return out


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        return float(np.mean(x)), float("nan")
    return float(np.mean(x)), float(np.std(x, ddof=1) / math.sqrt(x.size))


def _valid_positions(ens: Ensemble) -> np.ndarray:
    ok = ens.valid()
    if not np.all(ok):
        return ens.wrapped[ok]
    return ens.wrapped


def running_integral(ens: Ensemble, f) -> np.ndarray:
    """Trapezoid ``int_0^t f(s, X_s) ds`` at every saved time, shape ``(P, n_times)``.

    ``f`` is a scalar :class:`SpectralField`, a :class:`TimeProfile` or a
    callable ``f(t, x) -> (P,)``.  Aborted paths are dropped.
    """
    X = _valid_positions(ens)
    if callable(f) and not isinstance(f, (SpectralField, TimeProfile)):
        vals = np.stack([np.asarray(f(t, X[:, i]), dtype=float) for i, t in enumerate(ens.times)], axis=1)
    else:
        prof = TimeProfile.coerce(f)
        vals = np.stack([prof.g(t) * sp.evaluate_sparse(prof.h, X[:, i]) for i, t in enumerate(ens.times)],
                        axis=1)
    dts = np.diff(ens.times)
    steps = 0.5 * dts * (vals[:, 1:] + vals[:, :-1])
    return np.concatenate([np.zeros((vals.shape[0], 1)), np.cumsum(steps, axis=1)], axis=1)


# --------------------------------------------------------------------------- Ito trick


def ito_trick_oracle(T: float, k: int = 1) -> float:
    """``E[(int_0^T Lap f(X_s) ds)^2]`` for ``f = cos(2 pi k x_1)``, Brownian ``X`` from uniform."""
    lam = 4 * math.pi**2 * k**2
    return lam * T - (1.0 - math.exp(-lam * T))


def _require_stationary(ens: Ensemble) -> None:
    if ens.initial_law != "uniform":
        raise PreconditionError("the Ito trick needs a stationary (uniform) initial law")


def _ito_bound_shape(f: SpectralField, T: float, p: float, q: float) -> float:
    grad = sp.lebesgue_norm(sp.gradient(f), p)
    time_norm = grad if np.isinf(q) else grad * T ** (1.0 / q)
    expo = p * (0.5 - (0.0 if np.isinf(q) else 1.0 / q))
    return T**expo * time_norm**p


def ito_trick_check(ens: Ensemble, f: SpectralField, p: float = 2.0, q: float = math.inf, *,
                    oracle: float | None = None, calibration: float | None = None,
                    headroom: float = 1.5) -> DiagnosticsReport:
    """``E[sup_t |int_0^t Lap f(X_s) ds|^p]`` against ``T^{p(1/2 - 1/q)} ||grad f||^p_{L^q_T L^p}``.

    With ``oracle`` the terminal moment ``E[|int_0^T Lap f|^p]`` is compared
    with it two-sidedly (3 SE).  With ``calibration`` (the ratio from a
    ``b = 0`` run) the verdict is ``ratio <= headroom * calibration``.
    Without either the run is a calibration and the verdict is
    ``inconclusive``.
    """
    _require_stationary(ens)
    if f.rank != 0:
        raise ValueError("f must be scalar")
    lap = sp.apply_multiplier(f, sp.laplacian())
    run = running_integral(ens, lap)
    T = float(ens.times[-1] - ens.times[0])
    sup_p = np.max(np.abs(run), axis=1) ** p
    term_p = np.abs(run[:, -1]) ** p
    stat_sup, se_sup = _mean_se(sup_p)
    stat_term, se_term = _mean_se(term_p)
    shape = _ito_bound_shape(f, T, p, q)
    ratio = stat_sup / shape if shape > 0 else 0.0
    meta = _meta(ens, p=p, q=q)
    details = {"sup_moment": stat_sup, "sup_moment_se": se_sup, "terminal_moment": stat_term,
               "terminal_moment_se": se_term, "bound_shape": shape, "ratio": ratio}
    if oracle is not None:
        return two_sided("ito_trick", stat_term, oracle, SE_BAND * se_term, se=se_term,
                         rule="|E[|int Lap f|^p] - oracle| <= 3 SE", metadata=meta, details=details)
    if calibration is not None:
        details["calibration"] = calibration
        return one_sided("ito_trick", ratio, headroom * calibration, se=se_sup / shape if shape else 0.0,
                         rule=f"ratio <= {headroom} * calibration", metadata=meta, details=details)
    return DiagnosticsReport("ito_trick", ratio, ratio, se_sup / shape if shape else 0.0, "inconclusive",
                             "calibration run (b = 0 baseline)", meta, details)


def ito_trick_scaling(ens: Ensemble, f: SpectralField, horizons, p: float = 2.0, q: float = math.inf, *,
                      rel_tol: float = 0.2) -> DiagnosticsReport:
    """Log-log fit of ``E[sup_{t <= T'} |int Lap f|^p]`` over prefixes ``T'`` of one ensemble.

    By stationarity each prefix of a stationary ensemble is itself a
    stationary ensemble with horizon ``T'``.  Passes iff the fitted exponent
    is within ``rel_tol`` (relative) of ``p (1/2 - 1/q)``.
    """
    _require_stationary(ens)
    lap = sp.apply_multiplier(f, sp.laplacian())
    run = running_integral(ens, lap)
    rows = []
    for Th in horizons:
        j = int(np.argmin(np.abs(ens.times - Th)))
        if abs(ens.times[j] - Th) > 1e-9 * max(1.0, Th):
            raise ValueError(f"horizon {Th} is not a saved time")
        m, se = _mean_se(np.max(np.abs(run[:, : j + 1]), axis=1) ** p)
        rows.append({"T": float(Th), "moment": m, "se": se})
    logs_T = np.log([r["T"] for r in rows])
    logs_m = np.log([r["moment"] for r in rows])
    slope = float(np.polyfit(logs_T, logs_m, 1)[0])
    target = p * (0.5 - (0.0 if np.isinf(q) else 1.0 / q))
    return two_sided("ito_trick_scaling", slope, target, rel_tol * abs(target),
                     rule=f"|slope - p(1/2-1/q)| <= {rel_tol} * p(1/2-1/q)",
                     metadata=_meta(ens, p=p, q=q), details={"table": rows})


# --------------------------------------------------------------------------- incompressibility


def incompressibility_check(ens: Ensemble, *, bins: int = 16, times=None, alpha: float = 0.01) -> DiagnosticsReport:
    """Histogram density ratio and uniformity test at saved times.

    Statistic: the largest ``P(X_t in bin) / Leb(bin)`` over bins and the
    chosen times, the empirical constant ``M`` of the incompressibility
    bound.  For a uniform initial law the verdict passes iff every
    chi-square p-value against uniform exceeds ``alpha``; otherwise the
    report is exploratory.
    """
    d = ens.dim
    sel = ens.times[1:] if times is None else np.asarray(times, dtype=float)
    X = _valid_positions(ens)
    n = X.shape[0]
    rows = []
    for t in sel:
        j = int(np.argmin(np.abs(ens.times - t)))
        if abs(ens.times[j] - t) > 1e-9:
            raise ValueError(f"time {t} is not a saved time")
        idx = np.minimum((X[:, j] * bins).astype(np.int64), bins - 1)
        flat = np.ravel_multi_index(idx.T, (bins,) * d)
        counts = np.bincount(flat, minlength=bins**d)
        ratio = float(counts.max() / (n / bins**d))
        row = {"t": float(ens.times[j]), "max_ratio": ratio, "min_ratio": float(counts.min() / (n / bins**d))}
        if ens.initial_law == "uniform":
            row["chi2_p"] = float(stats.chisquare(counts).pvalue)
        rows.append(row)
    stat = max(r["max_ratio"] for r in rows)
    meta = _meta(ens, bins=bins)
    if ens.initial_law != "uniform":
        return DiagnosticsReport("incompressibility", stat, 1.0, None, "inconclusive",
                                 "non-uniform start: density ratio reported only", meta, {"table": rows}, hard=False)
    pmin = min(r["chi2_p"] for r in rows)
    verdict = "pass" if pmin > alpha else "fail"
    return DiagnosticsReport("incompressibility", stat, 1.0, None, verdict,
                             f"chi-square p > {alpha} at every tested time", meta,
                             {"table": rows, "min_p_value": pmin})


# --------------------------------------------------------------------------- energy estimate


def _h_minus1_time_norm(f, times) -> float:
    prof = TimeProfile.coerce(f)
    g = np.asarray(prof.g(times), dtype=float)
    T = times[-1] - times[0]
    gn = math.sqrt(float(np.trapezoid(g**2, times))) if len(times) > 1 else abs(float(g[0])) * math.sqrt(T)
    return gn * sp.sobolev_norm(prof.h, -1.0)


def energy_estimate_check(ens: Ensemble, f_bank, *, percentile: float = 95.0,
                          calibration: float | None = None, headroom: float = 2.0) -> DiagnosticsReport:
    """Percentile of ``sup_t |int_0^t f(s, X_s) ds|`` over ``||f||_{L^2_T H^{-1}}``.

    The statistic is the largest ratio over the bank.  With
    ``calibration`` (the baseline ratio) the verdict is one-sided against
    ``headroom * calibration``; otherwise the report is a calibration.
    """
    ratios = []
    for f in f_bank:
        run = running_integral(ens, f)
        sup = np.max(np.abs(run), axis=1)
        norm = _h_minus1_time_norm(f, ens.times)
        ratios.append(float(np.percentile(sup, percentile) / norm) if norm > 0 else 0.0)
    stat = max(ratios)
    meta = _meta(ens, percentile=percentile, bank_size=len(ratios))
    details = {"ratios": ratios}
    if calibration is None:
        return DiagnosticsReport("energy_estimate", stat, stat, None, "inconclusive",
                                 "calibration run (b = 0 baseline)", meta, details)
    details["calibration"] = calibration
    return one_sided("energy_estimate", stat, headroom * calibration,
                     rule=f"max ratio <= {headroom} * calibration", metadata=meta, details=details)


# --------------------------------------------------------------------------- martingale problem


def _check_drift(ens: Ensemble, drift) -> None:
    if drift.digest() != ens.drift_id:
        raise PreconditionError("drift does not match the ensemble (pass the mollified drift actually simulated)")


def _drift_at(drift, t: float, X: np.ndarray) -> np.ndarray:
    b = drift.field(t if not drift.is_static else None)
    return sp.interpolate_samples(np.asarray(b.samples), X)


def martingale_check(ens: Ensemble, drift, f, *, qv_factor: float = 2.0) -> DiagnosticsReport:
    """Dynkin martingale ``M^f_T`` and its quadratic variation.

    ``M^f_T = f(T, X_T) - f(0, X_0) - int_0^T (d_s + Lap + b . grad) f ds``
    with the integral by trapezoid over the saved times (use
    ``save_stride = 1`` so this is the simulation grid).  Passes iff
    ``|mean M| <= 3 SE`` and ``mean(M^2 - qv_factor int |grad f|^2)`` is
    within 3 SE of zero.
    """
    _check_drift(ens, drift)
    prof = TimeProfile.coerce(f)
    h = prof.h
    lap = sp.apply_multiplier(h, sp.laplacian())
    grad = sp.gradient(h)
    X = _valid_positions(ens)
    ts = ens.times
    gen_vals, qv_vals = [], []
    for i, t in enumerate(ts):
        x = X[:, i]
        gv = sp.evaluate_sparse(grad, x)  # (d, P)
        b = _drift_at(drift, t, x)
        g = prof.g(t)
        val = prof.dg(t) * sp.evaluate_sparse(h, x) + g * (sp.evaluate_sparse(lap, x) + np.sum(b * gv, axis=0))
        gen_vals.append(val)
        qv_vals.append(g**2 * np.sum(gv**2, axis=0))
    gen_vals = np.stack(gen_vals, axis=1)
    qv_vals = np.stack(qv_vals, axis=1)
    dts = np.diff(ts)
    drift_int = np.sum(0.5 * dts * (gen_vals[:, 1:] + gen_vals[:, :-1]), axis=1)
    qv_int = np.sum(0.5 * dts * (qv_vals[:, 1:] + qv_vals[:, :-1]), axis=1)
    M = (prof.g(ts[-1]) * sp.evaluate_sparse(h, X[:, -1]) - prof.g(ts[0]) * sp.evaluate_sparse(h, X[:, 0])
         - drift_int)
    m, se = _mean_se(M)
    dq, dq_se = _mean_se(M**2 - qv_factor * qv_int)
    ok_mean = abs(m) <= SE_BAND * se if se > 0 else abs(m) <= 1e-12
    ok_qv = abs(dq) <= SE_BAND * dq_se if dq_se > 0 else abs(dq) <= 1e-12
    details = {"mean_M": m, "se_M": se, "second_moment": float(np.mean(M**2)),
               "qv_expectation": float(qv_factor * np.mean(qv_int)), "qv_defect": dq, "qv_defect_se": dq_se,
               "mean_ok": bool(ok_mean), "qv_ok": bool(ok_qv)}
    return DiagnosticsReport("martingale", m, 0.0, se, "pass" if ok_mean and ok_qv else "fail",
                             "|mean M| <= 3 SE and |mean(M^2 - qv_factor int|grad f|^2)| <= 3 SE",
                             _meta(ens, qv_factor=qv_factor), details)


# --------------------------------------------------------------------------- duality


def duality_check(ens: Ensemble, traj, u_T: SpectralField, eta0: SpectralField | None = None, *,
                  solver_tol: float | None = None) -> DiagnosticsReport:
    """Monte-Carlo ``E[u_T(X_T)]`` against ``<u(0), eta0>`` from the backward solve.

    ``eta0`` is the initial density the ensemble was sampled from
    (``None``: uniform).  Tolerance: ``3 SE + 10 solver_tol``; by default
    ``solver_tol`` is the trajectory's energy-ledger defect times
    ``||u_T||_inf``, an a-posteriori proxy for the backward error.
    """
    from .kbe import energy_balance_defect, initial_pairing

    T_ens = float(ens.times[-1] - ens.times[0])
    T_pde = float(traj.times[-1] - traj.times[0])
    if abs(T_ens - T_pde) > 1e-9 * max(1.0, T_ens):
        raise ValueError(f"horizon mismatch: ensemble T={T_ens}, trajectory T={T_pde}")
    if traj.drift_id and traj.drift_id != ens.drift_id:
        raise PreconditionError("ensemble and trajectory were produced with different drifts")
    if eta0 is None:
        eta0 = sp.constant(u_T.grid, 1.0)
    X = _valid_positions(ens)
    vals = sp.evaluate_sparse(u_T, X[:, -1])
    mc, se = _mean_se(vals)
    pde = initial_pairing(traj, eta0)
    if solver_tol is None:
        solver_tol = energy_balance_defect(traj) * float(traj.ledger[-1, 0])
    tol = SE_BAND * se + 10.0 * solver_tol
    return two_sided("duality", mc, pde, tol, se=se, rule="|MC - PDE| <= 3 SE + 10 solver_tol",
                     metadata=_meta(ens, pde_dt=traj.dt, scheme=traj.scheme),
                     details={"solver_tol": solver_tol, "se_contribution": SE_BAND * se,
                              "solver_contribution": 10.0 * solver_tol, "difference": mc - pde})


# --------------------------------------------------------------------------- Novikov


def novikov_tracker(a, name: str = "novikov") -> Tracker:
    """Ito tracker for ``int a(X_s) . dB_s``; ``a`` is a vector field or a constant vector."""
    if isinstance(a, SpectralField):
        if a.rank != 1:
            raise ValueError("a must be a vector field")
        samples = np.asarray(a.samples)
        return Tracker(name, lambda t, x, b: sp.interpolate_samples(samples, x).T, "ito")
    vec = np.asarray(a, dtype=float)
    return Tracker(name, lambda t, x, b: np.broadcast_to(vec, x.shape), "ito")


def novikov_check(ens: Ensemble, p: float, *, tracker: str = "novikov", exact: float | None = None,
                  calibration: float | None = None, a_norm: float | None = None) -> DiagnosticsReport:
    """``E[exp(p int a . dB - p/2 int |a|^2 ds)]`` from an Ito tracker.

    With ``exact`` the comparison is two-sided within 3 SE.  With
    ``calibration`` ``C`` and ``a_norm`` (``||a||_{L^4_T B^0_{2r,1,2}}``)
    it is one-sided against ``exp(C a_norm^4)``.  A standard error above
    half the statistic marks the run ``inconclusive``.
    """
    if tracker not in ens.tracked or "ito" not in ens.tracked[tracker]:
        raise PreconditionError(f"ensemble has no Ito tracker named {tracker!r}")
    ok = ens.valid()
    I = ens.tracked[tracker]["ito"][ok]
    Q = ens.tracked[tracker]["quadratic"][ok]
    vals = np.exp(p * I - 0.5 * p * Q)
    m, se = _mean_se(vals)
    meta = _meta(ens, p=p)
    details = {"max_sample": float(np.max(vals)), "mean_quadratic": float(np.mean(Q))}
    if not np.isfinite(m) or (np.isfinite(se) and se > HEAVY_TAIL_RATIO * m):
        return DiagnosticsReport("novikov", m, float("nan") if exact is None else exact, se, "inconclusive",
                                 "standard error above half the estimate", meta, details)
    if exact is not None:
        return two_sided("novikov", m, exact, SE_BAND * se, se=se, rule="|MC - exact| <= 3 SE",
                         metadata=meta, details=details)
    if calibration is not None and a_norm is not None:
        details.update(calibration=calibration, a_norm=a_norm)
        return one_sided("novikov", m, math.exp(calibration * a_norm**4), se=se,
                         rule="statistic <= exp(C ||a||^4)", metadata=meta, details=details)
    if a_norm:
        details["implied_C"] = math.log(max(m, 1e-300)) / a_norm**4
    return DiagnosticsReport("novikov", m, m, se, "inconclusive", "calibration run", meta, details)


# --------------------------------------------------------------------------- convergence in law


def wasserstein_1d(x: np.ndarray, y: np.ndarray) -> float:
    """W1 between two equal-size empirical measures on the line (sorted samples)."""
    x, y = np.sort(np.asarray(x, float)), np.sort(np.asarray(y, float))
    if x.shape != y.shape:
        raise ValueError("samples must have equal size")
    return float(np.mean(np.abs(x - y)))


def _marginal_distance(Ua: np.ndarray, Ub: np.ndarray, batches: int) -> tuple[float, float]:
    d = Ua.shape[1]
    full = max(wasserstein_1d(Ua[:, i], Ub[:, i]) for i in range(d))
    parts = np.array_split(np.arange(Ua.shape[0]), batches)
    per = [max(wasserstein_1d(Ua[idx, i], Ub[idx, i]) for i in range(d)) for idx in parts]
    return full, float(np.std(per, ddof=1) / math.sqrt(batches))


def mollified_convergence(drift, n_list, config: SimConfig, *, init=None, batches: int = 10,
                          threads: int | None = None, slack: float = 2.0) -> DiagnosticsReport:
    """W1 distances between displacement marginals at consecutive mollification levels.

    All levels share seeds and initial positions, so paths are coupled.
    The compared law is the unwrapped displacement ``X_T - X_0`` per
    coordinate (wrapped marginals are uniform for every level).  Passes iff
    ``d_{k+1} <= d_k + slack * sqrt(se_k^2 + se_{k+1}^2)`` along the list.
    """
    n_list = list(n_list)
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be increasing")
    d = drift.grid.dim
    if init is None:
        rng = np.random.default_rng(config.master_seed)
        init = rng.random((config.n_paths, d))
    disp = []
    ids = []
    for n in n_list:
        ens = simulate(drift, n, init, config, threads=threads, initial_law="uniform")
        disp.append(ens.unwrapped[:, -1] - ens.unwrapped[:, 0])
        ids.append(ens.drift_id)
    rows = []
    for k in range(len(n_list) - 1):
        w, se = _marginal_distance(disp[k], disp[k + 1], batches)
        rows.append({"n": n_list[k], "n_next": n_list[k + 1], "w1": w, "se": se})
    ok = all(r2["w1"] <= r1["w1"] + slack * math.hypot(r1["se"], r2["se"]) for r1, r2 in zip(rows, rows[1:]))
    stat = rows[-1]["w1"] if rows else 0.0
    meta = {"n_paths": config.n_paths, "dt": config.dt, "T": config.T, "master_seed": config.master_seed,
            "n_list": n_list, "drift_ids": ids}
    return DiagnosticsReport("mollified_convergence", stat, rows[0]["w1"] if rows else 0.0,
                             rows[-1]["se"] if rows else None, "pass" if ok else "fail",
                             f"W1 non-increasing along n_list up to {slack} SE", meta, {"table": rows})


# --------------------------------------------------------------------------- variance growth


def variance_growth(ens: Ensemble) -> DiagnosticsReport:
    """``E|X_t - X_0|^2 / (2 d t)`` against a constant and a ``sqrt(log)`` model.

    Exploratory: the verdict is always ``inconclusive``.  Both models are
    fitted by weighted least squares; ``details['better_model']`` names the
    one with the smaller weighted residual.
    """
    ok = ens.valid()
    U = ens.unwrapped[ok]
    d = ens.dim
    rows = []
    for j in range(1, len(ens.times)):
        t = float(ens.times[j] - ens.times[0])
        sq = np.sum((U[:, j] - U[:, 0]) ** 2, axis=1) / (2 * d * t)
        m, se = _mean_se(sq)
        rows.append({"t": t, "ratio": m, "se": se})
    t = np.array([r["t"] for r in rows])
    y = np.array([r["ratio"] for r in rows])
    w = 1.0 / np.maximum(np.array([r["se"] for r in rows]), 1e-12) ** 2
    c0 = float(np.sum(w * y) / np.sum(w))
    res_const = float(np.sum(w * (y - c0) ** 2))
    basis = np.sqrt(np.log(math.e + t))
    c1 = float(np.sum(w * y * basis) / np.sum(w * basis**2))
    res_log = float(np.sum(w * (y - c1 * basis) ** 2))
    details = {"table": rows, "constant_fit": c0, "constant_residual": res_const, "sqrt_log_fit": c1,
               "sqrt_log_residual": res_log, "better_model": "constant" if res_const <= res_log else "sqrt_log"}
    return DiagnosticsReport("variance_growth", float(y[-1]), c0, rows[-1]["se"], "inconclusive",
                             "exploratory", _meta(ens), details, hard=False)
