"""Deterministic property sweeps: spectral, Helmholtz, skew, Besov, KBE, resolvent, structural.

Each sweep draws its random inputs from ``numpy.random.default_rng(seed)``
and returns one :class:`DiagnosticsReport`.  Tolerances are the
documented defaults; errors are reported relative to the size of the
input unless stated otherwise.
"""
from __future__ import annotations

import math

import numpy as np

from . import spectral as sp
from .besov import (
    BesovParams,
    b012_norm,
    besov_norm,
    lp_blocks,
    paraproduct_split,
)
from .drifts import (
    CompactSet,
    DriftSpec,
    build_cutoff,
    build_drift,
    drift_from_A,
    helmholtz_decompose,
    helmholtz_reconstruct,
    morrey_counterexample_A,
    point_singularity_A,
    shear_drift,
    verify_structural_conditions,
)
from .kbe import (
    Generator,
    ResolventDivergence,
    energy_balance_defect,
    injectivity_probe,
    resolvent_solve,
    solve_backward,
)
from .mollify import mollify_drift
from .reports import DiagnosticsReport

SPECTRAL_GRIDS = {1: 64, 2: 32, 3: 16}


def _rel(a: np.ndarray, b: np.ndarray) -> float:
    scale = float(np.max(np.abs(b)))
    return float(np.max(np.abs(a - b))) / scale if scale else float(np.max(np.abs(a)))


def _verdict(ok: bool) -> str:
    return "pass" if ok else "fail"


# --------------------------------------------------------------------------- spectral substrate


def spectral_identities(n_fields: int = 100, dims=(1, 2, 3), seed: int = 0, tol: float = 1e-12) -> DiagnosticsReport:
    """Round trip, Parseval and multiplier composition on random fields."""
    rng = np.random.default_rng(seed)
    rows = []
    for d in dims:
        g = sp.TorusGrid(d, SPECTRAL_GRIDS[d])
        rt = pa = co = 0.0
        lap = sp.laplacian()
        for _ in range(n_fields):
            f = sp.random_field(g, 0, rng)
            back = sp.forward_transform(sp.inverse_transform(f), g)
            rt = max(rt, _rel(back.coeffs, f.coeffs))
            energy_x = float(np.mean(np.abs(f.samples) ** 2))
            energy_k = float(np.sum(np.abs(f.coeffs) ** 2))
            pa = max(pa, abs(energy_x - energy_k) / energy_k)
            # sum of squared first derivatives against the Laplacian, off the Nyquist plane
            h = sp.strip_nyquist(f)
            sq = sum(sp.apply_multiplier(sp.apply_multiplier(h, sp.derivative(i)), sp.derivative(i)).coeffs
                     for i in range(d))
            co = max(co, _rel(sq, sp.apply_multiplier(h, lap).coeffs))
            a, b = rng.uniform(-2, 2, size=2)
            two = sp.apply_multiplier(sp.apply_multiplier(f, sp.bessel_potential(a)), sp.bessel_potential(b))
            co = max(co, _rel(two.coeffs, sp.apply_multiplier(f, sp.bessel_potential(a + b)).coeffs))
        rows.append({"dim": d, "N": g.N, "round_trip": rt, "parseval": pa, "composition": co})
    worst = max(max(r["round_trip"], r["parseval"], r["composition"]) for r in rows)
    return DiagnosticsReport("spectral_identities", worst, tol, None, _verdict(worst <= tol),
                             f"max relative error <= {tol}", {"n_fields": n_fields, "seed": seed},
                             {"table": rows})


# --------------------------------------------------------------------------- Helmholtz


def helmholtz_identity(n_drifts: int = 100, dims=(2, 3), seed: int = 0, tol: float = 1e-12) -> DiagnosticsReport:
    """``b = div A + grad V + mean`` and ``b(A(b)) = b`` on divergence-free mean-zero ``b``."""
    rng = np.random.default_rng(seed)
    rows = []
    for d in dims:
        g = sp.TorusGrid(d, SPECTRAL_GRIDS[d])
        rec = trip = 0.0
        for _ in range(n_drifts):
            b = sp.strip_nyquist(sp.random_field(g, 1, rng))
            A, V, mean = helmholtz_decompose(b)
            rec = max(rec, _rel(helmholtz_reconstruct(A, V, mean).coeffs, b.coeffs))
            M = sp.strip_nyquist(sp.random_field(g, 2, rng))
            Aanti = M.with_coeffs(0.5 * (M.coeffs - np.swapaxes(M.coeffs, 0, 1)))
            b0 = drift_from_A(Aanti)
            A0, _, _ = helmholtz_decompose(b0)
            trip = max(trip, _rel(drift_from_A(A0).coeffs, b0.coeffs))
        rows.append({"dim": d, "reconstruction": rec, "round_trip": trip})
    worst = max(max(r["reconstruction"], r["round_trip"]) for r in rows)
    return DiagnosticsReport("helmholtz_identity", worst, tol, None, _verdict(worst <= tol),
                             f"coefficient-wise relative error <= {tol}", {"n_drifts": n_drifts, "seed": seed},
                             {"table": rows})


# --------------------------------------------------------------------------- skew identity


def skew_library(seed: int = 0) -> dict:
    """Antisymmetric potentials used by the skew sweep, keyed by label."""
    out = {}
    g2 = sp.TorusGrid(2, 64)
    out["shear"] = shear_drift(sp.TorusGrid(2, 32)).potential
    out["gff_curl_N64"] = build_drift("gff_curl", g2, {"alpha": 1.5}, seed).potential
    out["point_singularity_d2"] = point_singularity_A(sp.TorusGrid(2, 32), 0.5)
    out["point_singularity_d3"] = point_singularity_A(sp.TorusGrid(3, 16), 0.5)
    m = morrey_counterexample_A(sp.TorusGrid(2, 64), [0.5, 0.25], [2.0**-4, 2.0**-6])
    out["morrey"] = m.A
    return out


def skew_identity(n_fields: int = 50, seed: int = 0, tol: float = 1e-8, kmax_fraction: float = 0.25) -> DiagnosticsReport:
    """``<u, div(A grad u)> = 0`` relative to ``||grad u||^2`` for library potentials."""
    rng = np.random.default_rng(seed)
    rows = []
    for label, A in skew_library(seed).items():
        g = A.grid
        gen = Generator(DriftSpec(g, A=A))
        worst = 0.0
        for _ in range(n_fields):
            u = sp.random_field(g, 0, rng, kmax=max(1, int(kmax_fraction * g.N)))
            c = np.asarray(u.coeffs)
            val = abs(complex(np.vdot(c, gen._part_A(c))))
            grad2 = float(np.sum(4 * np.pi**2 * g.k_squared * np.abs(c) ** 2))
            worst = max(worst, val / grad2)
        rows.append({"potential": label, "dim": g.dim, "N": g.N, "max_relative": worst})
    stat = max(r["max_relative"] for r in rows)
    return DiagnosticsReport("skew_identity", stat, tol, None, _verdict(stat <= tol),
                             f"|<u, div(A grad u)>| <= {tol} ||grad u||^2", {"n_fields": n_fields, "seed": seed},
                             {"table": rows})


# --------------------------------------------------------------------------- Besov layer


def besov_identities(n_fields: int = 200, seed: int = 0, tol: float = 1e-10, ps=(2.0, 4.0, math.inf)) -> DiagnosticsReport:
    """Partition of unity, paraproduct identity and the ``L^p <= B^0_{p,1} <= B^0_{p,1,2}`` chain."""
    rng = np.random.default_rng(seed)
    part = para = 0.0
    order_violations = 0
    worst_slack = math.inf
    for i in range(n_fields):
        d = (1, 2)[i % 2]
        g = sp.TorusGrid(d, 32 if d == 2 else 64)
        u = sp.random_field(g, 0, rng, decay=float(rng.uniform(0, 2)))
        part = max(part, _rel(sum(b.coeffs for b in lp_blocks(u)) * ~g.nyquist_mask, u.coeffs * ~g.nyquist_mask))
        v = sp.random_field(g, 0, rng, decay=1.0)
        lo, res, hi = paraproduct_split(u, v)
        prod = sp.product(u, v, padded=True)
        total = lo.coeffs + res.coeffs + hi.coeffs
        para = max(para, _rel(total, prod.coeffs))
        for p in ps:
            a = sp.lebesgue_norm(u, p)
            b = besov_norm(u, BesovParams(0.0, p, 1.0))
            c = b012_norm(u, p)
            slack = min(b - a, c - b) / c
            worst_slack = min(worst_slack, slack)
            if not (a <= b * (1 + 1e-12) and b <= c * (1 + 1e-12)):
                order_violations += 1
    ok = part <= tol and para <= tol and order_violations == 0
    stat = max(part, para)
    return DiagnosticsReport("besov_identities", stat, tol, None, _verdict(ok),
                             f"partition and paraproduct errors <= {tol}; norm chain never violated",
                             {"n_fields": n_fields, "seed": seed},
                             {"partition": part, "paraproduct": para, "order_violations": order_violations,
                              "min_relative_slack": worst_slack})


# --------------------------------------------------------------------------- KBE oracles


def _terminal(g: sp.TorusGrid) -> sp.SpectralField:
    return sp.from_function(lambda *x: np.cos(2 * np.pi * x[0]) + 0.5 * np.sin(2 * np.pi * (x[0] + 2 * x[-1])), g)


def kbe_oracles(seed: int = 0, *, heat_tol: float = 1e-10, constant_tol: float = 1e-8,
                max_principle_tol: float = 1e-6, energy_tol: float = 1e-6, energy_dt: float = 2.5e-4,
                energy_N: int = 32, T: float = 0.5) -> DiagnosticsReport:
    """Heat slices, constant-drift diagonal solution, maximum principle and energy ledger."""
    rng = np.random.default_rng(seed)
    g = sp.TorusGrid(2, 32)
    uT = sp.random_field(g, 0, rng, kmax=6)
    tr = solve_backward(DriftSpec(g), uT, T, 1e-2)
    heat = 0.0
    for t, s in zip(tr.times, tr.slices):
        exact = uT.coeffs * np.exp(-4 * np.pi**2 * g.k_squared * (T - t))
        heat = max(heat, _rel(s.coeffs, exact))
    c = np.array([0.7, -1.3])
    const = build_drift("constant", g, {"c": c.tolist()})
    sym = -4 * np.pi**2 * g.k_squared + 2j * np.pi * np.tensordot(c, g.k, axes=1)
    const_rows = []
    for dt in (1e-2, 5e-3):
        tc = solve_backward(const, uT, T, dt)
        err = max(_rel(s.coeffs, uT.coeffs * np.exp(sym * (T - t))) for t, s in zip(tc.times, tc.slices))
        const_rows.append({"dt": dt, "error": err})
    gE = sp.TorusGrid(2, energy_N)
    gff = mollify_drift(build_drift("gff_curl", gE, {"alpha": 1.5}, seed), 16)
    te = solve_backward(gff, _terminal(gE), T, energy_dt)
    mp = float(np.max(te.ledger[:, 0]) / te.ledger[-1, 0] - 1.0)
    energy = energy_balance_defect(te)
    ok = heat <= heat_tol and const_rows[-1]["error"] <= constant_tol and mp <= max_principle_tol and energy <= energy_tol
    details = {"heat_error": heat, "constant_drift": const_rows, "max_principle_excess": mp,
               "energy_defect": energy, "energy_setup": {"N": energy_N, "dt": energy_dt, "drift": "gff_curl n=16"}}
    return DiagnosticsReport("kbe_oracles", max(heat, const_rows[-1]["error"], mp, energy), 0.0, None, _verdict(ok),
                             f"heat <= {heat_tol}, constant <= {constant_tol}, max principle <= {max_principle_tol}, "
                             f"energy <= {energy_tol}", {"seed": seed, "T": T}, details)


# --------------------------------------------------------------------------- resolvent


def resolvent_sweep(lams=(16.0, 32.0, 64.0, 128.0, 256.0), Ns=(32, 64), *, alpha: float = 1.5, seed: int = 0,
                    tol: float = 1e-10, sigma_floor: float = 0.5, stability: float = 0.1) -> DiagnosticsReport:
    """Residual contract and ``sigma_min`` of the weighted operator for the GFF drift."""
    rng = np.random.default_rng(seed)
    probes, solves = [], []
    contract = True
    for N in Ns:
        g = sp.TorusGrid(2, N)
        drift = build_drift("gff_curl", g, {"alpha": alpha}, seed)
        rhs = sp.random_field(g, 0, rng, kmax=N // 4)
        for lam in lams:
            try:
                sol = resolvent_solve(drift, lam, rhs, tol)
                solves.append({"N": N, "lambda": lam, "residual": sol.residual_h_minus1,
                               "iterations": sol.iterations})
            except ResolventDivergence as exc:
                contract = False
                solves.append({"N": N, "lambda": lam, "residual": exc.history[-1], "iterations": None})
        probe = injectivity_probe(drift, lams)
        for row in probe["table"]:
            row.pop("seconds")  # reports stay timing-free
        probes.append(probe)
    smin = min(p["sigma_min"] for p in probes)
    drift_ratio = 0.0
    for lo, hi in zip(probes, probes[1:]):
        for a, b in zip(lo["table"], hi["table"]):
            drift_ratio = max(drift_ratio, abs(b["sigma_min"] / a["sigma_min"] - 1.0))
    ok = contract and smin >= sigma_floor and drift_ratio <= stability
    return DiagnosticsReport("resolvent_sweep", smin, sigma_floor, None, _verdict(ok),
                             f"residual contract on every solve; sigma_min >= {sigma_floor}; "
                             f"relative change under N doubling <= {stability}",
                             {"alpha": alpha, "seed": seed, "tol": tol},
                             {"solves": solves, "probes": probes, "max_relative_change": drift_ratio,
                              "contract_met": contract})


# --------------------------------------------------------------------------- structural conditions


def structural_conditions(*, point_N: int = 64, cutoff_N: int = 256, morrey_N: int = 512,
                          cutoff_eps=(1 / 8, 1 / 16, 1 / 32), growth_factor: float = 4.0,
                          shifted_min_growth: float = 10.0) -> DiagnosticsReport:
    """Point singularity tabulation, cutoff invariants and the Morrey counterexample."""
    g3 = sp.TorusGrid(3, point_N)
    A = point_singularity_A(g3, 0.5)
    K3 = CompactSet(points=((0.5, 0.5, 0.5),))
    eps_point = [2.0**-j for j in range(2, int(math.log2(point_N)))]  # down to two grid cells
    point = verify_structural_conditions(A, K3, eps_point, growth_factor=growth_factor)

    g2 = sp.TorusGrid(2, cutoff_N)
    K2 = CompactSet(points=((0.25, 0.25),), segments=(((0.5, 0.3), (0.5, 0.7)),))
    cut_rows = []
    for eps in cutoff_eps:
        c = build_cutoff(g2, K2, eps)
        inv = c.invariants()
        cut_rows.append({"eps": eps, "delta": c.delta, "grad_constant": c.grad_bound, **inv})
    cut_ok = all(all(v for k, v in r.items() if isinstance(v, bool)) for r in cut_rows)

    gm = sp.TorusGrid(2, morrey_N)
    n_b = 6
    m = morrey_counterexample_A(gm, [2.0**-n for n in range(1, n_b + 1)], [2.0 ** (-2 * n - 2) for n in range(1, n_b + 1)])
    Km = CompactSet(points=((0.0, 0.0),))
    eps_m = [2.0**-j for j in range(2, int(math.log2(morrey_N)))]
    morrey = verify_structural_conditions(m.A, Km, eps_m, shifted=list(zip(m.centers, m.eps)),
                                          growth_factor=growth_factor)
    shifted_growth = morrey.details["shifted_growth"]
    ok = point.passed and cut_ok and morrey.passed and shifted_growth >= shifted_min_growth
    return DiagnosticsReport(
        "structural_conditions", shifted_growth, shifted_min_growth, None, _verdict(ok),
        "point field passes; cutoff invariants hold at every node; Morrey field passes the local "
        f"functional and its shifted-centre functional grows by >= {shifted_min_growth}x",
        {"point_N": point_N, "cutoff_N": cutoff_N, "morrey_N": morrey_N},
        {"point_singularity": point.to_dict(), "cutoffs": cut_rows, "morrey": morrey.to_dict(),
         "morrey_dropped_bumps": m.dropped})
