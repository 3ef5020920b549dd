import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sdlab import drifts as dr
from sdlab import kbe
from sdlab import spectral as sp
from sdlab.mollify import mollify_drift


def rel(a, b):
    return float(np.linalg.norm(np.ravel(a - b)) / np.linalg.norm(np.ravel(b)))


@pytest.fixture(scope="module")
def gff16():
    g = sp.TorusGrid(2, 16)
    return dr.build_drift("gff_curl", g, {"alpha": 1.5}, 3)


def test_generator_on_mode_zero_and_constant_drift():
    g = sp.TorusGrid(2, 16)
    e = sp.fourier_mode(g, (2, -1))
    out = kbe.apply_generator(dr.DriftSpec(g), e)
    np.testing.assert_allclose(out.coeffs, -4 * np.pi**2 * 5 * e.coeffs, atol=1e-12)
    c = (0.7, -1.3)
    out = kbe.apply_generator(dr.build_drift("constant", g, {"c": list(c)}), e)
    sym = -4 * np.pi**2 * 5 + 2j * np.pi * (2 * c[0] - c[1])
    np.testing.assert_allclose(out.coeffs, sym * e.coeffs, atol=1e-12)


def test_generator_matches_pointwise_formula(gff16):
    # L u = Lap u + b . grad u, with b and grad u evaluated on a 2x padded grid
    g = gff16.grid
    rng = np.random.default_rng(0)
    u = sp.random_field(g, 0, rng, kmax=4)
    Lu = kbe.apply_generator(gff16, u)
    fine = g.refine(2)
    b = sp.resample(gff16.field(), fine.N).samples
    gu = sp.resample(sp.gradient(u), fine.N).samples
    direct = sp.resample(sp.forward_transform(np.sum(b * gu, axis=0), fine), g.N)
    lap = sp.apply_multiplier(u, sp.laplacian())
    np.testing.assert_allclose(Lu.coeffs, (lap + direct).coeffs * ~g.nyquist_mask, atol=1e-10)


@given(st.integers(0, 2**32 - 1))
def test_skew_identity_divergence_free(seed):
    g = sp.TorusGrid(2, 16)
    d = dr.build_drift("gff_curl", g, {"alpha": 1.5}, seed % 50)
    u = sp.random_field(g, 0, np.random.default_rng(seed), kmax=4)
    Lu = kbe.apply_generator(d, u)
    # <u, L u> = -||grad u||^2 for a divergence-free drift
    lhs = np.real(sp.inner(u, Lu))
    grad2 = np.sum(4 * np.pi**2 * g.k_squared * np.abs(u.coeffs) ** 2)
    assert abs(lhs + grad2) <= 1e-10 * grad2


@given(st.integers(0, 2**32 - 1))
def test_adjoint_pairing(seed):
    g = sp.TorusGrid(2, 8)
    rng = np.random.default_rng(seed)
    b2 = sp.random_field(g, 1, rng, kmax=3)
    d = dr.DriftSpec(g, A=dr.antisymmetric_from_upper(g, {(0, 1): sp.random_field(g, 0, rng, kmax=3)}), b2=b2)
    gen = kbe.Generator(d)
    keep = ~g.nyquist_mask
    u = sp.random_field(g, 0, rng, kmax=3).coeffs * keep
    v = sp.random_field(g, 0, rng, kmax=3).coeffs * keep
    lhs = np.vdot(v, gen.apply(u))
    rhs = np.vdot(gen.adjoint_apply(v), u)
    assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), 1.0)


def test_heat_solution_exact():
    g = sp.TorusGrid(2, 32)
    uT = sp.random_field(g, 0, np.random.default_rng(1), kmax=6)
    tr = kbe.solve_backward(dr.DriftSpec(g), uT, 0.5, 1e-2)
    for t, s in zip(tr.times, tr.slices):
        exact = uT.coeffs * np.exp(-4 * np.pi**2 * g.k_squared * (0.5 - t))
        assert rel(s.coeffs, exact) <= 1e-10


def test_constant_drift_converges():
    g = sp.TorusGrid(2, 32)
    uT = sp.random_field(g, 0, np.random.default_rng(2), kmax=6)
    c = np.array([0.7, -1.3])
    d = dr.build_drift("constant", g, {"c": c.tolist()})
    sym = -4 * np.pi**2 * g.k_squared + 2j * np.pi * np.tensordot(c, g.k, axes=1)
    for dt in (1e-2, 5e-3):
        tr = kbe.solve_backward(d, uT, 0.5, dt)
        err = max(rel(s.coeffs, uT.coeffs * np.exp(sym * (0.5 - t))) for t, s in zip(tr.times, tr.slices))
        assert err <= 1e-8


def test_ifrk4_is_fourth_order(gff16):
    uT = sp.from_function(lambda x, y: np.cos(2 * np.pi * x) + np.sin(2 * np.pi * (x + 2 * y)), gff16.grid)
    ref = kbe.solve_backward(gff16, uT, 0.1, 3.125e-5).u0.coeffs
    # order 4 shows once dt times the fastest heat rate is small; coarser steps are order-reduced
    errs = [rel(kbe.solve_backward(gff16, uT, 0.1, dt).u0.coeffs, ref) for dt in (5e-4, 2.5e-4)]
    assert 12 < errs[0] / errs[1] < 20
    lawson = [rel(kbe.solve_backward(gff16, uT, 0.1, dt, scheme="lawson_euler").u0.coeffs, ref)
              for dt in (4e-3, 2e-3)]
    assert 1.6 < lawson[0] / lawson[1] < 2.5


def test_energy_balance_gff():
    g = sp.TorusGrid(2, 32)
    d = mollify_drift(dr.build_drift("gff_curl", g, {"alpha": 1.5}, 0), 16)
    uT = sp.from_function(lambda x, y: np.cos(2 * np.pi * x) + 0.5 * np.sin(2 * np.pi * (x + 2 * y)), g)
    tr = kbe.solve_backward(d, uT, 0.5, 2.5e-4)
    assert kbe.energy_balance_defect(tr) <= 1e-6
    assert np.max(tr.ledger[:, 0]) <= tr.ledger[-1, 0] * (1 + 1e-6)


def test_energy_balance_heat_exact_under_modal_quadrature():
    g = sp.TorusGrid(2, 16)
    uT = sp.random_field(g, 0, np.random.default_rng(4), kmax=6)
    tr = kbe.solve_backward(dr.DriftSpec(g), uT, 0.2, 1e-2)
    assert kbe.energy_balance_defect(tr) <= 1e-12
    # a coarse step is where Simpson on the ledger loses accuracy
    assert kbe.energy_balance_defect(tr, "simpson") > 1e-6


def test_apriori_reports():
    g = sp.TorusGrid(2, 16)
    uT = sp.random_field(g, 0, np.random.default_rng(5), kmax=4)
    tr = kbe.solve_backward(dr.DriftSpec(g), uT, 0.2, 1e-2)
    rep = kbe.apriori_report(tr)
    assert rep.verdict == "pass" and rep.metadata["K"] == 0.0
    # heat: 2 int ||grad u||^2 = ||u_T||^2 - ||u_0||^2 exactly
    grad = rep.details["gradient"]["observed"]
    assert grad == pytest.approx(0.5 * (tr.ledger[-1, 1] ** 2 - tr.ledger[0, 1] ** 2), rel=1e-10)
    rng = np.random.default_rng(6)
    b2 = sp.random_field(g, 1, rng, kmax=3) * 2.0
    d = dr.DriftSpec(g, b2=b2)
    tr = kbe.solve_backward(d, uT, 0.2, 1e-2)
    norm = sp.lebesgue_norm(d.b2, math.inf)
    rep = kbe.apriori_report(tr, norm)
    assert rep.verdict == "pass"
    assert rep.metadata["K"] == pytest.approx(norm**2 * 0.2)


def test_terminal_data_checks():
    g = sp.TorusGrid(2, 8)
    with pytest.raises(ValueError):
        kbe.solve_backward(dr.DriftSpec(g), sp.fourier_mode(g, (1, 0)), 0.5, 0.3)
    with pytest.raises(sp.GridMismatchError):
        kbe.solve_backward(dr.DriftSpec(g), sp.fourier_mode(sp.TorusGrid(2, 16), (1, 0)), 0.5, 0.1)


def test_blowup_detected():
    g = sp.TorusGrid(1, 16)
    # a compressive b2 amplifies the sup norm far beyond the maximum principle's allowance
    b2 = sp.SpectralField(g, -200 * sp.from_function(lambda x: np.sin(2 * np.pi * x), g).coeffs[None])
    d = dr.DriftSpec(g, b2=b2)
    uT = sp.from_function(lambda x: np.cos(4 * np.pi * x), g)
    with pytest.raises(kbe.BlowUpError):
        kbe.solve_backward(d, uT, 1.0, 1e-2, blowup_factor=1.0 + 1e-12, scheme="lawson_euler")


def test_resolvent_diagonal_oracle():
    g = sp.TorusGrid(2, 16)
    rhs = sp.random_field(g, 0, np.random.default_rng(7), kmax=5)
    for lam in (1.0, 16.0):
        sol = kbe.resolvent_solve(dr.DriftSpec(g), lam, rhs)
        exact = rhs.coeffs / (lam + 4 * np.pi**2 * g.k_squared) * ~g.nyquist_mask
        np.testing.assert_allclose(sol.u.coeffs, exact, atol=1e-11)
        c = np.array([0.3, 2.0])
        d = dr.build_drift("constant", g, {"c": c.tolist()})
        sol = kbe.resolvent_solve(d, lam, rhs)
        sym = lam + 4 * np.pi**2 * g.k_squared - 2j * np.pi * np.tensordot(c, g.k, axes=1)
        np.testing.assert_allclose(sol.u.coeffs, rhs.coeffs / sym * ~g.nyquist_mask, atol=1e-11)


def test_resolvent_residual_contract_and_h1_bound(gff16):
    rhs = sp.random_field(gff16.grid, 0, np.random.default_rng(8), kmax=4)
    ratios = []
    for lam in (16.0, 32.0, 64.0):
        sol = kbe.resolvent_solve(gff16, lam, rhs, 1e-10)
        assert sol.residual_h_minus1 <= 1e-10 * kbe._h_minus1(gff16.grid, rhs.coeffs * ~gff16.grid.nyquist_mask)
        w = kbe._weights(gff16.grid, lam)
        h1_lam = math.sqrt(np.sum(w * np.abs(sol.u.coeffs) ** 2))
        dual = math.sqrt(np.sum(np.abs(rhs.coeffs * ~gff16.grid.nyquist_mask) ** 2 / w))
        ratios.append(h1_lam / dual)
    # divergence-free drift: the lambda-weighted energy estimate gives ratio <= 1
    assert max(ratios) <= 1 + 1e-8
    with pytest.raises(ValueError):
        kbe.resolvent_solve(gff16, 0.0, rhs)


def test_injectivity_zero_drift():
    probe = kbe.injectivity_probe(dr.DriftSpec(sp.TorusGrid(2, 8)), [1.0, 10.0])
    assert probe["method"] == "dense"
    for row in probe["table"]:
        assert row["sigma_min"] == pytest.approx(1.0, abs=1e-12)


def test_injectivity_divergence_free_at_least_one():
    g = sp.TorusGrid(2, 8)
    d = dr.build_drift("gff_curl", g, {"alpha": 1.0}, 0)
    probe = kbe.injectivity_probe(d, [0.5, 4.0, 64.0])
    assert probe["sigma_min"] >= 1 - 1e-8


def test_injectivity_dips_for_large_b2():
    g = sp.TorusGrid(2, 8)
    rng = np.random.default_rng(9)
    d = dr.DriftSpec(g, b2=sp.random_field(g, 1, rng, kmax=3) * 40.0)
    probe = kbe.injectivity_probe(d, [0.1])
    assert probe["sigma_min"] < 0.9


def test_lanczos_agrees_with_dense(gff16):
    dense = kbe.injectivity_probe(gff16, [4.0], method="dense")
    lanczos = kbe.injectivity_probe(gff16, [4.0], method="lanczos")
    assert lanczos["sigma_min"] == pytest.approx(dense["sigma_min"], rel=1e-6)


def test_injectivity_budget():
    with pytest.raises(sp.BudgetExceededError):
        kbe.injectivity_probe(dr.DriftSpec(sp.TorusGrid(2, 16)), [1.0], budget=10)
