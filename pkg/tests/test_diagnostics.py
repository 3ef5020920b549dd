import math

import numpy as np
import pytest

from sdlab import diagnostics as dg
from sdlab import drifts as dr
from sdlab import kbe
from sdlab import sde
from sdlab import spectral as sp
from sdlab.mollify import mollify_drift
from sdlab.runner import terms_field


def simulate(drift, n_paths, dt, T, *, stride=1, seed=1, init=None, law="uniform", trackers=()):
    cfg = sde.SimConfig(dt, T, n_paths, stride, seed)
    if init is None:
        init = sde.sample_initial(None, n_paths, seed + 7, drift.grid.dim)[0]
    return sde.simulate(drift, None, init, cfg, initial_law=law, trackers=trackers)


@pytest.fixture(scope="module")
def brownian():
    g = sp.TorusGrid(1, 16)
    return simulate(dr.DriftSpec(g), 4000, 1e-3, 0.25, stride=1)


@pytest.fixture(scope="module")
def gff_ens():
    g = sp.TorusGrid(2, 32)
    d = mollify_drift(dr.build_drift("gff_curl", g, {"alpha": 1.5}, 2), 8)
    return d, simulate(d, 3000, 1e-3, 0.1)


def test_ito_oracle_closed_form():
    # (lam^2 / 2) int int e^{-lam |t-s|} over [0, T]^2 = lam^2 int_0^T (T - u) e^{-lam u} du
    from scipy import integrate
    T, lam = 0.3, 4 * math.pi**2
    val, _ = integrate.quad(lambda u: lam**2 * (T - u) * math.exp(-lam * u), 0, T, epsabs=0, epsrel=1e-12)
    assert dg.ito_trick_oracle(T) == pytest.approx(val, rel=1e-8)


def test_ito_trick_constant_f_is_zero(brownian):
    rep = dg.ito_trick_check(brownian, sp.constant(sp.TorusGrid(1, 16), 1.0), oracle=0.0)
    assert rep.statistic == 0.0 and rep.passed


def test_ito_trick_matches_oracle(brownian):
    f = terms_field(sp.TorusGrid(1, 16), [{"k": [1]}])
    rep = dg.ito_trick_check(brownian, f, oracle=dg.ito_trick_oracle(0.25))
    assert rep.passed, rep
    cal = dg.ito_trick_check(brownian, f)
    assert cal.verdict == "inconclusive"
    again = dg.ito_trick_check(brownian, f, calibration=cal.statistic)
    assert again.passed


def test_ito_trick_needs_stationary_start():
    g = sp.TorusGrid(1, 8)
    ens = simulate(dr.DriftSpec(g), 10, 1e-2, 0.1, init=np.zeros((10, 1)), law="custom")
    with pytest.raises(dg.PreconditionError):
        dg.ito_trick_check(ens, terms_field(g, [{"k": [1]}]))


def test_incompressibility_uniform_and_peaked():
    g = sp.TorusGrid(2, 16)
    ens = simulate(dr.shear_drift(g), 4000, 1e-2, 0.5, stride=25)
    rep = dg.incompressibility_check(ens, bins=8)
    assert rep.passed
    peaked = simulate(dr.DriftSpec(g), 4000, 1e-3, 0.1, stride=20, init=np.full((4000, 2), 0.5), law="custom")
    rep = dg.incompressibility_check(peaked, bins=8)
    assert not rep.hard and rep.verdict == "inconclusive"
    ratios = [r["max_ratio"] for r in rep.details["table"]]
    # decay while the peak dominates binning noise
    assert ratios[0] > 3 and ratios[0] > ratios[1] > ratios[2]


def test_energy_estimate_calibration(brownian):
    g = sp.TorusGrid(1, 16)
    bank = [terms_field(g, [{"k": [k]}]) for k in (1, 2, 3)]
    cal = dg.energy_estimate_check(brownian, bank)
    assert cal.verdict == "inconclusive" and cal.statistic > 0
    assert dg.energy_estimate_check(brownian, bank, calibration=cal.statistic).passed
    # a time profile with g = 0 contributes ratio 0
    prof = dg.TimeProfile(bank[0], g=lambda t: 0 * np.asarray(t, float) + 0.0)
    assert dg.energy_estimate_check(brownian, [prof]).statistic == 0.0


def test_martingale_brownian(brownian):
    f = terms_field(sp.TorusGrid(1, 16), [{"k": [1]}])
    rep = dg.martingale_check(brownian, dr.DriftSpec(sp.TorusGrid(1, 16)), f)
    assert rep.passed, rep.details


def test_martingale_time_dependent_profile(brownian):
    # f(t, x) = e^{lam t} cos(2 pi x) is space-time harmonic for the heat generator
    lam = 4 * math.pi**2
    f = dg.TimeProfile(terms_field(sp.TorusGrid(1, 16), [{"k": [1]}]), g=lambda t: np.exp(lam * np.asarray(t)),
                       dg=lambda t: lam * np.exp(lam * np.asarray(t)))
    assert dg.martingale_check(brownian, dr.DriftSpec(sp.TorusGrid(1, 16)), f).passed


def test_martingale_gff(gff_ens):
    d, ens = gff_ens
    f = terms_field(d.grid, [{"k": [1, 0]}, {"k": [0, 1], "amp": 0.5}])
    rep = dg.martingale_check(ens, d, f)
    assert rep.passed, rep.details
    with pytest.raises(dg.PreconditionError):
        dg.martingale_check(ens, dr.DriftSpec(d.grid), f)


def test_martingale_detects_wrong_drift():
    g = sp.TorusGrid(1, 16)
    ens = simulate(dr.build_drift("constant", g, {"c": [3.0]}), 3000, 1e-3, 0.2)
    f = terms_field(g, [{"k": [1], "phase": -math.pi / 2}])
    # claim the path was driftless: the mismatch shows in the mean of M
    wrong = dr.DriftSpec(g, name="zero")
    object.__setattr__(ens, "drift_id", wrong.digest())
    assert not dg.martingale_check(ens, wrong, f).passed


def test_duality_zero_drift_uniform():
    g = sp.TorusGrid(2, 16)
    uT = terms_field(g, [{"k": [1, 0]}])
    ens = simulate(dr.DriftSpec(g), 2000, 1e-2, 0.1, stride=10)
    traj = kbe.solve_backward(dr.DriftSpec(g), uT, 0.1, 1e-2)
    rep = dg.duality_check(ens, traj, uT)
    assert rep.target == pytest.approx(0.0, abs=1e-15) and rep.passed


def test_duality_density_start():
    g = sp.TorusGrid(1, 16)
    T = 0.02
    rho = terms_field(g, [{"k": [1]}], 1.0)
    x0, _ = sde.sample_initial(rho, 20000, 3)
    ens = simulate(dr.DriftSpec(g), 20000, 1e-3, T, stride=20, init=x0, law="density")
    uT = terms_field(g, [{"k": [1]}])
    traj = kbe.solve_backward(dr.DriftSpec(g), uT, T, 1e-3)
    rep = dg.duality_check(ens, traj, uT, rho)
    assert rep.target == pytest.approx(0.5 * math.exp(-4 * math.pi**2 * T), rel=1e-12)
    assert rep.passed, rep


def test_duality_short_horizon_gff():
    g = sp.TorusGrid(2, 32)
    d = mollify_drift(dr.build_drift("gff_curl", g, {"alpha": 1.5}, 2), 8)
    T = 0.02
    rho = terms_field(g, [{"k": [1, 0], "amp": 0.5}, {"k": [0, 1], "amp": 0.4}], 1.0)
    x0, _ = sde.sample_initial(rho, 10000, 4)
    ens = simulate(d, 10000, 1e-3, T, stride=20, init=x0, law="density")
    uT = terms_field(g, [{"k": [1, 0]}, {"k": [1, 1], "amp": 0.5}])
    traj = kbe.solve_backward(d, uT, T, 1e-4)
    rep = dg.duality_check(ens, traj, uT, rho)
    assert abs(rep.target) > 10 * rep.standard_error  # a non-trivial comparison
    assert rep.passed, rep


def test_duality_horizon_mismatch():
    g = sp.TorusGrid(1, 8)
    ens = simulate(dr.DriftSpec(g), 10, 1e-2, 0.1, stride=10)
    traj = kbe.solve_backward(dr.DriftSpec(g), terms_field(g, [{"k": [1]}]), 0.2, 1e-2)
    with pytest.raises(ValueError):
        dg.duality_check(ens, traj, terms_field(g, [{"k": [1]}]))


def test_novikov_zero_and_constant():
    g = sp.TorusGrid(2, 8)
    T, p = 0.2, 2.0
    a = np.array([0.6, -0.3])
    ens = simulate(dr.DriftSpec(g), 20000, 1e-2, T, stride=20,
                   trackers=[dg.novikov_tracker(np.zeros(2), "zero"), dg.novikov_tracker(a)])
    rep = dg.novikov_check(ens, p, tracker="zero", exact=1.0)
    assert rep.statistic == pytest.approx(1.0, abs=1e-12)
    exact = math.exp(p * (p - 1) * float(a @ a) * T / 2)
    rep = dg.novikov_check(ens, p, exact=exact)
    assert rep.passed, rep
    with pytest.raises(dg.PreconditionError):
        dg.novikov_check(ens, p, tracker="missing")


def test_novikov_field_tracker_matches_constant():
    g = sp.TorusGrid(2, 8)
    a = sp.SpectralField(g, np.stack([sp.constant(g, 0.6).coeffs, sp.constant(g, -0.3).coeffs]))
    ens = simulate(dr.DriftSpec(g), 50, 1e-2, 0.1, stride=10,
                   trackers=[dg.novikov_tracker(a, "field"), dg.novikov_tracker([0.6, -0.3], "const")])
    np.testing.assert_allclose(ens.tracked["field"]["ito"], ens.tracked["const"]["ito"], atol=1e-12)


def test_wasserstein_oracle():
    x = np.array([0.0, 1.0, 2.0])
    assert dg.wasserstein_1d(x, x + 0.5) == pytest.approx(0.5)
    assert dg.wasserstein_1d(x, x[::-1]) == 0.0
    with pytest.raises(ValueError):
        dg.wasserstein_1d(x, x[:2])


def test_mollified_convergence_identical_levels_zero():
    g = sp.TorusGrid(2, 16)
    d = dr.build_drift("gff_curl", g, {"alpha": 1.5}, 1)
    cfg = sde.SimConfig(1e-2, 0.1, 200, 10, 0)
    ens_a = sde.simulate(d, 4.0, np.full((200, 2), 0.3), cfg)
    ens_b = sde.simulate(d, 4.0, np.full((200, 2), 0.3), cfg)
    ua = ens_a.unwrapped[:, -1] - ens_a.unwrapped[:, 0]
    ub = ens_b.unwrapped[:, -1] - ens_b.unwrapped[:, 0]
    assert dg._marginal_distance(ua, ub, 5) == (0.0, 0.0)
    rep = dg.mollified_convergence(d, [2, 4, 8], cfg)
    assert len(rep.details["table"]) == 2
    with pytest.raises(ValueError):
        dg.mollified_convergence(d, [4, 2], cfg)


def test_variance_growth_brownian():
    g = sp.TorusGrid(2, 8)
    ens = simulate(dr.DriftSpec(g), 4000, 1e-2, 1.0, stride=25)
    rep = dg.variance_growth(ens)
    assert not rep.hard
    for row in rep.details["table"]:
        assert abs(row["ratio"] - 1.0) <= 3 * row["se"]
