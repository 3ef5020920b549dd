import math

import numpy as np
import pytest
from scipy import stats

from sdlab import drifts as dr
from sdlab import sde
from sdlab import spectral as sp
from sdlab.runner import terms_field


def mean_se(x):
    return float(np.mean(x)), float(np.std(x, ddof=1) / math.sqrt(len(x)))


def run(drift, n_paths, dt, T, seed=1, stride=None, init=None, **kw):
    cfg = sde.SimConfig(dt, T, n_paths, stride or int(round(T / dt)), seed)
    x0 = init if init is not None else sde.sample_initial(None, n_paths, seed + 100, drift.grid.dim)[0]
    return sde.simulate(drift, None, x0, cfg, initial_law="uniform", **kw)


def test_uniform_initial_mean():
    x, info = sde.sample_initial(None, 20000, 3, 2)
    for a in range(2):
        m, se = mean_se(x[:, a])
        assert abs(m - 0.5) <= 3 * se
    assert info["law"] == "uniform"


def test_density_initial_moment():
    g = sp.TorusGrid(2, 16)
    rho = terms_field(g, [{"k": [1]}], 1.0)
    x, info = sde.sample_initial(rho, 20000, 5)
    m, se = mean_se(np.cos(2 * np.pi * x[:, 0]))
    # int cos(2 pi x) (1 + cos(2 pi x)) dx = 1/2
    assert abs(m - 0.5) <= 3 * se
    assert info["clipped_mass"] == 0


def test_initial_sampling_deterministic_and_guarded():
    a, _ = sde.sample_initial(None, 100, 9, 3)
    b, _ = sde.sample_initial(None, 100, 9, 3)
    np.testing.assert_array_equal(a, b)
    g = sp.TorusGrid(1, 16)
    with pytest.raises(ValueError):
        sde.sample_initial(terms_field(g, [{"k": [1], "amp": 3.0}], 1.0), 10, 0)


def test_brownian_variance():
    g = sp.TorusGrid(1, 8)
    T = 0.5
    ens = run(dr.DriftSpec(g, name="zero"), 20000, 0.01, T)
    disp = ens.unwrapped[:, -1, 0] - ens.unwrapped[:, 0, 0]
    sq = disp**2
    m, se = mean_se(sq)
    assert abs(m - 2 * T) <= 3 * se


def test_constant_drift_mean_shift():
    g = sp.TorusGrid(2, 8)
    c = (0.7, -1.3)
    ens = run(dr.build_drift("constant", g, {"c": list(c)}), 10000, 0.01, 0.5)
    disp = ens.unwrapped[:, -1] - ens.unwrapped[:, 0]
    for a in range(2):
        m, se = mean_se(disp[:, a])
        assert abs(m - c[a] * 0.5) <= 3 * se


@pytest.mark.parametrize("dt", [2e-3, 1e-3])
def test_shear_keeps_lebesgue_measure(dt):
    g = sp.TorusGrid(2, 32)
    ens = run(dr.shear_drift(g), 10000, dt, 0.5)
    idx = np.minimum((ens.final * 16).astype(int), 15)
    counts = np.bincount(idx[:, 0] * 16 + idx[:, 1], minlength=256)
    assert stats.chisquare(counts).pvalue > 0.01


def test_chunking_and_threads_do_not_change_paths():
    g = sp.TorusGrid(2, 16)
    d = dr.shear_drift(g)
    n = sde.CHUNK_SIZE + 37
    a = run(d, n, 0.01, 0.1, threads=1)
    b = run(d, n, 0.01, 0.1, threads=3)
    np.testing.assert_array_equal(a.unwrapped, b.unwrapped)
    # path p depends on (master seed, p) only, not on how many paths are simulated
    c = run(d, 10, 0.01, 0.1, init=a.unwrapped[:10, 0], threads=1)
    np.testing.assert_array_equal(c.unwrapped, a.unwrapped[:10])


def test_noise_blocks_are_seamless():
    # a run longer than one noise block reproduces the per-path stream in order
    g = sp.TorusGrid(1, 8)
    steps = sde.NOISE_BLOCK + 10
    dt = 1e-3
    ens = run(dr.DriftSpec(g, name="zero"), 3, dt, steps * dt, stride=1, init=np.zeros((3, 1)))
    for p in range(3):
        gen = np.random.Generator(np.random.PCG64(sde.path_seed_sequence(1, p)))
        z = np.concatenate([gen.standard_normal((sde.NOISE_BLOCK, 1)), gen.standard_normal((10, 1))])
        np.testing.assert_allclose(np.diff(ens.unwrapped[p, :, 0]), math.sqrt(2 * dt) * z[:, 0], atol=1e-15)


def test_wrap_range():
    w = sde.wrap(np.array([-1e-17, 1.0, 2.5, -0.25]))
    assert np.all((w >= 0) & (w < 1))
    np.testing.assert_allclose(w, [0.0, 0.0, 0.5, 0.75])


def test_additive_functional_constants():
    g = sp.TorusGrid(1, 8)
    ens = run(dr.DriftSpec(g, name="zero"), 50, 0.01, 0.5, stride=1)
    integral, _ = sde.additive_functional(ens, sp.constant(g, 1.0))
    np.testing.assert_allclose(integral, 0.5, atol=1e-12)
    integral, _ = sde.additive_functional(ens, lambda t, x: np.full(x.shape[0], t**2))
    # trapezoid of t^2 on a uniform grid: T^3/3 + T dt^2 / 6
    np.testing.assert_allclose(integral, 0.5**3 / 3 + 0.5 * 0.01**2 / 6, atol=1e-12)


def test_additive_functional_cosine_oracle():
    # E[(int_0^T cos(2 pi X_s) ds)^2] = (1/lam)(T - (1 - e^{-lam T})/lam), stationary start
    g = sp.TorusGrid(1, 16)
    T, lam = 0.25, 4 * math.pi**2
    ens = run(dr.DriftSpec(g, name="zero"), 20000, 1e-3, T, stride=1)
    # exact integrand: grid interpolation on N = 16 would shrink the amplitude by ~1%
    integral, _ = sde.additive_functional(ens, lambda t, x: np.cos(2 * np.pi * x[:, 0]))
    m, se = mean_se(integral**2)
    oracle = (T - (1 - math.exp(-lam * T)) / lam) / lam
    assert abs(m - oracle) <= 3 * se


def test_additive_functional_interpolation_bias_shrinks_with_n():
    g_lo, g_hi = sp.TorusGrid(1, 16), sp.TorusGrid(1, 64)
    ens = run(dr.DriftSpec(g_lo, name="zero"), 200, 0.01, 0.2, stride=1)
    exact, _ = sde.additive_functional(ens, lambda t, x: np.cos(2 * np.pi * x[:, 0]))
    lo, _ = sde.additive_functional(ens, terms_field(g_lo, [{"k": [1]}]))
    hi, _ = sde.additive_functional(ens, terms_field(g_hi, [{"k": [1]}]))
    assert np.max(np.abs(hi - exact)) < np.max(np.abs(lo - exact)) / 10


def test_trackers():
    g = sp.TorusGrid(2, 8)
    d = dr.DriftSpec(g, name="zero")
    trackers = [sde.Tracker("one", lambda t, x, b: np.ones(x.shape[0])),
                sde.Tracker("dB", lambda t, x, b: np.tile([1.0, 0.0], (x.shape[0], 1)), "ito")]
    ens = run(d, 20, 0.01, 0.2, trackers=trackers)
    np.testing.assert_allclose(ens.tracked["one"]["integral"], 0.2, atol=1e-12)
    np.testing.assert_allclose(ens.tracked["dB"]["quadratic"], 0.2, atol=1e-12)
    # int 1 dB^1 = B^1_T = (X_T - X_0) / sqrt 2 for b = 0
    disp = (ens.unwrapped[:, -1, 0] - ens.unwrapped[:, 0, 0]) / math.sqrt(2)
    np.testing.assert_allclose(ens.tracked["dB"]["ito"], disp, atol=1e-12)
    with pytest.raises(ValueError):
        run(d, 5, 0.01, 0.1, trackers=[trackers[0], trackers[0]])


def test_config_validation():
    with pytest.raises(ValueError):
        sde.SimConfig(0.003, 1.0, 10)
    with pytest.raises(ValueError):
        sde.SimConfig(0.01, 1.0, 10, save_stride=7)
    assert len(sde.SimConfig(0.01, 1.0, 10, save_stride=25).times) == 5


def test_stability_warning():
    g = sp.TorusGrid(2, 8)
    d = dr.build_drift("constant", g, {"c": [10.0, 0.0]})
    with pytest.warns(UserWarning):
        run(d, 4, 0.01, 0.02)


def test_exports_round_trip(tmp_path):
    g = sp.TorusGrid(2, 8)
    ens = run(dr.shear_drift(g), 7, 0.01, 0.05, stride=1)
    sde.export_binary(ens, tmp_path / "e.sdle")
    back = sde.load_binary(tmp_path / "e.sdle")
    np.testing.assert_array_equal(back["wrapped"], ens.wrapped)
    np.testing.assert_array_equal(back["unwrapped"], ens.unwrapped)
    np.testing.assert_array_equal(back["path_seeds"], ens.path_seeds)
    sde.export_csv(ens, tmp_path / "e.csv")
    rows = (tmp_path / "e.csv").read_text().splitlines()
    assert rows[0] == "path,t,x1,x2,u1,u2"
    assert len(rows) == 1 + 7 * 6
    assert float(rows[1].split(",")[2]) == ens.wrapped[0, 0, 0]


def test_path_seed_derivation():
    s = sde.path_seed(7, 3)
    assert s == int(np.random.SeedSequence(7, spawn_key=(3,)).generate_state(1, np.uint64)[0])
    assert sde.path_seed(7, 3) != sde.path_seed(7, 4)
