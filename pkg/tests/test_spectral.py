import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sdlab import spectral as sp


def direct_dft(samples):
    """Oracle: explicit double sum with the N^-d normalization (1-d)."""
    N = samples.shape[0]
    j = np.arange(N)
    k = np.fft.fftfreq(N, 1.0 / N)
    return np.array([np.sum(samples * np.exp(-2j * np.pi * kk * j / N)) / N for kk in k])


def test_grid_wavenumber_range():
    g = sp.TorusGrid(1, 8)
    assert sorted(g.k[0].tolist()) == [-3, -2, -1, 0, 1, 2, 3, 4]


@pytest.mark.parametrize("dim,N", [(0, 8), (4, 8), (2, 7), (2, 2)])
def test_grid_rejects_bad_shapes(dim, N):
    with pytest.raises(ValueError):
        sp.TorusGrid(dim, N)


def test_zero_samples_give_zero_coefficients():
    g = sp.TorusGrid(2, 8)
    assert not np.any(sp.forward_transform(np.zeros(g.shape), g).coeffs)


def test_cosine_coefficients_match_direct_dft():
    g = sp.TorusGrid(1, 8)
    u = np.cos(2 * np.pi * g.points[0])
    c = sp.forward_transform(u, g).coeffs
    np.testing.assert_allclose(c, direct_dft(u), atol=1e-15)
    expected = np.zeros(8)
    expected[1] = expected[-1] = 0.5
    np.testing.assert_allclose(c, expected, atol=1e-15)


@given(st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_parseval_and_round_trip(dim, seed):
    g = sp.TorusGrid(dim, {1: 32, 2: 16, 3: 8}[dim])
    u = np.random.default_rng(seed).standard_normal(g.shape)
    f = sp.forward_transform(u, g)
    lhs = np.sum(np.abs(f.coeffs) ** 2)
    assert abs(lhs - np.mean(u**2)) <= 1e-12 * lhs
    np.testing.assert_allclose(sp.inverse_transform(f), u, atol=1e-12 * np.max(np.abs(u)))


def test_real_flag_follows_input():
    g = sp.TorusGrid(1, 8)
    assert sp.forward_transform(np.ones(8), g).real
    assert not sp.forward_transform(np.ones(8, dtype=complex), g).real


def test_fractional_laplacian_on_mode():
    g = sp.TorusGrid(2, 8)
    out = sp.apply_multiplier(sp.fourier_mode(g, (1, 0)), sp.fractional_laplacian(1.0))
    expected = np.zeros(g.shape, complex)
    expected[1, 0] = (2 * np.pi) ** 2
    np.testing.assert_allclose(out.coeffs, expected, atol=1e-12)


def test_inverse_laplacian_removes_mean(rng):
    g = sp.TorusGrid(2, 16)
    u = sp.random_field(g, 0, rng, kmax=6)
    back = sp.apply_multiplier(sp.apply_multiplier(u, sp.laplacian()), sp.inverse_laplacian())
    expected = np.array(u.coeffs)
    expected[0, 0] = 0
    np.testing.assert_allclose(back.coeffs, expected, atol=1e-14)


def test_derivative_of_sine():
    g = sp.TorusGrid(1, 16)
    f = sp.from_function(lambda x: np.sin(2 * np.pi * x), g)
    d = sp.apply_multiplier(f, sp.derivative(0))
    np.testing.assert_allclose(d.samples, 2 * np.pi * np.cos(2 * np.pi * g.points[0]), atol=1e-12)


def test_multiplier_composition_matches_sequential(rng):
    g = sp.TorusGrid(2, 16)
    u = sp.random_field(g, 0, rng)
    m1, m2 = sp.bessel_potential(0.7), sp.fractional_laplacian(0.3)
    a = sp.apply_multiplier(u, m1 * m2)
    b = sp.apply_multiplier(sp.apply_multiplier(u, m2), m1)
    np.testing.assert_allclose(a.coeffs, b.coeffs, atol=1e-14)


def test_derivative_drops_nyquist_so_results_stay_real(rng):
    g = sp.TorusGrid(1, 8)
    u = sp.random_field(g, 0, rng)
    d = sp.apply_multiplier(u, sp.derivative(0))
    assert d.real and sp.hermitian_defect(d) == 0


def test_constant_evaluates_to_constant():
    g = sp.TorusGrid(3, 8)
    f = sp.constant(g, 2.5)
    pts = np.random.default_rng(0).random((10, 3))
    for mode in ("direct_sum", "grid_interp"):
        np.testing.assert_allclose(sp.evaluate_at(f, pts, mode), 2.5, atol=1e-13)


def test_cosine_zero_at_quarter():
    g = sp.TorusGrid(2, 8)
    f = sp.from_function(lambda x, y: np.cos(2 * np.pi * x), g)
    assert abs(sp.evaluate_at(f, [[0.25, 0.0]], "direct_sum")[0]) < 1e-12


def test_grid_interp_error_decreases_with_N():
    fn = lambda x, y: np.sin(2 * np.pi * x) * np.cos(4 * np.pi * y) + 0.3 * np.cos(2 * np.pi * (x + y))
    pts = np.random.default_rng(1).random((64, 2))
    errs = []
    for N in (16, 32, 64, 128):
        f = sp.from_function(fn, sp.TorusGrid(2, N))
        errs.append(np.max(np.abs(sp.evaluate_at(f, pts, "grid_interp") - sp.evaluate_at(f, pts, "direct_sum"))))
    assert all(b < a for a, b in zip(errs, errs[1:]))
    # second-order interpolation: each halving of h divides the error by about 4
    assert errs[-2] / errs[-1] > 3


def test_direct_sum_budget():
    g = sp.TorusGrid(2, 32)
    with pytest.raises(sp.BudgetExceededError):
        sp.evaluate_at(sp.zeros(g), np.zeros((100, 2)), "direct_sum", budget=1000)


def test_sparse_evaluation_matches_direct_sum(rng):
    g = sp.TorusGrid(2, 16)
    f = sp.random_field(g, 1, rng, kmax=3)
    pts = rng.random((50, 2))
    np.testing.assert_allclose(sp.evaluate_sparse(f, pts), sp.evaluate_at(f, pts, "direct_sum"), atol=1e-13)


def test_nyquist_mode_evaluates_as_cosine():
    g = sp.TorusGrid(1, 8)
    f = sp.forward_transform(np.cos(np.pi * 8 * g.points[0]), g)
    x = np.array([[0.03], [0.41]])
    np.testing.assert_allclose(sp.evaluate_at(f, x, "direct_sum"), np.cos(8 * np.pi * x[:, 0]), atol=1e-13)
    np.testing.assert_allclose(sp.evaluate_sparse(f, x), np.cos(8 * np.pi * x[:, 0]), atol=1e-13)


def test_lebesgue_norms_of_simple_fields():
    g = sp.TorusGrid(2, 16)
    three = sp.constant(g, 3.0)
    for p in (1, 2, 4, np.inf):
        assert sp.lebesgue_norm(three, p) == pytest.approx(3.0, abs=1e-12)
    c = sp.from_function(lambda x, y: np.cos(2 * np.pi * x), g)
    assert sp.lebesgue_norm(c, 2) == pytest.approx(np.sqrt(0.5), abs=1e-12)
    assert sp.lebesgue_norm(c, np.inf) == pytest.approx(1.0, abs=1e-12)


def test_product_is_exact_on_padded_grid():
    g = sp.TorusGrid(1, 8)
    f = sp.from_function(lambda x: np.cos(2 * np.pi * 3 * x), g)
    p = sp.product(f, f, padded=True)
    x = p.grid.points[0]
    np.testing.assert_allclose(p.samples, np.cos(6 * np.pi * x) ** 2, atol=1e-14)


@given(st.integers(0, 2**32 - 1))
def test_resample_round_trip(seed):
    g = sp.TorusGrid(2, 8)
    f = sp.strip_nyquist(sp.random_field(g, 0, seed))
    back = sp.resample(sp.resample(f, 32), 8)
    np.testing.assert_allclose(back.coeffs, f.coeffs, atol=1e-15)


def test_grid_mismatch_raises():
    a, b = sp.zeros(sp.TorusGrid(2, 8)), sp.zeros(sp.TorusGrid(2, 16))
    with pytest.raises(sp.GridMismatchError):
        a + b


def test_snapshot_round_trip(tmp_path, rng):
    f = sp.random_field(sp.TorusGrid(2, 8), 2, rng)
    sp.save_field(f, tmp_path / "f.sdlf")
    g = sp.load_field(tmp_path / "f.sdlf")
    assert g.grid == f.grid and g.real == f.real
    np.testing.assert_array_equal(g.coeffs, f.coeffs)
    raw = (tmp_path / "f.sdlf").read_bytes()
    assert raw[:4] == b"SDLF" and len(raw) == 24 + 16 * f.coeffs.size


def test_fields_are_immutable(rng):
    f = sp.random_field(sp.TorusGrid(1, 8), 0, rng)
    with pytest.raises(ValueError):
        f.coeffs[0] = 1.0
