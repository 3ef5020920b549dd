import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from sdlab import besov as bs
from sdlab import drifts as dr
from sdlab import mollify as ml
from sdlab import spectral as sp


def rho_1d(y):
    return ml.MollifierKernel(1).density(np.atleast_1d(y)[..., None])


def test_kernel_has_unit_mass():
    for d in (1, 2, 3):
        assert ml.MollifierKernel(d).transform(0.0) == pytest.approx(1.0, abs=1e-12)
    mass, _ = integrate.quad(lambda y: rho_1d(y)[0], -1, 1)
    assert mass == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("s", [0.3, 1.7, 5.2, 12.9])
def test_transform_table_against_cartesian_quadrature(s):
    # d = 1: cosine transform by adaptive quadrature
    v1, _ = integrate.quad(lambda y: rho_1d(y)[0] * math.cos(2 * math.pi * s * y), -1, 1, limit=200)
    assert ml.MollifierKernel(1).transform(s) == pytest.approx(v1, abs=1e-10)
    # d = 2: polar quadrature with the angular integral done numerically (no Bessel function)
    c2 = ml.MollifierKernel(2).normalization
    f = lambda th, r: c2 * ml.bump(r) * math.cos(2 * math.pi * s * r * math.cos(th)) * r
    v2, _ = integrate.dblquad(f, 0, 1, 0, 2 * math.pi, epsabs=1e-12)
    assert ml.MollifierKernel(2).transform(s) == pytest.approx(v2, abs=1e-9)


def test_transform_beyond_table_uses_quadrature():
    k = ml.MollifierKernel(2)
    s = ml.TABLE_S_MAX + 3.0
    assert k.transform(s) == pytest.approx(k.transform_direct(s)[0], abs=1e-15)


def test_constant_field_unchanged():
    g = sp.TorusGrid(2, 16)
    c = sp.constant(g, 4.0)
    for n in (1, 3, 50):
        np.testing.assert_allclose(ml.mollify_space(c, n).coeffs, c.coeffs, atol=1e-15)


def test_direct_convolution_oracle_1d():
    g = sp.TorusGrid(1, 16)
    f = sp.from_function(lambda x: np.cos(2 * np.pi * 3 * x) + 0.5 * np.sin(2 * np.pi * x), g)
    fn = lambda x: math.cos(2 * math.pi * 3 * x) + 0.5 * math.sin(2 * math.pi * x)
    for n in (1.0, 2.5, 8.0):
        out = ml.mollify_space(f, n).samples
        for j in (0, 5, 11):
            x = j / 16
            ref, _ = integrate.quad(lambda y: n * rho_1d(n * y)[0] * fn(x - y), -1 / n, 1 / n, limit=200)
            assert out[j] == pytest.approx(ref, abs=1e-10)


def test_convergence_monotone_in_n(rng):
    g = sp.TorusGrid(2, 32)
    b = sp.random_field(g, 1, rng, kmax=6)
    errs = [sp.sobolev_norm(ml.mollify_space(b, n) - b, 0) for n in (1, 2, 4, 8, 16, 32, 64)]
    assert all(e2 < e1 for e1, e2 in zip(errs, errs[1:]))


def test_positivity_at_coarse_levels():
    # nonnegative grid data; the smooth kernel at n <= 1 keeps the result nonnegative
    g = sp.TorusGrid(2, 16)
    rng = np.random.default_rng(4)
    for _ in range(20):
        f = sp.forward_transform(rng.random(g.shape) ** 4, g)
        for n in (0.5, 1.0):
            assert ml.mollify_space(f, n).samples.min() >= -1e-10


def test_positivity_loss_is_spectral_truncation_at_fine_levels():
    # at n = 8 the kernel is narrower than a cell: the output tracks the trigonometric
    # interpolant, which dips below zero between nonnegative nodes
    g = sp.TorusGrid(1, 16)
    u = np.zeros(16)
    u[8] = 1.0
    f = sp.forward_transform(u, g)
    out = ml.mollify_space(f, 8.0).samples
    fine = sp.resample(f, 256).samples
    assert out.min() < -1e-4 and fine.min() < -1e-3


def test_time_weights_rows():
    t = np.linspace(0, 1, 101)
    W = ml.time_weights(t, 10.0)
    interior = (t > 0.1 + 1e-9) & (t < 0.9 - 1e-9)
    np.testing.assert_allclose(W.sum(axis=1)[interior], 1.0, atol=1e-14)
    assert np.all(W.sum(axis=1)[~interior] <= 1 + 1e-14)
    with pytest.raises(ValueError):
        ml.time_weights(np.linspace(0, 1, 5), 10.0)


def test_time_mollification_of_static_path_is_static(rng):
    g = sp.TorusGrid(2, 16)
    frame = dr.DriftSpec(g, A=dr.shear_drift(g).A)
    times = np.linspace(0, 1, 41)
    path = dr.DriftSpec.sampled([frame] * len(times), times)
    out = ml.mollify_time(path, 4.0)
    ref = ml.mollify_space(frame.A, 4.0)
    W = ml.time_weights(times, 4.0)
    for i, f in enumerate(out.frames):
        np.testing.assert_allclose(f.A.coeffs, W[i].sum() * ref.coeffs, atol=1e-12)
        if abs(W[i].sum() - 1) < 1e-14:
            np.testing.assert_allclose(f.A.coeffs, ref.coeffs, atol=1e-12)


def test_time_spike_spreads_and_keeps_mass():
    g = sp.TorusGrid(2, 8)
    times = np.linspace(0, 1, 201)
    base = dr.shear_drift(g)
    frames = [dr.DriftSpec(g, mean=(0.0, 0.0))] * len(times)
    j = 100
    frames[j] = dr.DriftSpec(g, mean=(1.0, 0.0))
    out = ml.mollify_time(dr.DriftSpec.sampled(frames, times), 10.0)
    m = np.array([f.mean[0] for f in out.frames])
    support = times[m > 0]
    assert support.min() > 0.5 - 1 / 10 and support.max() < 0.5 + 1 / 10
    assert np.sum(m) == pytest.approx(1.0, abs=1e-12)  # interior spike: weights sum to one
    assert base.is_static


@given(st.integers(0, 2**32 - 1))
def test_mollified_norms_bounded_uniformly(seed):
    g = sp.TorusGrid(2, 32)
    b = sp.random_field(g, 1, np.random.default_rng(seed), decay=1.0)
    ref = bs.b012_norm(b, 4.0)
    for n in (1, 4, 16, 64):
        assert bs.b012_norm(ml.mollify_space(b, n), 4.0) <= ref * 1.05


def test_drift_mollification_preserves_structure():
    g = sp.TorusGrid(2, 32)
    d = dr.build_drift("gff_curl", g, {}, seed=3)
    m = ml.mollify_drift(d, 8.0)
    assert m.divergence_free and m.A is not None
    np.testing.assert_allclose(m.A.coeffs, -np.swapaxes(m.A.coeffs, 0, 1), atol=0)
