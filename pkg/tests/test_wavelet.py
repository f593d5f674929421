import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from czwave.grid import AffinePoint, Grid, GridError, SampledFunction, SampledFunction2D, integrate, sample
from czwave.wavelet import (WaveletClassSpec, admissibility_constant, build_dictionary, class_membership,
                            make_gamma_family, make_mother_wavelet, moment_matrix, sigma_norm, star_norm,
                            star_norm_parts, sy)

G = Grid()


def test_d0_wavelet_has_zero_mean():
    phi = make_mother_wavelet(0)
    assert abs(phi.moments(0)[0]) < 1e-9


def test_d1_moments_through_order_two(phi):
    assert np.max(np.abs(phi.moments(2))) < 1e-8


def test_admissibility_normalized(phi):
    assert abs(admissibility_constant(phi) - 1) < 1e-6


def test_support_in_half_ball(phi):
    x = phi.base.grid.nodes
    assert np.max(np.abs(phi.base.values[np.abs(x) > 0.5])) < 1e-10


def test_bump_support_too_large():
    with pytest.raises(GridError):
        make_mother_wavelet(1, radius=0.75)


def test_admissibility_closed_form():
    g = Grid(1, 32.0, 2048)
    f = sample("sqrt(8)/(2*pi)*sqrt(pi)*(1/2 - x^2/4)*exp(-x^2/4)", g)
    assert admissibility_constant(f) == pytest.approx(1.0, abs=1e-6)
    assert admissibility_constant(f * 2.0) == pytest.approx(4.0, abs=4e-6)


def test_admissibility_rejects_mean():
    with pytest.raises(GridError, match="mean"):
        admissibility_constant(sample("exp(-x^2)", G))


def test_sy_identity_and_scaling():
    f = sample("exp(-4*x^2)", G)
    assert np.max(np.abs(sy(AffinePoint(0.0, 1.0), f).values - f.values)) < 1e-12
    half = sy(AffinePoint(0.0, 2.0), f)
    assert half.values[G.index_of(0.0)].real == pytest.approx(0.5, abs=1e-12)
    moved = sy(AffinePoint(0.5, 2.0), f)
    assert np.max(np.abs(moved.values - sample("exp(-(x-0.5)^2)/2", G).values)) < 1e-12


@settings(max_examples=15, deadline=None)
@given(st.floats(-3, 3), st.floats(0.1, 3))
def test_sy_preserves_integral(w, t):
    f = sample("exp(-4*x^2)", G)
    assert integrate(sy(AffinePoint(w, t), f)) == pytest.approx(integrate(f), abs=1e-10)


def test_sy_rejects_small_scale():
    with pytest.raises(GridError):
        sy(AffinePoint(0.0, G.h), sample("exp(-x^2)", G))


def test_star_norm_examples():
    g = Grid(1, 16.0, 512)
    assert star_norm(sample("0", g), 0.5, 1.0) == 0.0
    f = SampledFunction(g, (1 + np.abs(g.nodes)) ** -1.5)
    size, _ = star_norm_parts(f, 0.5, 1.0)
    assert size == pytest.approx(1.0, abs=1e-15)
    assert star_norm(f * -3.0, 0.5, 1.0) == pytest.approx(3 * star_norm(f, 0.5, 1.0))


def test_star_norm_triangle_inequality():
    g = Grid(1, 8.0, 256)
    rng = np.random.default_rng(0)
    for _ in range(50):
        a = SampledFunction(g, rng.standard_normal(256) * np.exp(-g.nodes**2))
        b = SampledFunction(g, rng.standard_normal(256) * np.exp(-g.nodes**2 / 4))
        assert star_norm(a + b, 0.5, 1.0) <= star_norm(a, 0.5, 1.0) + star_norm(b, 0.5, 1.0) + 1e-12


def test_sigma_norm_reduces_and_delegates():
    g = Grid(1, 4.0, 64)
    X, Y = np.meshgrid(g.nodes, g.nodes, indexing="ij")
    F = SampledFunction2D(g, np.exp(-X**2 - 2 * Y**2))
    # at sigma = 0 the weight is <x>^d (1 + |x2|)^{d + eta}, below the 2D star weight
    w = (1 + np.hypot(X, Y)) * (1 + np.abs(Y)) ** 1.5
    size = np.max(w * np.abs(F.values))
    assert size <= sigma_norm(F, 0.0, 0.5, 1.0) <= star_norm(F, 0.5, 1.0)
    g1 = SampledFunction2D(g, np.zeros((64, 64)))
    assert sigma_norm(g1, 0.0, 0.5, 1.0) == 0.0
    assert sigma_norm(F, 5.0, 0.5, 1.0) == star_norm(F, 0.5, 1.0)
    assert sigma_norm(F * 2.0, 0.3, 0.5, 1.0) == pytest.approx(2 * sigma_norm(F, 0.3, 0.5, 1.0))
    assert sigma_norm(SampledFunction2D(g, np.zeros((64, 64))), 0.3, 0.5, 1.0) == 0.0


def test_class_membership_affine_invariance(phi):
    spec = WaveletClassSpec(k=0, delta=1.0, eta=0.5)
    vals = [class_membership(phi.place(G, z), z, spec)
            for z in (AffinePoint(0.0, 4.0), AffinePoint(1.3, 4.0), AffinePoint(-2.1, 6.0))]
    assert max(vals) / min(vals) - 1 < 1e-6


def test_class_membership_cancellation_flag():
    spec = WaveletClassSpec(k=0, cancellative=(True,))
    z = AffinePoint(0.0, 1.0)
    assert class_membership(sample("0", G), z, spec) == 0.0
    assert math.isinf(class_membership(sample("exp(-x^2)/sqrt(pi)", G), z, spec))


def test_gamma_families():
    for gam in (0, 1, 2):
        fam = make_gamma_family(gam)
        m = fam.moments(gam)
        target = np.zeros(gam + 1)
        target[gam] = 1
        np.testing.assert_allclose(m, target, atol=1e-8)
        x = fam.base.grid.nodes
        assert np.all(fam.base.values[np.abs(x) >= 0.5] == 0)


def test_moment_matrix_determinant():
    det = np.linalg.det(moment_matrix("exp(-x^2)", 2, radius=10, grid=Grid(1, 10.0, 4096)))
    assert det == pytest.approx(np.pi**1.5 / 4, rel=1e-8)


@pytest.mark.parametrize("spec", [WaveletClassSpec(0, 1.0, 0.5),
                                  WaveletClassSpec(0, 1.0, 3.0, cancellative=(True,))])
def test_dictionary_members_normalized(spec):
    g = Grid(1, 16.0, 256)
    D = build_dictionary(spec, AffinePoint(0.0, 1.0), size=6, grid=g)
    for m in D.members:
        assert 0.99 <= class_membership(m, D.z, spec) <= 1.01


def test_tensor_dictionary_members_normalized():
    g = Grid(1, 16.0, 256)
    spec = WaveletClassSpec(0, 1.0, 0.5, cancellative=(False, True))
    D = build_dictionary(spec, AffinePoint(0.0, 1.0), size=3, grid=g)
    for m in D.members:
        assert 0.99 <= class_membership(m.dense(), D.z, spec) <= 1.01


def test_dictionary_size_one_and_monotone():
    g = Grid(1, 16.0, 256)
    spec = WaveletClassSpec(0, 1.0, 0.5)
    D = build_dictionary(spec, AffinePoint(0.0, 1.0), size=8, grid=g)
    assert D.prefix(1).size == 1
    rng = np.random.default_rng(3)
    for _ in range(20):
        f = rng.standard_normal(256) * np.exp(-g.nodes**2 / 8)
        sups = [max(abs(np.sum(f * m.values)) for m in D.prefix(n).members) for n in range(1, 9)]
        assert all(a <= b for a, b in zip(sups, sups[1:]))
