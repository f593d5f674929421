import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from czwave.grid import (AffineGrid, AffinePoint, Grid, GridError, SampledFunction, SampledFunction2D, convolve,
                         integrate, mu_integrate, sample, spectral_multiplier)

G = Grid(1, 16.0, 1024)


def test_nodes_and_spacing():
    assert G.h == pytest.approx(2 * 16 / 1024)
    assert G.nodes[0] == -16.0
    assert G.nodes[1] - G.nodes[0] == pytest.approx(G.h)


@pytest.mark.parametrize("kw", [dict(d=3), dict(L=-1.0), dict(N=1000), dict(N=1)])
def test_grid_rejects_bad_parameters(kw):
    with pytest.raises(GridError):
        Grid(**kw)


def test_sample_examples():
    f = sample("exp(-x^2)", G)
    assert f.values[G.index_of(0.0)] == 1.0
    assert np.all(sample("0", G).values == 0)
    g = sample("x*exp(-x^2)", Grid(1, 16.0, 1024))
    assert g.values[G.index_of(1.0)].real == pytest.approx(math.exp(-1), abs=1e-15)


def test_sample_rejects_non_finite_naming_node():
    with pytest.raises(GridError, match="node"):
        sample("1/x", G)


def test_values_length_checked():
    with pytest.raises(GridError):
        SampledFunction(G, np.zeros(10))


def test_integrate_examples():
    assert integrate(sample("exp(-x^2)", G)) == pytest.approx(math.sqrt(math.pi), abs=1e-10)
    assert abs(integrate(sample("x*exp(-x^2)", G))) < 1e-12
    ind = SampledFunction(G, (np.abs(G.nodes) <= 1).astype(float))
    assert abs(integrate(ind) - 2) <= 2 * G.h


def test_identity_multiplier_round_trip():
    f = sample("exp(-x^2)*cos(3*x)", G)
    out = spectral_multiplier(f, lambda xi: np.ones_like(xi))
    assert np.max(np.abs(out.values - f.values)) < 1e-12


def test_sin_eigenfunction():
    g = Grid(1, 4 * math.pi, 256)
    f = sample("sin(x)", g)
    out = spectral_multiplier(f, lambda xi: np.abs(xi) ** 2)
    assert np.max(np.abs(out.values - f.values)) < 1e-10


def test_antiderivative_round_trip():
    f = sample("exp(-x^2) - 0.0553891828418", G)
    f = f - complex(integrate(f)) / (2 * G.L)
    inv = spectral_multiplier(f, lambda xi: xi / np.abs(xi) ** 2, at_zero=0)
    back = spectral_multiplier(inv, lambda xi: xi)
    assert np.max(np.abs(back.values - f.values)) < 1e-8


def test_singular_multiplier_rejects_mean():
    with pytest.raises(GridError, match="mean"):
        spectral_multiplier(sample("exp(-x^2)", G), lambda xi: 1 / xi)


def test_multiplier_composition():
    f = sample("exp(-x^2)*sin(2*x)", G)
    m1 = lambda xi: 1 / (1 + xi**2)
    m2 = lambda xi: np.exp(-0.1 * xi**2)
    a = spectral_multiplier(spectral_multiplier(f, m1), m2)
    b = spectral_multiplier(f, lambda xi: m1(xi) * m2(xi))
    assert np.max(np.abs(a.values - b.values)) < 1e-10


def test_convolve_with_delta_shifts():
    f = sample("exp(-(x-1)^2)", G)
    delta = np.zeros(G.N)
    delta[G.index_of(2.0)] = 1 / G.h
    out = convolve(f, SampledFunction(G, delta))
    expected = sample("exp(-(x-3)^2)", G)
    assert np.max(np.abs(out.values - expected.values)) <= 1e-10


def test_gaussian_convolution_closed_form():
    f = sample("exp(-x^2)", G)
    out = convolve(f, f)
    expected = sample("sqrt(pi/2)*exp(-x^2/2)", G)
    assert np.max(np.abs(out.values - expected.values)) < 1e-8
    assert np.all(convolve(f, sample("0", G)).values == 0)


def test_convolve_grid_mismatch():
    with pytest.raises(GridError):
        convolve(sample("x", G), sample("x", Grid(1, 8.0, 1024)))


def test_integral_of_convolution():
    f, g = sample("exp(-x^2)", G), sample("exp(-(x-1)^2/3)", G)
    assert integrate(convolve(f, g)) == pytest.approx(integrate(f) * integrate(g), abs=1e-8)


@settings(max_examples=30, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2))
def test_integrate_linear(a, b):
    f, g = sample("exp(-x^2)", G), sample("x^2*exp(-x^2)", G)
    assert integrate(f * a + g * b) == pytest.approx(a * integrate(f) + b * integrate(g), abs=1e-10)


def test_affine_grid_rejects_subresolution():
    with pytest.raises(GridError):
        AffineGrid(G, G.h, 1.1, 4)
    with pytest.raises(GridError):
        AffinePoint(0.0, 0.0)


def test_mu_integrate_counting():
    ag = AffineGrid.from_range(G, M=12, stride=4)
    K = G.N // 4
    assert mu_integrate(np.ones(ag.shape), ag).real == pytest.approx(K * 4 * G.h * 12 * math.log(ag.rho))
    row = np.zeros(ag.shape)
    row[0] = 1.0
    assert mu_integrate(row, ag).real == pytest.approx(K * 4 * G.h * math.log(ag.rho))
    assert ag.cell_weight == pytest.approx(4 * G.h * math.log(ag.rho))


def test_mu_integrate_scale_integral():
    g = Grid(1, 16.0, 64)
    errs = []
    for M in (8, 16, 32):
        rho = 2 ** (1 / M)
        ag = AffineGrid(g, rho**0.5, rho, M)
        vals = np.broadcast_to(ag.scales[:, None], ag.shape)
        errs.append(abs(mu_integrate(vals, ag).real / (2 * g.L) - 1.0))
    assert errs[-1] < 0.01
    assert errs[0] > errs[1] > errs[2]


def test_serialization_round_trip():
    f = sample("exp(-x^2)*cos(x)", G) * (1 + 0.5j)
    back = SampledFunction.from_bytes(f.to_bytes())
    assert f.to_bytes()[:4] == b"CZW1"
    assert np.array_equal(back.values, f.values) and back.grid == f.grid
    lines = f.to_csv().splitlines()
    assert len(lines) == G.N + 1


def test_sampled_function_2d_shape():
    g = Grid(1, 4.0, 32)
    F = SampledFunction2D(g, np.ones((32, 32)))
    assert F.values.shape == (32, 32)
