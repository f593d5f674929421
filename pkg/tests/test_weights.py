import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from czwave.forms import smooth_multiplier, wavelet_form_evaluator
from czwave.grid import Grid, GridError, SampledFunction, sample
from czwave.weights import (ExponentTuple, WeightVector, ap_characteristic, ap_characteristic_bruteforce,
                            fractional_derivative, holder_tuple, leibniz_check, power_weight_vector,
                            sharpness_experiment, weighted_lq_norm, weighted_sobolev_norm)

G = Grid(1, 8.0, 256)
PERIODIC = Grid(1, math.pi, 256)


def test_holder_tuple_completion():
    e = holder_tuple(3, 3)
    assert e.p3 == pytest.approx(3.0) and e.p == pytest.approx(1.5)
    assert holder_tuple(2, 2).p3 == math.inf
    assert holder_tuple(4, 4, (3, 3, 1)).eps == pytest.approx((12.0, 12.0, 2.0))
    assert holder_tuple(2, 2, (1, 1, 1)).eps[2] == 1.0
    assert holder_tuple(3, 3, (3, 1, 1)).eps[0] == math.inf


def test_exponent_tuple_rejections():
    with pytest.raises(ValueError, match="expected 1"):
        ExponentTuple(4, 4, 4 / 3)
    with pytest.raises(ValueError, match="leave"):
        ExponentTuple(0.625, -1.25, 5)
    with pytest.raises(ValueError):
        holder_tuple(1, 3)
    with pytest.raises(ValueError, match="not below"):
        holder_tuple(3, 3, (4, 1, 1))
    with pytest.raises(ValueError):
        ExponentTuple(3, 3, 3, (0.5, 1, 1))


def test_weight_vector_validation():
    one = sample("1", G)
    two = sample("2", G)
    WeightVector(one, two, sample("0.5", G))
    with pytest.raises(ValueError, match="multiply"):
        WeightVector(one, two, one)
    with pytest.raises(ValueError, match="positive"):
        WeightVector(sample("-1", G), sample("-1", G), one)
    v = WeightVector.from_pair(two, two)
    assert np.allclose(v.v3.values, 0.25) and np.allclose(v.dual.values, 4.0)


def test_trivial_characteristic_is_one():
    e = holder_tuple(3, 3, (1.5, 1.5, 1))
    assert ap_characteristic(power_weight_vector(G, 0.0), e) == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("a", [0.1, 0.2, 0.3])
def test_characteristic_matches_bruteforce(a):
    g = Grid(1, 8.0, 64)
    e = holder_tuple(3, 3, (1.5, 1.5, 1))
    v = power_weight_vector(g, a)
    assert ap_characteristic(v, e) == pytest.approx(ap_characteristic_bruteforce(v, e), rel=1e-12)
    idx = g.index_of(0.0)
    assert ap_characteristic(v, e, exclude=idx) == pytest.approx(
        ap_characteristic_bruteforce(v, e, exclude=idx), rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), p1=st.floats(1.5, 6), p2=st.floats(1.5, 6))
def test_characteristic_is_at_least_one(seed, p1, p2):
    rng = np.random.default_rng(seed)
    g = Grid(1, 1.0, 64)
    v1 = SampledFunction(g, np.exp(rng.normal(0, 0.5, 64)))
    v2 = SampledFunction(g, np.exp(rng.normal(0, 0.5, 64)))
    e = holder_tuple(p1, p2, (1.0, 1.0, 1.0), require_circ=False)
    v = WeightVector.from_pair(v1, v2)
    c = ap_characteristic(v, e)
    assert c >= 1 - 1e-12
    assert ap_characteristic(v, e, levels=2) <= ap_characteristic(v, e, levels=4) <= c


def test_characteristic_grows_with_the_power():
    e = holder_tuple(3, 3, (1.5, 1.5, 1))
    vals = [ap_characteristic(power_weight_vector(G, a), e, levels=8) for a in (0.1, 0.2, 0.3)]
    assert vals[0] < vals[1] < vals[2]


def test_fractional_derivative_on_eigenfunctions():
    f = sample("sin(3*x)", PERIODIC)
    assert np.allclose(fractional_derivative(f, 2.0).values, 9 * f.values, atol=1e-10)
    assert np.allclose(fractional_derivative(f, 0.5).values, math.sqrt(3) * f.values, atol=1e-10)
    assert fractional_derivative(f, 0) is f
    assert np.allclose(fractional_derivative(sample("1", PERIODIC), 0.5).values, 0.0)
    with pytest.raises(ValueError):
        fractional_derivative(f, -1)


def test_sobolev_norm_examples():
    f = sample("sin(3*x)", PERIODIC)
    base = f.norm(2)
    n0 = weighted_sobolev_norm(f, 0.0, 2)
    assert n0.value == pytest.approx(2 * base, rel=1e-12)
    n2 = weighted_sobolev_norm(f, 2.0, 2)
    assert n2.homogeneous == pytest.approx(9 * base, rel=1e-9)
    assert n2.value == pytest.approx((9 + 1 + 3 + 9) * base, rel=1e-9)
    assert float(weighted_sobolev_norm(f * 3.0, 1.5, 2)) == pytest.approx(3 * float(weighted_sobolev_norm(f, 1.5, 2)))


def test_weighted_lq_norm():
    u = np.array([1.0, -2.0, 3.0])
    assert weighted_lq_norm(u, None, 1, 0.5) == pytest.approx(3.0)
    assert weighted_lq_norm(u, np.array([1.0, 1.0, 0.0]), math.inf, 0.5) == 2.0
    with pytest.raises(ValueError):
        weighted_lq_norm(u, None, 0, 1.0)


def test_leibniz_holder_oracle():
    e = ExponentTuple(4, 4, 2, (3, 3, 1))
    f = sample("exp(-x^2)", G)
    g = sample("cos(x)*exp(-(x-1)^2/2)", G)
    out = leibniz_check(f, g, 0.0, e)
    direct = (f * g).norm(2) / (4 * f.norm(4) * g.norm(4))
    assert out["ratio"] == pytest.approx(direct, rel=1e-12)
    assert out["ratio"] <= 0.25


def test_leibniz_degenerate_and_homogeneous():
    e = holder_tuple(4, 4, (1.5, 1.5, 1))
    f = sample("exp(-x^2)", G)
    g = sample("exp(-(x-1)^2)", G)
    zero = leibniz_check(sample("0", G), g, 0.5, e)
    assert zero["degenerate"] and zero["ratio"] is None
    base = leibniz_check(f, g, 0.5, e)["ratio"]
    assert leibniz_check(f * 3.0, g * 0.5, 0.5, e)["ratio"] == pytest.approx(base, rel=1e-12)


def test_leibniz_operator_and_rejections(phi):
    from czwave.grid import AffineGrid
    e = holder_tuple(4, 4, (1.5, 1.5, 1))
    f = sample("exp(-x^2)", G)
    g = sample("exp(-(x-1)^2)", G)
    same = leibniz_check(f, g, 0.5, e, T=smooth_multiplier([(1, 1, 1)]))
    assert same["ratio"] == pytest.approx(leibniz_check(f, g, 0.5, e)["ratio"], rel=1e-12)
    with pytest.raises(ValueError, match="sigma \\+ d"):
        leibniz_check(f, g, 0.5, holder_tuple(4, 4, (1, 1, 1)))
    with pytest.raises(ValueError, match="min"):
        leibniz_check(f, g, 0.5, ExponentTuple(1, math.inf, math.inf))
    with pytest.raises(ValueError, match="operator"):
        leibniz_check(f, g, 0.5, e, T=wavelet_form_evaluator(None, phi, AffineGrid.from_range(G, M=4)))
    with pytest.raises(GridError):
        leibniz_check(f, sample("1", Grid(1, 8.0, 128)), 0.5, e)


def _band_limited(rng, grid, kmax):
    F = np.zeros(grid.N, dtype=complex)
    k = np.arange(1, kmax + 1)
    F[k] = (rng.standard_normal(kmax) + 1j * rng.standard_normal(kmax)) * np.exp(-(k / kmax) ** 2)
    F[-k] = np.conj(F[k])
    F[0] = rng.standard_normal()
    return SampledFunction(grid, np.fft.ifft(F).real * grid.N / kmax)


@pytest.mark.parametrize("weighted", [False, True])
def test_leibniz_ratio_spread_over_band_limited_pairs(weighted):
    e = holder_tuple(4, 4, (1.5, 1.5, 1))
    g = Grid(1, 8.0, 512)
    v = power_weight_vector(g, 0.2) if weighted else None
    rng = np.random.default_rng(0)
    ratios = [leibniz_check(_band_limited(rng, g, 12), _band_limited(rng, g, 12), 0.5, e, v)["ratio"]
              for _ in range(10)]
    assert max(ratios) / min(ratios) < 20


@pytest.fixture(scope="module")
def slopes():
    return {s: sharpness_experiment(s) for s in (0.0, 0.25, 0.5, 1.0)}


@pytest.mark.parametrize("sigma", [0.25, 0.5, 1.0])
def test_sharpness_slope_matches_minus_sigma(slopes, sigma):
    rep = slopes[sigma]
    assert rep.slope == pytest.approx(-sigma, abs=0.1)
    assert rep.target_slope == -sigma
    assert not rep.consistent if sigma < 1 else rep.consistent


def test_sharpness_refinement_is_stable(slopes):
    fine = sharpness_experiment(0.5, grid=Grid(1, 8192.0, 131072))
    assert abs(fine.slope - slopes[0.5].slope) < 0.02


def test_sharpness_sigma_zero_is_degenerate(slopes):
    rep = slopes[0.0]
    assert rep.degenerate and rep.target_slope == 0
    assert "k,pairing" in rep.to_csv() and rep.to_dict()["sigma"] == 0.0


def test_sharpness_rejections():
    with pytest.raises(ValueError, match="at least 4"):
        sharpness_experiment(0.5, range(3, 6))
    with pytest.raises(GridError):
        sharpness_experiment(0.5, range(3, 9), grid=Grid(1, 256.0, 4096))
