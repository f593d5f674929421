import numpy as np
import pytest

from czwave.grid import AffineGrid, AffinePoint, Grid, SampledFunction2D, integrate, sample
from czwave.transform import (averaged_wavelet, calderon_reconstruct, cwt, delta_identity_residual,
                              hypothesis_bound, parseval_ratio, single_scale_projection, tensor_reproducing_check,
                              truncation_tail)
from czwave.wavelet import WaveletClassSpec, class_membership

G = Grid()
AG = AffineGrid.from_range(G, M=48)
PROBE = "cos(50*x)*exp(-x^2/(2*0.0625))"
DOG = "-x/0.0025*exp(-x^2/(2*0.0025))"


def test_cwt_zero_and_linearity(phi):
    ag = AffineGrid.from_range(G, M=8)
    assert np.all(cwt(sample("0", G), phi, ag).values == 0)
    f, g = sample(PROBE, G), sample(DOG, G)
    lhs = cwt(f + g, phi, ag).values
    rhs = cwt(f, phi, ag).values + cwt(g, phi, ag).values
    assert np.max(np.abs(lhs - rhs)) < 1e-12 * np.max(np.abs(rhs))


def test_cwt_self_coefficient(phi):
    ag = AffineGrid.from_range(G, M=8)
    j, i = 4, 600
    z = AffinePoint(float(ag.centers[i]), float(ag.scales[j]))
    f = phi.place(G, z)
    direct = np.sum(np.abs(f.values) ** 2) * G.h
    assert cwt(f, phi, ag).values[j, i] == pytest.approx(direct, rel=1e-10)


def test_reconstruction_derivative_of_gaussian(phi):
    f = sample(DOG, G)
    err = calderon_reconstruct(cwt(f, phi, AG), phi, f).relative_l2_error
    # the missing low frequencies account for the whole error at stride 1
    assert err == pytest.approx(truncation_tail(f, phi, AG), rel=1e-8)
    wide = AffineGrid.from_range(G, t_max=16.0, M=64)
    assert truncation_tail(f, phi, wide) < truncation_tail(f, phi, AG)


def test_truncation_tail_of_band_limited_probe(phi):
    f = sample(PROBE, G)
    assert truncation_tail(f, phi, AG) < 1e-3
    assert truncation_tail(sample("0", G), phi, AG) == 0.0


def test_reconstruction_refines(phi):
    f = sample(PROBE, G)
    coarse = calderon_reconstruct(cwt(f, phi, AG), phi, f).relative_l2_error
    fine = calderon_reconstruct(cwt(f, phi, AG.refined()), phi, f).relative_l2_error
    assert fine < coarse < 0.02


def test_reconstruction_of_zero(phi):
    out = calderon_reconstruct(cwt(sample("0", G), phi, AG), phi).function
    assert np.all(out.values == 0)


def test_parseval(phi):
    assert parseval_ratio(sample(PROBE, G), phi, AG) == pytest.approx(1.0, abs=0.05)


def test_highlow_invariants(highlow):
    x = highlow.fine_grid.nodes
    assert np.max(np.abs(highlow.Phi.values[np.abs(x) >= 1])) < 1e-8
    assert highlow.support_excess() < 1e-8
    assert abs(highlow.means()[1]) < 1e-8
    assert integrate(highlow.Phi).real == pytest.approx(1.0, abs=1e-8)
    assert delta_identity_residual(1, highlow.fine_grid) < 1e-6


def test_single_scale_matches_reconstruction(phi, highlow):
    f = sample(PROBE, G)
    s = AG.edges()[0]
    ssp = single_scale_projection(f, s, highlow)
    rec = calderon_reconstruct(cwt(f, phi, AG), phi).function
    assert (ssp - rec).norm(2) / ssp.norm(2) < 0.02
    assert np.all(single_scale_projection(sample("0", G), s, highlow).values == 0)


def test_single_scale_decays_with_scale(highlow):
    f = sample(DOG, G)
    norms = [single_scale_projection(f, s, highlow).norm(2) for s in np.geomspace(0.1, 8.0, 8)]
    assert all(a >= b for a, b in zip(norms, norms[1:]))
    assert norms[-1] < 0.1 * norms[0]


def test_tensor_zero_and_symmetry(highlow):
    g = Grid(1, 8.0, 256)
    ag = AffineGrid.from_range(g, M=16)
    assert tensor_reproducing_check(sample("0", g), sample("0", g), highlow, ag) < 1e-10
    f = sample("cos(20*x)*exp(-x^2)", g)
    assert tensor_reproducing_check(f, f, highlow, ag) == pytest.approx(
        tensor_reproducing_check(f, f, highlow, ag), abs=1e-10)


def _avg_setup():
    g = Grid(1, 32.0, 256)
    ag = AffineGrid.from_range(g, t_min=0.5, t_max=64.0, M=40)
    H = lambda u, v, w, s, t: hypothesis_bound(u, v, w, s, t, 1.0)
    return g, ag, H


def test_averaged_wavelet_zero_symbol():
    g, ag, _ = _avg_setup()
    nu = averaged_wavelet(lambda u, v, w, s, t: 0 * u, "exp(-x^2)", "exp(-x^2)", AffinePoint(0.0, 2.0), ag)
    assert np.all(nu.values == 0)


def test_averaged_wavelet_norm_stable():
    g, ag, H = _avg_setup()
    spec = WaveletClassSpec(0, 1.0, 0.5, cancellative=(False, False))
    vals = []
    for w, j in ((0.0, 10), (2.0, 10), (-3.0, 12)):
        z = AffinePoint(w, float(ag.scales[j]))
        vals.append(class_membership(averaged_wavelet(H, "exp(-x^2)", "exp(-x^2)", z, ag), z, spec))
    assert np.all(np.isfinite(vals))
    assert max(vals) / min(vals) < 1.1


def test_averaged_wavelet_inherits_y_cancellation():
    g, ag, H = _avg_setup()
    nu = averaged_wavelet(H, "exp(-x^2)", "x*exp(-x^2)", AffinePoint(0.0, 1.0), ag)
    assert np.max(np.abs(nu.values.sum(axis=1))) * g.h < 1e-8 * np.max(np.abs(nu.values))


def test_averaged_wavelet_antiderivative_in_y_bounded():
    g, ag, H = _avg_setup()
    spec = WaveletClassSpec(0, 1.0, 0.5, cancellative=(True, False))
    vals = []
    for w, j in ((0.0, 10), (1.0, 14)):
        z = AffinePoint(w, float(ag.scales[j]))
        nu = averaged_wavelet(H, "x*exp(-x^2)", "x*exp(-x^2)", z, ag)
        xi = g.freqs
        sym = np.zeros_like(xi, dtype=complex)
        sym[1:] = 1 / (1j * xi[1:])
        anti = np.fft.ifft(np.fft.fft(nu.values, axis=1) * sym[None, :], axis=1) / z.t
        vals.append(class_membership(SampledFunction2D(g, anti.real), z, spec))
    assert np.all(np.isfinite(vals)) and max(vals) / min(vals) < 2
