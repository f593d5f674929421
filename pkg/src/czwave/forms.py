"""Trilinear forms: model operators, wavelet and paraproduct forms, intrinsic
forms, and the off-diagonal symbol Upsilon with its decay certificate."""
from __future__ import annotations

import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence, Union

import numpy as np
from scipy.stats import qmc

from .expr import Expression, parse_expression
from .grid import (AffineGrid, AffinePoint, Grid, GridError, SampledFunction, SampledFunction2D,
                   mu_integrate)
from .transform import _smooth_step_derivs, cwt
from .wavelet import (GammaFamily, MotherWavelet, Profile, WaveletClassSpec, WaveletDictionary,
                      build_dictionary, make_gamma_family, make_mother_wavelet)

__all__ = [
    "FormEvaluator",
    "ProductFamily",
    "IntrinsicDictionaries",
    "UpsilonField",
    "DecayCertificate",
    "pointwise_product",
    "smooth_multiplier",
    "paraproduct_evaluator",
    "wavelet_form_evaluator",
    "wavelet_form",
    "paraproduct_form",
    "paraproduct_testing",
    "antiderivative_pairing",
    "windowed_monomial",
    "intrinsic_coefficient",
    "intrinsic_coefficients",
    "mss_form",
    "pi_b_form",
    "msssig_form",
    "pi_b_sigma_form",
    "upsilon",
    "upsilon_region",
    "sample_upsilon",
    "upsilon_decay_certificate",
    "derivative_shift_check",
    "wbp_constants",
    "bmo_oscillation",
]

Triple = Callable[[SampledFunction, SampledFunction, SampledFunction], complex]


def _same_grid(*fs) -> Grid:
    g = fs[0].grid
    for f in fs[1:]:
        if f.grid != g:
            raise GridError("arguments live on different grids")
    if g.d != 1:
        raise GridError("forms are evaluated in one dimension")
    return g


# ----------------------------------------------------------- model operators

@dataclass(frozen=True, eq=False)
class FormEvaluator:
    """A trilinear rule ``Lambda(f, g, h)`` on sampled triples with a catalog tag."""

    rule: Triple
    tag: str
    params: dict = field(default_factory=dict)
    operator: Callable | None = None

    def __call__(self, f: SampledFunction, g: SampledFunction, h: SampledFunction) -> complex:
        _same_grid(f, g, h)
        return complex(self.rule(f, g, h))

    def trilinearity_defect(self, grid: Grid, trials: int = 5, seed: int = 0) -> float:
        """Largest relative defect of linearity in each slot over random smooth triples."""
        rng = np.random.default_rng(seed)

        def rand():
            x = grid.nodes
            c = rng.standard_normal(4)
            v = sum(c[j] * np.cos((j + 1) * x + rng.uniform(0, 6)) for j in range(4))
            return SampledFunction(grid, v * np.exp(-(x / (0.3 * grid.L)) ** 2))

        worst = 0.0
        for _ in range(trials):
            args = [rand() for _ in range(3)]
            a, b = rng.standard_normal(2)
            for slot in range(3):
                p, q = rand(), rand()
                mix = list(args)
                mix[slot] = p * a + q * b
                lhs = self(*mix)
                mp, mq = list(args), list(args)
                mp[slot], mq[slot] = p, q
                vp, vq = self(*mp), self(*mq)
                rhs = a * vp + b * vq
                scale = max(abs(a * vp) + abs(b * vq), 1e-300)
                worst = max(worst, abs(lhs - rhs) / scale)
        return worst


def pointwise_product() -> FormEvaluator:
    """``Lambda(f, g, h) = int f g h``."""

    def rule(f, g, h):
        return np.sum(f.values * g.values * h.values) * f.grid.h

    return FormEvaluator(rule, "pointwise-product", operator=lambda f, g: f * g)


def _freq_rule(m, names):
    if isinstance(m, (int, float, complex)):
        return lambda *a: np.full(np.broadcast(*a).shape, complex(m))
    if isinstance(m, str):
        return parse_expression(m, names)
    return m


def _apply_symbol(values: np.ndarray, sym: np.ndarray) -> np.ndarray:
    if np.all(sym == 1):
        return values
    return np.fft.ifft(np.fft.fft(values) * sym)


def smooth_multiplier(m) -> FormEvaluator:
    """Bilinear Fourier multiplier ``T_m`` paired with ``h``.

    ``m`` is either a rule in ``xi, eta`` evaluated densely (``N <= 4096``),
    or a list of ``(a, b, c)`` single-variable rules meaning
    ``m(xi, eta) = sum a(xi) b(eta) c(xi + eta)``, evaluated in ``O(N log N)``.
    Frequency sums alias periodically.
    """
    if isinstance(m, (list, tuple)):
        terms = [tuple(_freq_rule(r, ("xi",)) for r in term) for term in m]

        def apply(f, g):
            xi = f.grid.freqs
            acc = np.zeros(f.grid.N, dtype=complex)
            for a, b, c in terms:
                sa, sb, sc = (np.asarray(r(xi), dtype=complex) * np.ones_like(xi) for r in (a, b, c))
                acc += _apply_symbol(_apply_symbol(f.values, sa) * _apply_symbol(g.values, sb), sc)
            return acc

        def rule(f, g, h):
            return np.sum(apply(f, g) * h.values) * f.grid.h

        def operator(f, g):
            _same_grid(f, g)
            return SampledFunction(f.grid, apply(f, g))

        return FormEvaluator(rule, "smooth-multiplier", {"m": "separable", "terms": len(terms)}, operator)

    fn = _freq_rule(m, ("xi", "eta"))

    def rule(f, g, h):
        grid = f.grid
        N = grid.N
        if N > 4096:
            raise GridError("dense multiplier evaluation is limited to N <= 4096")
        xi = grid.freqs
        F, G = np.fft.fft(f.values), np.fft.fft(g.values)
        Ht = np.fft.ifft(h.values) * N
        total = 0j
        idx = np.arange(N)
        for k1 in range(N):
            row = np.asarray(fn(xi[k1], xi), dtype=complex) * np.ones(N)
            total += F[k1] * np.sum(row * G * Ht[(k1 + idx) % N])
        return total * grid.h / N**2

    return FormEvaluator(rule, "smooth-multiplier", {"m": str(m)})


# ------------------------------------------------------------- wavelet forms

@dataclass(frozen=True, eq=False)
class ProductFamily:
    """``nu_z = first_z (x) second_z`` for two unit-scale profiles or wavelets."""

    first: Union[MotherWavelet, Profile]
    second: Union[MotherWavelet, Profile]

    def __call__(self, grid: Grid, z: AffinePoint) -> SampledFunction2D:
        a = self.first.place(grid, z).values
        b = self.second.place(grid, z).values
        return SampledFunction2D(grid, np.outer(a, b))

    def coefficients(self, f: SampledFunction, g: SampledFunction, ag: AffineGrid) -> np.ndarray:
        return cwt(f, self.first, ag).values * cwt(g, self.second, ag).values


def _cell_points(ag: AffineGrid):
    for j, t in enumerate(ag.scales):
        for i, w in enumerate(ag.centers):
            yield j, i, AffinePoint(float(w), float(t))


def wavelet_form(nu_family, phi, f: SampledFunction, g: SampledFunction, h: SampledFunction,
                 ag: AffineGrid) -> complex:
    """``int <f (x) g, nu_z> <h, phi_z> dmu(z)`` over the cells of ``ag``.

    ``nu_family`` is a :class:`ProductFamily` (evaluated by FFT correlation) or
    a callable ``(grid, z) -> SampledFunction2D`` evaluated cell by cell.
    """
    grid = _same_grid(f, g, h)
    if grid != ag.grid:
        raise GridError("functions and affine grid live on different grids")
    ch = cwt(h, phi, ag).values
    if isinstance(nu_family, ProductFamily):
        cfg = nu_family.coefficients(f, g, ag)
    else:
        cfg = np.empty(ag.shape, dtype=complex)
        for j, i, z in _cell_points(ag):
            nu = nu_family(grid, z)
            cfg[j, i] = f.values @ nu.values @ g.values * grid.h**2
    return mu_integrate(cfg * ch, ag)


def wavelet_form_evaluator(nu_family, phi, ag: AffineGrid) -> FormEvaluator:
    return FormEvaluator(lambda f, g, h: wavelet_form(nu_family, phi, f, g, h, ag),
                         "wavelet-form", {"family": type(nu_family).__name__})


def antiderivative_pairing(b: SampledFunction, phi, order: int, ag: AffineGrid,
                           tol: float = 1e-8) -> np.ndarray:
    """``<b, (d^{-order} phi)_z>`` on the cells of ``ag``.

    Raises when ``phi`` lacks the ``order`` vanishing moments that make the
    anti-derivative decay.
    """
    if order < 0:
        raise ValueError("anti-derivative order must be nonnegative")
    if order:
        base = phi.base if isinstance(phi, (MotherWavelet, Profile)) else phi
        x = base.grid.nodes
        scale = np.sum(np.abs(base.values)) * base.grid.h
        for a in range(order):
            mom = abs(np.sum(x**a * base.values)) * base.grid.h
            if mom > tol * scale * max(1.0, base.grid.L) ** a:
                raise GridError(f"moment {a} of the wavelet is {mom:.3e}; the order-{order} "
                                "anti-derivative needs cancellative input")
    grid = b.grid
    xi = grid.freqs
    B = np.fft.fft(b.values)
    out = np.empty(ag.shape, dtype=complex)
    with np.errstate(divide="ignore", invalid="ignore"):
        for j, t in enumerate(ag.scales):
            # reflected kernel: phi_hat(-t xi) / (-i t xi)^order
            sym = phi.spectrum(grid, t, reflect=True) / (-1j * t * xi) ** order
            if order:
                sym[0] = 0.0
            out[j] = np.fft.ifft(B * sym)[:: ag.stride]
    return out


def paraproduct_form(b: SampledFunction, gamma, fams, phi, f: SampledFunction, g: SampledFunction,
                     h: SampledFunction, ag: AffineGrid) -> complex:
    """``int <b, (d^{-g1-g2} phi)_z> <f, theta^{g1}_z> <g, theta^{g2}_z> <h, phi_z> dmu(z)``."""
    grid = _same_grid(b, f, g, h)
    if grid != ag.grid:
        raise GridError("functions and affine grid live on different grids")
    g1, g2 = (int(np.sum(c)) for c in gamma)
    th1, th2 = fams
    for th, gm in ((th1, g1), (th2, g2)):
        if isinstance(th, GammaFamily) and th.gamma != gm:
            raise ValueError(f"gamma family of order {th.gamma} supplied for |gamma| = {gm}")
    if not np.any(b.values):
        return 0j
    cb = antiderivative_pairing(b, phi, g1 + g2, ag)
    prof = lambda th: th.profile if isinstance(th, GammaFamily) else th
    cf = cwt(f, prof(th1), ag).values
    cg = cwt(g, prof(th2), ag).values
    ch = cwt(h, phi, ag).values
    return mu_integrate(cb * cf * cg * ch, ag)


def paraproduct_evaluator(b: SampledFunction, gamma, fams, phi, ag: AffineGrid) -> FormEvaluator:
    return FormEvaluator(lambda f, g, h: paraproduct_form(b, gamma, fams, phi, f, g, h, ag),
                         "paraproduct", {"gamma": [list(map(int, np.atleast_1d(c))) for c in gamma]})


def _antiderivative(h: SampledFunction, order: int) -> np.ndarray:
    """Spectral ``d^{-order} h`` with the zero mode dropped."""
    if order == 0:
        return h.values
    xi = h.grid.freqs
    sym = np.zeros(h.grid.N, dtype=complex)
    sym[1:] = (1j * xi[1:]) ** (-order)
    return np.fft.ifft(np.fft.fft(h.values) * sym)


def paraproduct_testing(b: SampledFunction, gamma: tuple, phi, h: SampledFunction, ag: AffineGrid,
                        probes: tuple | None = None, adjoint_orders: int = 3) -> dict:
    """Test the paraproduct on windowed monomials.

    ``reproduce`` rows pair ``(x^k1, x^k2, h)`` for ``k1 + k2 <= |gamma|`` with
    the expected value ``<b, d^{-|gamma|} h>`` when ``k = gamma`` and 0 otherwise.
    ``adjoint`` rows put ``x^k`` in the third slot against the two ``probes``,
    where the value should vanish.
    """
    grid = _same_grid(b, h)
    g1, g2 = int(gamma[0]), int(gamma[1])
    fams = (make_gamma_family(g1), make_gamma_family(g2))
    gam = ((g1,), (g2,))
    target = complex(np.sum(b.values * _antiderivative(h, g1 + g2)) * grid.h)
    rows = []
    for k1 in range(g1 + g2 + 1):
        for k2 in range(g1 + g2 + 1 - k1):
            f, g = windowed_monomial(grid, k1), windowed_monomial(grid, k2)
            val = paraproduct_form(b, gam, fams, phi, f, g, h, ag)
            rows.append({"kappa": (k1, k2), "value": val, "expected": target if (k1, k2) == (g1, g2) else 0j})
    if probes is None:
        probes = (SampledFunction(grid, np.exp(-grid.nodes**2)),
                  SampledFunction(grid, np.exp(-(grid.nodes - 0.2) ** 2)))
    adj = [{"kappa": k, "value": paraproduct_form(b, gam, fams, phi, *probes, windowed_monomial(grid, k), ag)}
           for k in range(adjoint_orders)]
    return {"gamma": (g1, g2), "target": target, "reproduce": rows, "adjoint": adj}


def windowed_monomial(grid: Grid, power: int, center: float = 0.0, scale: float = 1.0,
                      plateau: float = 0.75, edge: float = 0.95) -> SampledFunction:
    """``((x - center) / scale)^power`` times a smooth window.

    The window is 1 for ``|x - center| <= plateau L`` and 0 beyond ``edge L``.
    """
    x = grid.wrap(grid.nodes - center)
    win = 1.0 - _smooth_step_derivs(np.abs(x), 0, plateau * grid.L, edge * grid.L)[0]
    return SampledFunction(grid, (x / scale) ** power * win)


def bmo_oscillation(b: SampledFunction, min_cells: int = 2) -> float:
    """Largest dyadic mean oscillation ``<|b - <b>_Q|>_Q`` (a diagnostic)."""
    v = b.values
    N = v.size
    best = 0.0
    size = N
    while size >= min_cells:
        blocks = v.reshape(-1, size)
        osc = np.mean(np.abs(blocks - blocks.mean(axis=1, keepdims=True)), axis=1)
        best = max(best, float(osc.max()))
        size //= 2
    return best


# ----------------------------------------------------------- intrinsic forms

def _correlate(F: np.ndarray, kspec: np.ndarray, h: float, stride: int) -> np.ndarray:
    """``sum_x f(x) k(x - w) h`` for every node ``w``; ``kspec`` is the conjugated FFT of ``k``."""
    return np.fft.ifft(F * kspec)[::stride] * h


def intrinsic_coefficients(f: SampledFunction, g: SampledFunction | None, dictionary: WaveletDictionary,
                           ag: AffineGrid) -> np.ndarray:
    """Max over members of ``|<f (x) g, member_z>|`` (or ``|<f, member_z>|``) on every cell."""
    grid = f.grid
    if grid != dictionary.grid or grid != ag.grid:
        raise GridError("dictionary, function and affine grid must share one grid")
    if dictionary.tensor and g is None:
        raise ValueError("a two-slot dictionary needs two functions")
    h = grid.h
    F = np.fft.fft(f.values)
    G = np.fft.fft(g.values) if dictionary.tensor else None
    out = np.zeros(ag.shape)
    if not np.any(f.values) or (G is not None and not np.any(g.values)):
        return out
    for j, t in enumerate(ag.scales):
        for mem in dictionary.kernel_spectra(t):
            if dictionary.tensor:
                c = sum(_correlate(F, a, h, ag.stride) * _correlate(G, b, h, ag.stride) for a, b in mem)
            else:
                c = _correlate(F, mem, h, ag.stride)
            np.maximum(out[j], np.abs(c), out=out[j])
    return out


def intrinsic_coefficient(f: SampledFunction, g: SampledFunction | None, z: AffinePoint,
                          dictionary: WaveletDictionary) -> float:
    """Max over dictionary members placed at ``z`` of the absolute pairing."""
    best = 0.0
    h = f.grid.h
    for mem in dictionary.at(z):
        if dictionary.tensor:
            val = mem.pair(f, g)
        else:
            val = np.sum(f.values * mem.values) * h
        best = max(best, abs(val))
    return float(best)


@dataclass(eq=False)
class IntrinsicDictionaries:
    """Dictionaries behind the intrinsic forms, built lazily and shared.

    ``pair(10)`` is the two-slot class cancellative in the second slot,
    ``pair(11)`` has no cancellation, ``s0`` is the cancellative one-slot
    class with decay ``2d + 1`` and ``one`` the noncancellative one-slot class.
    """

    grid: Grid
    size: int = 12
    k: int = 0
    delta: float = 1.0
    eta: float = 0.5
    seed: int = 0
    _cache: dict = field(default_factory=dict, repr=False)

    def _build(self, key, spec: WaveletClassSpec) -> WaveletDictionary:
        if key not in self._cache:
            z = AffinePoint(0.0, 8 * self.grid.h)
            self._cache[key] = build_dictionary(spec, z, self.size, self.grid, self.seed)
        return self._cache[key]

    def pair(self, pattern: int = 10, sigma: float | None = None) -> WaveletDictionary:
        if pattern not in (10, 11):
            raise ValueError("pair pattern is 10 or 11")
        d = self.grid.d
        # the sigma class coincides with the plain class once k > sigma > d
        if sigma is not None and self.k > sigma > d:
            sigma = None
        flags = (False, pattern == 10)
        spec = WaveletClassSpec(self.k, self.delta, self.eta, sigma, flags)
        return self._build(("pair", pattern, sigma), spec)

    @property
    def one(self) -> WaveletDictionary:
        """Noncancellative one-slot class used by the intrinsic maximal function."""
        spec = WaveletClassSpec(0, self.delta, self.eta, None, (False,))
        return self._build(("one",), spec)

    @property
    def s0(self) -> WaveletDictionary:
        spec = WaveletClassSpec(0, self.delta, 2 * self.grid.d, None, (True,))
        return self._build(("s0",), spec)


def mss_form(f, g, h, dicts: IntrinsicDictionaries, ag: AffineGrid) -> float:
    """``int Psi^{0,delta;1,0}_z(f, g) Psi^{S_0}_z(h) dmu(z)``."""
    _same_grid(f, g, h)
    a = intrinsic_coefficients(f, g, dicts.pair(10), ag)
    c = intrinsic_coefficients(h, None, dicts.s0, ag)
    return float(mu_integrate(a * c, ag).real)


def pi_b_form(b, f, g, h, dicts: IntrinsicDictionaries, ag: AffineGrid) -> float:
    """``int Psi^{S_0}_z(b) Psi^{0,delta;1,1}_z(f, g) Psi^{S_0}_z(h) dmu(z)``."""
    _same_grid(b, f, g, h)
    cb = intrinsic_coefficients(b, None, dicts.s0, ag)
    a = intrinsic_coefficients(f, g, dicts.pair(11), ag)
    c = intrinsic_coefficients(h, None, dicts.s0, ag)
    return float(mu_integrate(cb * a * c, ag).real)


def msssig_form(h, g, f, sigma: float, dicts: IntrinsicDictionaries, ag: AffineGrid) -> float:
    """``int sup_{nu in Psi^{sigma,k,delta;1,0}} |<h (x) g, nu_z>| Psi^{S_0}_z(f) dmu(z)``.

    The caller passes ``D^sigma f`` as ``f`` when that is the intended input.
    """
    _same_grid(h, g, f)
    a = intrinsic_coefficients(h, g, dicts.pair(10, sigma), ag)
    c = intrinsic_coefficients(f, None, dicts.s0, ag)
    return float(mu_integrate(a * c, ag).real)


def pi_b_sigma_form(b, f, g, h, sigma: float, dicts: IntrinsicDictionaries, ag: AffineGrid) -> float:
    """``int Psi^{S_0}_z(b) Psi^{sigma,k,delta;1,1}_z(f, g) Psi^{S_0}_z(h) dmu(z)``."""
    _same_grid(b, f, g, h)
    cb = intrinsic_coefficients(b, None, dicts.s0, ag)
    a = intrinsic_coefficients(f, g, dicts.pair(11, sigma), ag)
    c = intrinsic_coefficients(h, None, dicts.s0, ag)
    return float(mu_integrate(cb * a * c, ag).real)


# -------------------------------------------------------------------- Upsilon

DEFAULT_PSI = "exp(1/(x^2-1)+1)"


def _unit(rule, radius: float | None = None):
    """Resolve a unit-scale rule to ``(callable, support radius or None)``."""
    if isinstance(rule, tuple):
        fn, r = _unit(rule[0])
        return fn, rule[1]
    if isinstance(rule, MotherWavelet):
        return rule, rule.radius
    if isinstance(rule, GammaFamily):
        return rule, rule.radius
    if isinstance(rule, Profile):
        return (lambda x: rule(x).real), rule.support_radius()
    if isinstance(rule, (str, Expression)):
        expr = parse_expression(rule, ("x",)) if isinstance(rule, str) else rule
        if radius is None and rule == DEFAULT_PSI:
            radius = 1.0
        return expr, radius
    return rule, radius


def _place(rule, grid: Grid, w: float, t: float) -> np.ndarray:
    """Direct samples of ``t^{-1} rule((x - w) / t)``, exactly zero off the support."""
    fn, radius = _unit(rule)
    y = grid.wrap(grid.nodes - w) / t
    out = np.zeros(grid.N)
    m = np.ones(grid.N, bool) if radius is None else np.abs(y) < radius
    if m.any():
        with np.errstate(all="ignore"):
            vals = np.asarray(fn(y[m]), dtype=float)
        out[m] = np.where(np.isfinite(vals), vals, 0.0) / t
    return out


@lru_cache(maxsize=8)
def _gamma_family(order: int) -> GammaFamily:
    return make_gamma_family(order)


def upsilon_region(u, v, w, s, t) -> np.ndarray:
    """Region label per sample: ``F`` far, ``S`` near, ``A`` high-low."""
    m = np.maximum(np.abs(np.asarray(u) - w), np.abs(np.asarray(v) - w))
    s = np.asarray(s, dtype=float)
    far = m >= 3 * s
    high = s >= 3 * t
    return np.where(far, "F", np.where(high, "A", "S"))


def _taylor(fvals: np.ndarray, grid: Grid, w: float, t: float, k: int, fams) -> np.ndarray:
    """``P_k(x) = sum_{g<=k} <f, theta^g_{w,t}> ((x - w)/t)^g`` (windowed); ``P_{-1} = 0``."""
    out = np.zeros(grid.N)
    for gam in range(k + 1):
        th = fams[gam] if fams is not None else _gamma_family(gam)
        coef = np.sum(fvals * _place(th, grid, w, t)) * grid.h
        out += coef * windowed_monomial(grid, gam, w, t).values.real
    return out


def upsilon(lam: FormEvaluator, psi, phi, mother, u: float, v: float, w: float, s: float, t: float,
            k1: int = 0, k2: int = 0, fams=None, grid: Grid | None = None) -> complex:
    """``Lambda(psi_{u,s}, phi_{v,s}, phi_{w,t})`` minus the region-A corrections.

    ``psi``, ``phi`` and ``mother`` are unit-scale rules placed by direct
    sampling, so disjoint supports give exact zeros. ``fams[g]`` are the gamma
    families used for the Taylor pairings; ``P_{-1}`` is zero.
    """
    if s < t:
        raise ValueError(f"Upsilon needs s >= t, got s={s}, t={t}")
    grid = grid or upsilon_grid(t)
    mother = mother if mother is not None else make_mother_wavelet(1)
    phi = mother if phi is None else phi
    psi = DEFAULT_PSI if psi is None else psi
    mk = lambda vals: SampledFunction(grid, vals)
    a = _place(psi, grid, u, s)
    b = _place(phi, grid, v, s)
    c = mk(_place(mother, grid, w, t))
    val = lam(mk(a), mk(b), c)
    if upsilon_region(u, v, w, s, t) != "A":
        return val
    P = {k: _taylor(a, grid, w, t, k, fams) for k in (k1, k1 - 1) if k >= 0}
    Pt = {k: _taylor(b, grid, w, t, k, fams) for k in (k2, k2 - 1) if k >= 0}
    zero = np.zeros(grid.N)
    corr = lam(mk(P[k1]), mk(Pt[k2]), c)
    if k1 >= 1:
        corr += lam(mk(P[k1 - 1]), mk(b - Pt[k2]), c)
    if k2 >= 1:
        corr -= lam(mk(a - P[k1]), mk(Pt.get(k2 - 1, zero)), c)
    return val - corr


def upsilon_grid(t: float = 1.0, extent: float = 140.0, per_t: int = 128) -> Grid:
    """Grid resolving scale ``t`` with ``per_t`` nodes and covering ``extent * t``."""
    L = extent * t
    N = 1 << math.ceil(math.log2(2 * L * per_t / t))
    return Grid(1, L, N)


@dataclass(frozen=True, eq=False)
class UpsilonField:
    points: np.ndarray = field(repr=False)   # rows (u, v, w, s, t)
    values: np.ndarray = field(repr=False)
    k1: int
    k2: int
    reference: tuple
    seed: int
    d: int = 1

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise GridError("Upsilon field has non-finite values")

    @property
    def regions(self) -> np.ndarray:
        u, v, w, s, t = self.points.T
        return upsilon_region(u, v, w, s, t)

    def disjoint_supports(self, psi_radius: float = 1.0, phi_radius: float = 0.5) -> np.ndarray:
        """Samples where ``psi_{u,s}``, ``psi_{v,s}`` and ``phi_{w,t}`` share no common point."""
        u, v, w, s, t = self.points.T
        lo = np.maximum.reduce([u - psi_radius * s, v - psi_radius * s, w - phi_radius * t])
        hi = np.minimum.reduce([u + psi_radius * s, v + psi_radius * s, w + phi_radius * t])
        return lo >= hi

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("u,v,w,s,t,re,im\n")
        for p, val in zip(self.points, self.values):
            buf.write(",".join(repr(float(x)) for x in p) + f",{val.real!r},{val.imag!r}\n")
        return buf.getvalue()


def sample_upsilon(lam: FormEvaluator, n: int = 500, seed: int = 0, k1: int = 0, k2: int = 0,
                   w: float = 0.0, t: float = 1.0, s_range: tuple = (1.0, 32.0),
                   offset_range: tuple = (0.01, 100.0), psi=None, phi=None, mother=None,
                   fams=None, grid: Grid | None = None, threads: int = 1) -> UpsilonField:
    """Latin-hypercube sample of Upsilon over log-spaced ``s/t, |u-w|/t, |v-w|/t``.

    Offsets get random signs. Sample order is fixed by ``seed`` whatever
    ``threads`` is.
    """
    lo = np.log([s_range[0], offset_range[0], offset_range[0]])
    hi = np.log([s_range[1], offset_range[1], offset_range[1]])
    unit = qmc.LatinHypercube(d=3, seed=np.random.default_rng(seed)).random(n)
    logs = lo + unit * (hi - lo)
    signs = np.where(np.random.default_rng(seed + 1).random((n, 2)) < 0.5, -1.0, 1.0)
    s = t * np.exp(logs[:, 0])
    u = w + signs[:, 0] * t * np.exp(logs[:, 1])
    v = w + signs[:, 1] * t * np.exp(logs[:, 2])
    pts = np.column_stack([u, v, np.full(n, w), s, np.full(n, t)])
    extent = (offset_range[1] + 2 * s_range[1] + 4)
    grid = grid or upsilon_grid(t, extent)
    mother = mother if mother is not None else make_mother_wavelet(1)

    def one(p):
        return upsilon(lam, psi, phi, mother, *p, k1=k1, k2=k2, fams=fams, grid=grid)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            vals = list(ex.map(one, pts))
    else:
        vals = [one(p) for p in pts]
    return UpsilonField(pts, np.array(vals, dtype=complex), k1, k2, (w, t), seed)


@dataclass(frozen=True)
class DecayCertificate:
    slope: float
    intercept: float
    target: float
    constant: float
    region_counts: dict
    nonzero: int
    zero_outside_A: int
    degenerate: bool
    eta: float
    seed: int

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def upsilon_decay_certificate(fld: UpsilonField, eta: float, floor: float = 1e-12,
                              min_per_region: int = 8) -> DecayCertificate:
    """Log-log fit of ``|Upsilon|`` against ``max{s, |u-w|, |v-w|}``.

    Values at or below ``floor`` times the largest magnitude count as zero and
    are left out of the fit. The constant is the largest
    ``|Upsilon| R^{2d+k1+k2+eta} / t^{k1+k2+eta}``.
    """
    regions = fld.regions
    counts = {r: int(np.sum(regions == r)) for r in "FSA"}
    short = [r for r, c in counts.items() if c < min_per_region]
    if short:
        raise ValueError(f"too few samples in region(s) {short}: {counts}")
    u, v, w, s, t = fld.points.T
    R = np.maximum(s, np.maximum(np.abs(u - w), np.abs(v - w)))
    mag = np.abs(fld.values)
    top = mag.max(initial=0.0)
    keep = mag > floor * top if top > 0 else np.zeros(mag.shape, bool)
    k = fld.k1 + fld.k2
    target = -(2 * fld.d + k + eta)
    zero_out = int(np.sum((mag == 0) & (regions != "A")))
    x, y = np.log(R[keep]), np.log(mag[keep])
    degenerate = keep.sum() < 2 or np.ptp(x) == 0
    if degenerate:
        slope = intercept = constant = math.nan
    else:
        slope, intercept = (float(c) for c in np.polyfit(x, y, 1))
        constant = float(np.max(mag[keep] * R[keep] ** (-target) / t[keep] ** (k + eta)))
    return DecayCertificate(slope, intercept, target, constant, counts, int(keep.sum()), zero_out,
                            bool(degenerate), float(eta), fld.seed)


# ------------------------------------------------------------ other checks

def derivative_shift_check(f: SampledFunction, g: SampledFunction, h: SampledFunction, phi,
                           ag: AffineGrid) -> dict:
    """Compare ``sum <f(x)g, nu_z><h', phi_z>`` with ``sum <f(x)g', t^{-1} d_y^{-1} nu_z><h, t phi_z'>``.

    ``nu_z = phi_z (x) phi_z``.
    """
    grid = _same_grid(f, g, h)
    xi = grid.freqs
    Fs = [np.fft.fft(q.values) for q in (f, g, h)]
    dG, dH = Fs[1] * 1j * xi, Fs[2] * 1j * xi
    lhs = np.empty(ag.shape, dtype=complex)
    rhs = np.empty(ag.shape, dtype=complex)
    with np.errstate(divide="ignore", invalid="ignore"):
        for j, t in enumerate(ag.scales):
            ref = phi.spectrum(grid, t, reflect=True)
            corr = lambda F, sym: np.fft.ifft(F * sym)[:: ag.stride]
            cf = corr(Fs[0], ref)
            lhs[j] = cf * corr(Fs[1], ref) * corr(dH, ref)
            anti = ref / (-1j * xi) / t
            anti[0] = 0.0
            rhs[j] = cf * corr(dG, anti) * corr(Fs[2], ref * (-1j * xi) * t)
    a, b = mu_integrate(lhs, ag), mu_integrate(rhs, ag)
    return {"lhs": a, "rhs": b, "relative": abs(a - b) / max(abs(a), 1e-300)}


def wbp_constants(lam: FormEvaluator, rules: Sequence, points: Sequence[AffinePoint],
                  grid: Grid) -> np.ndarray:
    """``t^{2d} |Lambda(a_z, b_z, c_z)|`` for each point; rules are placed directly."""
    out = []
    for z in points:
        vals = [SampledFunction(grid, _place(r, grid, float(z.w), float(z.t))) for r in rules]
        out.append(z.t ** (2 * grid.d) * abs(lam(*vals)))
    return np.array(out)
