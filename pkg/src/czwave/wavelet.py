"""Mother wavelets, gamma families, wavelet-class norms and finite dictionaries.

Compactly supported profiles live on their own fine grid (:class:`Profile`)
and are moved onto coarser working grids spectrally: the continuous Fourier
transform is evaluated by direct quadrature at exactly the frequencies needed,
so dilations far below the working grid spacing stay exact in frequency.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
from scipy.signal import czt

from . import kernels
from .expr import Expression, Jet, parse_expression
from .grid import (AffinePoint, Grid, GridError, SampledFunction, SampledFunction2D,
                   spectral_multiplier)

__all__ = [
    "DEFAULT_BUMP",
    "Profile",
    "MotherWavelet",
    "GammaFamily",
    "WaveletClassSpec",
    "WaveletDictionary",
    "TensorMember",
    "make_mother_wavelet",
    "admissibility_constant",
    "admissibility_profile",
    "fourier_at",
    "trig_interpolate",
    "sy",
    "star_norm",
    "sigma_norm",
    "class_membership",
    "moment_matrix",
    "make_gamma_family",
    "build_dictionary",
]

DEFAULT_BUMP = "exp(4/(x^2-1/4))"
_CHUNK = 1 << 22


# ---------------------------------------------------------------- quadrature

def fourier_at(values: np.ndarray, nodes: np.ndarray, h: float, xi) -> np.ndarray:
    """Quadrature ``h * sum_j v_j exp(-i xi x_j)`` of the continuous transform (1D)."""
    values = np.asarray(values)
    xi = np.asarray(xi, dtype=float)
    nz = np.flatnonzero(np.abs(values) > 0)
    if nz.size == 0:
        return np.zeros(xi.shape, dtype=complex)
    v = values[nz[0]: nz[-1] + 1]
    x = nodes[nz[0]: nz[-1] + 1]
    flat = xi.reshape(-1)
    out = np.empty(flat.size, dtype=complex)
    step = max(1, _CHUNK // max(v.size, 1))
    real = np.isrealobj(v) or not np.any(v.imag)
    even = real and v.size == x.size and np.allclose(x, -x[::-1]) and np.allclose(v.real, v.real[::-1])
    for s in range(0, flat.size, step):
        ph = np.outer(flat[s: s + step], x)
        if even:
            out[s: s + step] = np.cos(ph) @ v.real * h
        else:
            out[s: s + step] = np.exp(-1j * ph) @ v * h
    return out.reshape(xi.shape)


def trig_interpolate(f: SampledFunction, points) -> np.ndarray:
    """Periodic band-limited interpolant of a 1D-grid function at arbitrary points.

    Uniformly spaced ``points`` are evaluated with a chirp-z transform.
    """
    grid = f.grid
    pts = np.asarray(points, dtype=float)
    F = np.fft.fft(f.values) / grid.N
    flat = pts.reshape(-1)
    if flat.size > 2:
        du = flat[1] - flat[0]
        if du != 0 and np.allclose(np.diff(flat), du, rtol=1e-12, atol=1e-12 * abs(du)):
            return _trig_uniform(F, grid, flat[0], du, flat.size).reshape(pts.shape)
    k = grid.freqs
    u = flat + grid.L
    out = np.empty(u.size, dtype=complex)
    nyq = grid.N // 2
    step = max(1, _CHUNK // grid.N)
    for s in range(0, u.size, step):
        B = np.exp(1j * np.outer(u[s: s + step], k))
        B[:, nyq] = np.cos(u[s: s + step] * k[nyq])
        out[s: s + step] = B @ F
    return out.reshape(pts.shape)


def _trig_uniform(F: np.ndarray, grid: Grid, p0: float, dp: float, m: int) -> np.ndarray:
    """``sum_k F_k e^{i xi_k (p_j + L)}`` at ``p_j = p0 + j dp`` (Nyquist split evenly)."""
    N = grid.N
    # coefficients for integer frequencies -N/2 .. N/2 in units of 2 pi / 2L
    c = np.empty(N + 1, dtype=complex)
    c[: N // 2] = F[N // 2:]
    c[0] = F[N // 2] / 2
    c[N // 2: N] = F[: N // 2]
    c[N] = F[N // 2] / 2
    base = 2 * np.pi / (2 * grid.L)
    u0 = p0 + grid.L
    a = np.exp(-1j * base * u0)
    w = np.exp(1j * base * dp)
    vals = czt(c, m=m, w=w, a=a)
    u = u0 + dp * np.arange(m)
    return vals * np.exp(-1j * base * (N // 2) * u)


def _interp_matrix(grid: Grid, points: np.ndarray) -> np.ndarray:
    u = np.asarray(points, dtype=float) + grid.L
    B = np.exp(1j * np.outer(u, grid.freqs))
    B[:, grid.N // 2] = np.cos(u * grid.freqs[grid.N // 2])
    return B


def _interp_tensor(values: np.ndarray, grid: Grid, px: np.ndarray, py: np.ndarray) -> np.ndarray:
    F = np.fft.fft2(values) / grid.N**2
    return _interp_matrix(grid, px) @ F @ _interp_matrix(grid, py).T


# ------------------------------------------------------------------ profiles

class Profile:
    """Compactly supported function sampled on a fine 1D grid.

    ``exact`` (optional) evaluates the underlying rule at arbitrary points;
    otherwise the band-limited interpolant of the samples is used.
    """

    def __init__(self, base: SampledFunction, exact: Callable | None = None, name: str = ""):
        if base.grid.d != 1:
            raise GridError("profiles are one-dimensional")
        self.base = base
        self.exact = exact
        self.name = name
        self._spectra: dict = {}

    @property
    def grid(self) -> Grid:
        return self.base.grid

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.exact is not None:
            return np.asarray(self.exact(x), dtype=complex)
        return trig_interpolate(self.base, x)

    def fourier(self, xi) -> np.ndarray:
        g = self.grid
        return fourier_at(self.base.values, g.nodes, g.h, xi)

    def spectrum(self, grid: Grid, t: float, reflect: bool = False) -> np.ndarray:
        """``p_hat(+/- t xi)`` on the frequency mesh of a 1D ``grid`` (cached)."""
        key = (grid, float(t), bool(reflect))
        if key not in self._spectra:
            xi = grid.freqs * (-t if reflect else t)
            self._spectra[key] = self.fourier(xi)
        return self._spectra[key]

    def place(self, grid: Grid, z: AffinePoint) -> SampledFunction:
        """Spectrally exact ``t^{-1} p((x - w) / t)`` on ``grid`` (periodic)."""
        spec = self.spectrum(grid, z.t) * np.exp(-1j * grid.freqs * (float(z.w) + grid.L))
        vals = np.fft.ifft(spec) / grid.h
        if not np.iscomplexobj(self.base.values) or not np.any(self.base.values.imag):
            vals = vals.real
        return SampledFunction(grid, vals)

    def support_radius(self, rel: float = 1e-14) -> float:
        v = np.abs(self.base.values)
        if not v.any():
            return 0.0
        idx = np.flatnonzero(v > rel * v.max())
        x = self.grid.nodes
        return float(max(abs(x[idx[0]]), abs(x[idx[-1]])) + self.grid.h)


def _fine_grid(L: float = 1.0, N: int = 4096) -> Grid:
    return Grid(1, L, N)


# ------------------------------------------------------------ mother wavelet

def _radial_laplacian_jet(jet: Jet, r0: np.ndarray, d: int, n: int) -> np.ndarray:
    """Apply ``(d^2/dr^2 + (d-1)/r d/dr)^n`` to a radial jet and return the value."""
    c = jet.c
    K = c.shape[0] - 1
    inv = np.array([(-1.0) ** k / r0 ** (k + 1) for k in range(K + 1)])
    for _ in range(n):
        m = c.shape[0] - 1
        d1 = np.array([(k + 1) * c[k + 1] for k in range(m)])
        d2 = np.array([(k + 1) * d1[k + 1] for k in range(m - 1)])
        prod = np.zeros_like(d2)
        for k in range(m - 1):
            prod[k] = np.sum(inv[: k + 1] * d1[k::-1][: k + 1], axis=0)
        c = d2 + (d - 1) * prod
    return c[0]


def _laplacian_power(expr: Expression, n: int, d: int, r: np.ndarray, radius: float,
                     extra: int = 0) -> np.ndarray:
    """``Delta^n Phi`` at points (d=1: signed x; d=2: radius r) inside ``radius``.

    With ``extra > 0`` (d=1 only) returns the derivatives of orders
    ``2n .. 2n + extra`` stacked along the first axis.
    """
    r = np.asarray(r, dtype=float)
    inside = np.abs(r) < radius
    out_shape = ((extra + 1,) if extra else ()) + r.shape
    out = np.zeros(out_shape)
    if not inside.any():
        return out
    ri = r[inside]
    if d == 1:
        order = 2 * n + extra
        jet = expr.jet(ri, order)
        der = jet.derivatives()[2 * n:]
        vals = np.where(np.isfinite(der), der, 0.0)
        # exp underflow at the edge of the support leaves exact zeros
        vals[:, jet.c[0] == 0] = 0.0
        if extra:
            out[:, inside] = vals
        else:
            out[inside] = vals[0]
        return out
    if extra:
        raise ValueError("derivative stacks are only available in d=1")
    vals = np.zeros(ri.shape)
    small = ri < 0.05 * radius / 0.5
    if (~small).any():
        rb = ri[~small]
        jet = expr.jet(rb, 2 * n)
        v = _radial_laplacian_jet(jet, rb, d, n)
        v = np.where(np.isfinite(v) & (jet.c[0] != 0), v, 0.0)
        vals[~small] = v
    if small.any():
        K = 2 * n + 48
        coef = expr.jet(np.array([0.0]), K).c[:, 0]
        for _ in range(n):
            new = np.zeros_like(coef)
            for m in range(2, K + 1):
                new[m - 2] = coef[m] * m * (m + d - 2)
            coef = new
        vals[small] = np.polyval(coef[::-1], ri[small])
    out[inside] = vals
    return out


@dataclass(eq=False)
class MotherWavelet:
    """``c * Delta^n Phi`` with ``Phi`` a bump supported in ``B(0, radius)``.

    ``base`` holds samples on a fine grid; the exact evaluator and the
    spectral access paths are used everywhere else.
    """

    D: int
    d: int
    bump: str
    radius: float
    n_lap: int
    scale: float
    base: SampledFunction = field(repr=False)
    admissibility_constant: float = 1.0
    _profile: Profile | None = field(default=None, repr=False)

    @property
    def expression(self) -> Expression:
        return parse_expression(self.bump, ("x",))

    def __call__(self, *coords) -> np.ndarray:
        if self.d == 1:
            return self.scale * _laplacian_power(self.expression, self.n_lap, 1, coords[0], self.radius)
        r = np.hypot(*coords) if len(coords) == 2 else np.asarray(coords[0])
        return self.scale * _laplacian_power(self.expression, self.n_lap, 2, r, self.radius)

    def derivatives(self, x, extra: int) -> np.ndarray:
        """Exact derivatives of orders ``0..extra`` (d=1)."""
        return self.scale * _laplacian_power(self.expression, self.n_lap, 1, x, self.radius, extra)

    @property
    def profile(self) -> Profile:
        """1D profile whose transform equals the radial transform of the wavelet."""
        if self._profile is None:
            if self.d == 1:
                self._profile = Profile(self.base, exact=self.__call__, name="phi")
            else:
                g = self.base.grid
                proj = self.base.values.real.sum(axis=1) * g.h
                self._profile = Profile(SampledFunction(Grid(1, g.L, g.N), proj), name="phi-projection")
        return self._profile

    def fourier(self, xi) -> np.ndarray:
        """Transform at ``xi`` (radial frequency magnitude when d=2)."""
        return self.profile.fourier(xi).real

    def spectrum(self, grid: Grid, t: float, reflect: bool = False) -> np.ndarray:
        if grid.d == 1:
            return self.profile.spectrum(grid, t, reflect)
        key = (grid, float(t), "radial")
        cache = self.profile._spectra
        if key not in cache:
            X, Y = grid.freq_mesh()
            rho = np.hypot(X, Y) * t
            uniq, inv = np.unique(rho, return_inverse=True)
            cache[key] = self.fourier(uniq)[inv].reshape(rho.shape)
        return cache[key]

    def place(self, grid: Grid, z: AffinePoint) -> SampledFunction:
        """``phi_z`` on ``grid``: band-limited in d=1, exact samples (minimal image) in d=2."""
        t = z.t
        if grid.d == 1:
            return self.profile.place(grid, z)
        w = np.broadcast_to(np.asarray(z.w, dtype=float), (2,))
        X, Y = grid.mesh()
        return SampledFunction(grid, self(grid.wrap(X - w[0]) / t, grid.wrap(Y - w[1]) / t) / t**2)

    def moments(self, order: int) -> np.ndarray:
        g = self.base.grid
        if self.d == 1:
            x = g.nodes
            return np.array([np.sum(x**a * self.base.values.real) * g.h for a in range(order + 1)])
        X, Y = g.mesh()
        return np.array([[np.sum(X**a * Y**b * self.base.values.real) * g.h**2
                          for b in range(order + 1)] for a in range(order + 1)])


def make_mother_wavelet(D: int = 1, bump: Union[str, Expression] = DEFAULT_BUMP, d: int = 1,
                        radius: float = 0.5, fine_N: int | None = None) -> MotherWavelet:
    """Build ``c * Delta^{max(4D,1)} Phi`` normalized to unit admissibility.

    ``bump`` is a rule in ``x`` (the radius when d=2) restricted to
    ``|x| < radius``; it must vanish smoothly at ``radius``.
    """
    if D < 0:
        raise ValueError(f"D must be nonnegative, got {D}")
    if radius > 0.5:
        raise GridError(f"bump support radius {radius} exceeds 1/2")
    expr = bump if isinstance(bump, Expression) else parse_expression(bump, ("x",))
    probe = np.linspace(-radius, radius, 2001)[1:-1]
    pv = np.asarray(expr(probe), dtype=float)
    if not np.all(np.isfinite(pv)) or not np.any(pv):
        raise GridError("bump is not finite and nonzero inside its support")
    if np.max(np.abs(pv - pv[::-1])) > 1e-12 * np.max(np.abs(pv)):
        raise GridError("bump must be even (radial in d=2)")
    edge = abs(float(expr(np.array([radius * (1 - 2e-3)]))[0]))
    if edge > 1e-10 * np.max(np.abs(pv)):
        raise GridError(f"bump does not vanish at the edge of B(0,{radius}); support exceeds the ball")
    n = max(4 * D, 1)
    if d == 1:
        g = _fine_grid(1.0, fine_N or 4096)
        raw = _laplacian_power(expr, n, 1, g.nodes, radius)
    elif d == 2:
        g = Grid(2, 1.0, fine_N or 1024)
        X, Y = g.mesh()
        raw = _laplacian_power(expr, n, 2, np.hypot(X, Y), radius)
    else:
        raise GridError("mother wavelets are built for d = 1 or 2")
    base = SampledFunction(g, raw)
    A = admissibility_constant(base, _check_mean=False)
    if not A > 1e-14:
        raise GridError(f"admissibility integral {A:.3e} is degenerate")
    c = 1.0 / math.sqrt(A)
    base = SampledFunction(g, raw * c)
    A1 = admissibility_constant(base)
    return MotherWavelet(D, d, expr.text, radius, n, c * 1.0, base, A1)


# ------------------------------------------------------------- admissibility

def _log_nodes(lo: float, hi: float, step: float) -> np.ndarray:
    n = int(math.ceil(math.log(hi / lo) / step)) + 1
    return np.exp(np.linspace(math.log(lo), math.log(hi), n))


def _trapz_log(vals: np.ndarray, xi: np.ndarray) -> float:
    u = np.log(xi)
    return float(np.sum((vals[1:] + vals[:-1]) * np.diff(u)) / 2)


def admissibility_profile(phi, directions: int = 8, step: float | None = None) -> np.ndarray:
    """``int_0^inf |phi_hat(xi rho)|^2 dxi/xi`` along each direction ``rho``.

    d=1 uses ``rho = +1, -1``; d=2 uses ``directions`` equispaced unit vectors.
    """
    f = phi.base if isinstance(phi, MotherWavelet) else phi
    g = f.grid
    hi = math.pi / g.h
    if g.d == 1:
        step = step or 0.01
        xi = _log_nodes(1e-6 * hi, hi, step)
        vals = [np.abs(fourier_at(f.values, g.nodes, g.h, s * xi)) ** 2 for s in (1.0, -1.0)]
        return np.array([_trapz_log(v, xi) for v in vals])
    step = step or 0.02
    xi = _log_nodes(1e-4 * hi, hi, step)
    v = f.values
    nz = np.argwhere(np.abs(v) > 0)
    if nz.size == 0:
        return np.zeros(directions)
    (i0, j0), (i1, j1) = nz.min(axis=0), nz.max(axis=0) + 1
    V = v[i0:i1, j0:j1]
    xs, ys = g.nodes[i0:i1], g.nodes[j0:j1]
    out = []
    for k in range(directions):
        th = 2 * math.pi * k / directions
        E1 = np.exp(-1j * np.outer(xi * math.cos(th), xs))
        E2 = np.exp(-1j * np.outer(xi * math.sin(th), ys))
        ft = np.sum((E1 @ V) * E2, axis=1) * g.h**2
        out.append(_trapz_log(np.abs(ft) ** 2, xi))
    return np.array(out)


def admissibility_constant(phi, _check_mean: bool = True) -> float:
    """Log-spaced quadrature of the admissibility integral (direction average)."""
    f = phi.base if isinstance(phi, MotherWavelet) else phi
    g = f.grid
    if _check_mean:
        mean = abs(np.sum(f.values)) * g.h**g.d
        l1 = np.sum(np.abs(f.values)) * g.h**g.d
        if mean > 1e-10 * max(l1, 1e-300):
            raise GridError(f"input is not mean zero (|phi_hat(0)| = {mean:.3e}); the integral diverges")
    return float(np.mean(admissibility_profile(f)))


# ------------------------------------------------------------ group action

def sy(z: AffinePoint, f, grid: Grid | None = None) -> SampledFunction:
    """``t^{-d} f((x - w) / t)``.

    Sampled inputs are moved by exact band-limited resampling on their own
    grid; mother wavelets and profiles are sampled directly on ``grid``.
    """
    if isinstance(f, (MotherWavelet, Profile)):
        if grid is None:
            raise GridError("a target grid is needed to place an analytic profile")
        if z.t < 2 * grid.h * (1 - 1e-12):
            raise GridError(f"scale {z.t} is below resolution 2h={2 * grid.h}")
        return f.place(grid, z)
    g = f.grid
    t = float(z.t)
    if t < 2 * g.h * (1 - 1e-12):
        raise GridError(f"scale {t} is below resolution 2h={2 * g.h}")
    w = np.broadcast_to(np.asarray(z.w, dtype=float), (g.d,))
    a = np.abs(f.values)
    if a.any():
        idx = np.argwhere(a > 1e-12 * a.max())
        for ax in range(g.d):
            lo, hi = g.nodes[idx[:, ax].min()], g.nodes[idx[:, ax].max()]
            if w[ax] + t * lo < -g.L - 1e-12 or w[ax] + t * hi > g.L - g.h + 1e-12:
                raise GridError("rescaled support escapes the grid domain")
    if t == 1.0 and np.all(w == 0):
        return SampledFunction(g, f.values)
    if g.d == 1:
        spec = fourier_at(f.values, g.nodes, g.h, t * g.freqs)
        # samples define a band-limited function: nothing beyond Nyquist
        spec[np.abs(t * g.freqs) > np.pi / g.h * (1 + 1e-12)] = 0.0
        spec = spec * np.exp(-1j * g.freqs * (w[0] + g.L))
        vals = np.fft.ifft(spec) / g.h
    else:
        E = np.exp(-1j * np.outer(t * g.freqs, g.nodes)) * g.h
        E[np.abs(t * g.freqs) > np.pi / g.h * (1 + 1e-12)] = 0.0
        spec = E @ f.values @ E.T
        ph = np.exp(-1j * g.freqs * g.L)
        spec = spec * np.outer(ph * np.exp(-1j * g.freqs * w[0]), ph * np.exp(-1j * g.freqs * w[1]))
        vals = np.fft.ifft2(spec) / g.h**2
    if not np.any(f.values.imag):
        vals = vals.real
    return SampledFunction(g, vals)


# -------------------------------------------------------------------- norms

def _steps(ndim: int, h: float) -> list:
    dirs = [(1,)] if ndim == 1 else [(1, 0), (0, 1), (1, 1), (1, -1)]
    out = []
    for e in dirs:
        length = math.sqrt(sum(c * c for c in e)) * h
        m = 1
        while m * length <= 1.0 + 1e-12:
            v = tuple(m * c for c in e)
            out.append((v, m * length))
            out.append((tuple(-c for c in v), m * length))
            m *= 2
    return out


def _coords(f: SampledFunction) -> list:
    g = f.grid
    n = f.values.ndim
    return np.meshgrid(*([g.nodes] * n), indexing="ij") if n > 1 else [g.nodes]


def _weighted_norm(values: np.ndarray, weight: np.ndarray, h: float, delta: float) -> tuple:
    size = float(np.max(weight * np.abs(values), initial=0.0))
    steps = _steps(values.ndim, h)
    holder = kernels.holder_sup(np.ascontiguousarray(values, dtype=complex),
                                np.ascontiguousarray(weight, dtype=float),
                                np.array([s for s, _ in steps], dtype=np.int64).reshape(len(steps), values.ndim),
                                np.array([l for _, l in steps], dtype=float), float(delta))
    return size, holder


def star_norm_parts(f: SampledFunction, eta: float, delta: float) -> tuple:
    X = _coords(f)
    n = f.values.ndim
    r = np.sqrt(sum(x * x for x in X))
    weight = (1.0 + r) ** (n + eta)
    return _weighted_norm(f.values, weight, f.grid.h, delta)


def star_norm(f: SampledFunction, eta: float, delta: float) -> float:
    """Size plus Hölder part of the decay norm, in the coordinates of ``f``'s grid."""
    return float(sum(star_norm_parts(f, eta, delta)))


def sigma_norm(f: SampledFunction2D, sigma: float, eta: float, delta: float) -> float:
    """Asymmetric-decay norm for tensor-variable functions (d=1 per variable)."""
    d = 1
    if sigma > d + eta:
        return star_norm(f, eta, delta)
    X, Y = _coords(f)
    weight = (1.0 + np.hypot(X, Y)) ** (d + sigma) * (1.0 + np.abs(Y)) ** (d + eta - sigma)
    return float(sum(_weighted_norm(f.values, weight, f.grid.h, delta)))


# ------------------------------------------------------------ wavelet classes

@dataclass(frozen=True)
class WaveletClassSpec:
    """Class parameters; ``cancellative`` has one flag per tensor slot.

    ``eta`` is the decay surplus at derivative order 0; order ``|gamma|``
    uses ``eta + |gamma|``.
    """

    k: int = 0
    delta: float = 1.0
    eta: float = 0.5
    sigma: float | None = None
    cancellative: tuple = (False,)

    def __post_init__(self):
        if not 0 < self.delta <= 1:
            raise ValueError(f"delta must lie in (0, 1], got {self.delta}")
        if self.eta < 0:
            raise ValueError(f"eta must be nonnegative, got {self.eta}")
        if self.sigma is not None and self.sigma < 0:
            raise ValueError(f"sigma must be nonnegative, got {self.sigma}")
        if self.k < 0:
            raise ValueError(f"k must be nonnegative, got {self.k}")
        if len(self.cancellative) not in (1, 2):
            raise ValueError("cancellative flags: one per slot (1 or 2 slots)")

    @property
    def slots(self) -> int:
        return len(self.cancellative)


def _default_norm_grid(tensor: bool) -> Grid:
    return Grid(1, 4.0, 256) if tensor else Grid(1, 8.0, 4096)


def _moments_ok(values: np.ndarray, grid: Grid, k: int, axis: int | None, tol: float) -> bool:
    x = grid.nodes
    for a in range(k + 1):
        if axis is None:
            m = abs(np.sum(x**a * values)) * grid.h
            scale = np.sum(np.abs(x) ** a * np.abs(values)) * grid.h
        else:
            xa = x**a
            shp = [1, 1]
            shp[axis] = -1
            m = np.max(np.abs(np.sum(values * xa.reshape(shp), axis=axis)), initial=0.0) * grid.h
            scale = np.max(np.sum(np.abs(values) * np.abs(xa).reshape(shp), axis=axis), initial=0.0) * grid.h
        if m > tol * max(scale, 1e-300):
            return False
    return True


def _normalized_class_norm(values: np.ndarray, norm_grid: Grid, spec: WaveletClassSpec,
                           t: float = 1.0, derivs: dict | None = None,
                           check_moments: bool = True) -> float:
    """Class norm of an already pulled-back function sampled on ``norm_grid``.

    ``derivs`` maps multi-indices to pulled-back derivatives scaled by ``t^|gamma|``;
    when absent, derivatives are taken spectrally on ``norm_grid``.
    """
    tensor = values.ndim == 2
    best = 0.0
    gammas = [g for g in itertools.product(range(spec.k + 1), repeat=values.ndim) if sum(g) <= spec.k]
    for gam in gammas:
        if derivs is not None and gam in derivs:
            v = derivs[gam]
        elif sum(gam) == 0:
            v = values
        else:
            fr = np.meshgrid(*([norm_grid.freqs] * values.ndim), indexing="ij")
            sym = np.ones_like(fr[0], dtype=complex)
            for ax, a in enumerate(gam):
                sym = sym * (1j * fr[ax]) ** a
            v = np.fft.ifftn(np.fft.fftn(values) * sym)
        F = SampledFunction2D(norm_grid, v) if tensor else SampledFunction(norm_grid, v)
        if spec.sigma is not None and tensor:
            val = sigma_norm(F, spec.sigma, spec.k + spec.delta, spec.delta)
            best = max(best, val)
            break
        best = max(best, star_norm(F, spec.eta + sum(gam), spec.delta))
    for slot, flag in enumerate(spec.cancellative):
        if not flag or not check_moments:
            continue
        axis = None if not tensor else slot
        if not _moments_ok(values, norm_grid, spec.k, axis, 1e-8):
            return math.inf
    return best


def class_membership(f: SampledFunction, z: AffinePoint, spec: WaveletClassSpec,
                     norm_grid: Grid | None = None) -> float:
    """Smallest ``C`` with ``f`` in ``C`` times the class at ``z`` (inf if moments fail).

    Derivatives are spectral on ``f``'s grid; the pull-back to unit scale is
    sampled on ``norm_grid`` by band-limited interpolation, so the reading is
    independent of ``z`` whenever ``f`` is resolved.
    """
    tensor = isinstance(f, SampledFunction2D)
    if f.grid.d != 1:
        raise GridError("class membership is implemented for d = 1 functions")
    ng = norm_grid or _default_norm_grid(tensor)
    t, w = float(z.t), float(z.w)
    pts = w + t * ng.nodes
    # pulled-back nodes beyond one period would see periodic images
    inside = (np.abs(t * ng.nodes) < f.grid.L).astype(float)
    gammas = [g for g in itertools.product(range(spec.k + 1), repeat=2 if tensor else 1)
              if sum(g) <= spec.k]
    if tensor:
        Bx = _interp_matrix(f.grid, pts)
    derivs = {}
    for gam in gammas:
        if spec.sigma is not None and tensor and sum(gam):
            continue
        if tensor:
            fr = f.grid.freqs
            sym = np.outer((1j * fr) ** gam[0], (1j * fr) ** gam[1])
            dv = np.fft.ifft2(np.fft.fft2(f.values) * sym)
            F = np.fft.fft2(dv) / f.grid.N**2
            pulled = (Bx @ F @ Bx.T) * t**2 * np.outer(inside, inside)
        else:
            dv = f if sum(gam) == 0 else spectral_multiplier(f, (1j * f.grid.freqs) ** gam[0])
            pulled = trig_interpolate(dv, pts) * t * inside
        derivs[gam] = pulled * t ** sum(gam)
    base = derivs[(0, 0) if tensor else (0,)]
    val = _normalized_class_norm(base, ng, spec, t, derivs, check_moments=False)
    # moments are checked on the original grid: the pull-back is truncated
    for slot, flag in enumerate(spec.cancellative):
        if flag and not _moments_ok(f.values, f.grid, spec.k, slot if tensor else None, 1e-8):
            return math.inf
    return val


# ------------------------------------------------------------- gamma family

def moment_matrix(bump: Union[str, Expression, Callable], order: int, radius: float = 0.5,
                  grid: Grid | None = None) -> np.ndarray:
    """Hankel matrix ``int b(x) x^{i+j} dx`` for ``i, j <= order``."""
    g = grid or _fine_grid(1.0, 4096)
    fn = parse_expression(bump, ("x",)) if isinstance(bump, str) else bump
    x = g.nodes
    vals = np.zeros_like(x)
    m = np.abs(x) < radius
    with np.errstate(all="ignore"):
        vals[m] = np.asarray(fn(x[m]), dtype=float)
    vals = np.where(np.isfinite(vals), vals, 0.0)
    mom = np.array([np.sum(x**p * vals) * g.h for p in range(2 * order + 1)])
    return np.array([[mom[i + j] for j in range(order + 1)] for i in range(order + 1)])


@dataclass(eq=False)
class GammaFamily:
    """``theta^gamma(x) = b(x / R) * sum_j c_j x^j`` with prescribed low moments."""

    gamma: int
    radius: float
    coefficients: np.ndarray
    bump: str
    profile: Profile = field(repr=False)

    @property
    def base(self) -> SampledFunction:
        return self.profile.base

    def __call__(self, x) -> np.ndarray:
        return self.profile(x).real

    def moments(self, order: int) -> np.ndarray:
        g = self.base.grid
        return np.array([np.sum(g.nodes**b * self.base.values.real) * g.h for b in range(order + 1)])


def make_gamma_family(gamma, support_radius: float = 0.5, bump: str = "exp(1/(x^2-1))",
                      max_order: int = 6) -> GammaFamily:
    """Least-norm polynomial-times-bump with ``int theta x^beta = delta(beta, gamma)``."""
    gam = int(gamma[0]) if isinstance(gamma, (tuple, list)) else int(gamma)
    if gam < 0 or gam > max_order:
        raise ValueError(f"|gamma| must lie in [0, {max_order}], got {gam}")
    expr = parse_expression(bump, ("x",))
    R = float(support_radius)

    def b(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        m = np.abs(x) < R
        with np.errstate(all="ignore"):
            out[m] = np.asarray(expr(x[m] / R), dtype=float)
        return np.where(np.isfinite(out), out, 0.0)

    L = max(1.0, 2 * R)
    g = _fine_grid(L, 4096 if L <= 1 else int(2 ** math.ceil(math.log2(4096 * L))))
    x = g.nodes
    bv = b(x)
    npoly = gam + 2
    A = np.array([[np.sum(x ** (beta + j) * bv) * g.h for j in range(npoly)] for beta in range(gam + 1)])
    sv = np.linalg.svd(A, compute_uv=False)
    if sv[-1] <= 1e-13 * sv[0]:
        raise GridError("moment matrix is singular; the bump is degenerate")
    rhs = np.zeros(gam + 1)
    rhs[gam] = 1.0
    coef = np.linalg.lstsq(A, rhs, rcond=None)[0]

    def theta(x):
        x = np.asarray(x, dtype=float)
        return b(x) * np.polyval(coef[::-1], x)

    base = SampledFunction(g, theta(x))
    return GammaFamily(gam, R, coef, bump, Profile(base, exact=theta, name=f"theta{gam}"))




# --------------------------------------------------------------- dictionary

@dataclass(frozen=True)
class _Generator:
    """Unit-scale rule ``x -> D^order rule(x)``, masked to ``|x - center| < support``."""

    rule: str
    center: float = 0.0
    support: float | None = None
    order: int = 0
    moments: int = -1  # discrete moments through this order are projected out when placed

    def __call__(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        out = np.zeros_like(y)
        mask = np.ones(y.shape, bool) if self.support is None else np.abs(y - self.center) < self.support
        if not mask.any():
            return out
        expr = parse_expression(self.rule, ("x",))
        if self.order == 0:
            with np.errstate(all="ignore"):
                vals = np.asarray(expr(y[mask]), dtype=float)
        else:
            jet = expr.jet(y[mask], self.order)
            vals = jet.derivatives()[self.order]
            vals = np.where(jet.c[0] == 0, 0.0, vals)
        out[mask] = np.where(np.isfinite(vals), vals, 0.0)
        return out


_OFFSETS = (0.0, 0.5, -0.5, 1.0, -1.0, 0.25, -0.25, 0.75, -0.75, 1.5, -1.5, 0.125)
_FREQS = (3.0, 6.0, 2.0, 9.0, 4.5, 12.0)


def _slot_generators(cancellative: bool, k: int, decay: float, count: int) -> list:
    """Nested list of unit-scale generators for one slot.

    The cycle is bump, envelope, modulated bump. Cancellative slots replace
    the envelope by a second modulated bump and differentiate every entry
    ``k + 1`` times, which leaves compactly supported functions with ``k + 1``
    vanishing moments.
    """
    order = k + 1 if cancellative else 0
    out = []
    for i in range(count):
        a = _OFFSETS[i % len(_OFFSETS)]
        sa = f"(x-({a}))"
        bump = f"exp(1/({sa}^2-1)+1)"
        om = _FREQS[(i // 3) % len(_FREQS)]
        kind = i % 3
        if kind == 0:
            out.append(_Generator(bump, a, 1.0, order, order - 1))
        elif kind == 1 and not cancellative:
            out.append(_Generator(f"(1+abs{sa})^(-({decay}))", a, None, 0))
        else:
            out.append(_Generator(f"{bump}*cos({om + kind}*{sa})", a, 1.0, order, order - 1))
    return out


@dataclass(eq=False)
class TensorMember:
    """Finite sum of tensor products ``sum_i a_i(x) b_i(y)`` of 1D samples."""

    grid: Grid
    factors: list

    def dense(self) -> SampledFunction2D:
        vals = sum(np.outer(a, b) for a, b in self.factors)
        return SampledFunction2D(self.grid, vals)

    def pair(self, f: SampledFunction, g: SampledFunction) -> complex:
        """``<f (x) g, member>`` via the factorization."""
        h = self.grid.h
        return complex(sum(np.sum(f.values * a) * h * np.sum(g.values * b) * h for a, b in self.factors))


@dataclass(eq=False)
class WaveletDictionary:
    """Finite nested family of class representatives on a working grid.

    Members at scale ``t`` are divided by their class norm measured at
    ``(0, t)`` on the working grid, so every placed member has measured class
    norm one. Translation by grid nodes is exact, so the norm depends on
    ``t`` only; it is cached per scale.
    """

    spec: WaveletClassSpec
    generators: list
    grid: Grid
    z: AffinePoint
    seed: int = 0
    _norms: dict = field(default_factory=dict, repr=False)
    _spectra: dict = field(default_factory=dict, repr=False)

    @property
    def size(self) -> int:
        return len(self.generators)

    @property
    def tensor(self) -> bool:
        return self.spec.slots == 2

    @property
    def members(self) -> list:
        return self.at(self.z)

    def prefix(self, n: int) -> "WaveletDictionary":
        cache = {t: v[:n] for t, v in self._norms.items()}
        spectra = {t: v[:n] for t, v in self._spectra.items()}
        return WaveletDictionary(self.spec, self.generators[:n], self.grid, self.z, self.seed, cache, spectra)

    def _raw1(self, gen: _Generator, w: float, t: float) -> np.ndarray:
        g = self.grid
        y = g.wrap(g.nodes - w) / t
        v = gen(y) / t
        if gen.moments >= 0:
            # sampled derivatives only cancel up to quadrature error; remove the
            # residual discrete moments with a bump-times-polynomial correction
            b = _Generator(f"exp(1/((x-({gen.center}))^2-1)+1)", gen.center, gen.support)(y)
            P = np.vander(y, gen.moments + 1, increasing=True)
            A = P.T @ (b[:, None] * P)
            c = np.linalg.solve(A, P.T @ v)
            v = v - b * (P @ c)
        return v

    def _raw(self, gen, w: float, t: float):
        if self.tensor:
            return [(c * self._raw1(a, w, t), self._raw1(b, w, t)) for c, a, b in gen]
        return self._raw1(gen, w, t)

    def norms_at(self, t: float) -> list:
        t = float(t)
        if t not in self._norms:
            out = []
            for gen in self.generators:
                raw = self._raw(gen, 0.0, t)
                f = (TensorMember(self.grid, raw).dense() if self.tensor
                     else SampledFunction(self.grid, raw))
                n = class_membership(f, AffinePoint(0.0, t), self.spec)
                if not (math.isfinite(n) and n > 0):
                    raise GridError(f"dictionary generator {gen} failed its class check at t={t}")
                out.append(n)
            self._norms[t] = out
        return self._norms[t]

    def at(self, z: AffinePoint) -> list:
        norms = self.norms_at(z.t)
        w = float(z.w)
        out = []
        for gen, n in zip(self.generators, norms):
            raw = self._raw(gen, w, z.t)
            if self.tensor:
                out.append(TensorMember(self.grid, [(a / n, b) for a, b in raw]))
            else:
                out.append(SampledFunction(self.grid, raw / n))
        return out

    def kernels_at_origin(self, t: float) -> list:
        """Members at ``(0, t)`` rolled so that index 0 holds the origin."""
        shift = -self.grid.N // 2
        out = []
        for gen, n in zip(self.generators, self.norms_at(t)):
            raw = self._raw(gen, 0.0, t)
            if self.tensor:
                out.append([(np.roll(a, shift) / n, np.roll(b, shift)) for a, b in raw])
            else:
                out.append(np.roll(raw, shift) / n)
        return out

    def kernel_spectra(self, t: float) -> list:
        """Conjugated FFTs of :meth:`kernels_at_origin` (cached per scale)."""
        t = float(t)
        if t not in self._spectra:
            cf = lambda k: np.conj(np.fft.fft(k))
            ks = self.kernels_at_origin(t)
            if self.tensor:
                self._spectra[t] = [[(cf(a), cf(b)) for a, b in m] for m in ks]
            else:
                self._spectra[t] = [cf(k) for k in ks]
        return self._spectra[t]

    def metadata(self) -> dict:
        s = self.spec
        return {"size": self.size, "k": s.k, "delta": s.delta, "eta": s.eta, "sigma": s.sigma,
                "cancellative": list(s.cancellative), "seed": self.seed,
                "generators": [str(g) for g in self.generators]}


def build_dictionary(spec: WaveletClassSpec, z: AffinePoint, size: int = 12,
                     grid: Grid | None = None, seed: int = 0) -> WaveletDictionary:
    """Deterministic nested family of ``size`` class representatives.

    Members are bumps, modulated bumps and envelopes ``(1+|x-a|)^{-(1+eta)}``
    at several offsets (derivatives of compact ones for cancellative slots);
    tensor classes mix rank-one and rank-two products, the second factor
    pairs chosen by ``seed``.
    """
    if size < 1:
        raise ValueError("dictionary size must be at least 1")
    grid = grid or Grid()
    if spec.slots == 1:
        gens = _slot_generators(spec.cancellative[0], spec.k, 1 + spec.eta, size)
    else:
        decay = 2 + spec.eta + spec.k
        ga = _slot_generators(spec.cancellative[0], spec.k, decay, size)
        gb = _slot_generators(spec.cancellative[1], spec.k, decay, size)
        perm = np.random.default_rng(seed).permutation(size)
        gens = []
        for i in range(size):
            pair = [(1.0, ga[i], gb[i])]
            if i % 3 == 2:
                j = int(perm[i])
                pair.append((0.5, ga[j], gb[(j + 1) % size]))
            gens.append(pair)
    d = WaveletDictionary(spec, gens, grid, z, seed)
    d.norms_at(z.t)
    return d
