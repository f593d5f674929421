"""Continuous wavelet analysis and synthesis, single-scale decompositions and
wavelet averaging over the affine group (one space dimension)."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .expr import Expression, parse_expression
from .grid import (AffineGrid, AffinePoint, Grid, GridError, SampledFunction, SampledFunction2D,
                   mu_integrate)
from .wavelet import MotherWavelet, Profile

__all__ = [
    "CwtCoefficients",
    "Reconstruction",
    "HighLowSystem",
    "cwt",
    "calderon_reconstruct",
    "parseval_ratio",
    "window_symbol",
    "truncation_tail",
    "highlow_decompose",
    "single_scale_projection",
    "highlow_identity_gap",
    "tensor_reproducing_check",
    "averaged_wavelet",
    "hermite_probes",
    "hypothesis_bound",
    "delta_identity_residual",
]


def _need_1d(grid: Grid):
    if grid.d != 1:
        raise GridError("the transform module works in one dimension")


def _spectrum(phi, grid: Grid, t: float, reflect: bool = False) -> np.ndarray:
    if isinstance(phi, (MotherWavelet, Profile)):
        return phi.spectrum(grid, t, reflect)
    raise TypeError(f"cannot take the spectrum of {type(phi).__name__}")


@dataclass(frozen=True, eq=False)
class CwtCoefficients:
    """``values[j, i] = <f, phi_{(w_i, t_j)}>`` on the cells of ``affine_grid``."""

    affine_grid: AffineGrid
    values: np.ndarray = field(repr=False)
    wavelet_id: str = "phi"

    def __post_init__(self):
        if self.values.shape != self.affine_grid.shape:
            raise GridError(f"coefficient shape {self.values.shape} does not match {self.affine_grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise GridError("non-finite wavelet coefficient")

    def to_bytes(self) -> bytes:
        import struct
        ag = self.affine_grid
        head = b"CZW1" + struct.pack("<BBdQdddQQ", 3, 1, ag.grid.L, ag.grid.N, ag.t_min, ag.rho,
                                     0.0, ag.M, ag.stride)
        return head + self.values.astype("<c16").tobytes()


def _check_scales(ag: AffineGrid):
    if ag.t_min < 2 * ag.grid.h * (1 - 1e-12):
        raise GridError(f"scale {ag.t_min} is below resolution 2h={2 * ag.grid.h}")


def cwt(f: SampledFunction, phi, ag: AffineGrid) -> CwtCoefficients:
    """Wavelet coefficients by spectral correlation (exact for the band-limited samples)."""
    _need_1d(f.grid)
    if f.grid != ag.grid:
        raise GridError("function and affine grid live on different grids")
    _check_scales(ag)
    F = np.fft.fft(f.values)
    out = np.empty(ag.shape, dtype=complex)
    for j, t in enumerate(ag.scales):
        out[j] = np.fft.ifft(F * _spectrum(phi, f.grid, t, reflect=True))[:: ag.stride]
    return CwtCoefficients(ag, out, getattr(phi, "name", "phi") or "phi")


@dataclass(frozen=True, eq=False)
class Reconstruction:
    function: SampledFunction
    relative_l2_error: float | None = None


def _synthesize(c: np.ndarray, phi, grid: Grid, t: float, stride: int) -> np.ndarray:
    """``sum_w c(w) phi_{w,t} * (stride h)`` for centers on the stride lattice."""
    if stride == 1:
        up = c
    else:
        up = np.zeros(grid.N, dtype=complex)
        up[::stride] = c * stride
    return np.fft.ifft(np.fft.fft(up) * _spectrum(phi, grid, t))


def calderon_reconstruct(c: CwtCoefficients, phi, reference: SampledFunction | None = None) -> Reconstruction:
    """Quadrature of ``int <f, phi_z> phi_z dmu(z)`` over the truncated affine grid."""
    ag = c.affine_grid
    acc = np.zeros(ag.grid.N, dtype=complex)
    for j, t in enumerate(ag.scales):
        acc += _synthesize(c.values[j], phi, ag.grid, t, ag.stride)
    out = SampledFunction(ag.grid, acc * ag.log_step)
    err = None
    if reference is not None:
        den = reference.norm(2)
        num = (out - reference).norm(2)
        err = num / den if den > 0 else num
    return Reconstruction(out, err)


def parseval_ratio(f: SampledFunction, phi, ag: AffineGrid) -> float:
    """``mu-integral of |<f, phi_z>|^2`` divided by ``||f||_2^2``."""
    c = cwt(f, phi, ag)
    return float(mu_integrate(np.abs(c.values) ** 2, ag).real / f.norm(2) ** 2)


def window_symbol(phi, ag: AffineGrid) -> np.ndarray:
    """Fourier multiplier of analysis followed by synthesis on the truncated scale window."""
    _need_1d(ag.grid)
    W = np.zeros(ag.grid.N, dtype=complex)
    for t in ag.scales:
        W += _spectrum(phi, ag.grid, t, reflect=True) * _spectrum(phi, ag.grid, t)
    return W * ag.log_step


def truncation_tail(f: SampledFunction, phi, ag: AffineGrid) -> float:
    """Relative L2 mass of ``f`` that the scale window fails to reproduce."""
    F = np.fft.fft(f.values)
    den = np.linalg.norm(F)
    if den == 0:
        return 0.0
    return float(np.linalg.norm((1 - window_symbol(phi, ag)) * F) / den)


# ----------------------------------------------------------------- high-low

def hermite_probes(count: int = 10, scale: float = 0.25) -> list:
    """Hermite functions ``q_n(x / scale)`` as ``(polynomial, scale)`` pairs."""
    from numpy.polynomial import Polynomial
    from numpy.polynomial.hermite import herm2poly

    out = []
    for n in range(count):
        c = np.zeros(n + 1)
        c[n] = 1.0
        P = Polynomial(herm2poly(c)) / math.sqrt(2.0**n * math.factorial(n) * math.sqrt(math.pi))
        out.append((P, scale))
    return out


def _hermite_eval(P, scale: float, x: np.ndarray, order: int = 0) -> np.ndarray:
    """``d^order/dx^order [P(x/s) exp(-(x/s)^2/2)]``."""
    from numpy.polynomial import Polynomial

    X = Polynomial([0.0, 1.0])
    Q = P
    for _ in range(order):
        Q = Q.deriv() - X * Q
    u = x / scale
    return Q(u) * np.exp(-u * u / 2) / scale**order


def _smooth_step_derivs(x: np.ndarray, order: int, a: float = 0.125, b: float = 0.5) -> np.ndarray:
    """Derivatives ``0..order`` of the smooth step that is 0 below ``a`` and 1 above ``b``."""
    expr = parse_expression(f"1/(1+exp(1/(x-{a})-1/({b}-x)))", ("x",))
    out = np.zeros((order + 1,) + x.shape)
    out[0, x >= b] = 1.0
    mid = (x > a) & (x < b)
    if mid.any():
        der = expr.jet(x[mid], order).derivatives()
        out[:, mid] = np.where(np.isfinite(der), der, 0.0)
    return out


@dataclass(eq=False)
class HighLowSystem:
    """``psi^1..psi^4`` with ``Phi = psi^1(-.) * psi^2 + psi^3(-.) * psi^4``.

    All four and ``Phi`` are sampled on ``fine_grid``; ``F`` and ``G`` are the
    compactly supported pieces of the delta decomposition.
    """

    psi1: SampledFunction
    psi2: SampledFunction
    psi3: SampledFunction
    psi4: SampledFunction
    m: int
    Phi: SampledFunction
    F: SampledFunction
    G: SampledFunction
    identity_residual: float
    phi: MotherWavelet | None = field(default=None, repr=False)
    _profiles: dict = field(default_factory=dict, repr=False)

    @property
    def fine_grid(self) -> Grid:
        return self.Phi.grid

    def profile(self, name: str) -> Profile:
        if name not in self._profiles:
            self._profiles[name] = Profile(getattr(self, name), name=name)
        return self._profiles[name]

    def spectrum(self, name: str, grid: Grid, t: float, reflect: bool = False) -> np.ndarray:
        return self.profile(name).spectrum(grid, t, reflect)

    def support_excess(self) -> float:
        """Largest ``|psi^j|`` outside ``B(0, 1)``."""
        x = self.fine_grid.nodes
        out = np.abs(x) > 1.0
        return float(max(np.abs(p.values[out]).max(initial=0.0) for p in (self.psi1, self.psi2, self.psi3, self.psi4)))

    def means(self) -> tuple:
        h = self.fine_grid.h
        return tuple(complex(np.sum(p.values) * h) for p in (self.psi1, self.psi2, self.psi3, self.psi4))

    def apply(self, f: SampledFunction, s: float) -> SampledFunction:
        """``int <f, psi^1_{u,s}> psi^2_{u,s} + <f, psi^3_{u,s}> psi^4_{u,s} du``."""
        g = f.grid
        F = np.fft.fft(f.values)
        sym = (self.spectrum("psi1", g, s, True) * self.spectrum("psi2", g, s)
               + self.spectrum("psi3", g, s, True) * self.spectrum("psi4", g, s))
        return SampledFunction(g, np.fft.ifft(F * sym))


def _delta_pieces(x: np.ndarray, m: int) -> tuple:
    """``F = H (1 - chi)`` and ``G = D^{m+2}(H chi)`` on nodes ``x``."""
    xp = np.maximum(x, 0.0)
    H = [xp ** (m + 1 - j) / math.factorial(m + 1 - j) * (x > 0) for j in range(m + 2)]
    chi = _smooth_step_derivs(x, m + 2)
    F = H[0] * (1 - chi[0])
    G = sum(math.comb(m + 2, j) * H[j] * chi[m + 2 - j] for j in range(m + 2))
    return F, G


def delta_identity_residual(m: int, grid: Grid, probes: list | None = None) -> float:
    """Max relative error of ``(-1)^{m+2}<F, q^{(m+2)}> + <G, q> = q(0)`` over probes."""
    x = grid.nodes
    F, G = _delta_pieces(x, m)
    worst = 0.0
    for P, sc in probes or hermite_probes():
        lhs = ((-1) ** (m + 2) * np.sum(F * _hermite_eval(P, sc, x, m + 2))
               + np.sum(G * _hermite_eval(P, sc, x))) * grid.h
        rhs = float(_hermite_eval(P, sc, np.array([0.0]))[0])
        scale = max(abs(rhs), np.sum(np.abs(G * _hermite_eval(P, sc, x))) * grid.h, 1e-300)
        worst = max(worst, abs(lhs - rhs) / scale)
    return worst


def highlow_decompose(phi: MotherWavelet, m: int = 1, tol: float = 1e-6) -> HighLowSystem:
    """Single-scale system for ``phi`` (d=1).

    ``Phi(w) = int_1^inf (phi*phi)(w/r) dr/r^2`` is evaluated in closed form as
    ``P(w)/w`` with ``P`` the antiderivative of ``phi*phi`` vanishing at 0.
    """
    if phi.d != 1:
        raise GridError("high-low decomposition is implemented for d = 1")
    if m < 0:
        raise ValueError(f"m must be nonnegative, got {m}")
    base = phi.base.grid
    fg = Grid(1, 2 * base.L, 2 * base.N)
    vals = np.zeros(fg.N)
    vals[base.N // 2: base.N // 2 + base.N] = phi.base.values.real
    x = fg.nodes
    xi = fg.freqs
    ph = np.fft.fft(vals)
    # p = phi * phi on the grid (even, mean zero)
    phat = ph * ph * fg.h * np.exp(1j * xi * fg.L)
    sym = np.zeros_like(xi, dtype=complex)
    sym[1:] = 1.0 / (1j * xi[1:])
    p = np.fft.ifft(phat).real
    P = np.fft.ifft(phat * sym).real
    i0 = fg.N // 2
    P = P - P[i0]
    Phi = np.empty_like(x)
    nz = x != 0
    Phi[nz] = P[nz] / x[nz]
    Phi[~nz] = p[i0]
    Phi[np.abs(x) >= 1.0] = 0.0
    Phi_hat = np.fft.fft(Phi)
    mask = np.abs(Phi_hat) < 1e-15 * np.abs(Phi_hat).max()
    D = (1j * xi) ** (m + 2)
    D[mask] = 0.0
    # D^{m+2} Phi vanishes where Phi does; drop the spectral ringing there
    psi2 = np.where(np.abs(x) < 1.0, np.fft.ifft(Phi_hat * D).real, 0.0)
    F, G = _delta_pieces(x, m)
    res = delta_identity_residual(m, fg)
    if res > tol:
        raise GridError(f"delta decomposition residual {res:.3e} exceeds {tol:.1e}")
    mk = lambda v: SampledFunction(fg, v)  # noqa: E731
    return HighLowSystem(mk(_reflect(F)), mk(psi2), mk(_reflect(G)), mk(Phi),
                         m, mk(Phi), mk(F), mk(G), res, phi)


def _reflect(v: np.ndarray) -> np.ndarray:
    """``v(-x)`` on the grid ``x_i = -L + i h`` (node 0 maps to itself)."""
    return np.roll(v[::-1], 1)


def single_scale_projection(f: SampledFunction, s: float, sys: HighLowSystem) -> SampledFunction:
    """``x -> <f, Phi_{x,s}>``, the ``r >= s`` part of the Calderon integral."""
    _need_1d(f.grid)
    if s < 2 * f.grid.h * (1 - 1e-12):
        raise GridError(f"scale {s} is below resolution 2h={2 * f.grid.h}")
    F = np.fft.fft(f.values)
    return SampledFunction(f.grid, np.fft.ifft(F * sys.spectrum("Phi", f.grid, s, True)))


def highlow_identity_gap(f: SampledFunction, sys: HighLowSystem, ag: AffineGrid, s: float | None = None) -> dict:
    """Both sides of the single-scale identity at ``s`` (default: the lower edge of ``ag``).

    Left: mu-quadrature of ``<f, phi_{u,r}> phi_{u,r}`` over the cells of
    ``ag``. Right: the four-function expansion at scale ``s``.
    """
    s = ag.edges()[0] if s is None else s
    phi = sys.phi
    c = cwt(f, phi, ag)
    lhs = calderon_reconstruct(c, phi).function
    rhs = sys.apply(f, s)
    den = max(rhs.norm(2), 1e-300)
    return {"s": s, "lhs": lhs, "rhs": rhs, "relative_l2_gap": (lhs - rhs).norm(2) / den}


def tensor_reproducing_check(f: SampledFunction, g: SampledFunction, sys: HighLowSystem,
                             ag: AffineGrid) -> float:
    """Relative ``L^2(R^2)`` residual of the four-term single-scale tensor expansion.

    Per scale ``s`` the factors ``A_s f`` (the high-low expansion) and
    ``B_s g = int <g, phi_{v,s}> phi_{v,s} dv`` are formed once; the 2D sum is
    a matrix product of the stacked factors.
    """
    _need_1d(f.grid)
    grid = f.grid
    phi = sys.phi
    Ff, Fg = np.fft.fft(f.values), np.fft.fft(g.values)
    cols_x, cols_y = [], []
    for s in ag.scales:
        b = phi.spectrum(grid, s, True) * phi.spectrum(grid, s)
        a = (sys.spectrum("psi1", grid, s, True) * sys.spectrum("psi2", grid, s)
             + sys.spectrum("psi3", grid, s, True) * sys.spectrum("psi4", grid, s))
        cols_x += [np.fft.ifft(Ff * a), np.fft.ifft(Ff * b)]
        cols_y += [np.fft.ifft(Fg * b), np.fft.ifft(Fg * a)]
    X = np.stack(cols_x, axis=1)
    Y = np.stack(cols_y, axis=1)
    rhs = (X @ Y.T) * ag.log_step
    lhs = np.outer(f.values, g.values)
    num = np.sqrt(np.sum(np.abs(rhs - lhs) ** 2) * grid.h**2)
    den = np.sqrt(np.sum(np.abs(lhs) ** 2) * grid.h**2)
    return float(num / den) if den > 1e-300 else float(num)


# ---------------------------------------------------------------- averaging

SymbolRule = Union[str, Expression, Callable]


def _symbol_rule(H: SymbolRule) -> Callable:
    if isinstance(H, str):
        return parse_expression(H, ("u", "v", "w", "s", "t"))
    return H


def _unit_rule(p) -> Callable:
    if isinstance(p, str):
        return parse_expression(p, ("x",))
    return p


def hypothesis_bound(u, v, w, s, t, delta: float, d: int = 1) -> np.ndarray:
    m = np.maximum(np.maximum(s, np.abs(u - w)), np.abs(v - w))
    return t**delta / m ** (2 * d + delta)


def _periodic_kernel(rule: Callable, offs: np.ndarray, s: float, L: float) -> np.ndarray:
    """Samples of ``rule(x/s)/s`` at node offsets; the offset ``-L`` gets the mean of both ends."""
    k = np.asarray(rule(offs / s), dtype=complex) * np.ones_like(offs) / s
    k[len(offs) // 2] = 0.5 * (complex(rule(np.array([-L / s]))[0]) + complex(rule(np.array([L / s]))[0])) / s
    return k


def averaged_wavelet(H: SymbolRule, psi, phi, z: AffinePoint, ag: AffineGrid, delta: float = 1.0,
                     region: str = "tail", warn: list | None = None) -> SampledFunction2D:
    """``int int int H(u,v,w,s,t) psi_{u,s}(x) phi_{v,s}(y) du dv ds/s`` on the 2D grid.

    ``region="tail"`` integrates ``s >= t`` over all ``u, v``;
    ``region="local"`` integrates ``s <= 3t`` with ``|u-w|, |v-w| <= 9t``.
    ``psi`` and ``phi`` are unit-scale rules in ``x``. Differences ``u - w``
    use the minimal periodic image. When ``warn`` is a list, sampled points
    where ``|H|`` exceeds the hypothesis bound are reported in it.
    """
    grid = ag.grid
    _need_1d(grid)
    Hf = _symbol_rule(H)
    pf, qf = _unit_rule(psi), _unit_rule(phi)
    w, t = float(z.w), float(z.t)
    x = grid.nodes
    du = grid.wrap(x - w)
    U, V = np.meshgrid(w + du, w + du, indexing="ij")
    dU, dV = np.meshgrid(du, du, indexing="ij")
    if region == "tail":
        scales = [s for s in ag.scales if s >= t * (1 - 1e-12)]
        box = np.ones_like(dU, dtype=bool)
    elif region == "local":
        scales = [s for s in ag.scales if s <= 3 * t * (1 + 1e-12)]
        box = (np.abs(dU) <= 9 * t) & (np.abs(dV) <= 9 * t)
    else:
        raise ValueError(f"unknown region {region!r}")
    acc = np.zeros((grid.N, grid.N), dtype=complex)
    offs = grid.wrap(x - x[0])
    for s in scales:
        with np.errstate(all="ignore"):
            Hv = np.asarray(Hf(w + dU, w + dV, w, s, t), dtype=complex) * np.ones_like(dU)
        Hv = np.where(box, Hv, 0.0)
        if warn is not None:
            bound = hypothesis_bound(dU, dV, 0.0, s, t, delta)
            bad = np.abs(Hv) > bound * (1 + 1e-9)
            if bad.any():
                warn.append(f"|H| exceeds the hypothesis bound at {int(bad.sum())} points for s={s:.4g}")
        # circular kernels indexed by node offset, so output index i is node x_i
        kp = _periodic_kernel(pf, offs, s, grid.L)
        kq = _periodic_kernel(qf, offs, s, grid.L)
        # sum_{u,v} H(u,v) psi_s(x-u) phi_s(y-v) h^2, by FFT along each axis
        A = np.fft.fft2(Hv) * np.outer(np.fft.fft(kp), np.fft.fft(kq))
        acc += np.fft.ifft2(A) * grid.h**2
    return SampledFunction2D(grid, acc * ag.log_step)
