"""Uniform periodic grids, sampled fields, affine-group grids and quadrature."""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Union

import numpy as np

from .expr import Expression, parse_expression

__all__ = [
    "Grid",
    "SampledFunction",
    "SampledFunction2D",
    "AffinePoint",
    "AffineGrid",
    "GridError",
    "sample",
    "integrate",
    "spectral_multiplier",
    "convolve",
    "mu_integrate",
]

_MAGIC = b"CZW1"


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    """Periodic grid on ``[-L, L)^d`` with ``N`` nodes per axis."""

    d: int = 1
    L: float = 16.0
    N: int = 1024

    def __post_init__(self):
        if self.d not in (1, 2):
            raise GridError(f"dimension must be 1 or 2, got {self.d}")
        if self.L <= 0:
            raise GridError(f"half-width must be positive, got {self.L}")
        if self.N < 2 or self.N & (self.N - 1):
            raise GridError(f"N must be a power of two, got {self.N}")

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.N

    @property
    def shape(self) -> tuple:
        return (self.N,) * self.d

    @cached_property
    def nodes(self) -> np.ndarray:
        return -self.L + self.h * np.arange(self.N)

    @cached_property
    def freqs(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.N, self.h)

    def mesh(self) -> tuple:
        return np.meshgrid(*([self.nodes] * self.d), indexing="ij")

    def freq_mesh(self) -> tuple:
        return np.meshgrid(*([self.freqs] * self.d), indexing="ij")

    def index_of(self, x: float) -> int:
        return int(round((x + self.L) / self.h)) % self.N

    def wrap(self, x):
        """Minimal periodic image of ``x`` in ``[-L, L)``."""
        return (np.asarray(x) + self.L) % (2 * self.L) - self.L


def _as_complex(values) -> np.ndarray:
    arr = np.array(values, dtype=complex)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SampledFunction:
    """Field sampled on every node of ``grid``; values have shape ``grid.shape``."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values)
        expected = self._expected_shape()
        if vals.size != math.prod(expected):
            raise GridError(f"expected {math.prod(expected)} values, got {vals.size}")
        vals = _as_complex(vals.reshape(expected))
        if not np.all(np.isfinite(vals)):
            bad = np.argwhere(~np.isfinite(vals))[0]
            raise GridError(f"non-finite value at node {tuple(int(i) for i in bad)}")
        object.__setattr__(self, "values", vals)

    def _expected_shape(self) -> tuple:
        return self.grid.shape

    def _new(self, values):
        return type(self)(self.grid, values)

    def _check(self, other):
        if isinstance(other, SampledFunction):
            if other.grid != self.grid or type(other) is not type(self):
                raise GridError("grid mismatch")
            return other.values
        return other

    def __add__(self, other):
        return self._new(self.values + self._check(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self._new(self.values - self._check(other))

    def __rsub__(self, other):
        return self._new(self._check(other) - self.values)

    def __mul__(self, other):
        return self._new(self.values * self._check(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._new(self.values / self._check(other))

    def __neg__(self):
        return self._new(-self.values)

    def conj(self):
        return self._new(self.values.conj())

    @property
    def real(self) -> np.ndarray:
        return self.values.real

    def norm(self, p: float = 2.0) -> float:
        """``L^p`` norm by grid quadrature (literal quasi-norm for ``p < 1``)."""
        a = np.abs(self.values)
        if math.isinf(p):
            return float(a.max(initial=0.0))
        cell = self.grid.h ** (a.ndim)
        return float((np.sum(a**p) * cell) ** (1.0 / p))

    def to_csv(self) -> str:
        flat = self.values.reshape(-1)
        lines = ["node,re,im"] + [f"{i},{v.real!r},{v.imag!r}" for i, v in enumerate(flat)]
        return "\n".join(lines) + "\n"

    def to_bytes(self) -> bytes:
        flat = self.values.reshape(-1)
        kind = 2 if isinstance(self, SampledFunction2D) else 1
        header = _MAGIC + struct.pack("<BBdQ", kind, self.grid.d, self.grid.L, self.grid.N)
        return header + flat.astype("<c16").tobytes()

    @staticmethod
    def from_bytes(blob: bytes) -> "SampledFunction":
        if blob[:4] != _MAGIC:
            raise GridError("bad magic; not a CZW1 blob")
        kind, d, L, N = struct.unpack_from("<BBdQ", blob, 4)
        off = 4 + struct.calcsize("<BBdQ")
        vals = np.frombuffer(blob[off:], dtype="<c16")
        cls = SampledFunction2D if kind == 2 else SampledFunction
        return cls(Grid(d, L, N), vals)


@dataclass(frozen=True, eq=False)
class SampledFunction2D(SampledFunction):
    """Function of ``(x, y)`` with both variables on the same 1D grid."""

    def __post_init__(self):
        if self.grid.d != 1:
            raise GridError("tensor-variable functions need a 1D grid")
        super().__post_init__()

    def _expected_shape(self) -> tuple:
        return (self.grid.N, self.grid.N)

    def norm(self, p: float = 2.0) -> float:
        a = np.abs(self.values)
        if math.isinf(p):
            return float(a.max(initial=0.0))
        return float((np.sum(a**p) * self.grid.h**2) ** (1.0 / p))


@dataclass(frozen=True)
class AffinePoint:
    w: Union[float, tuple]
    t: float

    def __post_init__(self):
        if not self.t > 0:
            raise GridError(f"scale must be positive, got {self.t}")


@dataclass(frozen=True)
class AffineGrid:
    """Truncated discretization of the affine group.

    Spatial centers are every ``stride``-th grid node; scales are
    ``t_min * rho**j`` for ``j < M``. Each scale is the log-midpoint of a cell
    of log-width ``ln rho``.
    """

    grid: Grid
    t_min: float
    rho: float
    M: int
    stride: int = 1

    def __post_init__(self):
        if self.stride < 1 or self.grid.N % self.stride:
            raise GridError(f"stride must be a positive divisor of N, got {self.stride}")
        if not self.rho > 1:
            raise GridError(f"scale ratio must exceed 1, got {self.rho}")
        if self.M < 1:
            raise GridError(f"need at least one scale, got M={self.M}")
        if self.t_min < 2 * self.grid.h * (1 - 1e-12):
            raise GridError(f"t_min={self.t_min} is below resolution 2h={2 * self.grid.h}")

    @classmethod
    def from_range(cls, grid: Grid, t_min: float | None = None, t_max: float | None = None,
                   M: int = 48, stride: int = 1) -> "AffineGrid":
        t_min = 4 * grid.h if t_min is None else t_min
        t_max = grid.L / 2 if t_max is None else t_max
        if not 0 < t_min < t_max:
            raise GridError(f"need 0 < t_min < t_max, got {t_min}, {t_max}")
        rho = (t_max / t_min) ** (1.0 / max(M - 1, 1)) if M > 1 else 2.0
        return cls(grid, t_min, rho, M, stride)

    @property
    def scales(self) -> np.ndarray:
        return self.t_min * self.rho ** np.arange(self.M)

    @property
    def t_max(self) -> float:
        return float(self.scales[-1])

    @property
    def log_step(self) -> float:
        return math.log(self.rho)

    @property
    def centers(self) -> np.ndarray:
        return self.grid.nodes[:: self.stride]

    @property
    def K(self) -> int:
        return (self.grid.N // self.stride) ** self.grid.d

    @property
    def cell_weight(self) -> float:
        return (self.stride * self.grid.h) ** self.grid.d * self.log_step

    @property
    def shape(self) -> tuple:
        return (self.M,) + ((self.grid.N // self.stride),) * self.grid.d

    def edges(self) -> tuple:
        """Covered scale interval ``[t_min rho^{-1/2}, t_max rho^{1/2}]``."""
        return self.t_min / math.sqrt(self.rho), self.t_max * math.sqrt(self.rho)

    def refined(self) -> "AffineGrid":
        """Split every scale cell in two while covering the same interval."""
        return AffineGrid(self.grid, self.t_min * self.rho ** -0.25, math.sqrt(self.rho),
                          2 * self.M, self.stride)


Rule = Union[str, Expression, Callable]


def _rule(rule: Rule, names) -> Callable:
    if isinstance(rule, str):
        return parse_expression(rule, names)
    return rule


def sample(rule: Rule, grid: Grid) -> SampledFunction:
    """Evaluate ``rule`` (variables ``x`` or ``x, y``) at every node."""
    names = ("x",) if grid.d == 1 else ("x", "y")
    fn = _rule(rule, names)
    with np.errstate(all="ignore"):
        vals = np.asarray(fn(*grid.mesh()), dtype=complex)
    vals = np.broadcast_to(vals, grid.shape)
    bad = ~np.isfinite(vals)
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        pos = tuple(float(grid.nodes[i]) for i in idx)
        raise GridError(f"rule is not finite at node {idx} (x={pos if grid.d > 1 else pos[0]})")
    return SampledFunction(grid, vals)


def integrate(f: SampledFunction) -> complex:
    """Trapezoid (periodic) quadrature of ``f``."""
    return complex(np.sum(f.values) * f.grid.h ** f.values.ndim)


def _symbol(m: Rule, grid: Grid) -> np.ndarray:
    if isinstance(m, np.ndarray):
        return np.broadcast_to(m, grid.shape)
    names = ("xi",) if grid.d == 1 else ("xi", "eta")
    fn = _rule(m, names)
    with np.errstate(all="ignore"):
        return np.broadcast_to(np.asarray(fn(*grid.freq_mesh()), dtype=complex), grid.shape)


def spectral_multiplier(f: SampledFunction, m: Rule, at_zero: complex | None = None,
                        tol: float = 1e-10) -> SampledFunction:
    """Apply the Fourier multiplier ``m`` (variable ``xi``; ``xi, eta`` in 2D).

    If ``m`` is not finite at the zero frequency, ``at_zero`` supplies its
    value there (default 0) and ``f`` must have vanishing mean relative to
    ``tol``. Non-finite values elsewhere are an error.
    """
    grid = f.grid
    sym = np.array(_symbol(m, grid), dtype=complex)
    zero = (0,) * grid.d
    if not np.isfinite(sym[zero]) or at_zero is not None:
        if not np.isfinite(sym[zero]):
            fhat0 = abs(np.sum(f.values)) * grid.h**grid.d
            scale = np.sum(np.abs(f.values)) * grid.h**grid.d
            if fhat0 > tol * max(scale, 1e-300):
                raise GridError(
                    f"multiplier is singular at xi=0 but the input has nonzero mean "
                    f"({fhat0:.3e}); anti-derivatives need cancellative input")
        sym[zero] = 0.0 if at_zero is None else at_zero
    if not np.all(np.isfinite(sym)):
        raise GridError("multiplier is not finite at a nonzero frequency")
    out = np.fft.ifftn(np.fft.fftn(f.values) * sym)
    return SampledFunction(grid, out)


def convolve(f: SampledFunction, g: SampledFunction) -> SampledFunction:
    """Periodic approximation of ``int f(y) g(x - y) dy`` on the shared grid."""
    if f.grid != g.grid:
        raise GridError("grid mismatch in convolve")
    grid = f.grid
    c = np.fft.ifftn(np.fft.fftn(f.values) * np.fft.fftn(g.values)) * grid.h**grid.d
    c = np.roll(c, shift=(-grid.N // 2,) * grid.d, axis=tuple(range(grid.d)))
    return SampledFunction(grid, c)


def mu_integrate(values, ag: AffineGrid) -> complex:
    """Quadrature of ``int f(w, t) dw dt / t`` over the cells of ``ag``."""
    vals = np.asarray(values)
    if vals.shape != ag.shape:
        raise GridError(f"values shape {vals.shape} does not match affine grid {ag.shape}")
    if not np.all(np.isfinite(vals)):
        raise GridError("non-finite value passed to mu_integrate")
    # fixed-order reduction: scales outermost
    per_scale = vals.reshape(ag.M, -1).sum(axis=1)
    return complex(math.fsum(per_scale.real) + 1j * math.fsum(per_scale.imag)) * ag.cell_weight
