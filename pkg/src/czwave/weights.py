"""Multilinear Muckenhoupt characteristics, weighted Sobolev norms, the
fractional Leibniz check and the sharpness experiment for the exponent
constraint ``1/r1 + 1/r2 < (sigma + d)/d``."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import Grid, GridError, SampledFunction

__all__ = [
    "ExponentTuple",
    "WeightVector",
    "SobolevNorm",
    "holder_tuple",
    "ap_characteristic",
    "ap_characteristic_bruteforce",
    "power_weight_vector",
    "fractional_derivative",
    "weighted_lq_norm",
    "weighted_sobolev_norm",
    "leibniz_check",
    "sharpness_experiment",
]

_TOL = 1e-12


def _inv(p: float) -> float:
    return 0.0 if math.isinf(p) else 1.0 / p


@dataclass(frozen=True)
class ExponentTuple:
    """Generalized Hoelder tuple ``(p1, p2, p3)`` with ``r`` exponents."""

    p1: float
    p2: float
    p3: float
    r: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        alphas = [_inv(q) for q in self.ps]
        if any(q == 0 for q in self.ps):
            raise ValueError("exponents must be nonzero")
        if abs(sum(alphas) - 1.0) > 1e-10:
            raise ValueError(f"1/p1 + 1/p2 + 1/p3 = {sum(alphas):.12g}, expected 1")
        if any(a < -0.5 - _TOL or a > 1 + _TOL for a in alphas):
            raise ValueError(f"reciprocals {alphas} leave [-1/2, 1]")
        if len(self.r) != 3 or any(not (ri >= 1) or math.isinf(ri) for ri in self.r):
            raise ValueError(f"r must lie in [1, inf)^3, got {self.r}")

    @property
    def ps(self) -> tuple:
        return (self.p1, self.p2, self.p3)

    @property
    def p(self) -> float:
        """``p3 / (p3 - 1) = p1 p2 / (p1 + p2)``."""
        return 1.0 / (_inv(self.p1) + _inv(self.p2))

    @property
    def in_p_circ(self) -> bool:
        return 1 < min(self.p1, self.p2) < math.inf

    @property
    def r_below_p(self) -> bool:
        """``r < p`` in the sense that every ``eps_j`` is positive."""
        try:
            return all(e > 0 for e in self.eps)
        except ZeroDivisionError:
            return False

    @property
    def eps(self) -> tuple:
        """``eps_j = p_j r_j / (p_j - r_j)`` (``r_j`` when ``p_j`` is infinite, inf when ``p_j = r_j``)."""
        out = []
        for pj, rj in zip(self.ps, self.r):
            if math.isinf(pj):
                out.append(float(rj))
            elif pj == rj:
                out.append(math.inf)
            else:
                out.append(pj * rj / (pj - rj))
        return tuple(out)

    def to_dict(self) -> dict:
        enc = lambda x: "inf" if math.isinf(x) else x
        return {"p": [enc(q) for q in self.ps], "r": list(self.r), "eps": [enc(e) for e in self.eps],
                "p_out": enc(self.p), "p_circ": self.in_p_circ}


def holder_tuple(p1: float, p2: float, r: tuple | None = None, require_circ: bool = True) -> ExponentTuple:
    """Complete ``(p1, p2)`` to a Hoelder tuple; ``1/p3 = 1 - 1/p1 - 1/p2``."""
    if require_circ and not 1 < min(p1, p2) < math.inf:
        raise ValueError(f"need 1 < min(p1, p2) < inf, got ({p1}, {p2})")
    a3 = 1.0 - _inv(p1) - _inv(p2)
    p3 = math.inf if abs(a3) < _TOL else 1.0 / a3
    e = ExponentTuple(p1, p2, p3, tuple(r) if r is not None else (1.0, 1.0, 1.0))
    if r is not None and not e.r_below_p:
        raise ValueError(f"r = {tuple(r)} is not below p = {e.ps}: eps = {e.eps}")
    return e


@dataclass(frozen=True, eq=False)
class WeightVector:
    v1: SampledFunction
    v2: SampledFunction
    v3: SampledFunction

    def __post_init__(self):
        vals = [np.asarray(v.values) for v in self.weights]
        for j, v in enumerate(vals, 1):
            if np.any(np.abs(v.imag) > 0) or np.any(v.real <= 0):
                raise ValueError(f"weight v{j} must be positive at every node")
        prod = vals[0].real * vals[1].real * vals[2].real
        if np.max(np.abs(prod - 1.0)) > 1e-10:
            raise ValueError(f"weights must multiply to 1; max deviation {np.max(np.abs(prod - 1)):.3e}")

    @property
    def weights(self) -> tuple:
        return (self.v1, self.v2, self.v3)

    @property
    def grid(self) -> Grid:
        return self.v1.grid

    @classmethod
    def from_pair(cls, v1: SampledFunction, v2: SampledFunction) -> "WeightVector":
        return cls(v1, v2, SampledFunction(v1.grid, 1.0 / (v1.values.real * v2.values.real)))

    @property
    def dual(self) -> SampledFunction:
        """``w = v1 v2 = 1 / v3``."""
        return SampledFunction(self.grid, 1.0 / self.v3.values.real)


def power_weight_vector(grid: Grid, a: float) -> WeightVector:
    """``v1 = max(|x|, h)^a``, ``v2 = max(|x|, h)^{-a}``, ``v3 = 1``."""
    r = np.maximum(np.abs(grid.nodes), grid.h)
    one = SampledFunction(grid, np.ones(grid.N))
    return WeightVector(SampledFunction(grid, r**a), SampledFunction(grid, r**-a), one)


def _block_average(u: np.ndarray, size: int, e: float) -> np.ndarray:
    blocks = u.reshape(-1, size)
    if math.isinf(e):
        return blocks.max(axis=1)
    return np.mean(blocks**e, axis=1) ** (1.0 / e)


def ap_characteristic(v: WeightVector, e: ExponentTuple, levels: int | None = None,
                      exclude: int | None = None) -> float:
    """``max_Q prod_j <1/v_j>_{eps_j, Q}`` over dyadic cubes of generations ``0..levels``.

    ``exclude`` is a node index whose containing cubes are skipped.
    """
    if not e.r_below_p:
        raise ValueError(f"r = {e.r} is not below p = {e.ps}")
    grid = v.grid
    if grid.d != 1:
        raise GridError("characteristics are implemented for d = 1")
    levels = int(math.log2(grid.N)) if levels is None else int(levels)
    inv = [1.0 / w.values.real for w in v.weights]
    best = 0.0
    for g in range(levels + 1):
        size = grid.N >> g
        if size < 1:
            break
        prod = np.ones(grid.N // size)
        for u, eps in zip(inv, e.eps):
            prod *= _block_average(u, size, eps)
        if exclude is not None:
            prod[exclude // size] = -np.inf
        best = max(best, float(prod.max(initial=0.0)))
    return best


def ap_characteristic_bruteforce(v: WeightVector, e: ExponentTuple, levels: int | None = None,
                                 exclude: int | None = None) -> float:
    """Same quantity by an explicit loop over every dyadic cube."""
    grid = v.grid
    levels = int(math.log2(grid.N)) if levels is None else int(levels)
    inv = [1.0 / w.values.real for w in v.weights]
    best = 0.0
    for g in range(levels + 1):
        size = grid.N >> g
        for k in range(grid.N // size):
            lo, hi = k * size, (k + 1) * size
            if exclude is not None and lo <= exclude < hi:
                continue
            val = 1.0
            for u, eps in zip(inv, e.eps):
                seg = u[lo:hi]
                val *= seg.max() if math.isinf(eps) else (sum(x**eps for x in seg) / size) ** (1 / eps)
            best = max(best, val)
    return best


# ------------------------------------------------------------ Sobolev norms

def fractional_derivative(f: SampledFunction, sigma: float) -> SampledFunction:
    """``D^sigma f`` with symbol ``|xi|^sigma`` (value 0 at ``xi = 0`` when ``sigma > 0``)."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if sigma == 0:
        return f
    sym = np.abs(f.grid.freqs) ** sigma
    sym[0] = 0.0
    out = np.fft.ifft(np.fft.fft(f.values) * sym)
    if not np.any(f.values.imag):
        out = out.real
    return SampledFunction(f.grid, out)


def weighted_lq_norm(u: np.ndarray, weight: np.ndarray | None, q: float, h: float) -> float:
    """``(sum |u w|^q h)^{1/q}``; quasi-norms for ``q < 1`` are taken literally."""
    a = np.abs(u) if weight is None else np.abs(u) * np.abs(weight)
    if math.isinf(q):
        return float(a.max(initial=0.0))
    if not q > 0:
        raise ValueError(f"q must be positive, got {q}")
    return float((np.sum(a**q) * h) ** (1.0 / q))


@dataclass(frozen=True)
class SobolevNorm:
    value: float
    homogeneous: float

    def __float__(self) -> float:
        return self.value


def weighted_sobolev_norm(f: SampledFunction, sigma: float, q: float,
                          v: SampledFunction | None = None) -> SobolevNorm:
    """``||(D^sigma f) v||_q + sum_{k <= floor(sigma)} ||(D^k f) v||_q`` and the homogeneous part alone."""
    w = None if v is None else v.values.real
    h = f.grid.h
    top = weighted_lq_norm(fractional_derivative(f, sigma).values, w, q, h)
    low = sum(weighted_lq_norm(fractional_derivative(f, k).values, w, q, h)
              for k in range(int(math.floor(sigma)) + 1))
    return SobolevNorm(top + low, top)


def leibniz_check(f: SampledFunction, g: SampledFunction, sigma: float, e: ExponentTuple,
                  v: WeightVector | None = None, T=None) -> dict:
    """Ratio ``||D^sigma T(f, g) / v3||_p / (||f||_{W^{sigma,p1}(v1)} ||g||_{W^{sigma,p2}(v2)})``.

    ``T`` is a form evaluator exposing ``operator`` (default: pointwise product).
    """
    d = f.grid.d
    r1, r2, _ = e.r
    if not e.in_p_circ:
        raise ValueError(f"exponents must satisfy 1 < min(p1, p2) < inf, got {e.ps}")
    if not e.r_below_p:
        raise ValueError(f"r must be below p (every eps_j > 0), got eps = {e.eps}")
    if not 1 / r1 + 1 / r2 < (sigma + d) / d:
        raise ValueError(f"1/r1 + 1/r2 < (sigma + d)/d fails: {1 / r1 + 1 / r2:.4g} >= {(sigma + d) / d:.4g}")
    if not e.p > d / (sigma + d):
        raise ValueError(f"p > d/(sigma + d) fails: p = {e.p:.4g}")
    if f.grid != g.grid:
        raise GridError("f and g live on different grids")
    if T is None:
        prod = SampledFunction(f.grid, f.values * g.values)
        tag = "pointwise-product"
    else:
        op = getattr(T, "operator", None)
        if op is None:
            raise ValueError(f"form {T.tag!r} has no operator form T(f, g)")
        prod = op(f, g)
        tag = T.tag
    h = f.grid.h
    v1 = v3 = v2 = None
    if v is not None:
        v1, v2, v3 = (w.values.real for w in v.weights)
    left = weighted_lq_norm(fractional_derivative(prod, sigma).values,
                            None if v3 is None else 1.0 / v3, e.p, h)
    nf = weighted_sobolev_norm(f, sigma, e.p1, None if v1 is None else SampledFunction(f.grid, v1))
    ng = weighted_sobolev_norm(g, sigma, e.p2, None if v2 is None else SampledFunction(f.grid, v2))
    right = nf.value * ng.value
    degenerate = right == 0
    return {"ratio": None if degenerate else left / right, "left": left, "norm_f": nf.value,
            "norm_g": ng.value, "homogeneous_f": nf.homogeneous, "homogeneous_g": ng.homogeneous,
            "degenerate": degenerate, "sigma": sigma, "operator": tag, "exponents": e.to_dict()}


# ---------------------------------------------------------------- sharpness

def _wave(grid: Grid, center: float = 10.0, width: float = 0.9) -> np.ndarray:
    """Samples of ``f`` whose transform is a smooth bump on ``|xi - center| < width``."""
    xi = grid.freqs
    y = (xi - center) / width
    F = np.zeros(grid.N)
    m = np.abs(y) < 1
    F[m] = np.exp(1.0 / (y[m] ** 2 - 1.0))
    # continuous transform F relates to the DFT by f_hat = h e^{i xi L} DFT
    return np.fft.ifft(F * np.exp(-1j * xi * grid.L)) / grid.h


@dataclass(frozen=True)
class SharpnessReport:
    sigma: float
    ks: list
    pairings: list
    slope: float
    target_slope: float
    sparse_slope: float
    consistent: bool
    degenerate: bool
    constraint: str
    grid: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    def to_csv(self) -> str:
        lines = ["k,pairing,log2_pairing"]
        for k, p in zip(self.ks, self.pairings):
            lines.append(f"{k},{p!r},{math.log2(p) if p > 0 else float('-inf')!r}")
        return "\n".join(lines) + "\n"


def sharpness_experiment(sigma: float, k_range=range(3, 9), r1: float = 1.0, r2: float = 1.0,
                         grid: Grid | None = None) -> SharpnessReport:
    """Decay of ``|<D^sigma(f conj f), 1_{2^k <= |x| < 2^{k+1}}>|`` against ``k``.

    A sparse bound with exponents ``r1, r2`` would force the fitted slope to
    lie below ``d - d/r1 - d/r2``; the report says whether that holds.
    """
    ks = [int(k) for k in k_range]
    if len(ks) < 4:
        raise ValueError(f"need at least 4 values of k, got {len(ks)}")
    grid = grid or Grid(1, 8192.0, 65536)
    if 2.0 ** (max(ks) + 1) > grid.L / 2:
        raise GridError(f"grid half-width {grid.L} is too small for k up to {max(ks)}")
    d = grid.d
    f = _wave(grid)
    ff = SampledFunction(grid, np.abs(f) ** 2)
    Dff = fractional_derivative(ff, sigma).values.real
    x = np.abs(grid.nodes)
    pair = []
    for k in ks:
        ring = (x >= 2.0**k) & (x < 2.0 ** (k + 1))
        pair.append(float(abs(np.sum(Dff[ring]) * grid.h)))
    logs = np.log2(np.maximum(pair, 1e-300))
    slope = float(np.polyfit(ks, logs, 1)[0])
    target = d - (d + sigma)
    sparse_slope = d - d / r1 - d / r2
    return SharpnessReport(float(sigma), ks, pair, slope, float(target), float(sparse_slope),
                           bool(slope <= sparse_slope + 0.1), bool(sigma == 0),
                           f"1/r1 + 1/r2 <= {(d + sigma) / d:g}",
                           {"L": grid.L, "N": grid.N})
