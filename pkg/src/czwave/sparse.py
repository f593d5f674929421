"""Dyadic cubes, the stopping-time construction of sparse collections and
empirical sparse-domination constants (one space dimension)."""
from __future__ import annotations

import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .forms import (IntrinsicDictionaries, intrinsic_coefficients, msssig_form, mss_form,
                    pi_b_form, pi_b_sigma_form)
from .grid import AffineGrid, AffinePoint, Grid, GridError, SampledFunction
from .wavelet import WaveletDictionary

__all__ = [
    "DyadicCube",
    "SparseCollection",
    "SparseError",
    "maximal_function",
    "intrinsic_maximal",
    "build_sparse_collection",
    "sparse_form_value",
    "certify_domination",
    "restrict",
    "localization_constants",
    "whitney_sum",
    "random_whitney_sums",
]


class SparseError(RuntimeError):
    pass


@dataclass(frozen=True, order=True)
class DyadicCube:
    """Generation-``g`` block number ``k`` of the periodic domain.

    Generation 0 is the whole domain ``[-L, L)``; a generation-``g`` cube has
    ``N >> g`` nodes.
    """

    g: int
    k: int

    def _check(self, grid: Grid):
        if grid.d != 1:
            raise GridError("dyadic cubes are implemented for d = 1")
        if self.g < 0 or (grid.N >> self.g) < 1 or not 0 <= self.k < (1 << self.g):
            raise GridError(f"cube {self} does not fit a grid with N={grid.N}")

    def length(self, grid: Grid) -> int:
        self._check(grid)
        return grid.N >> self.g

    def start(self, grid: Grid) -> int:
        return self.k * self.length(grid)

    def side(self, grid: Grid) -> float:
        return self.length(grid) * grid.h

    def measure(self, grid: Grid) -> float:
        return self.side(grid) ** grid.d

    def center(self, grid: Grid) -> float:
        return -grid.L + (self.start(grid) + self.length(grid) / 2) * grid.h

    def indices(self, grid: Grid) -> np.ndarray:
        s = self.start(grid)
        return np.arange(s, s + self.length(grid))

    def dilate(self, grid: Grid, factor: int) -> np.ndarray:
        """Node indices of the ``factor``-fold dilate (odd ``factor``), wrapped periodically."""
        if factor < 1 or factor % 2 == 0:
            raise ValueError("dilation factor must be a positive odd integer")
        n, s = self.length(grid), self.start(grid)
        half = (factor - 1) // 2 * n
        idx = np.arange(s - half, s + n + half) % grid.N
        return np.unique(idx)

    def contains(self, other: "DyadicCube") -> bool:
        return other.g >= self.g and (other.k >> (other.g - self.g)) == self.k

    def disjoint(self, other: "DyadicCube") -> bool:
        return not (self.contains(other) or other.contains(self))

    @classmethod
    def from_block(cls, grid: Grid, start: int, length: int) -> "DyadicCube":
        g = int(round(math.log2(grid.N / length)))
        if (grid.N >> g) != length or start % length:
            raise GridError(f"({start}, {length}) is not a dyadic block")
        return cls(g, start // length)


@dataclass(eq=False)
class SparseCollection:
    """Cubes with their carved major subsets ``E_Q`` (node indices)."""

    grid: Grid
    entries: list = field(default_factory=list)   # (DyadicCube, np.ndarray)
    constants: dict = field(default_factory=dict)  # calibrated level per cube

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def cubes(self) -> list:
        return [q for q, _ in self.entries]

    def certify(self) -> dict:
        """Node-count checks of ``E_Q`` inside ``Q``, pairwise disjointness and ``|E_Q| > |Q|/2``."""
        subset = density = True
        seen = np.zeros(self.grid.N, dtype=np.int64)
        for q, e in self.entries:
            s, n = q.start(self.grid), q.length(self.grid)
            if e.size and (e.min() < s or e.max() >= s + n):
                subset = False
            if not 2 * e.size > n:
                density = False
            seen[e] += 1
        disjoint = bool(np.all(seen <= 1))
        return {"subset": subset, "disjoint": disjoint, "density": density,
                "ok": subset and disjoint and density}

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("generation,corner,density\n")
        for q, e in self.entries:
            buf.write(f"{q.g},{q.k},{e.size / q.length(self.grid)!r}\n")
        return buf.getvalue()


def restrict(f: SampledFunction, idx: np.ndarray) -> SampledFunction:
    """``f`` times the indicator of the node set ``idx``."""
    mask = np.zeros(f.grid.N)
    mask[idx] = 1.0
    return SampledFunction(f.grid, f.values * mask)


def maximal_function(f: SampledFunction, levels: int | None = None) -> SampledFunction:
    """Dyadic maximal function: per node, the largest ``<|f|>_Q`` over dyadic ``Q`` containing it."""
    grid = f.grid
    if grid.d != 1:
        raise GridError("the dyadic maximal function is implemented for d = 1")
    levels = int(math.log2(grid.N)) if levels is None else levels
    return SampledFunction(grid, kernels.dyadic_maximal(np.abs(f.values).astype(float), levels))


def intrinsic_maximal(f1, f2, f3, dictionary: WaveletDictionary, ag: AffineGrid) -> SampledFunction:
    """``max_t prod_i sup_theta |<f_i, theta_{w,t}>|`` at every node ``w``."""
    if ag.stride != 1:
        raise GridError("the intrinsic maximal function needs every node as a center")
    prod = np.ones(ag.shape)
    for f in (f1, f2, f3):
        prod *= intrinsic_coefficients(f, None, dictionary, ag)
    return SampledFunction(ag.grid, prod.max(axis=0))


def _mean_abs(f: SampledFunction, idx: np.ndarray) -> float:
    return float(np.mean(np.abs(f.values[idx])))


def build_sparse_collection(f1, f2, f3, Q0: DyadicCube, dicts: IntrinsicDictionaries, ag: AffineGrid,
                            max_depth: int = 5, min_nodes: int = 4, max_doublings: int = 40,
                            threads: int = 1) -> SparseCollection:
    """Stopping-time sparse collection below ``Q0``.

    Inputs are restricted to ``3Q0``. At each cube the level
    ``C prod <|f_i|>_{3Q}`` starts at ``C = 1`` and doubles until the level set
    ``E`` of the intrinsic maximal function fills less than half of ``Q``; the
    maximal dyadic ``Q' in Q`` with ``9Q'`` inside ``E`` become children and
    ``E_Q`` is ``Q`` minus the children.
    """
    grid = ag.grid
    if f1.grid != grid or f2.grid != grid or f3.grid != grid:
        raise GridError("functions and affine grid live on different grids")
    Q0._check(grid)
    dictionary = dicts.one
    out = SparseCollection(grid)

    def visit(Q: DyadicCube, fs: tuple, depth: int):
        n, s = Q.length(grid), Q.start(grid)
        wide = Q.dilate(grid, 3)
        local = tuple(restrict(f, wide) for f in fs)
        avg = math.prod(_mean_abs(f, wide) for f in local)
        if depth >= max_depth or n < 2 * min_nodes or avg == 0:
            return [(Q, Q.indices(grid), None, [])]
        M = intrinsic_maximal(*local, dictionary, ag).values.real
        C = 1.0
        for _ in range(max_doublings + 1):
            mask = M > C * avg
            if 2 * int(mask[s: s + n].sum()) < n:
                break
            C *= 2
        else:
            frac = mask[s: s + n].mean()
            raise SparseError(f"level calibration failed at {Q}: |E|/|Q| = {frac:.3f} "
                              f"after {max_doublings} doublings")
        blocks = kernels.select_maximal_cubes(mask.astype(np.uint8), s, n, min_nodes, 9)
        children = [DyadicCube.from_block(grid, b0, ln) for b0, ln in blocks]
        keep = np.ones(n, bool)
        for c in children:
            keep[c.start(grid) - s: c.start(grid) - s + c.length(grid)] = False
        return [(Q, s + np.flatnonzero(keep), C, [(c, local) for c in children])]

    frontier = [(Q0, (f1, f2, f3))]
    depth = 0
    results = []
    while frontier:
        if threads > 1 and len(frontier) > 1:
            with ThreadPoolExecutor(threads) as ex:
                level = list(ex.map(lambda a: visit(a[0], a[1], depth), frontier))
        else:
            level = [visit(Q, fs, depth) for Q, fs in frontier]
        frontier = []
        for items in level:
            for Q, e, C, kids in items:
                results.append((Q, e, C))
                frontier.extend(kids)
        depth += 1
    for Q, e, C in sorted(results, key=lambda r: (r[0].g, r[0].k)):
        out.entries.append((Q, e))
        if C is not None:
            out.constants[(Q.g, Q.k)] = C
    return out


def _p_average(f: SampledFunction, idx: np.ndarray, p: float) -> float:
    a = np.abs(f.values[idx])
    if math.isinf(p):
        return float(a.max(initial=0.0))
    return float(np.mean(a**p) ** (1.0 / p))


def sparse_form_value(S: SparseCollection, f1, f2, f3, p=(1.0, 1.0, 1.0)) -> float:
    """``sum_Q |Q| <f1>_{p1,Q} <f2>_{p2,Q} <f3>_{p3,Q}``."""
    for q in p:
        if not (q >= 1):
            raise ValueError(f"exponents must lie in [1, inf], got {p}")
    total = 0.0
    for Q, _ in S.entries:
        idx = Q.indices(S.grid)
        total += Q.measure(S.grid) * math.prod(_p_average(f, idx, q) for f, q in zip((f1, f2, f3), p))
    return total


_FORMS = {"mss", "pi_b", "msssig", "pi_b_sigma"}


def certify_domination(form: str, f1, f2, f3, p, dicts: IntrinsicDictionaries, ag: AffineGrid,
                       b: SampledFunction | None = None, sigma: float | None = None,
                       Q0: DyadicCube = DyadicCube(2, 1), max_depth: int = 5) -> dict:
    """Form value, sparse collection and the ratio ``C_emp = form / sparse form``."""
    if form not in _FORMS:
        raise ValueError(f"unknown form {form!r}; expected one of {sorted(_FORMS)}")
    d = ag.grid.d
    if form in ("msssig", "pi_b_sigma"):
        if sigma is None:
            raise ValueError("sigma forms need sigma")
        if not 1 / p[1] + 1 / p[2] < (sigma + d) / d:
            raise ValueError(f"exponents violate 1/p2 + 1/p3 < (sigma + d)/d: "
                             f"{1 / p[1] + 1 / p[2]:.4g} >= {(sigma + d) / d:.4g}")
    if form in ("pi_b", "pi_b_sigma") and b is None:
        raise ValueError("paraproduct forms need b")
    wide = Q0.dilate(ag.grid, 3)
    fs = tuple(restrict(f, wide) for f in (f1, f2, f3))
    if form == "mss":
        value = mss_form(*fs, dicts, ag)
    elif form == "pi_b":
        value = pi_b_form(b, *fs, dicts, ag)
    elif form == "msssig":
        value = msssig_form(*fs, sigma, dicts, ag)
    else:
        value = pi_b_sigma_form(b, *fs, sigma, dicts, ag)
    S = build_sparse_collection(*fs, Q0, dicts, ag, max_depth)
    sv = sparse_form_value(S, *fs, p)
    cert = S.certify()
    degenerate = sv == 0
    return {"form": form, "value": value, "sparse_value": sv,
            "ratio": None if degenerate else value / sv, "degenerate": degenerate,
            "cubes": len(S), "certificate": cert, "p": list(map(float, p)), "sigma": sigma}


# --------------------------------------------------- localization estimates

def localization_constants(f: SampledFunction, Q: DyadicCube, dictionary: WaveletDictionary,
                           points: list, kind: str = "far") -> np.ndarray:
    """Per ``(w, t)`` ratio of the measured pairing to the localization bound.

    ``kind="far"``: ``|<f 1_Q, theta>| / (<|f|>_Q l^d t^eta / max(t, |w-c|)^{d+eta})`` for ``w`` off ``3Q``.
    ``kind="cancel"``: as ``far`` with the extra factor ``(l / t)^delta`` (``f`` mean zero on ``Q``).
    ``kind="out"``: ``|<f 1_{(3Q)^c}, theta>| / ((t/l)^eta inf_Q Mf)`` for ``w`` in ``Q``.
    Each ratio is a maximum over the dictionary members.
    """
    grid = f.grid
    spec = dictionary.spec
    eta, delta, dd = spec.eta, spec.delta, grid.d
    ell, c = Q.side(grid), Q.center(grid)
    qidx = Q.indices(grid)
    avg = _mean_abs(f, qidx)
    if kind == "out":
        outside = np.setdiff1d(np.arange(grid.N), Q.dilate(grid, 3))
        fq = restrict(f, outside)
        Mf = maximal_function(f).values.real
        inf_m = float(Mf[qidx].min())
    elif kind in ("far", "cancel"):
        fq = restrict(f, qidx)
    else:
        raise ValueError(f"unknown kind {kind!r}")
    out = []
    for w, t in points:
        best = max(abs(np.sum(fq.values * m.values) * grid.h) for m in dictionary.at(AffinePoint(w, t)))
        if kind == "out":
            bound = (t / ell) ** eta * inf_m
        else:
            dist = abs(grid.wrap(w - c))
            bound = avg * ell**dd * t**eta / max(t, dist) ** (dd + eta)
            if kind == "cancel":
                bound *= (ell / t) ** delta
        out.append(best / bound)
    return np.array(out)


def whitney_sum(cubes: list, grid: Grid, w: float, t: float, delta: float = 1.0) -> float:
    """``sum_{Q: w not in 3Q} |Q| min(l(Q), t)^delta / |w - c(Q)|^{d+delta}``."""
    total = 0.0
    iw = grid.index_of(w)
    for Q in cubes:
        if iw in set(Q.dilate(grid, 3).tolist()):
            continue
        dist = abs(grid.wrap(w - Q.center(grid)))
        total += Q.measure(grid) * min(Q.side(grid), t) ** delta / dist ** (grid.d + delta)
    return total


def random_whitney_sums(grid: Grid, configs: int = 100, seed: int = 0, delta: float = 1.0,
                        min_nodes: int = 2) -> np.ndarray:
    """Whitney-type sums for random open sets ``E`` and points ``(w, t)`` outside ``T(E)``.

    ``E`` is a union of random intervals; its cubes are the maximal dyadic
    blocks with ``9Q`` inside ``E``.
    """
    rng = np.random.default_rng(seed)
    N = grid.N
    out = []
    for _ in range(configs):
        mask = np.zeros(N, np.uint8)
        for _ in range(rng.integers(1, 6)):
            a = int(rng.integers(0, N))
            ln = int(rng.integers(N // 64, N // 4))
            mask[np.arange(a, a + ln) % N] = 1
        blocks = kernels.select_maximal_cubes(mask, 0, N, min_nodes, 9)
        cubes = [DyadicCube.from_block(grid, s, ln) for s, ln in blocks]
        if not cubes:
            out.append(0.0)
            continue
        # (w, t) outside every Carleson box T(Q) = Q x (0, l(Q)]
        while True:
            i = int(rng.integers(0, N))
            t = float(grid.h * 2.0 ** rng.uniform(0, math.log2(N)))
            inside = [Q for Q in cubes if Q.start(grid) <= i < Q.start(grid) + Q.length(grid)]
            if not inside or t > inside[0].side(grid):
                break
        out.append(whitney_sum(cubes, grid, float(grid.nodes[i]), t, delta))
    return np.array(out)
