"""Batch experiment runner.

Usage: ``czwave run <config> [--out DIR] [--threads N] [--seed S]``.

A config is line oriented: ``key = value`` pairs, ``[section]`` headers and
``#`` comments. Top-level keys are ``experiment`` and ``seed``; the sections
are ``[grid]`` (d, L, N), ``[affine]`` (M, t_min, t_max, stride), ``[params]``
and ``[checks]`` (tolerances). Unset keys take the defaults listed per
experiment in ``EXPERIMENTS``. Exit code 0 means every check passed, 1 that
a check failed and 2 a config error.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .expr import ExpressionError, parse_expression
from .grid import AffineGrid, AffinePoint, Grid, GridError, SampledFunction, sample

__all__ = ["ConfigError", "Config", "parse_config", "load_config", "run", "main", "EXPERIMENTS"]


class ConfigError(ValueError):
    pass


@dataclass
class Config:
    experiment: str
    seed: int = 0
    grid: dict = field(default_factory=dict)
    affine: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    lines: dict = field(default_factory=dict)  # (section, key) -> line number


def _split(text: str):
    section, header = "", 0
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]") or len(line) < 3:
                raise ConfigError(f"line {lineno}: malformed section header {raw.strip()!r}")
            section, header = line[1:-1].strip(), lineno
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        yield lineno, section, key, value, header


def _coerce(value: str, default, where: str):
    try:
        if isinstance(default, bool):
            if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError
            return value.lower() in ("true", "1", "yes")
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
        if isinstance(default, tuple):
            return tuple(type(default[0])(v) for v in value.split(","))
    except ValueError:
        raise ConfigError(f"{where}: cannot read {value!r} as {type(default).__name__}") from None
    return value


def parse_config(text: str) -> Config:
    entries = list(_split(text))
    top = {k: (v, n) for n, s, k, v, _ in entries if s == ""}
    for key, (_, lineno) in top.items():
        if key not in ("experiment", "seed"):
            raise ConfigError(f"line {lineno}: unknown key {key!r} at top level")
    if "experiment" not in top:
        raise ConfigError("missing key 'experiment'")
    name = top["experiment"][0]
    if name not in EXPERIMENTS:
        raise ConfigError(f"line {top['experiment'][1]}: unknown experiment {name!r}; "
                          f"expected one of {sorted(EXPERIMENTS)}")
    exp = EXPERIMENTS[name]
    schema = {"": {"experiment": "", "seed": 0}, "grid": dict(exp.grid), "affine": dict(exp.affine),
              "params": dict(exp.params), "checks": dict(exp.checks)}
    cfg = Config(name, 0, dict(exp.grid), dict(exp.affine), dict(exp.params), dict(exp.checks))
    for lineno, section, key, value, header in entries:
        if section not in schema:
            raise ConfigError(f"line {header}: unknown section [{section}]")
        if key not in schema[section]:
            where = f"[{section}]" if section else "top level"
            raise ConfigError(f"line {lineno}: unknown key {key!r} at {where} for experiment {name!r}")
        if (section, key) in cfg.lines:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        cfg.lines[(section, key)] = lineno
        val = _coerce(value, schema[section][key], f"line {lineno}")
        if section == "":
            if key == "seed":
                cfg.seed = val
        else:
            getattr(cfg, section)[key] = val
    return cfg


def load_config(path) -> Config:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)


# ------------------------------------------------------------------ helpers

@dataclass
class Context:
    cfg: Config
    threads: int

    @property
    def p(self) -> dict:
        return self.cfg.params

    @property
    def c(self) -> dict:
        return self.cfg.checks

    @property
    def seed(self) -> int:
        return self.cfg.seed

    def grid(self) -> Grid:
        g = self.cfg.grid
        return Grid(g["d"], g["L"], g["N"])

    def affine(self, grid: Grid) -> AffineGrid:
        a = self.cfg.affine
        return AffineGrid.from_range(grid, a["t_min"] or None, a["t_max"] or None, a["M"], a["stride"])

    def function(self, key: str, grid: Grid) -> SampledFunction:
        text = self.p[key]
        line = self.cfg.lines.get(("params", key))
        try:
            parse_expression(text, ("x", "y")[: grid.d])
        except ExpressionError as exc:
            at = f"line {line}, " if line else ""
            raise ConfigError(f"{at}params.{key}: {exc}") from None
        return sample(text, grid)


def _affine_meta(ag: AffineGrid) -> dict:
    return {"t_min": ag.t_min, "t_max": float(ag.scales[-1]), "rho": ag.rho, "M": ag.M, "stride": ag.stride}


def _grid_meta(grid: Grid) -> dict:
    return {"d": grid.d, "L": grid.L, "N": grid.N, "h": grid.h}


def _check(name: str, value, passed: bool, bound) -> dict:
    return {"name": name, "value": value, "bound": bound, "pass": bool(passed)}


def _function_csv(grid: Grid, **cols) -> str:
    names = list(cols)
    lines = ["x," + ",".join(names)]
    arrs = [np.asarray(cols[n]).real for n in names]
    for i, x in enumerate(grid.nodes):
        lines.append(repr(float(x)) + "," + ",".join(repr(float(a[i])) for a in arrs))
    return "\n".join(lines) + "\n"


# -------------------------------------------------------------- experiments

def _admissibility(ctx: Context):
    from .wavelet import admissibility_constant, make_mother_wavelet
    phi = make_mother_wavelet(ctx.p["D"], ctx.p["bump"])
    A = admissibility_constant(phi)
    order = ctx.p["moment_order"]
    mom = np.abs(phi.moments(order))
    report = {"D": phi.D, "bump": phi.bump, "n_laplacian": phi.n_lap, "admissibility_constant": A,
              "moments": mom.tolist()}
    checks = [_check("admissibility", abs(A - 1), abs(A - 1) <= ctx.c["tol_admissibility"], ctx.c["tol_admissibility"]),
              _check(f"moments_through_{order}", float(mom.max()), mom.max() <= ctx.c["tol_moments"], ctx.c["tol_moments"])]
    x = phi.base.grid
    return report, {"wavelet.csv": _function_csv(x, phi=phi.base.values)}, checks


def _reconstruct(ctx: Context):
    from .transform import calderon_reconstruct, cwt, truncation_tail
    from .wavelet import make_mother_wavelet
    grid = ctx.grid()
    ag = ctx.affine(grid)
    phi = make_mother_wavelet(ctx.p["D"])
    f = ctx.function("f", grid)
    rec = calderon_reconstruct(cwt(f, phi, ag), phi, f)
    fine = calderon_reconstruct(cwt(f, phi, ag.refined()), phi, f)
    report = {"grid": _grid_meta(grid), "affine": _affine_meta(ag), "f": ctx.p["f"],
              "relative_l2_error": rec.relative_l2_error, "refined_relative_l2_error": fine.relative_l2_error,
              "truncation_tail": truncation_tail(f, phi, ag)}
    tol = ctx.c["tol_relative_l2"]
    checks = [_check("relative_l2_error", rec.relative_l2_error, rec.relative_l2_error < tol, tol),
              _check("refinement_decreases", fine.relative_l2_error,
                     fine.relative_l2_error < rec.relative_l2_error, rec.relative_l2_error)]
    csv = _function_csv(grid, f=f.values, reconstruction=rec.function.values)
    return report, {"reconstruction.csv": csv}, checks


def _highlow(ctx: Context):
    from .transform import highlow_decompose, highlow_identity_gap, truncation_tail
    from .wavelet import make_mother_wavelet
    grid = ctx.grid()
    ag = ctx.affine(grid)
    phi = make_mother_wavelet(ctx.p["D"])
    sys_ = highlow_decompose(phi, ctx.p["m"])
    f = ctx.function("f", grid)
    gap = highlow_identity_gap(f, sys_, ag)
    means = [abs(m) for m in sys_.means()]
    fine = sys_.fine_grid
    phi_mass = float(abs(np.sum(sys_.Phi.values) * fine.h))
    tol = ctx.c["tol_relative_l2"]
    report = {"grid": _grid_meta(grid), "affine": _affine_meta(ag), "s": gap["s"],
              "relative_l2_gap": gap["relative_l2_gap"], "support_excess": sys_.support_excess(),
              "means": means, "Phi_integral": phi_mass, "delta_identity_residual": sys_.identity_residual,
              "truncation_tail": truncation_tail(f, phi, ag)}
    checks = [_check("relative_l2_gap", gap["relative_l2_gap"], gap["relative_l2_gap"] < tol, tol),
              _check("support_in_unit_ball", sys_.support_excess(), sys_.support_excess() == 0.0, 0.0),
              _check("psi2_mean_zero", means[1], means[1] <= ctx.c["tol_mean"], ctx.c["tol_mean"]),
              _check("Phi_unit_mass", abs(phi_mass - 1), abs(phi_mass - 1) <= ctx.c["tol_mean"], ctx.c["tol_mean"])]
    csv = _function_csv(grid, lhs=gap["lhs"].values, rhs=gap["rhs"].values)
    return report, {"highlow.csv": csv}, checks


def _tensor(ctx: Context):
    from .transform import highlow_decompose, tensor_reproducing_check, truncation_tail
    from .wavelet import make_mother_wavelet
    grid = ctx.grid()
    ag = ctx.affine(grid)
    phi = make_mother_wavelet(ctx.p["D"])
    sys_ = highlow_decompose(phi, ctx.p["m"])
    f, g = ctx.function("f", grid), ctx.function("g", grid)
    res = tensor_reproducing_check(f, g, sys_, ag)
    tol = ctx.c["tol_residual"]
    report = {"grid": _grid_meta(grid), "affine": _affine_meta(ag), "residual": res,
              "truncation_tail": [truncation_tail(f, phi, ag), truncation_tail(g, phi, ag)]}
    return report, {}, [_check("tensor_residual", res, res < tol, tol)]


def _averaging(ctx: Context):
    from .transform import averaged_wavelet, hypothesis_bound
    from .wavelet import WaveletClassSpec, class_membership
    grid = ctx.grid()
    ag = ctx.affine(grid)
    delta = ctx.p["delta"]
    eta = delta / 2
    spec = WaveletClassSpec(0, delta, eta, cancellative=(False, False))
    H = lambda u, v, w, s, t: hypothesis_bound(u, v, w, s, t, delta)
    rng = np.random.default_rng(ctx.seed)
    n = ctx.p["points"]
    idx = rng.integers(ag.M // 4, ag.M // 2, size=n)
    ws = rng.uniform(-grid.L / 8, grid.L / 8, size=n)
    rows = []
    for w, j in zip(ws, idx):
        z = AffinePoint(float(w), float(ag.scales[j]))
        nu = averaged_wavelet(H, ctx.p["psi"], ctx.p["phi"], z, ag, delta)
        rows.append((z.w, z.t, class_membership(nu, z, spec)))
    norms = np.array([r[2] for r in rows])
    finite = bool(np.all(np.isfinite(norms)))
    spread = float(norms.max() / norms.min() - 1) if finite and norms.min() > 0 else math.inf
    tol = ctx.c["tol_spread"]
    report = {"grid": _grid_meta(grid), "affine": _affine_meta(ag), "eta": eta, "delta": delta,
              "points": [{"w": w, "t": t, "star_norm": v} for w, t, v in rows], "spread": spread}
    csv = "w,t,star_norm\n" + "".join(f"{w!r},{t!r},{v!r}\n" for w, t, v in rows)
    checks = [_check("star_norm_finite", float(norms.max()), finite, "finite"),
              _check("star_norm_spread", spread, spread < tol, tol)]
    return report, {"averaging.csv": csv}, checks


def _upsilon(ctx: Context):
    from .forms import pointwise_product, sample_upsilon, smooth_multiplier, upsilon_decay_certificate
    p = ctx.p
    lam = pointwise_product() if p["form"] == "pointwise" else smooth_multiplier(p["form"])
    fld = sample_upsilon(lam, p["samples"], ctx.seed, p["k1"], p["k2"], threads=ctx.threads)
    cert = upsilon_decay_certificate(fld, p["eta"])
    disjoint = fld.disjoint_supports() & (fld.regions != "A")
    nonzero_disjoint = int(np.sum(fld.values[disjoint] != 0))
    report = {"form": p["form"], "samples": p["samples"], "certificate": cert.to_dict(),
              "disjoint_outside_A": int(disjoint.sum()), "nonzero_on_disjoint": nonzero_disjoint}
    bound = ctx.c["max_slope"]
    checks = [_check("decay_slope", cert.slope, (not cert.degenerate) and cert.slope <= bound, bound),
              _check("zero_on_disjoint_supports", nonzero_disjoint, nonzero_disjoint == 0, 0)]
    return report, {"upsilon.csv": fld.to_csv()}, checks


def _random_triple(rng, grid: Grid, lo: float, hi: float, bumps: int):
    x = grid.nodes
    out = []
    for _ in range(3):
        v = np.zeros(grid.N)
        for _ in range(bumps):
            c, w = rng.uniform(lo, hi), rng.uniform(0.02, 0.3)
            v += rng.uniform(0.5, 2) * np.exp(-(x - c) ** 2 / (2 * w**2))
        out.append(SampledFunction(grid, v))
    return out


def _sparse_certify(ctx: Context):
    from .forms import IntrinsicDictionaries
    from .sparse import DyadicCube, certify_domination
    grid = ctx.grid()
    ag = ctx.affine(grid)
    p = ctx.p
    dicts = IntrinsicDictionaries(grid, size=p["dictionary_size"], seed=ctx.seed)
    exps = p["exponents"]
    sigma = p["sigma"] if p["form"] in ("msssig", "pi_b_sigma") else None
    Q0 = DyadicCube(2, 1)
    lo, hi = Q0.start(grid) * grid.h - grid.L, (Q0.start(grid) + Q0.length(grid)) * grid.h - grid.L
    rng = np.random.default_rng(ctx.seed)
    b = SampledFunction(grid, np.cos(grid.nodes)) if p["form"].startswith("pi_b") else None
    rows = []
    for i in range(p["triples"]):
        f1, f2, f3 = _random_triple(rng, grid, lo + 0.2, hi - 0.2, p["bumps"])
        r = certify_domination(p["form"], f1, f2, f3, exps, dicts, ag, b=b, sigma=sigma, Q0=Q0,
                               max_depth=p["max_depth"])
        rows.append(r)
    ratios = np.array([r["ratio"] for r in rows if not r["degenerate"]])
    spread = float(ratios.max() / ratios.min()) if len(ratios) and ratios.min() > 0 else math.inf
    certified = all(r["certificate"]["ok"] for r in rows)
    report = {"grid": _grid_meta(grid), "affine": _affine_meta(ag), "dictionary_size": dicts.size,
              "form": p["form"], "exponents": list(exps), "sigma": sigma,
              "runs": [{k: r[k] for k in ("value", "sparse_value", "ratio", "degenerate", "cubes", "certificate")}
                       for r in rows],
              "ratio_spread": spread}
    csv = "triple,ratio,cubes,certified\n" + "".join(
        f"{i},{r['ratio']!r},{r['cubes']},{r['certificate']['ok']}\n" for i, r in enumerate(rows))
    tol = ctx.c["max_spread"]
    checks = [_check("collections_certified", int(sum(r["certificate"]["ok"] for r in rows)), certified, len(rows)),
              _check("ratio_spread", spread, spread < tol, tol)]
    return report, {"sparse.csv": csv}, checks


def _ap_weights(ctx: Context):
    from .weights import (WeightVector, ap_characteristic, ap_characteristic_bruteforce, holder_tuple,
                          power_weight_vector)
    grid = ctx.grid()
    p = ctx.p
    e = holder_tuple(p["p1"], p["p2"], p["r"])
    levels = p["levels"]
    origin = grid.index_of(0.0)
    rows = []
    worst = 0.0
    for a in p["powers"]:
        v = power_weight_vector(grid, a)
        fast = ap_characteristic(v, e, levels)
        brute = ap_characteristic_bruteforce(v, e, levels)
        without = ap_characteristic(v, e, levels, exclude=origin)
        worst = max(worst, abs(fast - brute) / brute)
        rows.append({"a": a, "characteristic": fast, "bruteforce": brute, "without_origin": without})
    one = SampledFunction(grid, np.ones(grid.N))
    trivial = ap_characteristic(WeightVector(one, one, one), e, levels)
    rng = np.random.default_rng(ctx.seed)
    e1 = holder_tuple(p["p1"], p["p2"])
    jensen = []
    x = grid.nodes
    for _ in range(p["random_vectors"]):
        l1 = sum(rng.normal(0, 0.5) * np.cos(k * np.pi * x / grid.L + rng.uniform(0, 6)) for k in range(1, 6))
        l2 = sum(rng.normal(0, 0.5) * np.cos(k * np.pi * x / grid.L + rng.uniform(0, 6)) for k in range(1, 6))
        v = WeightVector.from_pair(SampledFunction(grid, np.exp(l1)), SampledFunction(grid, np.exp(l2)))
        jensen.append(ap_characteristic(v, e1, levels))
    tol = ctx.c["tol_bruteforce"]
    report = {"grid": _grid_meta(grid), "exponents": e.to_dict(), "levels": levels, "power_weights": rows,
              "trivial": trivial, "jensen_min": min(jensen) if jensen else None}
    csv = "a,characteristic,bruteforce,without_origin\n" + "".join(
        f"{r['a']!r},{r['characteristic']!r},{r['bruteforce']!r},{r['without_origin']!r}\n" for r in rows)
    checks = [_check("trivial_vector", trivial, trivial == 1.0, 1.0),
              _check("bruteforce_match", worst, worst <= tol, tol)]
    if jensen:
        checks.append(_check("jensen_lower_bound", min(jensen), min(jensen) >= 1 - 1e-12, 1.0))
    return report, {"ap_weights.csv": csv}, checks


def _band_limited(rng, grid: Grid, kmax: int) -> SampledFunction:
    F = np.zeros(grid.N, dtype=complex)
    k = np.arange(1, kmax + 1)
    F[k] = (rng.standard_normal(kmax) + 1j * rng.standard_normal(kmax)) * np.exp(-(k / kmax) ** 2)
    F[-k] = np.conj(F[k])
    F[0] = rng.standard_normal()
    return SampledFunction(grid, np.fft.ifft(F).real * grid.N / kmax)


def _leibniz(ctx: Context):
    from .weights import holder_tuple, leibniz_check
    grid = ctx.grid()
    p = ctx.p
    e = holder_tuple(p["p1"], p["p2"], p["r"])
    sigma = p["sigma"]
    rng = np.random.default_rng(ctx.seed)
    runs = []
    for _ in range(p["pairs"]):
        f, g = _band_limited(rng, grid, p["bandwidth"]), _band_limited(rng, grid, p["bandwidth"])
        runs.append(leibniz_check(f, g, sigma, e))
    ratios = np.array([r["ratio"] for r in runs if not r["degenerate"]])
    spread = float(ratios.max() / ratios.min()) if len(ratios) and ratios.min() > 0 else math.inf
    report = {"grid": _grid_meta(grid), "sigma": sigma, "exponents": e.to_dict(),
              "runs": [{k: r[k] for k in ("ratio", "left", "norm_f", "norm_g", "homogeneous_f", "homogeneous_g",
                                          "degenerate")} for r in runs],
              "ratio_spread": spread}
    csv = "pair,ratio,left,norm_f,norm_g\n" + "".join(
        f"{i},{r['ratio']!r},{r['left']!r},{r['norm_f']!r},{r['norm_g']!r}\n" for i, r in enumerate(runs))
    tol = ctx.c["max_spread"]
    checks = [_check("ratio_finite", float(ratios.max()) if len(ratios) else None,
                     len(ratios) == len(runs) and bool(np.all(np.isfinite(ratios))), "finite"),
              _check("ratio_spread", spread, spread < tol, tol)]
    return report, {"leibniz.csv": csv}, checks


def _sharpness(ctx: Context):
    from .weights import sharpness_experiment
    grid = ctx.grid()
    p = ctx.p
    ks = range(p["k_min"], p["k_max"] + 1)
    rep = sharpness_experiment(p["sigma"], ks, p["r1"], p["r2"], grid)
    fine = sharpness_experiment(p["sigma"], ks, p["r1"], p["r2"], Grid(grid.d, grid.L, 2 * grid.N))
    report = dict(rep.to_dict(), refined_slope=fine.slope)
    checks = []
    if not rep.degenerate:
        tol = ctx.c["tol_slope"]
        err = abs(rep.slope - rep.target_slope)
        checks.append(_check("slope_matches_target", rep.slope, err <= tol, [rep.target_slope - tol, rep.target_slope + tol]))
        drift = abs(fine.slope - rep.slope)
        checks.append(_check("refinement_drift", drift, drift < ctx.c["tol_refinement"], ctx.c["tol_refinement"]))
    return report, {"sharpness.csv": rep.to_csv()}, checks


@dataclass(frozen=True)
class Experiment:
    runner: Callable
    grid: dict
    affine: dict
    params: dict
    checks: dict


_G = {"d": 1, "L": 16.0, "N": 1024}
_A = {"M": 48, "t_min": 0.0, "t_max": 0.0, "stride": 1}
_PROBE = "cos(50*x)*exp(-x^2/(2*0.0625))"
_PROBE2 = "cos(45*x+0.3)*exp(-(x-0.5)^2/(2*0.0625))"

EXPERIMENTS = {
    "admissibility": Experiment(_admissibility, _G, _A,
                                {"D": 1, "bump": "exp(4/(x^2-1/4))", "moment_order": 2},
                                {"tol_admissibility": 1e-6, "tol_moments": 1e-8}),
    "reconstruct": Experiment(_reconstruct, _G, _A, {"D": 1, "f": _PROBE}, {"tol_relative_l2": 0.02}),
    "highlow": Experiment(_highlow, _G, _A, {"D": 1, "m": 1, "f": _PROBE},
                          {"tol_relative_l2": 0.02, "tol_mean": 1e-9}),
    "tensor": Experiment(_tensor, {"d": 1, "L": 16.0, "N": 1024}, _A,
                         {"D": 1, "m": 1, "f": _PROBE, "g": _PROBE2}, {"tol_residual": 0.05}),
    "averaging": Experiment(_averaging, {"d": 1, "L": 32.0, "N": 256},
                            {"M": 40, "t_min": 0.5, "t_max": 64.0, "stride": 1},
                            {"delta": 1.0, "points": 5, "psi": "exp(-x^2)", "phi": "exp(-x^2)"},
                            {"tol_spread": 0.2}),
    "upsilon": Experiment(_upsilon, _G, _A,
                          {"form": "pointwise", "samples": 500, "k1": 0, "k2": 0, "eta": 0.5},
                          {"max_slope": -2.0}),
    "sparse-certify": Experiment(_sparse_certify, {"d": 1, "L": 8.0, "N": 1024},
                                 {"M": 16, "t_min": 0.0625, "t_max": 4.0, "stride": 1},
                                 {"form": "mss", "exponents": (1.0, 1.0, 1.0), "sigma": 0.5, "triples": 20,
                                  "bumps": 3, "dictionary_size": 12, "max_depth": 5},
                                 {"max_spread": 50.0}),
    "ap-weights": Experiment(_ap_weights, {"d": 1, "L": 8.0, "N": 256}, _A,
                             {"p1": 3.0, "p2": 3.0, "r": (1.0, 1.0, 1.0), "powers": (0.1, 0.2, 0.3),
                              "levels": 8, "random_vectors": 30},
                             {"tol_bruteforce": 1e-10}),
    "leibniz": Experiment(_leibniz, {"d": 1, "L": 8.0, "N": 512}, _A,
                          {"sigma": 0.5, "p1": 4.0, "p2": 4.0, "r": (1.5, 1.5, 1.0), "pairs": 20, "bandwidth": 12},
                          {"max_spread": 20.0}),
    "sharpness": Experiment(_sharpness, {"d": 1, "L": 8192.0, "N": 65536}, _A,
                            {"sigma": 0.5, "k_min": 3, "k_max": 8, "r1": 1.0, "r2": 1.0},
                            {"tol_slope": 0.1, "tol_refinement": 0.02}),
}


# ------------------------------------------------------------------ runner

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [_jsonable(obj.real), _jsonable(obj.imag)]
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def run(config_path, out_dir=None, threads: int | None = None, seed: int | None = None,
        stream=None) -> int:
    """Run one experiment; returns the exit code."""
    stream = stream or sys.stdout
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if seed is not None:
        cfg.seed = seed
    ctx = Context(cfg, threads or os.cpu_count() or 1)
    start = time.perf_counter()
    try:
        report, csvs, checks = EXPERIMENTS[cfg.experiment].runner(ctx)
    except (ConfigError, ExpressionError, GridError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    elapsed = time.perf_counter() - start
    doc = {"experiment": cfg.experiment, "seed": cfg.seed, "grid": cfg.grid, "affine": cfg.affine,
           "params": cfg.params, "tolerances": cfg.checks, "result": report, "checks": checks,
           "pass": all(c["pass"] for c in checks)}
    out = Path(out_dir or f"czwave-out/{cfg.experiment}")
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")
    for name, text in sorted(csvs.items()):
        (out / name).write_text(text)
    for c in checks:
        print(f"{'PASS' if c['pass'] else 'FAIL'} {cfg.experiment}:{c['name']} value={c['value']} bound={c['bound']}",
              file=stream)
    print(f"{cfg.experiment}: {len(checks)} checks in {elapsed:.1f}s, report in {out}", file=stream)
    return 0 if doc["pass"] else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="czwave", description="Run a czwave experiment from a config file.")
    sub = parser.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment")
    r.add_argument("config")
    r.add_argument("--out", default=None, help="output directory (default czwave-out/<experiment>)")
    r.add_argument("--threads", type=int, default=None, help="worker threads (default: all cores)")
    r.add_argument("--seed", type=int, default=None, help="override the config seed")
    args = parser.parse_args(argv)
    if args.threads is not None and args.threads < 1:
        parser.error("--threads must be positive")
    return run(args.config, args.out, args.threads, args.seed)


if __name__ == "__main__":
    sys.exit(main())
