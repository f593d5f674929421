"""Acceptance criteria 1-13, one test per criterion, each printing a PASS/FAIL line."""
import io
import json
import time
from pathlib import Path

import numpy as np
import pytest

from czwave.cli import EXPERIMENTS, run
from czwave.grid import AffineGrid, AffinePoint, Grid, SampledFunction, sample

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
_RUNS = {}


@pytest.fixture(scope="module")
def runner(tmp_path_factory):
    """Run a config once per module and keep its output directory, exit code and wall time."""
    base = tmp_path_factory.mktemp("acceptance")

    def go(key: str, text: str | None = None):
        if key not in _RUNS:
            out = base / key
            if text is None:
                cfg = CONFIGS / f"{key}.ini"
            else:
                cfg = base / f"{key}.ini"
                cfg.write_text(text)
            start = time.perf_counter()
            code = run(cfg, out, threads=1, stream=io.StringIO())
            elapsed = time.perf_counter() - start
            doc = json.loads((out / "report.json").read_text()) if code in (0, 1) else None
            _RUNS[key] = {"cfg": cfg, "out": out, "code": code, "elapsed": elapsed, "doc": doc}
        return _RUNS[key]

    return go


def _checks(doc):
    return {c["name"]: c for c in doc["checks"]}


def test_criterion_01_admissibility(runner, criterion):
    r = runner("admissibility")
    c = _checks(r["doc"])
    ok = r["code"] == 0 and c["admissibility"]["value"] <= 1e-6 and c["moments_through_2"]["value"] <= 1e-8 \
        and r["elapsed"] < 5
    assert criterion(1, "admissibility and moments", ok,
                     f"|A-1|={c['admissibility']['value']:.2e} moments={c['moments_through_2']['value']:.2e} "
                     f"time={r['elapsed']:.1f}s")


def test_criterion_02_reconstruction(runner, criterion):
    r = runner("reconstruct")
    res = r["doc"]["result"]
    err, fine = res["relative_l2_error"], res["refined_relative_l2_error"]
    ok = r["code"] == 0 and res["grid"]["N"] == 1024 and res["affine"]["M"] == 48 and err < 0.02 \
        and fine < err and r["elapsed"] < 60
    assert criterion(2, "Calderon reconstruction", ok,
                     f"err={err:.2e} refined={fine:.2e} tail={res['truncation_tail']:.2e} time={r['elapsed']:.1f}s")


def test_criterion_03_highlow(runner, criterion):
    r = runner("highlow")
    c = _checks(r["doc"])
    ok = r["code"] == 0 and all(v["pass"] for v in c.values()) and r["elapsed"] < 120
    assert criterion(3, "high-low identity", ok,
                     f"gap={c['relative_l2_gap']['value']:.2e} support_excess={c['support_in_unit_ball']['value']} "
                     f"psi2_mean={c['psi2_mean_zero']['value']:.1e} time={r['elapsed']:.1f}s")


def test_criterion_04_tensor(runner, criterion):
    r = runner("tensor")
    res = r["doc"]["result"]["residual"]
    ok = r["code"] == 0 and res < 0.05 and r["elapsed"] < 600
    assert criterion(4, "tensor reproducing formula", ok, f"residual={res:.2e} time={r['elapsed']:.1f}s")


def test_criterion_05_averaging(runner, criterion):
    r = runner("averaging")
    res = r["doc"]["result"]
    norms = [p["star_norm"] for p in res["points"]]
    ok = r["code"] == 0 and len(norms) == 5 and np.all(np.isfinite(norms)) and res["spread"] < 0.2
    assert criterion(5, "wavelet averaging", ok,
                     f"star norms {min(norms):.4g}..{max(norms):.4g} spread={res['spread']:.2e}")


def test_criterion_06_upsilon_decay(runner, criterion):
    r = runner("upsilon")
    res = r["doc"]["result"]
    cert = res["certificate"]
    ok = r["code"] == 0 and res["samples"] == 500 and cert["slope"] <= -2.0 and cert["target"] == -2.5 \
        and res["nonzero_on_disjoint"] == 0 and res["disjoint_outside_A"] > 0
    assert criterion(6, "Upsilon decay", ok,
                     f"slope={cert['slope']:.2f} target={cert['target']} "
                     f"zeros {res['disjoint_outside_A'] - res['nonzero_on_disjoint']}/{res['disjoint_outside_A']} "
                     "disjoint samples")


def test_criterion_07_paraproduct_testing(phi, criterion):
    from czwave.forms import paraproduct_testing
    grid = Grid(1, 8.0, 1024)
    ag = AffineGrid.from_range(grid, t_min=4 * grid.h, t_max=4.0, M=48)
    b = sample("cos(56*x)*exp(-(x-0.3)^2/0.5)", grid)
    h = phi.place(grid, AffinePoint(0.1, 0.5))
    worst_rel = worst_zero = worst_adj = 0.0
    for gamma in ((0, 0), (1, 0)):
        out = paraproduct_testing(b, gamma, phi, h, ag)
        for row in out["reproduce"]:
            if row["kappa"] == gamma:
                worst_rel = max(worst_rel, abs(row["value"] - row["expected"]) / abs(row["expected"]))
            else:
                worst_zero = max(worst_zero, abs(row["value"]))
        worst_adj = max(worst_adj, max(abs(a["value"]) for a in out["adjoint"]))
    ok = worst_rel < 0.01 and worst_zero < 1e-6 and worst_adj < 1e-6
    assert criterion(7, "paraproduct testing", ok,
                     f"rel err={worst_rel:.1e} off-diagonal={worst_zero:.1e} adjoint={worst_adj:.1e}")


def test_criterion_08_sparse_certification(runner, criterion):
    from czwave.forms import IntrinsicDictionaries
    from czwave.sparse import certify_domination
    r = runner("sparse-certify")
    res = r["doc"]["result"]
    certified = sum(run_["certificate"]["ok"] for run_ in res["runs"])
    grid = Grid(1, 8.0, 1024)
    f = sample("exp(-(x+2)^2)", grid)
    try:
        certify_domination("msssig", f, f, f, (1, 1, 1), IntrinsicDictionaries(grid), AffineGrid.from_range(grid, M=4),
                           sigma=0.5)
        rejected = False
    except ValueError:
        rejected = True
    ok = r["code"] == 0 and len(res["runs"]) == 20 and certified == 20 and res["ratio_spread"] < 50 and rejected
    assert criterion(8, "sparse certification", ok,
                     f"certified {certified}/20 spread={res['ratio_spread']:.2f} sigma rejection={rejected}")


def _sweep(f, fm, Q, one, ts, ks, inside):
    from czwave.sparse import localization_constants
    c, ell = Q.center(f.grid), Q.side(f.grid)
    out = {"far": 0.0, "cancel": 0.0, "out": 0.0}
    for t in ts:
        pts = [(c + ell * k, t) for k in ks]
        out["far"] = max(out["far"], localization_constants(f, Q, one, pts, "far").max())
        out["cancel"] = max(out["cancel"], localization_constants(fm, Q, one, pts, "cancel").max())
        inner = [(c + ell * a, t) for a in inside]
        out["out"] = max(out["out"], localization_constants(f, Q, one, inner, "out").max())
    return out


def test_criterion_09_localization(criterion):
    from czwave.forms import IntrinsicDictionaries
    from czwave.sparse import DyadicCube, random_whitney_sums
    grid = Grid(1, 64.0, 16384)
    one = IntrinsicDictionaries(grid, size=12).one
    Q = DyadicCube(7, 64)
    c, ell = Q.center(grid), Q.side(grid)
    x = grid.nodes
    f = SampledFunction(grid, 1 + 0.5 * np.cos(3 * x))
    fm = SampledFunction(grid, np.sin(2 * np.pi * (x - c) / ell))
    base = _sweep(f, fm, Q, one, (0.25, 0.5, 1, 2, 4, 8), (2, 3, 4, 6, 8, 12), (-0.4, 0.0, 0.4))
    wide = _sweep(f, fm, Q, one, (0.0625, 0.125, 0.25, 0.5, 1, 2, 4, 8, 16), (2, 3, 4, 6, 8, 12, 16, 24),
                  (-0.4, -0.2, 0.0, 0.2, 0.4))
    growth = {k: wide[k] / base[k] for k in base}
    sums = [random_whitney_sums(Grid(1, 8.0, n), 100, seed=s).max() for n, s in ((1024, 0), (4096, 1))]
    ok = all(1 - 1e-12 <= g < 1.2 for g in growth.values()) and max(sums) < 4.0
    detail = " ".join(f"{k}={base[k]:.3f}->{wide[k]:.3f}" for k in base)
    assert criterion(9, "localization bounds", ok, f"{detail} whitney max={max(sums):.2f} (bound 4)")


def test_criterion_10_weights(runner, criterion):
    r = runner("ap-weights")
    c = _checks(r["doc"])
    res = r["doc"]["result"]
    ok = r["code"] == 0 and res["trivial"] == 1.0 and c["bruteforce_match"]["value"] <= 1e-10 \
        and res["jensen_min"] >= 1 - 1e-12
    assert criterion(10, "weight characteristics", ok,
                     f"trivial={res['trivial']} brute diff={c['bruteforce_match']['value']:.1e} "
                     f"jensen min={res['jensen_min']:.3f} over 30 vectors")


def test_criterion_11_leibniz(runner, criterion):
    from czwave.weights import ExponentTuple, leibniz_check
    r = runner("leibniz")
    res = r["doc"]["result"]
    grid = Grid(1, 8.0, 512)
    rng = np.random.default_rng(0)
    e = ExponentTuple(4, 4, 2, (3, 3, 1))
    worst = 0.0
    for _ in range(20):
        f = SampledFunction(grid, np.exp(-(grid.nodes - rng.uniform(-2, 2)) ** 2) * np.cos(rng.uniform(0, 10) * grid.nodes))
        g = SampledFunction(grid, np.exp(-(grid.nodes - rng.uniform(-2, 2)) ** 2 / 2))
        direct = (f * g).norm(2) / (4 * f.norm(4) * g.norm(4))
        worst = max(worst, abs(leibniz_check(f, g, 0.0, e)["ratio"] - direct) / direct)
    ok = r["code"] == 0 and len(res["runs"]) == 20 and res["ratio_spread"] < 20 and worst < 1e-10
    assert criterion(11, "Leibniz check", ok, f"holder oracle rel err={worst:.1e} sigma=0.5 spread={res['ratio_spread']:.2f}")


def test_criterion_12_sharpness(runner, criterion):
    start = time.perf_counter()
    slopes = {}
    ok = True
    for s in (0.25, 0.5, 1.0):
        r = runner(f"sharpness-{s}", f"experiment = sharpness\nseed = 0\n[params]\nsigma = {s}\n")
        slopes[s] = r["doc"]["result"]["slope"]
        ok &= r["code"] == 0 and abs(slopes[s] + s) <= 0.1
    elapsed = time.perf_counter() - start
    ok &= elapsed < 60
    detail = " ".join(f"sigma={s}:{v:.3f}" for s, v in slopes.items())
    assert criterion(12, "sharpness slopes", ok, f"{detail} time={elapsed:.2f}s")


def test_criterion_13_determinism(runner, criterion, tmp_path):
    mismatched = []
    for key in EXPERIMENTS:
        first = runner(key)
        again = tmp_path / key
        run(first["cfg"], again, threads=3, stream=io.StringIO())
        names = sorted(p.name for p in first["out"].iterdir())
        if names != sorted(p.name for p in again.iterdir()):
            mismatched.append(key)
            continue
        if any((first["out"] / n).read_bytes() != (again / n).read_bytes() for n in names):
            mismatched.append(key)
    ok = not mismatched
    assert criterion(13, "determinism", ok,
                     f"{len(EXPERIMENTS) - len(mismatched)}/{len(EXPERIMENTS)} experiments byte-identical"
                     + (f", differ: {mismatched}" if mismatched else ""))
