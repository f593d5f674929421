import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from czwave.forms import IntrinsicDictionaries
from czwave.grid import Grid, GridError, SampledFunction, sample
from czwave.sparse import (DyadicCube, SparseCollection, build_sparse_collection, certify_domination,
                           localization_constants, maximal_function, random_whitney_sums, restrict,
                           sparse_form_value, whitney_sum)

G = Grid(1, 8.0, 1024)


@settings(max_examples=60, deadline=None)
@given(g=st.integers(0, 8), data=st.data())
def test_cube_invariants(g, data):
    k = data.draw(st.integers(0, (1 << g) - 1))
    Q = DyadicCube(g, k)
    idx = Q.indices(G)
    assert idx.size == G.N >> g and idx[0] == Q.start(G)
    assert Q.measure(G) == pytest.approx(2 * G.L / (1 << g))
    assert DyadicCube.from_block(G, Q.start(G), Q.length(G)) == Q
    if g < 8:
        kids = [DyadicCube(g + 1, 2 * k), DyadicCube(g + 1, 2 * k + 1)]
        assert all(Q.contains(c) and not c.contains(Q) for c in kids)
        assert kids[0].disjoint(kids[1])
        assert np.array_equal(np.concatenate([c.indices(G) for c in kids]), idx)
    if g >= 2:
        assert Q.dilate(G, 3).size == 3 * Q.length(G)


def test_cube_rejections():
    with pytest.raises(GridError):
        DyadicCube(11, 0).length(G)
    with pytest.raises(GridError):
        DyadicCube(2, 4).length(G)
    with pytest.raises(GridError):
        DyadicCube.from_block(G, 3, 256)
    with pytest.raises(ValueError):
        DyadicCube(2, 1).dilate(G, 2)


def test_maximal_function_against_definition():
    rng = np.random.default_rng(1)
    g = Grid(1, 1.0, 64)
    f = SampledFunction(g, rng.standard_normal(64))
    M = maximal_function(f).values.real
    a = np.abs(f.values)
    brute = np.zeros(64)
    for gen in range(7):
        n = 64 >> gen
        for k in range(1 << gen):
            sl = slice(k * n, (k + 1) * n)
            brute[sl] = np.maximum(brute[sl], a[sl].mean())
    assert np.allclose(M, brute, rtol=1e-13)
    assert np.all(M >= a - 1e-14)
    assert np.allclose(maximal_function(sample("2", g)).values, 2.0)


def test_restrict():
    f = sample("1+x^2", G)
    idx = DyadicCube(3, 2).indices(G)
    r = restrict(f, idx)
    assert np.array_equal(r.values[idx], f.values[idx])
    assert np.count_nonzero(r.values) == idx.size


def test_sparse_form_value_on_hand_collection():
    g = Grid(1, 1.0, 16)
    S = SparseCollection(g, [(DyadicCube(0, 0), np.arange(16)), (DyadicCube(1, 1), np.arange(8, 12))])
    one = sample("1", g)
    two = sample("2", g)
    assert sparse_form_value(S, one, two, one) == pytest.approx(2 * (2.0 + 1.0))
    assert sparse_form_value(S, one, two, one, (1, np.inf, 2)) == pytest.approx(6.0)
    with pytest.raises(ValueError):
        sparse_form_value(S, one, one, one, (0.5, 1, 1))
    cert = S.certify()
    assert cert["subset"] and cert["disjoint"] is False and cert["density"] is False


def test_max_depth_zero_gives_the_top_cube(sparse_setup):
    grid, ag, dicts = sparse_setup
    f = sample("exp(-x^2)", grid)
    Q0 = DyadicCube(2, 1)
    S = build_sparse_collection(f, f, f, Q0, dicts, ag, max_depth=0)
    assert S.cubes == [Q0] and np.array_equal(S.entries[0][1], Q0.indices(grid))


def test_sparse_collection_certificate(sparse_setup):
    grid, ag, dicts = sparse_setup
    fs = [sample(f"exp(-(x-({c}))^2/0.02)+0.3*exp(-(x+1)^2)", grid) for c in (-2.5, -1.5, -0.7)]
    S = build_sparse_collection(*fs, DyadicCube(2, 1), dicts, ag, max_depth=3)
    assert len(S) >= 1
    assert S.certify()["ok"]
    assert all(c >= 1 for c in S.constants.values())


def test_certify_domination_runs_and_is_deterministic(sparse_setup):
    grid, ag, dicts = sparse_setup
    fs = [sample(f"exp(-(x-({c}))^2/0.05)", grid) for c in (-2.0, -1.2, -0.5)]
    a = certify_domination("mss", *fs, (3, 3, 3), dicts, ag, max_depth=2)
    b = certify_domination("mss", *fs, (3, 3, 3), dicts, ag, max_depth=2)
    assert a == b
    assert a["certificate"]["ok"] and 0 < a["ratio"] < 50


def test_certify_domination_rejections_and_degenerate(sparse_setup):
    grid, ag, dicts = sparse_setup
    f = sample("exp(-(x+2)^2)", grid)
    zero = sample("0", grid)
    with pytest.raises(ValueError, match="1/p2 \\+ 1/p3"):
        certify_domination("msssig", f, f, f, (1, 1, 1), dicts, ag, sigma=0.5)
    with pytest.raises(ValueError):
        certify_domination("nope", f, f, f, (1, 1, 1), dicts, ag)
    with pytest.raises(ValueError):
        certify_domination("pi_b", f, f, f, (1, 1, 1), dicts, ag)
    out = certify_domination("mss", zero, f, f, (1, 1, 1), dicts, ag, max_depth=1)
    assert out["degenerate"] and out["ratio"] is None


def test_localization_bounds_on_a_large_domain():
    grid = Grid(1, 64.0, 16384)
    one = IntrinsicDictionaries(grid, size=12).one
    Q = DyadicCube(7, 64)
    c, ell = Q.center(grid), Q.side(grid)
    x = grid.nodes
    f = SampledFunction(grid, 1 + 0.5 * np.cos(3 * x))
    fm = SampledFunction(grid, np.sin(2 * np.pi * (x - c) / ell))
    worst = {"far": 0.0, "cancel": 0.0, "out": 0.0}
    for t in (0.25, 1.0, 4.0):
        pts = [(c + ell * k, t) for k in (2, 4, 8, 12)]
        worst["far"] = max(worst["far"], localization_constants(f, Q, one, pts, "far").max())
        worst["cancel"] = max(worst["cancel"], localization_constants(fm, Q, one, pts, "cancel").max())
        inside = [(c + ell * a, t) for a in (-0.4, 0.0, 0.4)]
        worst["out"] = max(worst["out"], localization_constants(f, Q, one, inside, "out").max())
    assert all(0 < v < 1 for v in worst.values()), worst
    with pytest.raises(ValueError):
        localization_constants(f, Q, one, [(c, 1.0)], "near")


def test_whitney_sum_skips_cubes_near_the_point():
    Q = DyadicCube(4, 3)
    assert whitney_sum([Q], G, Q.center(G), 1.0) == 0.0
    far = whitney_sum([Q], G, Q.center(G) + 4.0, 1.0)
    assert far == pytest.approx(Q.measure(G) * min(Q.side(G), 1.0) / 16.0)


def test_random_whitney_sums_are_bounded():
    sums = random_whitney_sums(G, 100)
    assert sums.shape == (100,) and np.all(sums >= 0)
    assert sums.max() < 4.0
