import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from homemorl.mo import (Solution, ccs_prune, check_weight, corner_pairs, corner_weights, dominates,
                         even_weights, pareto_filter, read_solutions, tie_weight, utility, write_solutions)
from oracles import brute_pareto, grid_max_utility

points2d = st.lists(st.tuples(st.integers(-20, 20), st.integers(-20, 20)), min_size=1, max_size=30)


def values(sols):
    return [tuple(s.value) for s in sols]


def test_utility_examples():
    assert utility([2, 4], [0.5, 0.5]) == 3
    assert utility([7.5, -2], [1, 0]) == 7.5
    assert utility([-840.93, 1460], [0.9, 0.1]) == pytest.approx(-610.837, abs=1e-9)
    with pytest.raises(ValueError):
        utility([1, 2, 3], [0.5, 0.5])


def test_weight_validation():
    check_weight([0.3, 0.7])
    for bad in ([0.5, 0.6], [-0.1, 1.1], [np.nan, 1.0]):
        with pytest.raises(ValueError):
            check_weight(bad)


def test_dominance_examples():
    assert dominates([1, 2], [0, 2])
    assert not dominates([1, 0], [0, 1])
    assert not dominates([1, 1], [1, 1])


def test_pareto_examples():
    assert values(pareto_filter([[1, 0], [0, 1], [0.5, 0.5]])) == [(1, 0), (0, 1), (0.5, 0.5)]
    assert values(pareto_filter([[1, 1], [0, 0]])) == [(1, 1)]
    # equal vectors keep the first policy id
    out = pareto_filter([Solution(np.array([1.0, 1.0]), "a"), Solution(np.array([1.0, 1.0]), "b")])
    assert [s.policy_id for s in out] == ["a"]


def test_pareto_matches_bruteforce():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = int(rng.integers(1, 201))
        pts = rng.integers(0, 15, size=(n, 2)).astype(float)
        got = [s.policy_id for s in pareto_filter(pts)]
        assert got == brute_pareto(pts)


@settings(max_examples=100, deadline=None)
@given(points2d)
def test_pareto_idempotent_and_undominated(pts):
    front = pareto_filter(pts)
    assert values(pareto_filter(front)) == values(front)
    for s in front:
        assert not any(dominates(p, s.value) for p in pts)


def test_ccs_examples():
    assert sorted(values(ccs_prune([[1, 0], [0, 1], [0.4, 0.4]]))) == [(0, 1), (1, 0)]
    assert len(ccs_prune([[1, 0], [0, 1], [0.6, 0.6]])) == 3
    assert values(ccs_prune([[3, 4]])) == [(3, 4)]


@settings(max_examples=60, deadline=None)
@given(points2d)
def test_ccs_removals_are_never_maximal(pts):
    kept = ccs_prune(pts)
    front = pareto_filter(pts)
    assert set(values(kept)) <= set(values(front))
    W, best = grid_max_utility(pts, n=2001)
    kept_best = np.max(W @ np.array([s.value for s in kept]).T, axis=1)
    np.testing.assert_allclose(kept_best, best, atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(points2d, st.floats(0.01, 100))
def test_scaling_invariance(pts, c):
    base = [s.policy_id for s in ccs_prune(pts)]
    scaled = [s.policy_id for s in ccs_prune(np.asarray(pts, float) * c)]
    assert base == scaled
    cw = np.array(corner_weights(pts))
    cs = np.array(corner_weights(np.asarray(pts, float) * c))
    np.testing.assert_allclose(cw, cs, atol=1e-9)


def test_corner_examples():
    ws = corner_weights([[1, 0], [0, 1]])
    assert any(np.allclose(w, [0.5, 0.5]) for w in ws)
    assert any(np.allclose(w, [1, 0]) for w in ws) and any(np.allclose(w, [0, 1]) for w in ws)
    assert len(corner_weights([[5, 5]])) == 2
    ws = corner_weights([[2, 0], [0, 1]])
    interior = [w for w in ws if 0 < w[0] < 1]
    np.testing.assert_allclose(interior[0], [1 / 3, 2 / 3], atol=1e-12)


def test_tie_weight_closed_form():
    rng = np.random.default_rng(3)
    for _ in range(200):
        a, b = rng.normal(size=2), rng.normal(size=2)
        w = tie_weight(a, b)
        if w is None:
            continue
        # solve a.w = b.w with w0 = 1 - w1 by hand
        w1 = (b[0] - a[0]) / ((b[0] - a[0]) - (b[1] - a[1]))
        assert w[1] == pytest.approx(w1, abs=1e-12)
        assert abs(a @ w - b @ w) < 1e-9
        assert np.all(w >= 0) and abs(w.sum() - 1) < 1e-12


def test_corner_pairs_residual():
    rng = np.random.default_rng(5)
    for _ in range(50):
        pts = rng.normal(size=(8, 2))
        for w, lo, hi in corner_pairs(pts):
            if lo is not None and hi is not None:
                assert abs(lo.value @ w - hi.value @ w) < 1e-9


def test_even_weights():
    assert sorted(map(tuple, even_weights(2))) == [(0, 1), (1, 0)]
    assert any(np.allclose(w, [0.5, 0.5]) for w in even_weights(3))
    W = even_weights(100)
    assert W.shape == (100, 2)
    np.testing.assert_allclose(np.abs(np.diff(W[:, 0])), 1 / 99)
    np.testing.assert_allclose(W.sum(axis=1), 1.0)


def test_solution_csv_roundtrip(tmp_path):
    sols = [Solution(np.array([-1.25, 3.0]), 0), Solution(np.array([0.1, 0.2]), 1)]
    write_solutions(tmp_path / "s.csv", sols)
    back = read_solutions(tmp_path / "s.csv")
    assert values(back) == values(sols)
