import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hapticloc.kdtree import KdTree

from oracles import brute_force_nearest


@pytest.mark.parametrize("n", [1, 2, 10, 10_000])
def test_matches_brute_force_on_random_clouds(n):
    rng = np.random.default_rng(n)
    pts = rng.uniform(-2, 2, (n, 3))
    q = rng.uniform(-3, 3, (1000, 3))
    d, i = KdTree(pts).query(q)
    bd, bi = brute_force_nearest(pts, q)
    assert np.array_equal(i, bi)
    assert np.array_equal(d, bd)


@pytest.mark.parametrize("leaf", [1, 2, 16, 100])
def test_leaf_size_does_not_change_results(leaf):
    rng = np.random.default_rng(3)
    pts = rng.normal(size=(500, 3))
    q = rng.normal(size=(200, 3))
    assert np.array_equal(KdTree(pts, leaf_size=leaf).query(q)[1], brute_force_nearest(pts, q)[1])


def test_ties_go_to_lowest_index():
    # a lattice has many equidistant neighbours and duplicate points
    g = np.arange(4, dtype=float)
    pts = np.array(np.meshgrid(g, g, g)).reshape(3, -1).T
    pts = np.vstack([pts, pts[::-1]])
    q = pts + 0.5
    _, i = KdTree(pts, leaf_size=2).query(q)
    assert np.array_equal(i, brute_force_nearest(pts, q)[1])


@settings(max_examples=60, deadline=None)
@given(
    arrays(np.float64, st.tuples(st.integers(1, 60), st.just(3)), elements=st.floats(-5, 5)),
    arrays(np.float64, st.tuples(st.integers(1, 20), st.just(3)), elements=st.floats(-6, 6)),
)
def test_property_exact_nearest(pts, q):
    d, i = KdTree(pts, leaf_size=4).query(q)
    bd, _ = brute_force_nearest(pts, q)
    np.testing.assert_array_equal(d, bd)
    # returned index points at a cloud member at that distance
    np.testing.assert_allclose(np.linalg.norm(pts[i] - q, axis=1), d)


def test_single_query_returns_scalars():
    d, i = KdTree([[0, 0, 0], [1, 0, 0]]).query([0.4, 0, 0])
    assert i == 0 and d == pytest.approx(0.4)


@pytest.mark.parametrize(
    "pts, kw",
    [
        (np.zeros((0, 3)), {}),
        (np.zeros((4, 2)), {}),
        (np.array([[0, 0, np.nan]]), {}),
        (np.zeros((4, 3)), {"leaf_size": 0}),
    ],
)
def test_rejects_bad_input(pts, kw):
    with pytest.raises(ValueError):
        KdTree(pts, **kw)
