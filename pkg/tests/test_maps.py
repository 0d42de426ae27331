import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hapticloc.maps import (
    ElevationMap,
    MapFormatError,
    PointCloudMap,
    elevation_at,
    load_elevation_map,
    load_point_cloud,
    nearest,
    rasterize,
    save_elevation_map,
    save_point_cloud,
    voxel_downsample,
)

from oracles import brute_force_nearest


def flat(h=0.13, rows=10, cols=10, res=0.1):
    return ElevationMap((0.0, 0.0), res, np.full((rows, cols), h))


def test_flat_map_returns_constant():
    m = flat()
    for x, y in [(0.0, 0.0), (0.55, 0.31), (0.999, 0.999)]:
        assert elevation_at(m, x, y) == 0.13


def test_out_of_bounds_is_no_data():
    m = flat()
    for x, y in [(-0.01, 0.5), (1.0, 0.5), (0.5, 1.0), (0.5, -1e-9)]:
        assert elevation_at(m, x, y) is None


def test_invalid_cell_is_no_data():
    h = np.zeros((2, 2))
    h[1, 1] = np.nan
    m = ElevationMap((0, 0), 1.0, h)
    assert elevation_at(m, 1.5, 1.5) is None
    assert elevation_at(m, 0.5, 1.5) == 0.0


def test_two_cell_ramp_direct_lookup():
    m = ElevationMap((0.0, 0.0), 0.5, np.array([[0.0, 0.1]]))
    x, y = m.cell_center(0, 1)
    # direct oracle: column index floor(x / res)
    assert int(x // 0.5) == 1
    assert elevation_at(m, x, y) == 0.1


def test_nearest_cell_not_interpolated():
    m = ElevationMap((0.0, 0.0), 1.0, np.array([[0.0, 1.0]]))
    assert elevation_at(m, 0.99, 0.5) == 0.0
    assert elevation_at(m, 1.0, 0.5) == 1.0


@pytest.mark.parametrize(
    "heights, res",
    [(np.zeros((0, 3)), 1.0), (np.zeros((2, 2)), 0.0), (np.array([[np.inf]]), 1.0)],
)
def test_elevation_map_rejects_bad_input(heights, res):
    with pytest.raises(ValueError):
        ElevationMap((0, 0), res, heights)


# --- point cloud --------------------------------------------------------------


def test_nearest_examples():
    cloud = PointCloudMap([[0, 0, 0], [1, 0, 0]])
    p, d = nearest(cloud, (0.4, 0, 0))
    assert np.array_equal(p, [0, 0, 0]) and d == pytest.approx(0.4)
    p, d = nearest(cloud, (1, 0, 0))
    assert np.array_equal(p, [1, 0, 0]) and d == 0.0


def test_nearest_matches_brute_force_10k():
    rng = np.random.default_rng(11)
    pts = rng.uniform(0, 5, (10_000, 3))
    cloud = PointCloudMap(pts)
    q = rng.uniform(-1, 6, (1000, 3))
    bd, bi = brute_force_nearest(pts, q)
    for k in range(len(q)):
        p, d = nearest(cloud, q[k])
        assert np.array_equal(p, pts[bi[k]]) and d == bd[k]


def test_nearest_is_no_farther_than_random_points():
    rng = np.random.default_rng(12)
    pts = rng.normal(size=(3000, 3))
    cloud = PointCloudMap(pts)
    for q in rng.normal(size=(20, 3)):
        _, d = nearest(cloud, q)
        sample = pts[rng.choice(len(pts), 100, replace=False)]
        assert d <= np.linalg.norm(sample - q, axis=1).min()


# --- file formats -------------------------------------------------------------


@settings(max_examples=40)
@given(
    arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)), elements=st.floats(-1e6, 1e6) | st.just(np.nan)),
    st.floats(1e-4, 10),
    st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)),
)
def test_elevation_round_trip_bit_exact(h, res, origin):
    m = ElevationMap(origin, res, h)
    back = load_elevation_map(io.StringIO(save_elevation_map(m)))
    assert back.resolution == m.resolution and back.origin == m.origin
    np.testing.assert_array_equal(back.heights, m.heights)


@settings(max_examples=40)
@given(arrays(np.float64, st.tuples(st.integers(1, 30), st.just(3)), elements=st.floats(-1e6, 1e6)))
def test_point_cloud_round_trip_bit_exact(pts):
    back = load_point_cloud(io.StringIO(save_point_cloud(pts)))
    np.testing.assert_array_equal(back.points, pts)


def test_load_accepts_text_bytes_and_streams(tmp_path):
    m = flat(rows=2, cols=3)
    p = tmp_path / "m.txt"
    text = save_elevation_map(m)
    p.write_text(text)
    with open(p, "rb") as fh:
        assert np.array_equal(load_elevation_map(fh).heights, m.heights)
    assert np.array_equal(load_elevation_map(text).heights, m.heights)
    assert np.array_equal(load_elevation_map(text.encode()).heights, m.heights)


@pytest.mark.parametrize(
    "text, where",
    [
        ("resolution x\norigin 0 0\nsize 1 1\n0\n", "header"),
        ("origin 0 0\nresolution 1\nsize 1 1\n0\n", "line 1"),
        ("resolution 1\norigin 0 0\nsize 1 2\n0\n", "size mismatch"),
        ("resolution 1\norigin 0 0\nsize 1 1\n0 1\n", "line 4"),
        ("resolution 1\norigin 0 0\nsize 2 1\n0\ninf\n", "line 5"),
        ("resolution 1\norigin 0 0\nsize 1 1\nabc\n", "line 4"),
        ("resolution -1\norigin 0 0\nsize 1 1\n0\n", "line 1"),
    ],
)
def test_elevation_parse_errors_carry_location(text, where):
    with pytest.raises(MapFormatError, match=where):
        load_elevation_map(io.StringIO(text))


@pytest.mark.parametrize(
    "text, where",
    [
        ("0 0 0\n1 2\n", "line 2"),
        ("0 0 0\n1 2 x\n", "line 2"),
        ("nan 0 0\n", "line 1"),
        ("\n# only a comment\n", "no points"),
    ],
)
def test_point_cloud_parse_errors(text, where):
    with pytest.raises(MapFormatError, match=where):
        load_point_cloud(io.StringIO(text))


# --- rasterize and downsample -------------------------------------------------


def test_rasterize_takes_per_cell_max_and_marks_empty():
    pts = [[0.1, 0.1, 0.2], [0.2, 0.3, 0.5], [1.5, 0.1, -0.3]]
    m = rasterize(pts, 1.0)
    assert m.origin == (0.0, 0.0) and m.heights.shape == (1, 2)
    assert m.heights[0, 0] == 0.5 and m.heights[0, 1] == -0.3
    m2 = rasterize(pts, 1.0, origin=(0.0, 0.0), shape=(2, 2))
    assert np.isnan(m2.heights[1]).all()


def test_rasterize_recovers_sampled_surface():
    rng = np.random.default_rng(4)
    res = 0.1
    truth = ElevationMap((0.0, 0.0), res, rng.uniform(0, 0.3, (8, 12)))
    xs = rng.uniform(0, 1.2, 20_000)
    ys = rng.uniform(0, 0.8, 20_000)
    noise = 0.002
    zs = truth.heights_at(xs, ys) + rng.uniform(-noise, noise, xs.size)
    m = rasterize(np.column_stack([xs, ys, zs]), res, origin=(0.0, 0.0), shape=truth.heights.shape)
    assert np.all(np.abs(m.heights - truth.heights) <= noise)


def test_voxel_downsample_enforces_spacing_and_keeps_first():
    pts = np.array([[0.001, 0, 0], [0.002, 0, 0], [0.015, 0, 0], [0.0, 0.5, 0]])
    out = voxel_downsample(pts, 0.01)
    np.testing.assert_array_equal(out, pts[[0, 2, 3]])
    with pytest.raises(ValueError):
        voxel_downsample(pts, 0)
