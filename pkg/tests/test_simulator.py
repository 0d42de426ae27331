import math

import numpy as np
import pytest

from hapticloc.eventlog import write_event_log
from hapticloc.maps import elevation_at
from hapticloc.se3 import Pose, transform_point, wrap_angle
from hapticloc.simulator import (
    ZERO_NOISE,
    BlockField,
    Chevron,
    Flat,
    GaitSpec,
    NoiseSpec,
    PeriodicRidgeCourse,
    Probe,
    ProbeScript,
    Ramp,
    TerrainSpec,
    Walk,
    build_terrain,
    course_waypoints,
    default_probe_script,
    default_terrain_course,
    room_cloud,
    sample_surface,
    simulate_probing,
    simulate_walk,
)


def flat_ground(extent=(-1, 12, -1.5, 1.5)):
    return sample_surface(lambda x, y: np.zeros(np.shape(x)), extent, 0.02)


def feet_world(event):
    return np.array([transform_point(event.gt_pose, f) for f in event.foot_in_base])


# --- terrain ------------------------------------------------------------------


def test_single_flat_segment_is_all_zero():
    m = build_terrain(TerrainSpec((Flat(4.2, 0.0),)), 0.05)
    assert np.all(m.heights == 0.0)


def test_ramp_end_height():
    spec = TerrainSpec((Ramp(1.0, 12.0),), margin=0.5)
    expected = math.tan(math.radians(12.0)) * 1.0
    assert expected == pytest.approx(0.2126, abs=1e-4)
    assert float(spec.height(1.0 - 1e-12, 0.0)) == pytest.approx(expected, abs=1e-9)
    m = build_terrain(spec, 0.01)
    assert np.nanmax(m.heights) == pytest.approx(expected, abs=0.01 * math.tan(math.radians(12.0)))


def test_chevron_max_height_is_tooth_height():
    m = build_terrain(TerrainSpec((Chevron(0.13, 0.3, 4),)), 0.01)
    assert np.nanmax(m.heights) == pytest.approx(0.13)
    assert np.nanmin(m.heights) == 0.0


def test_default_course_composition():
    spec = default_terrain_course()
    kinds = [type(s) for s in spec.segments]
    assert kinds == [Ramp, Chevron, BlockField, Ramp]
    assert spec.segments[0].grade_deg == 12.0 and spec.segments[3].grade_deg == -12.0
    assert spec.segments[1].tooth_height == 0.13
    assert spec.length == pytest.approx(4.2)
    # the descending ramp returns to ground level
    assert float(spec.height(spec.x0 + spec.length - 1e-9, 0.0)) == pytest.approx(0.0, abs=1e-6)


def test_segments_contiguous_at_boundaries():
    spec = TerrainSpec((Ramp(1.0, 12.0), Flat(1.0, math.tan(math.radians(12.0)))))
    assert float(spec.height(1.0 - 1e-9, 0.0)) == pytest.approx(float(spec.height(1.0, 0.0)), abs=1e-6)


@pytest.mark.parametrize(
    "kw",
    [
        {"segments": ()},
        {"segments": (Flat(1.0), Flat(1.0)), "starts": (0.0, 0.5)},  # overlap
        {"segments": (Flat(1.0), Flat(1.0)), "starts": (0.0, 1.5)},  # gap
        {"segments": (Flat(0.0),)},
        {"segments": (Flat(1.0),), "width": 0.0},
    ],
)
def test_terrain_spec_rejects_bad_layouts(kw):
    with pytest.raises(ValueError):
        TerrainSpec(**kw)


def test_course_waypoints_cover_both_legs_on_course():
    spec = default_terrain_course()
    wps = course_waypoints(spec, loops=2)
    assert len(wps) == 9
    ys = {round(y, 9) for _, y in wps}
    assert all(spec.on_course(spec.x0 + 0.1, y) for y in ys)


# --- walking ------------------------------------------------------------------


def test_zero_noise_odometry_equals_truth():
    log = simulate_walk(flat_ground(), GaitSpec(), ZERO_NOISE, [(0, 0), (2, 0), (2, 1)], np.random.default_rng(0))
    for e in log:
        np.testing.assert_allclose(e.odom_pose.position, e.gt_pose.position, atol=1e-12)
        np.testing.assert_allclose(e.odom_pose.rotation, e.gt_pose.rotation, atol=1e-12)


def test_z_bias_accumulates_exactly():
    noise = NoiseSpec(std=(0, 0, 0, 0), bias_z=0.001, bias_yaw=0.0)
    log = simulate_walk(flat_ground(), GaitSpec(step_length=0.05), noise, [(0, 0), (10, 0)], np.random.default_rng(0))
    assert len(log) == 201
    ez = log[200].odom_pose.position[2] - log[200].gt_pose.position[2]
    assert ez == pytest.approx(0.2, abs=1e-12)
    for e in log:
        np.testing.assert_allclose(feet_world(e)[:, 2], 0.0, atol=1e-12)


def test_yaw_bias_drift():
    noise = NoiseSpec(std=(0, 0, 0, 0), bias_z=0.0, bias_yaw=0.0005)
    log = simulate_walk(flat_ground((-1, 31, -1.5, 1.5)), GaitSpec(step_length=0.05), noise, [(0, 0), (30, 0)], np.random.default_rng(0))
    assert len(log) == 601
    dyaw = float(wrap_angle(log[600].odom_pose.yaw - log[600].gt_pose.yaw))
    assert dyaw == pytest.approx(0.3, abs=1e-9)


def test_ground_truth_feet_lie_on_the_terrain():
    spec = default_terrain_course()
    terrain = build_terrain(spec, 0.02)
    log = simulate_walk(terrain, GaitSpec(), NoiseSpec(), course_waypoints(spec, loops=1), np.random.default_rng(3))
    for e in log:
        for f in feet_world(e):
            assert f[2] == pytest.approx(elevation_at(terrain, f[0], f[1]), abs=1e-9)
    # roll and pitch of the odometry are observable and copied from the truth
    for e in log:
        np.testing.assert_allclose(e.odom_pose.rpy()[:2], e.gt_pose.rpy()[:2], atol=1e-12)


def test_walk_is_deterministic_per_seed():
    args = (flat_ground(), GaitSpec(), NoiseSpec(), [(0, 0), (3, 0)])
    a = write_event_log(simulate_walk(*args, np.random.default_rng(5)))
    b = write_event_log(simulate_walk(*args, np.random.default_rng(5)))
    c = write_event_log(simulate_walk(*args, np.random.default_rng(6)))
    assert a == b and a != c


def test_off_map_waypoint_rejected():
    with pytest.raises(ValueError, match="off the map"):
        simulate_walk(flat_ground(), GaitSpec(), NoiseSpec(), [(0, 0), (50, 0)], np.random.default_rng(0))


def test_reported_covariance_inflation():
    n = NoiseSpec(std=(0.01, 0.02, 0.003, 0.004), cov_inflation=4.0)
    np.testing.assert_allclose(n.reported_cov_diag(), 4 * np.array([1e-4, 4e-4, 9e-6, 0, 0, 1.6e-5]))
    with pytest.raises(ValueError):
        NoiseSpec(std=(-1, 0, 0, 0))


# --- ridge fixture ------------------------------------------------------------


def test_ridge_course_strip_only_after_disambiguation_line():
    c = PeriodicRidgeCourse()
    y = 0.35
    before = c.height(1.9, y) - c.height(1.9, y + 0.3)
    after = c.height(2.1, y) - c.height(2.1, y + 0.3)
    # ridges repeat every period in y, so only the strip breaks the symmetry
    assert before == pytest.approx(0.0, abs=1e-12)
    assert after == pytest.approx(c.strip_height)


# --- probing ------------------------------------------------------------------


def test_probe_hits_wall_planes_with_zero_noise():
    cloud = room_cloud()
    log = simulate_probing(cloud, default_probe_script(), ZERO_NOISE, (0, 0, 0), np.random.default_rng(0))
    probes = [e for e in log if e.kind == "probe"]
    assert len(probes) == 12
    front = [e for e in probes[0::2]]
    side = [e for e in probes[1::2]]
    for e in front:
        (i,) = np.flatnonzero(e.contact)
        assert transform_point(e.gt_pose, e.foot_in_base[i])[0] == pytest.approx(2.0, abs=1e-9)
    # the side wall only comes within reach after a few lateral steps
    assert not any(side[0].contact) and all(any(e.contact) for e in side[-3:])
    for e in (e for e in side if any(e.contact)):
        (i,) = np.flatnonzero(e.contact)
        assert transform_point(e.gt_pose, e.foot_in_base[i])[1] == pytest.approx(-1.5, abs=1e-9)
    for e in log:
        np.testing.assert_allclose(e.odom_pose.position, e.gt_pose.position, atol=1e-12)


def test_probing_initial_offset_applies_to_odometry():
    log = simulate_probing(room_cloud(), default_probe_script(), ZERO_NOISE, (0.1, 0.1, 0.0), np.random.default_rng(0))
    for e in log:
        np.testing.assert_allclose(e.odom_pose.position - e.gt_pose.position, (0.1, 0.1, 0.0), atol=1e-12)


def test_probe_missing_geometry_has_no_contact():
    script = ProbeScript((Probe("RF", (0.0, 1.0, 0.0)), Walk((1.0, 0.0), 0.1)))
    log = simulate_probing(room_cloud(), script, ZERO_NOISE, (0, 0, 0), np.random.default_rng(0))
    assert log[1].kind == "probe" and not any(log[1].contact)
    assert [e.kind for e in log[2:]] == ["walk", "walk"]


def test_empty_probe_script_rejected():
    with pytest.raises(ValueError):
        ProbeScript(())
