import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hapticloc.se3 import (
    FULL_MASK,
    Covariance6,
    Pose,
    SampleSpaceMask,
    compose,
    compose_batch,
    matrix_to_quat,
    quat_to_matrix,
    relative,
    sample_pose,
    sample_poses,
    transform_point,
    translate,
    wrap_angle,
)

from oracles import axis_angle_matrix, homogeneous, zyx_matrix

angles = st.floats(-math.pi, math.pi, allow_nan=False)
coords = st.floats(-10, 10, allow_nan=False)
poses = st.builds(
    Pose.from_xyz_rpy,
    coords,
    coords,
    coords,
    angles,
    st.floats(-1.5, 1.5),  # keep away from gimbal lock for Euler round trips
    angles,
)


def assert_pose_close(a: Pose, b: Pose, tol=1e-9):
    np.testing.assert_allclose(a.position, b.position, atol=tol)
    np.testing.assert_allclose(a.rotation, b.rotation, atol=tol)


# --- angles and rotations -----------------------------------------------------


@given(st.floats(-1e4, 1e4, allow_nan=False))
def test_wrap_angle_range_and_equivalence(a):
    w = float(wrap_angle(a))
    assert -math.pi < w <= math.pi
    assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-7)
    assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-7)


def test_wrap_angle_maps_minus_pi_to_pi():
    assert float(wrap_angle(-math.pi)) == math.pi


@given(angles, st.floats(-1.5, 1.5), angles)
def test_euler_matches_elementary_rotations(r, p, y):
    np.testing.assert_allclose(Pose.from_xyz_rpy(0, 0, 0, r, p, y).rotation, zyx_matrix(r, p, y), atol=1e-12)


@given(angles, st.floats(-1.5, 1.5), angles)
def test_euler_round_trip(r, p, y):
    rpy = Pose.from_xyz_rpy(0, 0, 0, r, p, y).rpy()
    np.testing.assert_allclose(zyx_matrix(*rpy), zyx_matrix(r, p, y), atol=1e-9)


@given(poses)
def test_quaternion_matrix_round_trip(p):
    R = p.rotation
    np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(quat_to_matrix(matrix_to_quat(R)), R, atol=1e-12)


# --- compose / relative / transform -------------------------------------------


def test_compose_identity():
    p = Pose.from_xyz_rpy(1, 2, 3, 0.1, 0.2, 0.3)
    assert_pose_close(compose(Pose.identity(), p), p)


def test_compose_translations_add():
    assert_pose_close(compose(translate(1, 0, 0), translate(0, 2, 0)), translate(1, 2, 0))


def test_compose_yaw_then_translate_matches_matrix_oracle():
    a = Pose.from_xyz_rpy(yaw=math.pi / 2)
    c = compose(a, translate(1, 0, 0))
    T = homogeneous(axis_angle_matrix((0, 0, 1), math.pi / 2)) @ homogeneous(t=(1, 0, 0))
    np.testing.assert_allclose(c.matrix(), T, atol=1e-12)
    np.testing.assert_allclose(c.position, (0, 1, 0), atol=1e-12)
    assert math.isclose(c.yaw, math.pi / 2, abs_tol=1e-12)


@given(poses, poses)
def test_compose_is_matrix_product(a, b):
    np.testing.assert_allclose(compose(a, b).matrix(), a.matrix() @ b.matrix(), atol=1e-9)


@settings(max_examples=50)
@given(poses, poses, poses)
def test_compose_associative(a, b, c):
    assert_pose_close(compose(compose(a, b), c), compose(a, compose(b, c)))


@given(poses)
def test_inverse_composes_to_identity(p):
    assert_pose_close(compose(p.inverse(), p), Pose.identity())
    assert abs(np.linalg.norm(compose(p.inverse(), p).quaternion) - 1) < 1e-9


def test_relative_examples():
    p = Pose.from_xyz_rpy(1, -2, 0.5, 0.1, -0.2, 2.0)
    assert_pose_close(relative(p, p), Pose.identity())
    assert_pose_close(relative(Pose.identity(), p), p)
    r = relative(translate(1, 0, 0), translate(3, 0, 0))
    T = np.linalg.inv(homogeneous(t=(1, 0, 0))) @ homogeneous(t=(3, 0, 0))
    np.testing.assert_allclose(r.matrix(), T, atol=1e-12)


def test_relative_compose_round_trip_1000_pairs():
    rng = np.random.default_rng(5)
    for _ in range(1000):
        a = Pose.from_xyz_rpy(*rng.uniform(-5, 5, 3), *rng.uniform(-3, 3, 3))
        b = Pose.from_xyz_rpy(*rng.uniform(-5, 5, 3), *rng.uniform(-3, 3, 3))
        assert_pose_close(compose(a, relative(a, b)), b)


def test_transform_point_examples():
    np.testing.assert_allclose(transform_point(Pose.identity(), (1, 2, 3)), (1, 2, 3))
    np.testing.assert_allclose(transform_point(translate(0, 0, 0.5), (0.3, 0.2, -0.5)), (0.3, 0.2, 0.0))
    p = Pose.from_xyz_rpy(1, 0, 0, yaw=math.pi)
    oracle = homogeneous(axis_angle_matrix((0, 0, 1), math.pi), (1, 0, 0)) @ np.array([1, 0, 0, 1.0])
    np.testing.assert_allclose(transform_point(p, (1, 0, 0)), oracle[:3], atol=1e-12)
    np.testing.assert_allclose(transform_point(p, (1, 0, 0)), (0, 0, 0), atol=1e-12)


@given(st.lists(poses, min_size=1, max_size=8), poses)
def test_compose_batch_matches_scalar_compose(batch, delta):
    pos = np.array([p.position for p in batch])
    rpy = np.array([p.rpy() for p in batch])
    bpos, brpy = compose_batch(pos, rpy, delta)
    for p, q, e in zip(batch, bpos, brpy):
        ref = compose(p, delta)
        np.testing.assert_allclose(q, ref.position, atol=1e-9)
        np.testing.assert_allclose(zyx_matrix(*e), ref.rotation, atol=1e-9)


# --- covariance and mask ------------------------------------------------------


def test_covariance_validation():
    with pytest.raises(ValueError):
        Covariance6(np.eye(5))
    m = np.eye(6)
    m[0, 1] = 0.5
    with pytest.raises(ValueError, match="symmetric"):
        Covariance6(m)
    with pytest.raises(ValueError, match="positive"):
        Covariance6.diag([1, 1, -1, 1, 1, 1])
    with pytest.raises(ValueError, match="finite"):
        Covariance6.diag([1, np.nan, 1, 1, 1, 1])
    Covariance6.zeros()  # PSD boundary is fine


def test_mask_rejects_roll_and_pitch():
    with pytest.raises(ValueError):
        SampleSpaceMask.of(["x", "roll"])
    with pytest.raises(ValueError):
        SampleSpaceMask.of(["pitch"])
    assert SampleSpaceMask.of(["yaw", "x"]).ordered() == ["x", "yaw"]


# --- sampling -----------------------------------------------------------------


def test_zero_covariance_returns_mean_exactly():
    mean = Pose.from_xyz_rpy(1, 2, 3, 0.1, 0.2, 0.3)
    rng = np.random.default_rng(0)
    for mask in (FULL_MASK, SampleSpaceMask.of(["z"]), SampleSpaceMask.of([])):
        s = sample_pose(mean, Covariance6.zeros(), mask, rng)
        assert np.array_equal(s.position, mean.position)
        assert np.array_equal(s.quaternion, mean.quaternion)


def test_z_mask_changes_only_z():
    mean = Pose.from_xyz_rpy(1, 2, 3, 0.1, 0.2, 0.3)
    rng = np.random.default_rng(1)
    s = sample_pose(mean, Covariance6.diag([0.01] * 6), SampleSpaceMask.of(["z"]), rng)
    assert s.position[0] == mean.position[0] and s.position[1] == mean.position[1]
    assert s.position[2] != mean.position[2]
    assert np.array_equal(s.quaternion, mean.quaternion)


@settings(max_examples=200)
@given(poses, st.integers(0, 2**32 - 1))
def test_sampling_preserves_roll_pitch_bit_exactly(mean, seed):
    cov = Covariance6.diag([0.01, 0.04, 0.0025, 0.0, 0.0, 0.5])
    s = sample_pose(mean, cov, FULL_MASK, np.random.default_rng(seed))
    assert s.rpy()[0] == mean.rpy()[0]
    assert s.rpy()[1] == mean.rpy()[1]
    _, rpy = sample_poses(mean, cov, FULL_MASK, np.random.default_rng(seed), 5)
    assert np.all(rpy[:, 0] == mean.rpy()[0]) and np.all(rpy[:, 1] == mean.rpy()[1])


def test_sample_pose_variance_statistical_oracle():
    # 1e5 draws; sample variances within 5% of the requested diagonal
    mean = Pose.from_xyz_rpy(0.5, -1.0, 0.3, 0.05, -0.1, 0.2)
    target = np.array([0.01, 0.04, 0.0025, 0.01])
    cov = Covariance6.diag([0.01, 0.04, 0.0025, 0, 0, 0.01])
    pos, rpy = sample_poses(mean, cov, FULL_MASK, np.random.default_rng(2024), 100_000)
    d = np.column_stack([pos - mean.position, wrap_angle(rpy[:, 2] - mean.yaw)])
    var = d.var(axis=0)
    assert np.all(np.abs(var / target - 1) < 0.05), var
    # mean converges within 3 standard errors
    se = np.sqrt(target / len(d))
    assert np.all(np.abs(d.mean(axis=0)) < 3 * se)


def test_sample_pose_and_batch_use_the_stream_identically():
    mean = Pose.from_xyz_rpy(0, 0, 0.5, 0.0, 0.1, 1.0)
    cov = Covariance6.diag([0.04, 0.04, 0.04, 0, 0, 0.01])
    a, b = np.random.default_rng(9), np.random.default_rng(9)
    singles = [sample_pose(mean, cov, FULL_MASK, a) for _ in range(4)]
    pos, rpy = sample_poses(mean, cov, FULL_MASK, b, 4)
    for s, p, e in zip(singles, pos, rpy):
        assert np.array_equal(s.position, p)
        assert np.array_equal(s.rpy(), e)


def test_init_spread_example():
    # N=1000, init cov diag(0.04, 0.04, 0.04, 0, 0, 0.01): x std within 0.2 +- 0.02
    pos, _ = sample_poses(Pose.identity(), Covariance6.diag([0.04, 0.04, 0.04, 0, 0, 0.01]), FULL_MASK, np.random.default_rng(0), 1000)
    assert abs(pos[:, 0].std() - 0.2) < 0.02
