import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from locoarm import geometry as G
from locoarm.errors import DegenerateRotation

SQ2 = math.sqrt(2.0) / 2.0

# training-range bounds used for sampling rotations in the round-trip tests
EULER_Z = 0.45 * math.pi
EULER_X = 0.33 * math.pi
EULER_Y = 0.42 * math.pi


def sample_training_rotations(rng, n):
    ez = rng.uniform(-EULER_Z, EULER_Z, n)
    ex = rng.uniform(-EULER_X, EULER_X, n)
    ey = rng.uniform(-EULER_Y, EULER_Y, n)
    return G.compose_rotation_batch(ez, ey, ex)


def test_compose_identity():
    assert np.allclose(G.compose_rotation(0, 0, 0), np.eye(3), atol=0)


def test_compose_pure_z():
    R = G.compose_rotation(math.pi / 4, 0, 0)
    expect = np.array([[SQ2, -SQ2, 0.0], [SQ2, SQ2, 0.0], [0.0, 0.0, 1.0]])
    assert np.abs(R - expect).max() < 1e-15


def test_compose_orthonormal_random():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        a, b, c = rng.uniform(-math.pi, math.pi, 3)
        R = G.compose_rotation(a, b, c)
        assert np.abs(R.T @ R - np.eye(3)).max() < 1e-9
        assert abs(np.linalg.det(R) - 1.0) < 1e-9


def test_compose_batch_matches_scalar():
    rng = np.random.default_rng(4)
    ez, ey, ex = rng.uniform(-math.pi, math.pi, (3, 50))
    batch = G.compose_rotation_batch(ez, ey, ex)
    for i in range(50):
        assert np.abs(batch[i] - G.compose_rotation(ez[i], ey[i], ex[i])).max() < 1e-15


def test_axis_angles_identity():
    assert G.axis_angles_from_rotation(np.eye(3)) == (0.0, 0.0, 0.0)


def test_axis_angles_pure_z():
    ang = G.axis_angles_from_rotation(G.compose_rotation(math.pi / 4, 0, 0))
    assert ang.alpha == pytest.approx(math.pi / 4, abs=1e-12)
    assert ang.beta == pytest.approx(0.0, abs=1e-12)
    assert ang.gamma == pytest.approx(0.0, abs=1e-12)


def test_axis_angles_degenerate_raises():
    # x-axis straight up: its ground-plane projection vanishes
    R = G.compose_rotation(0.0, -math.pi / 2, 0.0)
    with pytest.raises(DegenerateRotation):
        G.axis_angles_from_rotation(R)


def test_round_trip_angles_training_range():
    rng = np.random.default_rng(7)
    Rs = sample_training_rotations(rng, 10_000)
    ang = G.axis_angles_batch(Rs)
    R2 = G.rotation_from_axis_angles_batch(ang)
    back = G.axis_angles_batch(R2)
    assert np.abs(G.wrap_angle(back - ang)).max() <= 1e-9
    eye = np.einsum("bji,bjk->bik", R2, R2)
    assert np.abs(eye - np.eye(3)).max() <= 1e-9
    assert np.abs(np.linalg.det(R2) - 1.0).max() <= 1e-9


def test_inverse_recovers_original_matrix():
    rng = np.random.default_rng(11)
    Rs = sample_training_rotations(rng, 500)
    R2 = G.rotation_from_axis_angles_batch(G.axis_angles_batch(Rs))
    assert np.abs(R2 - Rs).max() < 1e-9


def test_inverse_unrealizable_strict_raises():
    bad = np.array([[0.8857507338539, -0.8752304762340, 0.7982336020998]])
    with pytest.raises(DegenerateRotation):
        G.rotation_from_axis_angles_batch(bad)


def test_realizable_target_rotation_projects():
    R, exact = G.realizable_target_rotation((0.2, -0.1, 0.15))
    assert exact
    R, exact = G.realizable_target_rotation((0.8857507338539, -0.8752304762340, 0.7982336020998))
    assert not exact
    assert np.abs(R.T @ R - np.eye(3)).max() < 1e-9


def test_spherical_axis_aligned():
    pose = G.TargetEEPose(0.5, 0.0, 0.0, 0.0, 0.0, 0.0)
    out = G.spherical_to_cartesian(pose, G.SE3Pose.identity())
    assert np.abs(out.position - np.array([0.5, 0.0, 0.0])).max() < 1e-15
    assert np.abs(out.rotation - np.eye(3)).max() < 1e-12


def test_spherical_pole():
    pose = G.TargetEEPose(0.5, math.pi / 2, 1.234, 0.0, 0.0, 0.0)
    out = G.spherical_to_cartesian(pose, G.SE3Pose.identity())
    assert np.abs(out.position - np.array([0.0, 0.0, 0.5])).max() < 1e-12


def test_spherical_general_point():
    pose = G.TargetEEPose(0.3, math.pi / 6, math.pi / 3, 0.0, 0.0, 0.0)
    out = G.spherical_to_cartesian(pose, G.SE3Pose.identity())
    expect = np.array([0.3 * (math.sqrt(3) / 2) * 0.5,
                       0.3 * (math.sqrt(3) / 2) * (math.sqrt(3) / 2),
                       0.15])
    assert np.abs(out.position - expect).max() < 1e-15


def test_spherical_norm_equals_radius():
    rng = np.random.default_rng(5)
    for _ in range(200):
        l = rng.uniform(0.0, 1.0)
        p = rng.uniform(-math.pi / 2, math.pi / 2)
        y = rng.uniform(-math.pi, math.pi)
        pose = G.TargetEEPose(l, p, y, 0.1, 0.0, -0.2)
        out = G.spherical_to_cartesian(pose, G.SE3Pose.identity())
        assert abs(np.linalg.norm(out.position) - l) < 1e-12


def test_pose_error_zero():
    pose = G.SE3Pose(np.array([0.1, 0.2, 0.3]), G.compose_rotation(0.3, 0.2, 0.1))
    err = G.pose_error(pose, pose)
    assert err.distance == 0.0
    assert err.angle == 0.0
    assert err.delta_lpy.max() == 0.0
    assert err.delta_abg.max() == 0.0


def test_pose_error_345():
    a = G.SE3Pose(np.zeros(3), np.eye(3))
    b = G.SE3Pose(np.array([0.03, 0.0, 0.04]), np.eye(3))
    err = G.pose_error(a, b)
    assert err.distance == pytest.approx(0.05, abs=1e-15)
    assert err.angle == 0.0


def test_pose_error_pure_rotation():
    R = G.rot_z(math.pi / 18)
    err = G.pose_error(G.SE3Pose(np.ones(3), np.eye(3)), G.SE3Pose(np.ones(3), R))
    assert err.distance == 0.0
    assert err.angle == pytest.approx(math.pi / 18, abs=1e-12)


def test_pose_error_symmetric_and_bounded():
    rng = np.random.default_rng(9)
    for _ in range(100):
        pa = G.SE3Pose(rng.normal(size=3), sample_training_rotations(rng, 1)[0])
        pb = G.SE3Pose(rng.normal(size=3), sample_training_rotations(rng, 1)[0])
        e1 = G.pose_error(pa, pb)
        e2 = G.pose_error(pb, pa)
        assert e1.distance == pytest.approx(e2.distance, abs=1e-12)
        assert e1.angle == pytest.approx(e2.angle, abs=1e-12)
        assert 0.0 <= e1.angle <= math.pi
        assert e1.distance >= 0.0


@given(st.floats(-math.pi, math.pi), st.floats(-math.pi, math.pi))
@settings(max_examples=200, deadline=None)
def test_wrap_angle_range(a, b):
    w = float(G.wrap_angle(a - b))
    assert -math.pi < w <= math.pi + 1e-12


def test_yaw_frame_strips_roll_pitch():
    R = G.compose_rotation(0.7, 0.2, -0.3)
    frame = G.yaw_frame_of(np.array([1.0, 2.0, 0.4]), R)
    assert np.abs(frame.rotation - G.rot_z(0.7)).max() < 1e-12
    roll, pitch = G.roll_pitch_from_rotation(frame.rotation)
    assert abs(roll) < 1e-12 and abs(pitch) < 1e-12


def test_target_pose_validation():
    with pytest.raises(ValueError):
        G.TargetEEPose(-0.1, 0.0, 0.0, 0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        G.TargetEEPose(0.5, 2.0, 0.0, 0.0, 0.0, 0.0)
