import numpy as np
import pytest

from locoarm import models as M
from locoarm.errors import ParseError, ValidationError
from locoarm.geometry import SE3Pose


def straight_leg_quad():
    return M.QuadrupedModel(
        name="test", trunk_mass=10.0, trunk_inertia=np.eye(3) * 0.1,
        hip_offsets=np.array([[0.2, -0.05, 0.0], [0.2, 0.05, 0.0],
                              [-0.2, -0.05, 0.0], [-0.2, 0.05, 0.0]]),
        link_lengths=np.array([0.0, 0.2, 0.2]),
        joint_limits=np.tile([-3.0, 3.0], (12, 1)),
        torque_limits=np.full(12, 20.0),
        default_pose=np.zeros(12),
        nominal_height=0.4,
    )


def test_bundled_go1_arx5_loads():
    m = M.load_bundled("go1_arx5")
    assert m.quadruped.joint_limits.shape[0] == 12
    assert m.arm.joint_limits.shape[0] == 6
    assert m.name == "go1_arx5"


@pytest.mark.parametrize("name", ["a1_arx5", "go2_arx5", "go1_widow"])
def test_all_bundled_descriptors_load(name):
    m = M.load_bundled(name)
    assert m.arm.total_mass > 0


def test_registry_round_trip_byte_identical(tmp_path):
    for name in M.available_embodiments():
        src = M.registry_dir() / f"{name}.toml"
        m = M.load_model(src)
        out = tmp_path / f"{name}.toml"
        M.save_model(m, out)
        assert out.read_bytes() == src.read_bytes()


def test_five_joint_arm_rejected():
    raw = M.tomllib.loads((M.registry_dir() / "go1_arx5.toml").read_text())
    for key in ("link_translations", "link_axes", "link_masses",
                "joint_limits", "torque_limits", "default_pose"):
        raw["arm"][key] = raw["arm"][key][:5]
    raw["arm"]["total_mass"] = sum(raw["arm"]["link_masses"])
    with pytest.raises(ValidationError, match="6"):
        M.model_from_dict(raw)


def test_malformed_file_is_parse_error(tmp_path):
    p = tmp_path / "x.toml"
    p.write_text("[quadruped\nname=")
    with pytest.raises(ParseError):
        M.load_model(p)
    with pytest.raises(ParseError):
        M.load_model(tmp_path / "missing.toml")


def test_leg_fk_straight_legs():
    q = straight_leg_quad()
    feet = M.leg_forward_kinematics(q, np.zeros(12))
    expect = q.hip_offsets + np.array([0.0, 0.0, -0.4])
    assert np.abs(feet - expect).max() < 1e-15


def test_leg_fk_default_height_consistent():
    m = M.load_bundled("go1_arx5")
    feet = M.leg_forward_kinematics(m.quadruped, m.quadruped.default_pose)
    assert np.abs(feet[:, 2] + m.quadruped.nominal_height).max() < 0.05


def test_leg_fk_locality():
    m = M.load_bundled("go1_arx5")
    q = m.quadruped.default_pose.copy()
    base = M.leg_forward_kinematics(m.quadruped, q)
    q[5] += 0.2  # FL calf
    moved = M.leg_forward_kinematics(m.quadruped, q)
    delta = np.abs(moved - base).max(axis=1)
    assert delta[1] > 1e-3
    assert delta[[0, 2, 3]].max() == 0.0


def test_leg_fk_continuity():
    m = M.load_bundled("go1_arx5")
    rng = np.random.default_rng(0)
    q = rng.uniform(-1.0, 1.0, 12)
    dq = rng.normal(size=12)
    dq *= 1e-6 / np.abs(dq).max()
    a = M.leg_forward_kinematics(m.quadruped, q)
    b = M.leg_forward_kinematics(m.quadruped, q + dq)
    total_len = m.quadruped.link_lengths.sum()
    assert np.abs(b - a).max() <= total_len * 1e-6 * 3.0


def test_arm_fk_default_golden():
    m = M.load_bundled("go1_arx5")
    pose = M.arm_forward_kinematics(m.arm, m.mount, m.arm.default_pose)
    # frozen after first verified evaluation of the chain
    golden = np.array([0.24395678904432178, 0.0, -0.09867290487758412])
    assert np.abs(pose.position - golden).max() < 1e-12
    assert np.isfinite(pose.rotation).all()


def test_arm_fk_2pi_periodicity():
    m = M.load_bundled("go1_arx5")
    q = np.array([0.3, 0.7, 0.4, -0.2, 0.5, 0.1])
    a = M.arm_forward_kinematics(m.arm, m.mount, q)
    q2 = q.copy()
    q2[3] += 2 * np.pi
    b = M.arm_forward_kinematics(m.arm, m.mount, q2)
    assert np.abs(a.position - b.position).max() < 1e-12
    assert np.abs(a.rotation - b.rotation).max() < 1e-12


def test_arm_fk_identity_chain():
    arm = M.ArmModel(
        name="null", total_mass=0.6,
        link_translations=np.zeros((6, 3)),
        link_axes=np.tile([0.0, 0.0, 1.0], (6, 1)),
        link_masses=np.full(6, 0.1),
        joint_limits=np.tile([-3.0, 3.0], (6, 1)),
        torque_limits=np.ones(6),
        default_pose=np.zeros(6),
        gripper_offset=np.zeros(3),
    )
    mount = SE3Pose(np.array([0.1, 0.2, 0.3]), np.eye(3))
    pose = M.arm_forward_kinematics(arm, mount, np.zeros(6))
    assert np.abs(pose.position - mount.position).max() == 0.0
    assert np.abs(pose.rotation - np.eye(3)).max() == 0.0


def test_arm_com_between_base_and_ee():
    m = M.load_bundled("go1_arx5")
    com = M.arm_center_of_mass(m.arm, m.mount, m.arm.default_pose)
    assert com.shape == (3,)
    pts, _ = M.arm_chain_points(m.arm, m.mount, m.arm.default_pose)
    assert pts[..., 2].min() - 1e-9 <= com[2] <= pts[..., 2].max() + 1e-9


def test_batch_fk_matches_single():
    m = M.load_bundled("go1_arx5")
    rng = np.random.default_rng(2)
    qs = rng.uniform(-1, 1, (5, 12))
    batch = M.leg_forward_kinematics(m.quadruped, qs)
    for i in range(5):
        single = M.leg_forward_kinematics(m.quadruped, qs[i])
        assert np.abs(batch[i] - single).max() == 0.0
    qa = rng.uniform(-1, 1, (5, 6))
    pts, rots = M.arm_chain_points(m.arm, m.mount, qa)
    for i in range(5):
        p1, r1 = M.arm_chain_points(m.arm, m.mount, qa[i])
        assert np.abs(pts[i] - p1).max() == 0.0
        assert np.abs(rots[i] - r1).max() == 0.0
