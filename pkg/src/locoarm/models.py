"""Embodiment registry: quadruped and arm morphologies, descriptors, forward kinematics.

Descriptors are TOML files (one per embodiment) living in the package's
``models/`` directory or anywhere on disk. ``save_model`` emits a canonical
form so that load -> save round trips are byte-identical.

Conventions: trunk frame is x forward, y left, z up. Legs are ordered
FR, FL, RR, RL with (abduction, thigh, calf) joints each; abduction rotates
about x, thigh and calf about y. Arm joints rotate about a per-link axis
after a fixed translation.
"""

from __future__ import annotations

import importlib.resources
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .errors import ParseError, ValidationError
from .geometry import SE3Pose, compose_rotation

LEG_NAMES = ("FR", "FL", "RR", "RL")


@dataclass(frozen=True)
class QuadrupedModel:
    name: str
    trunk_mass: float               # kg, leg masses folded in
    trunk_inertia: np.ndarray       # (3, 3) kg m^2, body frame
    hip_offsets: np.ndarray         # (4, 3) m, trunk frame, FR FL RR RL
    link_lengths: np.ndarray        # (3,) m: abduction offset, thigh, calf
    joint_limits: np.ndarray        # (12, 2) rad
    torque_limits: np.ndarray       # (12,) N m
    default_pose: np.ndarray        # (12,) rad
    nominal_height: float           # m


@dataclass(frozen=True)
class ArmModel:
    name: str
    total_mass: float               # kg
    link_translations: np.ndarray   # (6, 3) m, parent frame
    link_axes: np.ndarray           # (6, 3) unit rotation axes
    link_masses: np.ndarray         # (6,) kg
    joint_limits: np.ndarray        # (6, 2) rad
    torque_limits: np.ndarray       # (6,) N m
    default_pose: np.ndarray        # (6,) rad
    gripper_offset: np.ndarray      # (3,) m, last link frame


@dataclass(frozen=True)
class SystemModel:
    quadruped: QuadrupedModel
    arm: ArmModel
    mount: SE3Pose                  # arm base in trunk frame

    @property
    def name(self) -> str:
        return f"{self.quadruped.name}_{self.arm.name}"


def _arr(section: dict, key: str, shape: tuple) -> np.ndarray:
    try:
        a = np.array(section[key], dtype=float)
    except KeyError:
        raise ParseError(f"missing key '{key}'") from None
    except (TypeError, ValueError) as exc:
        raise ParseError(f"key '{key}' is not numeric: {exc}") from None
    if a.shape != shape:
        raise ValidationError(f"'{key}' must have shape {shape}, got {a.shape}")
    return a


def _validate_quadruped(q: QuadrupedModel) -> None:
    if q.joint_limits.shape[0] != 12:
        raise ValidationError(f"quadruped must have exactly 12 joints, "
                              f"descriptor declares {q.joint_limits.shape[0]}")
    if q.trunk_mass <= 0:
        raise ValidationError("trunk_mass must be > 0")
    if q.link_lengths[0] < 0 or q.link_lengths[1] <= 0 or q.link_lengths[2] <= 0:
        raise ValidationError("thigh and calf lengths must be > 0, abduction offset >= 0")
    if np.any(q.joint_limits[:, 0] >= q.joint_limits[:, 1]):
        bad = int(np.nonzero(q.joint_limits[:, 0] >= q.joint_limits[:, 1])[0][0])
        raise ValidationError(f"joint limit lo >= hi for leg joint {bad}")
    if np.any(q.torque_limits <= 0):
        raise ValidationError("torque limits must be > 0")
    if q.nominal_height <= 0:
        raise ValidationError("nominal_height must be > 0")


def _validate_arm(a: ArmModel) -> None:
    n = a.joint_limits.shape[0]
    if n != 6:
        raise ValidationError(f"arm must have exactly 6 actuated joints, "
                              f"descriptor declares {n}")
    if np.any(a.joint_limits[:, 0] >= a.joint_limits[:, 1]):
        bad = int(np.nonzero(a.joint_limits[:, 0] >= a.joint_limits[:, 1])[0][0])
        raise ValidationError(f"joint limit lo >= hi for arm joint {bad}")
    inside = (a.default_pose >= a.joint_limits[:, 0]) & (a.default_pose <= a.joint_limits[:, 1])
    if not np.all(inside):
        bad = int(np.nonzero(~inside)[0][0])
        raise ValidationError(f"arm default pose outside limits at joint {bad}")
    if np.any(a.link_masses <= 0):
        raise ValidationError("arm link masses must be > 0")
    if abs(float(np.sum(a.link_masses)) - a.total_mass) > 1e-6:
        raise ValidationError("arm link masses must sum to total_mass")
    norms = np.linalg.norm(a.link_axes, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-9):
        raise ValidationError("arm link axes must be unit vectors")


def load_model(path: str | Path) -> SystemModel:
    """Parse and validate an embodiment descriptor file."""
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text())
    except FileNotFoundError:
        raise ParseError(f"descriptor not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None
    return model_from_dict(raw)


def model_from_dict(raw: dict) -> SystemModel:
    for section in ("quadruped", "arm", "mount"):
        if section not in raw:
            raise ParseError(f"missing [{section}] section")
    qs, as_, ms = raw["quadruped"], raw["arm"], raw["mount"]

    n_leg_joints = len(qs.get("joint_limits", []))
    n_arm_joints = len(as_.get("joint_limits", []))
    quad = QuadrupedModel(
        name=str(qs.get("name", "")),
        trunk_mass=float(qs.get("trunk_mass", 0.0)),
        trunk_inertia=_arr(qs, "trunk_inertia", (3, 3)),
        hip_offsets=_arr(qs, "hip_offsets", (4, 3)),
        link_lengths=_arr(qs, "link_lengths", (3,)),
        joint_limits=_arr(qs, "joint_limits", (n_leg_joints, 2)),
        torque_limits=_arr(qs, "torque_limits", (n_leg_joints,)),
        default_pose=_arr(qs, "default_pose", (n_leg_joints,)),
        nominal_height=float(qs.get("nominal_height", 0.0)),
    )
    arm = ArmModel(
        name=str(as_.get("name", "")),
        total_mass=float(as_.get("total_mass", 0.0)),
        link_translations=_arr(as_, "link_translations", (n_arm_joints, 3)),
        link_axes=_arr(as_, "link_axes", (n_arm_joints, 3)),
        link_masses=_arr(as_, "link_masses", (n_arm_joints,)),
        joint_limits=_arr(as_, "joint_limits", (n_arm_joints, 2)),
        torque_limits=_arr(as_, "torque_limits", (n_arm_joints,)),
        default_pose=_arr(as_, "default_pose", (n_arm_joints,)),
        gripper_offset=_arr(as_, "gripper_offset", (3,)),
    )
    _validate_quadruped(quad)
    _validate_arm(arm)

    pos = _arr(ms, "position", (3,))
    rpy = _arr(ms, "rpy", (3,))
    rot = compose_rotation(rpy[2], rpy[1], rpy[0])
    mount = SE3Pose(pos, rot)
    return SystemModel(quad, arm, mount)


def _fmt(value) -> str:
    if isinstance(value, str):
        return f'"{value}"'
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    return repr(value)


def _emit(lines: list[str], section: dict) -> None:
    for key, value in section.items():
        if isinstance(value, np.ndarray):
            value = value.tolist()
        lines.append(f"{key} = {_fmt(value)}")


def save_model(model: SystemModel, path: str | Path) -> None:
    """Write a descriptor in canonical form (stable key order, repr floats)."""
    q, a = model.quadruped, model.arm
    rot = model.mount.rotation
    roll = math.atan2(rot[2, 1], rot[2, 2])
    pitch = -math.asin(max(-1.0, min(1.0, float(rot[2, 0]))))
    yaw = math.atan2(rot[1, 0], rot[0, 0])
    lines = ["schema = 1", "", "[quadruped]"]
    _emit(lines, {
        "name": q.name, "trunk_mass": q.trunk_mass, "trunk_inertia": q.trunk_inertia,
        "hip_offsets": q.hip_offsets, "link_lengths": q.link_lengths,
        "joint_limits": q.joint_limits, "torque_limits": q.torque_limits,
        "default_pose": q.default_pose, "nominal_height": q.nominal_height,
    })
    lines += ["", "[arm]"]
    _emit(lines, {
        "name": a.name, "total_mass": a.total_mass,
        "link_translations": a.link_translations, "link_axes": a.link_axes,
        "link_masses": a.link_masses, "joint_limits": a.joint_limits,
        "torque_limits": a.torque_limits, "default_pose": a.default_pose,
        "gripper_offset": a.gripper_offset,
    })
    lines += ["", "[mount]"]
    _emit(lines, {"position": model.mount.position,
                  "rpy": np.array([roll, pitch, yaw])})
    Path(path).write_text("\n".join(lines) + "\n")


def registry_dir() -> Path:
    return Path(str(importlib.resources.files("locoarm") / "models"))


def available_embodiments() -> list[str]:
    return sorted(p.stem for p in registry_dir().glob("*.toml"))


def load_bundled(name: str) -> SystemModel:
    path = registry_dir() / f"{name}.toml"
    if not path.exists():
        raise ParseError(f"no bundled embodiment '{name}'; "
                         f"available: {', '.join(available_embodiments())}")
    return load_model(path)


# ---------------------------------------------------------------------------
# forward kinematics (vectorized over leading batch dimensions)
# ---------------------------------------------------------------------------

def leg_forward_kinematics(model: QuadrupedModel, q_leg: np.ndarray) -> np.ndarray:
    """Foot positions in the trunk frame for (..., 12) joint angles -> (..., 4, 3).

    Chain per leg: abduction about x at the hip offset, then thigh and calf
    about the (abducted) y axis. Out-of-limit angles are computed as-is.
    """
    q = np.asarray(q_leg, dtype=float)
    if q.shape[-1] != 12:
        raise ValueError(f"expected 12 leg joint angles, got {q.shape[-1]}")
    qv = q.reshape(q.shape[:-1] + (4, 3))
    d, lt, lc = (float(v) for v in model.link_lengths)
    side = np.array([-1.0, 1.0, -1.0, 1.0])  # abduction offset sign: right -, left +

    q0, q1, q2 = qv[..., 0], qv[..., 1], qv[..., 2]
    s0, c0 = np.sin(q0), np.cos(q0)
    s1, c1 = np.sin(q1), np.cos(q1)
    s12, c12 = np.sin(q1 + q2), np.cos(q1 + q2)

    # leg-plane position before abduction: x back-positive convention
    x = -lt * s1 - lc * s12
    y = side * d
    z = -lt * c1 - lc * c12
    foot = np.stack([x, c0 * y - s0 * z, s0 * y + c0 * z], axis=-1)
    return model.hip_offsets + foot


def arm_chain_points(model: ArmModel, mount: SE3Pose, q_arm: np.ndarray
                     ) -> tuple[np.ndarray, np.ndarray]:
    """Joint-frame origins plus gripper point in the trunk frame.

    Returns (points, ee_rotation): points has shape (..., 7, 3) holding the six
    joint origins followed by the gripper point; ee_rotation is (..., 3, 3).
    """
    q = np.asarray(q_arm, dtype=float)
    if q.shape[-1] != 6:
        raise ValueError(f"expected 6 arm joint angles, got {q.shape[-1]}")
    batch = q.shape[:-1]
    pos = np.broadcast_to(mount.position, batch + (3,)).copy()
    rot = np.broadcast_to(mount.rotation, batch + (3, 3)).copy()
    points = []
    eye = np.eye(3)
    for i in range(6):
        t = model.link_translations[i]
        pos = pos + np.einsum("...ij,j->...i", rot, t)
        points.append(pos)
        ax = model.link_axes[i]
        K = np.array([[0.0, -ax[2], ax[1]],
                      [ax[2], 0.0, -ax[0]],
                      [-ax[1], ax[0], 0.0]])
        qi = q[..., i]
        Ri = (eye + np.sin(qi)[..., None, None] * K
              + (1.0 - np.cos(qi))[..., None, None] * (K @ K))
        rot = np.einsum("...ij,...jk->...ik", rot, Ri)
    ee = pos + np.einsum("...ij,j->...i", rot, model.gripper_offset)
    points.append(ee)
    return np.stack(points, axis=-2), rot


def arm_forward_kinematics(model: ArmModel, mount: SE3Pose, q_arm: np.ndarray) -> SE3Pose:
    """End-effector pose in the trunk frame for a single (6,) joint vector."""
    points, rot = arm_chain_points(model, mount, np.asarray(q_arm, dtype=float))
    return SE3Pose(points[-1], rot)


def arm_center_of_mass(model: ArmModel, mount: SE3Pose, q_arm: np.ndarray) -> np.ndarray:
    """Arm CoM in the trunk frame; link mass sits at the midpoint of its segment."""
    points, _ = arm_chain_points(model, mount, q_arm)
    mids = 0.5 * (points[..., :-1, :] + points[..., 1:, :])
    w = model.link_masses / model.total_mass
    return np.einsum("...lk,l->...k", mids, w)
