"""Reduced-order physics: floating trunk, PD leg joints, point-foot contact.

Model structure: leg link masses are folded into the trunk and legs are
massless kinematic chains whose feet exert spring-damper ground forces on the
trunk. Leg and arm joints are PD-driven second-order units. The arm couples
to the trunk through a quasi-static gravity wrench at its configuration-
dependent center of mass. Translation integrates with kick-drift-kick
(exact for ballistic flight); rotation with semi-implicit Euler on the body
frame Euler equations.

All per-environment state lives in (N, ...) arrays; every operation is
elementwise per environment, so a trajectory depends only on that
environment's seed and commands, never on batch size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalDivergence
from .models import SystemModel, arm_center_of_mass, leg_forward_kinematics
from .geometry import roll_pitch_from_rotation

RUNNING, FALLEN, DIVERGED = 0, 1, 2
_STATUS_NAMES = {RUNNING: "running", FALLEN: "fallen", DIVERGED: "diverged"}


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.005
    decimation: int = 4                       # 4 x 0.005 s -> 50 Hz control
    gravity: float = 9.81
    friction: float = 0.8
    contact_stiffness: float = 2.0e4          # N/m
    contact_damping: float = 100.0            # N s/m
    tangential_stiffness: float = 5.0e3       # N/m, anchored stick spring
    tangential_damping: float = 100.0         # N s/m; larger values destabilize
                                              # the explicit pitch/roll coupling
    kp_leg: float = 40.0
    kd_leg: float = 1.0
    kp_arm: float = 40.0
    kd_arm: float = 1.2
    joint_inertia_leg: float = 0.02           # kg m^2, effective per joint
    joint_inertia_arm: float = 0.04
    angular_damping: float = 4.0              # N m s/rad; stands in for the
                                              # rotational drag of the leg masses
                                              # folded out of the trunk model
    mass_scale_range: tuple[float, float] = (0.9, 1.1)
    friction_range: tuple[float, float] = (0.4, 1.2)
    motor_scale_range: tuple[float, float] = (0.9, 1.1)
    min_height: float = 0.15                  # termination thresholds
    max_roll: float = 1.0
    max_pitch: float = 1.0
    trunk_clearance: float = 0.08             # trunk touches ground below this
    sanity_bound: float = 1.0e3
    push_duration: float = 0.2
    push_force_range: tuple[float, float] = (10.0, 20.0)
    seed: int = 0

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be > 0")
        if self.decimation < 1:
            raise ValueError("decimation must be >= 1")
        if min(self.kp_leg, self.kd_leg, self.kp_arm, self.kd_arm) < 0:
            raise ValueError("PD gains must be >= 0")

    @property
    def control_dt(self) -> float:
        return self.dt * self.decimation

    @property
    def control_rate_hz(self) -> float:
        return 1.0 / self.control_dt


@dataclass(frozen=True)
class PushEvent:
    magnitude: float          # N
    direction: float          # rad, horizontal, world frame
    start_time: float         # s, sim time
    duration: float           # s

    def __post_init__(self):
        if self.magnitude < 0:
            raise ValueError("push magnitude must be >= 0")


@dataclass(frozen=True)
class RobotState:
    base_pos: np.ndarray          # (3,) m world
    base_rot: np.ndarray          # (3, 3) body -> world
    base_lin_vel: np.ndarray      # (3,) m/s world
    base_ang_vel: np.ndarray      # (3,) rad/s world
    q_leg: np.ndarray             # (12,) rad
    qd_leg: np.ndarray            # (12,) rad/s
    q_arm: np.ndarray             # (6,) rad
    qd_arm: np.ndarray            # (6,) rad/s
    foot_contact: np.ndarray      # (4,) bool
    foot_forces: np.ndarray       # (4,) N, normal force magnitude
    time: float                   # s


def sample_push(rng: np.random.Generator, config: SimConfig,
                start_time: float = 0.0) -> PushEvent:
    lo, hi = config.push_force_range
    return PushEvent(
        magnitude=float(rng.uniform(lo, hi)),
        direction=float(rng.uniform(0.0, 2.0 * math.pi)),
        start_time=start_time,
        duration=config.push_duration,
    )


# quaternion helpers: (w, x, y, z), body -> world, elementwise over (N, 4)

def _quat_to_rotmat(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    row = lambda *c: np.stack(c, axis=-1)
    return np.stack([
        row(1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)),
        row(2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)),
        row(2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)),
    ], axis=-2)


def _quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ], axis=-1)


def _quat_from_rotvec(v: np.ndarray) -> np.ndarray:
    angle = np.linalg.norm(v, axis=-1, keepdims=True)
    half = 0.5 * angle
    small = angle < 1e-12
    scale = np.where(small, 0.5, np.sin(half) / np.where(small, 1.0, angle))
    return np.concatenate([np.cos(half), scale * v], axis=-1)


class VecSim:
    """N parallel environments of one embodiment, stepped in lockstep."""

    def __init__(self, model: SystemModel, config: SimConfig, num_envs: int,
                 seeds: np.ndarray | list[int] | None = None):
        self.model = model
        self.config = config
        self.n = int(num_envs)
        if seeds is None:
            seeds = [config.seed + i for i in range(self.n)]
        seeds = np.asarray(seeds, dtype=np.uint64)
        if seeds.shape != (self.n,):
            raise ValueError(f"need {self.n} seeds, got {seeds.shape}")
        self.seeds = seeds
        self.rngs = [np.random.Generator(np.random.PCG64(int(s))) for s in seeds]
        self._alloc()
        self.reset_envs(np.ones(self.n, dtype=bool))

    def _alloc(self):
        n = self.n
        self.base_pos = np.zeros((n, 3))
        self.base_quat = np.zeros((n, 4))
        self.base_lin_vel = np.zeros((n, 3))
        self.omega_body = np.zeros((n, 3))
        self.accel = np.zeros((n, 3))
        self.q_leg = np.zeros((n, 12))
        self.qd_leg = np.zeros((n, 12))
        self.q_arm = np.zeros((n, 6))
        self.qd_arm = np.zeros((n, 6))
        self.foot_forces = np.zeros((n, 4))
        self.foot_vel = np.zeros((n, 4, 3))
        self.prev_foot_pos = np.zeros((n, 4, 3))
        self.prev_feet_trunk = np.zeros((n, 4, 3))
        self.foot_anchor = np.zeros((n, 4, 2))
        self.foot_anchored = np.zeros((n, 4), dtype=bool)
        self.leg_torques = np.zeros((n, 12))
        self.arm_torques = np.zeros((n, 6))
        self.time = np.zeros(n)
        self.mass_scale = np.ones(n)
        self.friction = np.full(n, self.config.friction)
        self.motor_scale = np.ones(n)
        self.push_vec = np.zeros((n, 3))
        self.push_start = np.full(n, np.inf)
        self.push_end = np.full(n, -np.inf)

    def reset_envs(self, mask: np.ndarray) -> None:
        """Reset the masked environments to the default standing state."""
        idx = np.nonzero(np.asarray(mask))[0]
        if idx.size == 0:
            return
        quad, arm = self.model.quadruped, self.model.arm
        feet = leg_forward_kinematics(quad, quad.default_pose)
        stand_height = -float(feet[:, 2].min())
        cfg = self.config
        for i in idx:
            rng = self.rngs[i]
            self.mass_scale[i] = rng.uniform(*cfg.mass_scale_range)
            self.friction[i] = rng.uniform(*cfg.friction_range)
            self.motor_scale[i] = rng.uniform(*cfg.motor_scale_range)
        self.base_pos[idx] = np.array([0.0, 0.0, stand_height])
        self.base_quat[idx] = np.array([1.0, 0.0, 0.0, 0.0])
        self.base_lin_vel[idx] = 0.0
        self.omega_body[idx] = 0.0
        self.accel[idx] = np.array([0.0, 0.0, -cfg.gravity])
        self.q_leg[idx] = quad.default_pose
        self.qd_leg[idx] = 0.0
        self.q_arm[idx] = arm.default_pose
        self.qd_arm[idx] = 0.0
        self.foot_forces[idx] = 0.0
        self.foot_vel[idx] = 0.0
        self.leg_torques[idx] = 0.0
        self.arm_torques[idx] = 0.0
        self.time[idx] = 0.0
        self.push_vec[idx] = 0.0
        self.push_start[idx] = np.inf
        self.push_end[idx] = -np.inf
        rot = _quat_to_rotmat(self.base_quat[idx])
        feet_world = (self.base_pos[idx][:, None, :]
                      + np.einsum("nij,fj->nfi", rot, feet))
        self.prev_foot_pos[idx] = feet_world
        self.prev_feet_trunk[idx] = feet
        self.foot_anchor[idx] = feet_world[..., :2]
        self.foot_anchored[idx] = False

    def schedule_push(self, env: int, event: PushEvent) -> None:
        self.push_vec[env] = event.magnitude * np.array(
            [math.cos(event.direction), math.sin(event.direction), 0.0])
        self.push_start[env] = event.start_time
        self.push_end[env] = event.start_time + event.duration

    def _pd_joint_step(self, q, qd, targets, kp, kd, inertia, torque_limits, limits):
        dt = self.config.dt
        tau = kp * (targets - q) - kd * qd
        lim = torque_limits * self.motor_scale[:, None]
        tau = np.clip(tau, -lim, lim)
        qd = qd + (tau / inertia) * dt
        q = q + qd * dt
        # hard stops: clamp into limits and kill velocity into the stop
        below, above = q < limits[:, 0], q > limits[:, 1]
        q = np.clip(q, limits[:, 0], limits[:, 1])
        qd = np.where(below, np.maximum(qd, 0.0), qd)
        qd = np.where(above, np.minimum(qd, 0.0), qd)
        return q, qd, tau

    def step(self, leg_targets: np.ndarray, arm_targets: np.ndarray) -> None:
        """Advance one control tick (`decimation` physics substeps)."""
        cfg = self.config
        quad, arm = self.model.quadruped, self.model.arm
        dt = cfg.dt
        m_total = (quad.trunk_mass * self.mass_scale + arm.total_mass)[:, None]
        inertia = quad.trunk_inertia[None, :, :] * self.mass_scale[:, None, None]
        inertia_diag = np.diagonal(inertia, axis1=1, axis2=2)
        g_vec = np.array([0.0, 0.0, -cfg.gravity])

        for _ in range(cfg.decimation):
            # kick-drift: half-kick with cached acceleration, then move
            v_half = self.base_lin_vel + 0.5 * self.accel * dt
            self.base_pos = self.base_pos + v_half * dt

            self.q_leg, self.qd_leg, self.leg_torques = self._pd_joint_step(
                self.q_leg, self.qd_leg, leg_targets, cfg.kp_leg, cfg.kd_leg,
                cfg.joint_inertia_leg, quad.torque_limits, quad.joint_limits)
            self.q_arm, self.qd_arm, self.arm_torques = self._pd_joint_step(
                self.q_arm, self.qd_arm, arm_targets, cfg.kp_arm, cfg.kd_arm,
                cfg.joint_inertia_arm, arm.torque_limits, arm.joint_limits)

            rot = _quat_to_rotmat(self.base_quat)
            feet_trunk = leg_forward_kinematics(quad, self.q_leg)
            feet_world = (self.base_pos[:, None, :]
                          + np.einsum("nij,nfj->nfi", rot, feet_trunk))
            # rigid-body foot velocity; the joint contribution enters by finite
            # difference of the body-frame foot positions (legs are massless)
            r_world = feet_world - self.base_pos[:, None, :]
            omega_world = np.einsum("nij,nj->ni", rot, self.omega_body)
            joint_part = np.einsum(
                "nij,nfj->nfi", rot, (feet_trunk - self.prev_feet_trunk) / dt)
            self.foot_vel = (v_half[:, None, :]
                             + np.cross(omega_world[:, None, :], r_world)
                             + joint_part)
            self.prev_feet_trunk = feet_trunk
            self.prev_foot_pos = feet_world

            # spring-damper normal force
            pen = -feet_world[..., 2]
            in_contact = pen > 0.0
            raw_n = cfg.contact_stiffness * pen - cfg.contact_damping * self.foot_vel[..., 2]
            f_n = np.where(in_contact, np.maximum(raw_n, 0.0), 0.0)

            # stick-slip tangential force: spring to a touchdown anchor plus
            # damping, capped by the friction cone; anchors slip when capped
            touchdown = in_contact & ~self.foot_anchored
            self.foot_anchor = np.where(touchdown[..., None],
                                        feet_world[..., :2], self.foot_anchor)
            f_t = (-cfg.tangential_stiffness * (feet_world[..., :2] - self.foot_anchor)
                   - cfg.tangential_damping * self.foot_vel[..., :2])
            f_t = np.where(in_contact[..., None], f_t, 0.0)
            t_norm = np.linalg.norm(f_t, axis=-1)
            cap = self.friction[:, None] * f_n
            over = t_norm > cap
            scale = np.where(over, cap / np.where(t_norm > 0, t_norm, 1.0), 1.0)
            f_t = f_t * scale[..., None]
            slipped = over & in_contact
            self.foot_anchor = np.where(
                slipped[..., None],
                feet_world[..., :2] + f_t / cfg.tangential_stiffness,
                self.foot_anchor)
            self.foot_anchored = in_contact

            f_contact = np.concatenate([f_t, f_n[..., None]], axis=-1)
            self.foot_forces = f_n

            # quasi-static arm wrench: gravity at the arm CoM
            arm_com_world = (self.base_pos + np.einsum(
                "nij,nj->ni", rot, arm_center_of_mass(arm, self.model.mount, self.q_arm)))
            f_arm = arm.total_mass * g_vec

            push_on = (self.time >= self.push_start) & (self.time < self.push_end)
            f_push = np.where(push_on[:, None], self.push_vec, 0.0)

            force = (f_contact.sum(axis=1)
                     + (quad.trunk_mass * self.mass_scale)[:, None] * g_vec
                     + f_arm + f_push)
            torque = (np.cross(feet_world - self.base_pos[:, None, :], f_contact).sum(axis=1)
                      + np.cross(arm_com_world - self.base_pos, f_arm))

            # second kick with the fresh forces
            self.accel = force / m_total
            self.base_lin_vel = v_half + 0.5 * self.accel * dt

            # body-frame Euler equations, semi-implicit
            tau_body = np.einsum("nji,nj->ni", rot, torque)
            tau_body = tau_body - cfg.angular_damping * self.omega_body
            L = inertia_diag * self.omega_body
            gyro = np.cross(self.omega_body, L)
            self.omega_body = self.omega_body + ((tau_body - gyro) / inertia_diag) * dt
            dq = _quat_from_rotvec(self.omega_body * dt)
            self.base_quat = _quat_mul(self.base_quat, dq)
            self.base_quat = self.base_quat / np.linalg.norm(
                self.base_quat, axis=-1, keepdims=True)

            self.time = self.time + dt

        bound = cfg.sanity_bound
        finite = (np.isfinite(self.base_pos).all() and np.isfinite(self.base_lin_vel).all()
                  and np.isfinite(self.q_leg).all() and np.isfinite(self.omega_body).all())
        if not finite or np.abs(self.base_pos).max() > bound \
                or np.abs(self.base_lin_vel).max() > bound:
            raise NumericalDivergence(
                "state exceeded sanity bounds; check gains/contact config")

    # ------------------------------------------------------------------
    # queries
    # ------------------------------------------------------------------

    def rotations(self) -> np.ndarray:
        return _quat_to_rotmat(self.base_quat)

    def roll_pitch(self) -> np.ndarray:
        rot = self.rotations()
        roll = np.arctan2(rot[:, 2, 1], rot[:, 2, 2])
        pitch = -np.arcsin(np.clip(rot[:, 2, 0], -1.0, 1.0))
        return np.stack([roll, pitch], axis=-1)

    def yaw(self) -> np.ndarray:
        rot = self.rotations()
        return np.arctan2(rot[:, 1, 0], rot[:, 0, 0])

    def foot_positions_world(self) -> np.ndarray:
        return self.prev_foot_pos.copy()

    def status(self) -> np.ndarray:
        """Per-env termination code: running, fallen, or diverged."""
        cfg = self.config
        rp = self.roll_pitch()
        finite = (np.isfinite(self.base_pos).all(axis=1)
                  & np.isfinite(self.base_lin_vel).all(axis=1)
                  & np.isfinite(self.q_leg).all(axis=1))
        low = self.base_pos[:, 2] < cfg.min_height
        touched = self.base_pos[:, 2] < cfg.trunk_clearance
        tipped = (np.abs(rp[:, 0]) > cfg.max_roll) | (np.abs(rp[:, 1]) > cfg.max_pitch)
        out = np.where(low | touched | tipped, FALLEN, RUNNING)
        return np.where(finite, out, DIVERGED)

    def get_state(self, i: int = 0) -> RobotState:
        rot = _quat_to_rotmat(self.base_quat[i])
        return RobotState(
            base_pos=self.base_pos[i].copy(),
            base_rot=rot,
            base_lin_vel=self.base_lin_vel[i].copy(),
            base_ang_vel=rot @ self.omega_body[i],
            q_leg=self.q_leg[i].copy(),
            qd_leg=self.qd_leg[i].copy(),
            q_arm=self.q_arm[i].copy(),
            qd_arm=self.qd_arm[i].copy(),
            foot_contact=self.foot_forces[i] > 0.0,
            foot_forces=self.foot_forces[i].copy(),
            time=float(self.time[i]),
        )


class Simulator:
    """Single-environment facade over the vectorized core."""

    def __init__(self, model: SystemModel, config: SimConfig):
        self.model = model
        self.config = config
        self._vec: VecSim | None = None

    def reset(self, seed: int | None = None) -> RobotState:
        seed = self.config.seed if seed is None else int(seed)
        self._vec = VecSim(self.model, self.config, 1, seeds=[seed])
        return self._vec.get_state(0)

    @property
    def vec(self) -> VecSim:
        if self._vec is None:
            raise RuntimeError("reset() must be called before stepping")
        return self._vec

    def schedule_push(self, event: PushEvent) -> None:
        self.vec.schedule_push(0, event)

    def step(self, leg_targets: np.ndarray, arm_targets: np.ndarray,
             pushes: list[PushEvent] | None = None) -> RobotState:
        for ev in pushes or []:
            self.vec.schedule_push(0, ev)
        self.vec.step(np.asarray(leg_targets, dtype=float)[None, :],
                      np.asarray(arm_targets, dtype=float)[None, :])
        return self.vec.get_state(0)


def check_termination(state: RobotState, config: SimConfig) -> str:
    """Classify a single state: 'running', 'fallen' or 'diverged'."""
    values = np.concatenate([state.base_pos, state.base_lin_vel, state.q_leg])
    if not np.isfinite(values).all():
        return _STATUS_NAMES[DIVERGED]
    roll, pitch = roll_pitch_from_rotation(state.base_rot)
    if (state.base_pos[2] < config.min_height
            or state.base_pos[2] < config.trunk_clearance
            or abs(roll) > config.max_roll or abs(pitch) > config.max_pitch):
        return _STATUS_NAMES[FALLEN]
    return _STATUS_NAMES[RUNNING]
