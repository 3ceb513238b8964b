"""Vectorized rollout environment: simulator, gait clock, commands, rewards.

One instance owns N simulator environments plus the per-environment gait
clocks, command tuples, spherical targets and bookkeeping needed to build
observations and score reward terms. The trainer and the evaluation harness
both drive episodes through this class; the trainer resamples commands on a
schedule while evaluation pins them per episode.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import gait, rewards
from .commands import CommandRanges
from .geometry import axis_angles_batch, wrap_angle
from .models import SystemModel, arm_chain_points
from .policy import PolicyConfig, decode_arm_action, decode_leg_action
from .rewards import RewardConfig
from .sim import RUNNING, SimConfig, VecSim


def sample_target_angles(rng: np.random.Generator, ranges: CommandRanges
                         ) -> tuple[float, float, float]:
    """Included-angle target from uniform Euler sampling, always realizable."""
    ez = rng.uniform(*ranges.alpha)   # about z
    ex = rng.uniform(*ranges.beta)    # about x
    ey = rng.uniform(*ranges.gamma)   # about y
    from .geometry import compose_rotation
    abg = axis_angles_batch(compose_rotation(ez, ey, ex))
    return float(abg[0]), float(abg[1]), float(abg[2])


class CoopEnv:
    """N parallel quadruped+arm environments with gait-aware rewards."""

    def __init__(self, model: SystemModel, sim_cfg: SimConfig,
                 behavior: gait.BehaviorParams, reward_cfg: RewardConfig,
                 policy_cfg: PolicyConfig, ranges: CommandRanges,
                 num_envs: int, seed: int, stage: int,
                 episode_length_s: float = 10.0,
                 resample_interval_s: float = 6.0,
                 push_interval_s: float = 0.0):
        self.model = model
        self.sim_cfg = sim_cfg
        self.behavior = behavior
        self.reward_cfg = reward_cfg
        self.policy_cfg = policy_cfg
        self.ranges = ranges
        self.n = num_envs
        self.stage = stage
        self.episode_ticks = int(round(episode_length_s / sim_cfg.control_dt))
        self.resample_ticks = int(round(resample_interval_s / sim_cfg.control_dt))
        self.push_ticks = (int(round(push_interval_s / sim_cfg.control_dt))
                           if push_interval_s > 0 else 0)

        root = np.random.SeedSequence(seed)
        sim_seeds = root.generate_state(num_envs, dtype=np.uint64)
        self.sim = VecSim(model, sim_cfg, num_envs, seeds=sim_seeds)
        cmd_words = np.random.SeedSequence([seed, 1]).generate_state(num_envs, dtype=np.uint64)
        self.cmd_rngs = [np.random.Generator(np.random.PCG64(int(w))) for w in cmd_words]

        self.clock_t = np.zeros(num_envs)
        self.clock_frozen = np.zeros(num_envs, dtype=bool)
        self.cmd = np.zeros((num_envs, 4))        # v_x, omega, pitch, roll
        self.target = np.zeros((num_envs, 6))     # l, p, y, alpha, beta, gamma
        self.last_leg_action = np.zeros((num_envs, 12))
        self.last_arm_action = np.zeros((num_envs, 8))
        self.episode_tick = np.zeros(num_envs, dtype=int)
        self.since_resample = np.zeros(num_envs, dtype=int)
        self.reset_envs(np.ones(num_envs, dtype=bool))

    # ------------------------------------------------------------------
    # command handling
    # ------------------------------------------------------------------

    def _sample_env_commands(self, i: int) -> None:
        rng = self.cmd_rngs[i]
        self.cmd[i, 0] = rng.uniform(*self.ranges.v_x)
        self.cmd[i, 1] = rng.uniform(*self.ranges.omega_z)
        if self.stage == 1:
            # pitch/roll come from the external sampler; target pose is zero
            self.cmd[i, 2] = rng.uniform(*self.policy_cfg.pitch_range)
            self.cmd[i, 3] = rng.uniform(*self.policy_cfg.roll_range)
            self.target[i] = 0.0
        else:
            # pitch/roll will be overwritten by the arm policy every tick
            self.cmd[i, 2] = 0.0
            self.cmd[i, 3] = 0.0
            self.target[i, 0] = rng.uniform(*self.ranges.l)
            self.target[i, 1] = rng.uniform(*self.ranges.p)
            self.target[i, 2] = rng.uniform(*self.ranges.y)
            self.target[i, 3:] = sample_target_angles(rng, self.ranges)

    def set_commands(self, idx, v_x=None, omega=None, pitch=None, roll=None,
                     target=None) -> None:
        """Pin commands for selected envs (evaluation / teleop path)."""
        for col, val in ((0, v_x), (1, omega), (2, pitch), (3, roll)):
            if val is not None:
                self.cmd[idx, col] = val
        if target is not None:
            self.target[idx] = target

    def reset_envs(self, mask: np.ndarray, resample: bool = True) -> None:
        idx = np.nonzero(np.asarray(mask))[0]
        if idx.size == 0:
            return
        self.sim.reset_envs(mask)
        self.clock_t[idx] = 0.0
        self.clock_frozen[idx] = False
        self.last_leg_action[idx] = 0.0
        self.last_arm_action[idx] = 0.0
        self.episode_tick[idx] = 0
        self.since_resample[idx] = 0
        if resample:
            for i in idx:
                self._sample_env_commands(int(i))

    # ------------------------------------------------------------------
    # observations
    # ------------------------------------------------------------------

    def clock_obs(self) -> np.ndarray:
        return gait.clock_observation_batch(self.clock_t, self.clock_frozen, self.behavior)

    def observe_loco(self) -> np.ndarray:
        from .policy import loco_obs_from_arrays
        return loco_obs_from_arrays(
            self.sim.q_leg, self.sim.qd_leg, self.sim.roll_pitch(), self.cmd,
            self.clock_obs(), self.last_leg_action, self.policy_cfg)

    def observe_arm(self) -> np.ndarray:
        from .policy import arm_obs_from_arrays
        return arm_obs_from_arrays(
            self.sim.q_arm, self.sim.qd_arm, self.target, self.sim.roll_pitch(),
            self.last_arm_action, self.policy_cfg)

    # ------------------------------------------------------------------
    # stepping
    # ------------------------------------------------------------------

    def apply_arm_action(self, raw_arm: np.ndarray) -> np.ndarray:
        """Decode the arm action and inject its body command; returns targets."""
        targets, body_cmd = decode_arm_action(raw_arm, self.model.arm, self.policy_cfg)
        self.cmd[:, 2] = body_cmd[:, 0]
        self.cmd[:, 3] = body_cmd[:, 1]
        return targets

    def ee_pose_yaw_frame(self) -> tuple[np.ndarray, np.ndarray]:
        """(positions (N, 3), rotations (N, 3, 3)) of the gripper, yaw-only base frame."""
        pts, rot_ee_trunk = arm_chain_points(self.model.arm, self.model.mount, self.sim.q_arm)
        rot = self.sim.rotations()
        ee_world_rel = np.einsum("nij,nj->ni", rot, pts[:, -1, :])
        yaw = self.sim.yaw()
        cy, sy = np.cos(yaw), np.sin(yaw)
        # rotate by -yaw: strips heading, keeps gravity-aligned z
        x = cy * ee_world_rel[:, 0] + sy * ee_world_rel[:, 1]
        y = -sy * ee_world_rel[:, 0] + cy * ee_world_rel[:, 1]
        pos = np.stack([x, y, ee_world_rel[:, 2]], axis=-1)
        rot_yaw_t = np.stack([
            np.stack([cy, sy, np.zeros_like(cy)], axis=-1),
            np.stack([-sy, cy, np.zeros_like(cy)], axis=-1),
            np.stack([np.zeros_like(cy), np.zeros_like(cy), np.ones_like(cy)], axis=-1),
        ], axis=-2)
        rot_ee = np.einsum("nij,njk,nkl->nil", rot_yaw_t, rot, rot_ee_trunk)
        return pos, rot_ee

    def manip_errors(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(delta_lpy, delta_abg, D, theta-ready rotations) against current targets."""
        pos, rot_ee = self.ee_pose_yaw_frame()
        l = np.linalg.norm(pos, axis=-1)
        safe_l = np.where(l > 1e-12, l, 1.0)
        p = np.arcsin(np.clip(pos[:, 2] / safe_l, -1.0, 1.0))
        y = np.arctan2(pos[:, 1], pos[:, 0])
        delta_lpy = np.stack([
            np.abs(l - self.target[:, 0]),
            np.abs(p - self.target[:, 1]),
            np.abs(wrap_angle(y - self.target[:, 2])),
        ], axis=-1)
        abg = axis_angles_batch(rot_ee)
        delta_abg = np.abs(wrap_angle(abg - self.target[:, 3:]))
        target_xyz = np.stack([
            self.target[:, 0] * np.cos(self.target[:, 1]) * np.cos(self.target[:, 2]),
            self.target[:, 0] * np.cos(self.target[:, 1]) * np.sin(self.target[:, 2]),
            self.target[:, 0] * np.sin(self.target[:, 1]),
        ], axis=-1)
        D = np.linalg.norm(pos - target_xyz, axis=-1)
        return delta_lpy, delta_abg, D, rot_ee

    def step(self, raw_leg: np.ndarray, raw_arm: np.ndarray | None,
             arm_targets: np.ndarray | None = None
             ) -> tuple[rewards.RewardBreakdown, np.ndarray]:
        """Advance one control tick; returns (reward breakdown, status codes).

        raw_arm is None in stage 1: arm joints hold their default pose. When
        the caller already ran apply_arm_action (so the loco observation saw
        this tick's body command), it passes the decoded arm_targets through.
        """
        leg_targets = decode_leg_action(raw_leg, self.model.quadruped, self.policy_cfg)
        if raw_arm is None:
            arm_targets = np.broadcast_to(self.model.arm.default_pose, (self.n, 6))
            raw_arm = np.zeros((self.n, 8))
        elif arm_targets is None:
            arm_targets = self.apply_arm_action(raw_arm)

        if self.push_ticks:
            due = (self.episode_tick % self.push_ticks) == (self.push_ticks - 1)
            for i in np.nonzero(due)[0]:
                from .sim import sample_push
                ev = sample_push(self.cmd_rngs[i], self.sim_cfg,
                                 start_time=float(self.sim.time[i]))
                self.sim.schedule_push(int(i), ev)

        self.sim.step(leg_targets, arm_targets)

        breakdown = self._compute_rewards(raw_leg, raw_arm)
        self.last_leg_action = np.asarray(raw_leg, dtype=float).copy()
        self.last_arm_action = np.asarray(raw_arm, dtype=float).copy()

        self.clock_t, self.clock_frozen = gait.advance_batch(
            self.clock_t, self.behavior, self.sim_cfg.control_dt,
            self.cmd[:, 0], self.cmd[:, 1])
        self.episode_tick += 1
        self.since_resample += 1
        return breakdown, self.sim.status()

    def _compute_rewards(self, raw_leg, raw_arm) -> rewards.RewardBreakdown:
        cfg = self.reward_cfg
        phases = gait.foot_phases_batch(self.clock_t, self.behavior)
        contact = gait.desired_contact_batch(phases, self.clock_frozen)

        rot = self.sim.rotations()
        v_body = np.einsum("nji,nj->ni", rot, self.sim.base_lin_vel)
        omega_world = np.einsum("nij,nj->ni", rot, self.sim.omega_body)
        rp = self.sim.roll_pitch()

        feet_world = self.sim.foot_positions_world()
        rel = feet_world - self.sim.base_pos[:, None, :]
        yaw = self.sim.yaw()
        cy, sy = np.cos(yaw)[:, None], np.sin(yaw)[:, None]
        feet_xy = np.stack([cy * rel[..., 0] + sy * rel[..., 1],
                            -sy * rel[..., 0] + cy * rel[..., 1]], axis=-1)
        desired_xy = gait.raibert_targets_batch(
            self.behavior, self.cmd[:, 0], self.cmd[:, 1], self.model.quadruped)
        foot_speed_xy = np.linalg.norm(self.sim.foot_vel[..., :2], axis=-1)

        terms = {
            "follow": rewards.r_follow(
                self.cmd[:, 0], self.cmd[:, 1], self.cmd[:, 2], self.cmd[:, 3],
                v_body[:, 0], omega_world[:, 2], rp[:, 1], rp[:, 0], cfg),
            "contact_force": rewards.r_contact_force(contact, self.sim.foot_forces,
                                                     cfg.sigma_cf),
            "foot_velocity": rewards.r_foot_velocity(contact, foot_speed_xy,
                                                     cfg.sigma_cv),
            "raibert": rewards.r_raibert(feet_xy, desired_xy),
            "swing_height": rewards.r_swing_height(contact, feet_world[..., 2],
                                                   self.behavior.h_zf_cmd),
            "loco_reg": rewards.r_reg(
                raw_leg, self.last_leg_action, self.sim.leg_torques,
                self.sim.qd_leg, self.sim.base_lin_vel[:, 2], cfg,
                self.sim.q_leg, self.model.quadruped.joint_limits),
        }
        if self.stage == 1:
            terms["manip"] = np.zeros(self.n)
            terms["arm_reg"] = np.zeros(self.n)
        else:
            delta_lpy, delta_abg, _, _ = self.manip_errors()
            terms["manip"] = rewards.r_manip(delta_lpy, delta_abg, cfg.w_manip)
            terms["arm_reg"] = rewards.r_reg(
                raw_arm, self.last_arm_action, self.sim.arm_torques,
                self.sim.qd_arm, np.zeros(self.n), cfg,
                self.sim.q_arm, self.model.arm.joint_limits)
        return rewards.assemble(terms, cfg, self.stage)

    def timeout_mask(self) -> np.ndarray:
        return self.episode_tick >= self.episode_ticks

    def finish_tick(self, fallen: np.ndarray | None = None,
                    timeout: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Handle terminations, timeouts and command resampling after a step.

        Returns (fallen_mask, timeout_mask); affected envs are reset in place.
        """
        if fallen is None:
            fallen = self.sim.status() != RUNNING
        if timeout is None:
            timeout = self.timeout_mask()
        self.reset_envs(fallen | timeout)
        due = self.since_resample >= self.resample_ticks
        for i in np.nonzero(due & ~(fallen | timeout))[0]:
            self._sample_env_commands(int(i))
            self.since_resample[i] = 0
        return fallen, timeout
