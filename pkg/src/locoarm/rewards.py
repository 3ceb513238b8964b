"""Reward terms and their weighted assembly into the loco and arm channels.

Every term is a pure function accepting scalars or batched arrays; feet live
on the last axis. Penalty-form terms (raibert, swing_height) return raw
squared errors and receive negative weights at assembly. The follow and
regularization terms fill functional slots whose exact shape is this
package's own construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

LOCO_TERMS = ("follow", "contact_force", "foot_velocity", "raibert",
              "swing_height", "loco_reg")
ARM_TERMS = ("manip", "arm_reg")

DEFAULT_WEIGHTS = {
    "follow": 1.0,
    "contact_force": 1.0,
    "foot_velocity": 1.0,
    "raibert": -1.0,
    "swing_height": -2.0,
    "loco_reg": 1.0,
    "manip": 1.0,
    "arm_reg": 1.0,
}


@dataclass(frozen=True)
class RewardConfig:
    sigma_cf: float = 100.0        # N^2, contact-force kernel
    sigma_cv: float = 0.25         # m^2/s^2, foot-speed kernel
    w_manip: float = 2.0           # position-vs-orientation priority
    sigma_v: float = 0.25
    sigma_omega: float = 0.25
    sigma_phi: float = 0.1
    reg_action_rate: float = 0.01
    reg_torque: float = 2e-5
    reg_joint_vel: float = 1e-4
    reg_vertical_vel: float = 1.0
    reg_joint_limit: float = 10.0
    weights: dict = field(default_factory=lambda: dict(DEFAULT_WEIGHTS))

    def __post_init__(self):
        for name in ("sigma_cf", "sigma_cv", "sigma_v", "sigma_omega", "sigma_phi"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0")
        if not np.isfinite(list(self.weights.values())).all():
            raise ConfigError("reward weights must be finite")


@dataclass(frozen=True)
class RewardBreakdown:
    terms: dict
    weights: dict
    r_loco: np.ndarray | float
    r_arm: np.ndarray | float


def r_contact_force(desired_contact, foot_forces, sigma_cf: float):
    """Swing feet are rewarded for carrying no load."""
    c = np.asarray(desired_contact, dtype=float)
    f = np.asarray(foot_forces, dtype=float)
    return np.sum((1.0 - c) * np.exp(-(f * f) / sigma_cf), axis=-1)


def r_foot_velocity(desired_contact, foot_xy_speeds, sigma_cv: float):
    """Stance feet are rewarded for staying planted."""
    c = np.asarray(desired_contact, dtype=float)
    v = np.asarray(foot_xy_speeds, dtype=float)
    return np.sum(c * np.exp(-(v * v) / sigma_cv), axis=-1)


def r_raibert(actual_xy, desired_xy):
    """Summed squared planar foot-placement error (penalty form)."""
    d = np.asarray(actual_xy, dtype=float) - np.asarray(desired_xy, dtype=float)
    return np.sum(d * d, axis=(-2, -1))


def r_swing_height(desired_contact, foot_heights, h_zf_cmd: float):
    """Squared footswing-height error, charged only during swing (penalty form)."""
    c = np.asarray(desired_contact, dtype=float)
    h = np.asarray(foot_heights, dtype=float)
    return np.sum((h - h_zf_cmd) ** 2 * (1.0 - c), axis=-1)


def r_manip(delta_lpy, delta_abg, w: float):
    """exp(-w * sum position deltas) * exp(-sum angle deltas); in (0, 1]."""
    dp = np.sum(np.asarray(delta_lpy, dtype=float), axis=-1)
    da = np.sum(np.asarray(delta_abg, dtype=float), axis=-1)
    return np.exp(-w * dp) * np.exp(-da)


def r_follow(cmd_v_x, cmd_omega, cmd_pitch, cmd_roll,
             v_x, omega, pitch, roll, cfg: RewardConfig):
    """Command-tracking kernels for speed, yaw rate, and body orientation."""
    return (np.exp(-((np.asarray(v_x) - cmd_v_x) ** 2) / cfg.sigma_v)
            + np.exp(-((np.asarray(omega) - cmd_omega) ** 2) / cfg.sigma_omega)
            + np.exp(-((np.asarray(pitch) - cmd_pitch) ** 2) / cfg.sigma_phi)
            + np.exp(-((np.asarray(roll) - cmd_roll) ** 2) / cfg.sigma_phi))


def r_reg(action, last_action, joint_torques, joint_vels, base_vertical_vel,
          cfg: RewardConfig, joint_pos=None, joint_limits=None):
    """Smoothness/safety penalty: always <= 0."""
    da = np.asarray(action, dtype=float) - np.asarray(last_action, dtype=float)
    tq = np.asarray(joint_torques, dtype=float)
    qd = np.asarray(joint_vels, dtype=float)
    vz = np.asarray(base_vertical_vel, dtype=float)
    total = (cfg.reg_action_rate * np.sum(da * da, axis=-1)
             + cfg.reg_torque * np.sum(tq * tq, axis=-1)
             + cfg.reg_joint_vel * np.sum(qd * qd, axis=-1)
             + cfg.reg_vertical_vel * vz * vz)
    if joint_pos is not None and joint_limits is not None:
        q = np.asarray(joint_pos, dtype=float)
        lo, hi = joint_limits[:, 0], joint_limits[:, 1]
        margin = 0.05 * (hi - lo)
        over = np.clip(q - (hi - margin), 0.0, None) + np.clip((lo + margin) - q, 0.0, None)
        total = total + cfg.reg_joint_limit * np.sum(over, axis=-1)
    return -total


def assemble(terms: dict, config: RewardConfig, stage: int) -> RewardBreakdown:
    """Weighted totals for both channels; stage 1 leaves the arm channel at zero."""
    weights = {}
    for name in LOCO_TERMS + ARM_TERMS:
        if name not in config.weights:
            raise ConfigError(f"reward weight '{name}' missing from config")
        weights[name] = config.weights[name]
    r_loco = sum(weights[n] * np.asarray(terms[n]) for n in LOCO_TERMS)
    if stage == 1:
        r_arm = np.zeros_like(np.asarray(r_loco, dtype=float))
    else:
        r_arm = sum(weights[n] * np.asarray(terms[n]) for n in ARM_TERMS)
    return RewardBreakdown(terms=dict(terms), weights=weights, r_loco=r_loco, r_arm=r_arm)
