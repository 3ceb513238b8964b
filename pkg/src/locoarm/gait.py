"""Gait clock, behavior parameters, contact schedule, and foot-placement targets.

Scalar entry points operate on GaitClock/BehaviorParams; the ``*_batch``
variants take plain arrays and are the single source of truth for the
formulas, so vectorized rollouts and scalar callers cannot drift apart.
Foot order everywhere: FR, FL, RR, RL.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .commands import CommandTuple
from .models import QuadrupedModel

FREEZE_SPEED = 0.05      # |v_x| and |omega| below this freeze the clock
DUTY = 0.5               # stance fraction of the cycle


@dataclass(frozen=True)
class BehaviorParams:
    """Fixed gait shape: trot offsets, 3 Hz stepping, 0.06 m footswing."""

    theta_cmd: tuple[float, float, float] = (0.5, 0.0, 0.0)
    f_cmd: float = 3.0
    h_z_cmd: float = 0.0
    phi_pitch_cmd: float = 0.0
    phi_roll_cmd: float = 0.0
    s_cmd: tuple[float, float] = (0.45, 0.3)
    h_zf_cmd: float = 0.06
    raibert_gain: float = 1.0

    def __post_init__(self):
        if self.f_cmd <= 0:
            raise ValueError("stepping frequency must be > 0")
        if self.h_zf_cmd < 0:
            raise ValueError("footswing height must be >= 0")
        if any(not 0.0 <= t < 1.0 for t in self.theta_cmd):
            raise ValueError("timing offsets must lie in [0, 1)")


@dataclass(frozen=True)
class GaitClock:
    t: float = 0.0
    frozen: bool = False


@dataclass(frozen=True)
class ContactSchedule:
    desired: np.ndarray  # (4,) in [0, 1], FR FL RR RL


def advance_batch(t: np.ndarray, params: BehaviorParams, dt: float,
                  v_x: np.ndarray, omega: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(t, frozen) after one step; the phase holds while commands are ~zero."""
    frozen = (np.abs(v_x) < FREEZE_SPEED) & (np.abs(omega) < FREEZE_SPEED)
    t_next = np.mod(t + params.f_cmd * dt, 1.0)
    return np.where(frozen, t, t_next), frozen


def advance(clock: GaitClock, params: BehaviorParams, dt: float,
            cmd: CommandTuple) -> GaitClock:
    if dt <= 0:
        raise ValueError("dt must be > 0")
    t, frozen = advance_batch(np.array([clock.t]), params, dt,
                              np.array([cmd.v_x]), np.array([cmd.omega_yaw]))
    return GaitClock(float(t[0]), bool(frozen[0]))


def foot_phases_batch(t: np.ndarray, params: BehaviorParams) -> np.ndarray:
    th1, th2, th3 = params.theta_cmd
    offsets = np.array([th2 + th3, th1 + th3, th1, th2])  # FR FL RR RL
    return np.mod(np.asarray(t)[..., None] + offsets, 1.0)


def foot_phases(clock: GaitClock, params: BehaviorParams) -> np.ndarray:
    return foot_phases_batch(np.array(clock.t), params)


def clock_observation_batch(t: np.ndarray, frozen: np.ndarray,
                            params: BehaviorParams) -> np.ndarray:
    obs = np.sin(2.0 * np.pi * foot_phases_batch(t, params))
    return np.where(np.asarray(frozen)[..., None], 1.0, obs)


def clock_observation(clock: GaitClock, params: BehaviorParams) -> np.ndarray:
    return clock_observation_batch(np.array(clock.t), np.array(clock.frozen), params)


def desired_contact_batch(phases: np.ndarray, frozen: np.ndarray | None = None) -> np.ndarray:
    c = (np.asarray(phases) < DUTY).astype(float)
    if frozen is not None:
        c = np.where(np.asarray(frozen)[..., None], 1.0, c)
    return c


def desired_contact(phases: np.ndarray, frozen: bool = False) -> ContactSchedule:
    return ContactSchedule(desired_contact_batch(phases, np.array(frozen)))


def nominal_footprint(params: BehaviorParams, model: QuadrupedModel) -> np.ndarray:
    """Ground-plane stance box: clearance magnitudes, hip-offset signs. (4, 2)."""
    sx, sy = params.s_cmd
    return np.stack([np.sign(model.hip_offsets[:, 0]) * sx / 2.0,
                     np.sign(model.hip_offsets[:, 1]) * sy / 2.0], axis=-1)


def raibert_targets_batch(params: BehaviorParams, v_x: np.ndarray, omega: np.ndarray,
                          model: QuadrupedModel) -> np.ndarray:
    """Desired ground-plane foot positions, trunk frame, (..., 4, 2).

    Each foot gets its nominal footprint point plus a feed-forward shift of
    half a gait period times the commanded body velocity at that point.
    """
    nom = nominal_footprint(params, model)
    v_x = np.asarray(v_x, dtype=float)[..., None]
    omega = np.asarray(omega, dtype=float)[..., None]
    v_foot_x = v_x - omega * nom[:, 1]
    v_foot_y = omega * nom[:, 0]
    gain = params.raibert_gain / (2.0 * params.f_cmd)
    return nom + gain * np.stack([v_foot_x, v_foot_y], axis=-1)


def raibert_targets(params: BehaviorParams, cmd: CommandTuple,
                    model: QuadrupedModel) -> np.ndarray:
    return raibert_targets_batch(params, np.array(cmd.v_x), np.array(cmd.omega_yaw), model)


def reference_leg_targets(phases: np.ndarray, frozen: np.ndarray,
                          v_x: np.ndarray, omega: np.ndarray,
                          model: QuadrupedModel, params: BehaviorParams,
                          swing_amp: float = 0.3, lift_amp: float = 0.55
                          ) -> np.ndarray:
    """Joint targets of a heuristic clock-entrained trot. (..., 12).

    Used only to bootstrap policy training: thighs sweep with the per-foot
    clock phase, calves flex to lift during swing, stride amplitude scales
    with the commanded body velocity at each foot. A frozen clock collapses
    to the default pose.
    """
    phases = np.asarray(phases, dtype=float)
    nom = nominal_footprint(params, model)
    v_foot = (np.asarray(v_x, dtype=float)[..., None]
              - np.asarray(omega, dtype=float)[..., None] * nom[:, 1])
    amp = swing_amp * np.clip(v_foot, -1.2, 1.2)

    swing = phases >= DUTY
    sw = (phases - DUTY) / (1.0 - DUTY)
    st = phases / DUTY
    thigh = np.where(swing, amp * np.cos(np.pi * sw), -amp * np.cos(np.pi * st))
    calf = np.where(swing, -lift_amp * np.sin(np.pi * sw), 0.0)
    moving = ~np.asarray(frozen, dtype=bool)[..., None]
    thigh = np.where(moving, thigh, 0.0)
    calf = np.where(moving, calf, 0.0)

    offsets = np.stack([np.zeros_like(thigh), thigh, calf], axis=-1)
    targets = model.default_pose.reshape(4, 3) + offsets
    return targets.reshape(targets.shape[:-2] + (12,))
