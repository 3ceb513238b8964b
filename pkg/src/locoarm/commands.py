"""Command types shared by the gait, policy, trainer and teleop layers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class CommandTuple:
    """Locomotion target: forward speed, yaw rate, and body pitch/roll."""

    v_x: float = 0.0
    omega_yaw: float = 0.0
    phi_pitch: float = 0.0
    phi_roll: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.v_x, self.omega_yaw, self.phi_pitch, self.phi_roll])

    @staticmethod
    def from_array(v) -> "CommandTuple":
        return CommandTuple(*(float(x) for x in v))


RANGE_KEYS = ("v_x", "omega_z", "l", "p", "y", "alpha", "beta", "gamma")


@dataclass(frozen=True)
class CommandRanges:
    """Per-command [lo, hi] bounds; angle rows bound the Euler sampling."""

    v_x: tuple[float, float]
    omega_z: tuple[float, float]
    l: tuple[float, float]
    p: tuple[float, float]
    y: tuple[float, float]
    alpha: tuple[float, float]
    beta: tuple[float, float]
    gamma: tuple[float, float]

    def __post_init__(self):
        for key in RANGE_KEYS:
            lo, hi = getattr(self, key)
            if lo > hi:
                raise ConfigError(f"command range {key}: lo {lo} > hi {hi}")

    @staticmethod
    def from_dict(d: dict) -> "CommandRanges":
        missing = [k for k in RANGE_KEYS if k not in d]
        if missing:
            raise ConfigError(f"command ranges missing keys: {', '.join(missing)}")
        return CommandRanges(**{k: (float(d[k][0]), float(d[k][1])) for k in RANGE_KEYS})


TRAINING_RANGES = CommandRanges(
    v_x=(-1.0, 1.0), omega_z=(-0.6, 0.6), l=(0.3, 0.7),
    p=(-0.45 * np.pi, 0.45 * np.pi), y=(-0.5 * np.pi, 0.5 * np.pi),
    alpha=(-0.45 * np.pi, 0.45 * np.pi), beta=(-0.33 * np.pi, 0.33 * np.pi),
    gamma=(-0.42 * np.pi, 0.42 * np.pi),
)

EVALUATION_RANGES = CommandRanges(
    v_x=(-1.5, 1.5), omega_z=(-1.0, 1.0), l=(0.2, 0.8),
    p=(-0.5 * np.pi, 0.5 * np.pi), y=(-0.5 * np.pi, 0.5 * np.pi),
    alpha=(-0.5 * np.pi, 0.5 * np.pi), beta=(-0.5 * np.pi, 0.5 * np.pi),
    gamma=(-0.5 * np.pi, 0.5 * np.pi),
)
