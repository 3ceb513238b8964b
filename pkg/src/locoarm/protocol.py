"""Wire protocol of the teleoperation service.

JSON messages over a WebSocket, one message per frame, all carrying a
protocol version ``v``, a ``type`` tag and a ``seq`` number that increases
monotonically per direction. Documented field-by-field in protocol.md;
the schemas here are the enforcement on the server side, mirrored by the
browser console.

Out-of-range command values are clipped (never rejected) and reported in
the ack; push magnitudes outside the supported force range are schema
errors.
"""

from __future__ import annotations

from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError

PROTOCOL_VERSION = 1

PUSH_MIN_N = 10.0
PUSH_MAX_N = 20.0


class _Msg(BaseModel):
    v: int = PROTOCOL_VERSION
    seq: int = Field(ge=0)


class HelloMsg(_Msg):
    type: Literal["hello"]
    protocol_version: int
    client: str = ""


class SetCommandMsg(_Msg):
    """Velocity/orientation command update; omitted fields keep their value."""

    type: Literal["set_command"]
    v_x: Optional[float] = None
    omega_z: Optional[float] = None
    pitch: Optional[float] = None
    roll: Optional[float] = None


class SetTargetPoseMsg(_Msg):
    """Spherical end-effector target update; omitted fields keep their value."""

    type: Literal["set_target_pose"]
    l: Optional[float] = None
    p: Optional[float] = None
    y: Optional[float] = None
    alpha: Optional[float] = None
    beta: Optional[float] = None
    gamma: Optional[float] = None


class PushMsg(_Msg):
    type: Literal["push"]
    magnitude: float = Field(ge=PUSH_MIN_N, le=PUSH_MAX_N)
    direction: float = 0.0


class PauseMsg(_Msg):
    type: Literal["pause"]


class ResumeMsg(_Msg):
    type: Literal["resume"]


class ResetMsg(_Msg):
    type: Literal["reset"]
    seed: Optional[int] = None


ClientMessage = Union[HelloMsg, SetCommandMsg, SetTargetPoseMsg, PushMsg,
                      PauseMsg, ResumeMsg, ResetMsg]


class _ClientEnvelope(BaseModel):
    message: ClientMessage = Field(discriminator="type")


def parse_client_message(text: str):
    """Parse one inbound frame; raises pydantic.ValidationError on bad input."""
    import json
    return _ClientEnvelope(message=json.loads(text)).message


class HelloAck(_Msg):
    type: Literal["hello_ack"] = "hello_ack"
    protocol_version: int = PROTOCOL_VERSION
    embodiment: str = ""
    control_rate_hz: float = 50.0
    stream_rate_hz: float = 50.0
    session_seed: int = 0


class Ack(_Msg):
    type: Literal["ack"] = "ack"
    acked_seq: int
    applied_tick: int
    clipped: dict = Field(default_factory=dict)   # field -> [requested, applied]
    projected_orientation: bool = False


class ErrorMsg(_Msg):
    type: Literal["error"] = "error"
    acked_seq: int = -1
    message: str = ""


class BaseState(BaseModel):
    pos: list[float]
    rpy: list[float]
    v_x: float = 0.0          # body-frame forward speed
    omega_z: float = 0.0      # world-frame yaw rate


class JointState(BaseModel):
    q_leg: list[float]
    qd_leg: list[float]
    q_arm: list[float]
    qd_arm: list[float]


class FootState(BaseModel):
    contact: list[bool]
    forces: list[float]
    positions: list[list[float]] = Field(default_factory=list)  # yaw frame, rel base


class EEState(BaseModel):
    actual: list[float]       # l, p, y, alpha, beta, gamma
    actual_xyz: list[float]
    target: list[float]
    target_xyz: list[float]
    arm_points: list[list[float]] = Field(default_factory=list)  # yaw frame, rel base


class CommandState(BaseModel):
    v_x: float
    omega_z: float
    pitch: float
    roll: float


class StateMsg(_Msg):
    type: Literal["state"] = "state"
    tick: int
    time: float
    paused: bool = False
    base: BaseState
    joints: JointState
    feet: FootState
    ee: EEState
    cmd: CommandState
    distance_error: float
    angle_error: float
    reward_terms: dict = Field(default_factory=dict)
    r_loco: float = 0.0
    r_arm: float = 0.0


def clip_with_report(value: float, lo: float, hi: float, name: str,
                     clipped: dict) -> float:
    out = min(max(value, lo), hi)
    if out != value:
        clipped[name] = [value, out]
    return out
