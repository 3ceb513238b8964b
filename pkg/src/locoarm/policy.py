"""Actor-critic networks, observations, action decoding, checkpoints, composition.

Networks are plain numpy MLPs with ELU hidden activations and a Gaussian
action head with state-independent log-stddev. Inference is deterministic:
the evaluation order is fixed, so the same checkpoint and observation give
the same action everywhere.

Checkpoint container (version 1), documented in docs/checkpoint_format.md:
magic ``LACP`` | u32 version | u32 header length | canonical JSON header |
concatenated little-endian float32 tensor payloads in header order |
trailing CRC32 (u32, little-endian) over everything before it.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .commands import CommandTuple
from .errors import CorruptFile, InterfaceMismatch, ShapeMismatch, VersionError
from .models import ArmModel, QuadrupedModel
from .sim import RobotState
from .geometry import roll_pitch_from_rotation

MAGIC = b"LACP"
FORMAT_VERSION = 1

LOCO_OBS_DIM = 46   # q(12) qd(12) roll,pitch(2) cmd(4) clock(4) last action(12)
LOCO_ACT_DIM = 12
ARM_OBS_DIM = 28    # q(6) qd(6) target(6) roll,pitch(2) last action(8)
ARM_ACT_DIM = 8     # 6 joint offsets + body pitch/roll command

LOG2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class PolicyConfig:
    hidden_sizes: tuple[int, ...] = (512, 256, 128)
    action_scale_leg: float = 0.25
    action_scale_arm: float = 0.5
    pitch_range: tuple[float, float] = (-0.4, 0.4)
    roll_range: tuple[float, float] = (-0.3, 0.3)
    init_log_std: float = 0.0
    scale_qd: float = 0.05          # observation scales
    scale_cmd: tuple[float, float, float, float] = (2.0, 0.25, 1.0, 1.0)

    def interface(self, role: str) -> dict:
        obs, act = ((LOCO_OBS_DIM, LOCO_ACT_DIM) if role == "loco"
                    else (ARM_OBS_DIM, ARM_ACT_DIM))
        return {
            "obs_dim": obs,
            "act_dim": act,
            "hidden_sizes": list(self.hidden_sizes),
            "action_scale_leg": self.action_scale_leg,
            "action_scale_arm": self.action_scale_arm,
            "pitch_range": list(self.pitch_range),
            "roll_range": list(self.roll_range),
            "scale_qd": self.scale_qd,
            "scale_cmd": list(self.scale_cmd),
        }

    @staticmethod
    def from_interface(d: dict) -> "PolicyConfig":
        return PolicyConfig(
            hidden_sizes=tuple(d["hidden_sizes"]),
            action_scale_leg=d["action_scale_leg"],
            action_scale_arm=d["action_scale_arm"],
            pitch_range=tuple(d["pitch_range"]),
            roll_range=tuple(d["roll_range"]),
            scale_qd=d["scale_qd"],
            scale_cmd=tuple(d["scale_cmd"]),
        )


# ---------------------------------------------------------------------------
# observations
# ---------------------------------------------------------------------------

def loco_obs_from_arrays(q_leg, qd_leg, roll_pitch, cmd, clock, last_action,
                         cfg: PolicyConfig) -> np.ndarray:
    """(…, 46) loco observation; inputs broadcast over leading dimensions."""
    cmd_scale = np.asarray(cfg.scale_cmd)
    parts = [np.asarray(q_leg, dtype=float),
             np.asarray(qd_leg, dtype=float) * cfg.scale_qd,
             np.asarray(roll_pitch, dtype=float),
             np.asarray(cmd, dtype=float) * cmd_scale,
             np.asarray(clock, dtype=float),
             np.asarray(last_action, dtype=float)]
    return np.concatenate(parts, axis=-1)


def arm_obs_from_arrays(q_arm, qd_arm, target, roll_pitch, last_action,
                        cfg: PolicyConfig) -> np.ndarray:
    """(…, 28) arm observation."""
    parts = [np.asarray(q_arm, dtype=float),
             np.asarray(qd_arm, dtype=float) * cfg.scale_qd,
             np.asarray(target, dtype=float),
             np.asarray(roll_pitch, dtype=float),
             np.asarray(last_action, dtype=float)]
    return np.concatenate(parts, axis=-1)


def build_loco_obs(state: RobotState, cmd: CommandTuple, clock_obs: np.ndarray,
                   last_action: np.ndarray, cfg: PolicyConfig) -> np.ndarray:
    rp = np.array(roll_pitch_from_rotation(state.base_rot))
    return loco_obs_from_arrays(state.q_leg, state.qd_leg, rp, cmd.as_array(),
                                clock_obs, last_action, cfg)


def build_arm_obs(state: RobotState, target, last_action: np.ndarray,
                  cfg: PolicyConfig) -> np.ndarray:
    rp = np.array(roll_pitch_from_rotation(state.base_rot))
    target = target.as_array() if hasattr(target, "as_array") else np.asarray(target)
    return arm_obs_from_arrays(state.q_arm, state.qd_arm, target, rp, last_action, cfg)


# ---------------------------------------------------------------------------
# networks
# ---------------------------------------------------------------------------

def _orthogonal(rng: np.random.Generator, rows: int, cols: int, gain: float) -> np.ndarray:
    a = rng.standard_normal((rows, cols))
    flat = rows < cols
    q, r = np.linalg.qr(a.T if flat else a)
    q = q * np.sign(np.diag(r))
    if flat:
        q = q.T
    return gain * q


class MLP:
    """Fully connected net, ELU hidden activations, linear output."""

    def __init__(self, sizes: list[int], rng: np.random.Generator,
                 out_gain: float = 0.01):
        self.sizes = list(sizes)
        self.weights = []
        self.biases = []
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            gain = out_gain if i == len(sizes) - 2 else np.sqrt(2.0)
            self.weights.append(_orthogonal(rng, a, b, gain))
            self.biases.append(np.zeros(b))

    def forward(self, x: np.ndarray, cache: list | None = None) -> np.ndarray:
        h = x
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if cache is not None:
                cache.append(h)
            z = h @ w + b
            if i < len(self.weights) - 1:
                z = np.where(z > 0.0, z, np.expm1(z))  # ELU
            h = z
        return h

    def backward(self, cache: list, grad_out: np.ndarray) -> tuple[list, list]:
        """Parameter gradients given cached layer inputs; returns (dW, db).

        For hidden layers the cached input is a post-ELU activation a, whose
        derivative is recoverable as 1 where a > 0 else a + 1.
        """
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.weights)
        g = grad_out
        for i in reversed(range(len(self.weights))):
            h_in = cache[i]
            grads_w[i] = h_in.T @ g
            grads_b[i] = g.sum(axis=0)
            if i > 0:
                g = (g @ self.weights[i].T) * np.where(h_in > 0.0, 1.0, h_in + 1.0)
        return grads_w, grads_b

    def parameters(self) -> list[np.ndarray]:
        return self.weights + self.biases

    def tensors(self, prefix: str) -> dict[str, np.ndarray]:
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"{prefix}.w{i}"] = w
            out[f"{prefix}.b{i}"] = b
        return out

    def load_tensors(self, prefix: str, tensors: dict) -> None:
        for i in range(len(self.weights)):
            self.weights[i] = np.asarray(tensors[f"{prefix}.w{i}"], dtype=float)
            self.biases[i] = np.asarray(tensors[f"{prefix}.b{i}"], dtype=float)


class ActorCritic:
    """Gaussian policy and value function over a fixed observation layout."""

    def __init__(self, obs_dim: int, act_dim: int, cfg: PolicyConfig, seed: int = 0):
        rng = np.random.Generator(np.random.PCG64(seed))
        hidden = list(cfg.hidden_sizes)
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.actor = MLP([obs_dim] + hidden + [act_dim], rng, out_gain=0.01)
        self.critic = MLP([obs_dim] + hidden + [1], rng, out_gain=1.0)
        self.log_std = np.full(act_dim, cfg.init_log_std)

    def _check(self, obs: np.ndarray) -> np.ndarray:
        obs = np.asarray(obs, dtype=float)
        if obs.shape[-1] != self.obs_dim:
            raise ShapeMismatch(
                f"observation has dim {obs.shape[-1]}, network expects {self.obs_dim}")
        return obs

    def mean(self, obs: np.ndarray) -> np.ndarray:
        return self.actor.forward(self._check(obs))

    def value(self, obs: np.ndarray) -> np.ndarray:
        return self.critic.forward(self._check(obs))[..., 0]

    def log_prob(self, obs: np.ndarray, actions: np.ndarray) -> np.ndarray:
        mean = self.mean(obs)
        z = (actions - mean) / np.exp(self.log_std)
        return (-0.5 * np.sum(z * z, axis=-1) - np.sum(self.log_std)
                - 0.5 * self.act_dim * LOG2PI)

    def act(self, obs: np.ndarray, rng: np.random.Generator | None = None
            ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(action, value, log_prob); deterministic mean when rng is None."""
        obs = self._check(obs)
        mean = self.actor.forward(obs)
        value = self.critic.forward(obs)[..., 0]
        if rng is None:
            action = mean
        else:
            std = np.exp(self.log_std)
            action = mean + std * rng.standard_normal(mean.shape)
        z = (action - mean) / np.exp(self.log_std)
        log_prob = (-0.5 * np.sum(z * z, axis=-1) - np.sum(self.log_std)
                    - 0.5 * self.act_dim * LOG2PI)
        return action, value, log_prob

    def tensors(self) -> dict[str, np.ndarray]:
        out = self.actor.tensors("actor")
        out.update(self.critic.tensors("critic"))
        out["log_std"] = self.log_std
        return out

    def load_tensors(self, tensors: dict) -> None:
        self.actor.load_tensors("actor", tensors)
        self.critic.load_tensors("critic", tensors)
        self.log_std = np.asarray(tensors["log_std"], dtype=float)


def act(net: ActorCritic, obs: np.ndarray,
        rng: np.random.Generator | None = None):
    return net.act(obs, rng)


# ---------------------------------------------------------------------------
# action decoding
# ---------------------------------------------------------------------------

def decode_leg_action(raw: np.ndarray, quad: QuadrupedModel,
                      cfg: PolicyConfig) -> np.ndarray:
    """Joint targets: default pose plus scaled offsets, clipped to limits."""
    raw = np.asarray(raw, dtype=float)
    targets = quad.default_pose + cfg.action_scale_leg * raw
    return np.clip(targets, quad.joint_limits[:, 0], quad.joint_limits[:, 1])


def decode_arm_action(raw: np.ndarray, arm: ArmModel, cfg: PolicyConfig
                      ) -> tuple[np.ndarray, np.ndarray]:
    """(arm joint targets, body pitch/roll command) from the 8-dim raw action."""
    raw = np.asarray(raw, dtype=float)
    if raw.shape[-1] != ARM_ACT_DIM:
        raise ShapeMismatch(f"arm action must have dim {ARM_ACT_DIM}, got {raw.shape[-1]}")
    joints = arm.default_pose + cfg.action_scale_arm * raw[..., :6]
    joints = np.clip(joints, arm.joint_limits[:, 0], arm.joint_limits[:, 1])
    pitch = np.clip(raw[..., 6] * cfg.pitch_range[1], *cfg.pitch_range)
    roll = np.clip(raw[..., 7] * cfg.roll_range[1], *cfg.roll_range)
    return joints, np.stack([pitch, roll], axis=-1)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

@dataclass
class PolicyCheckpoint:
    role: str                       # "loco" | "arm"
    embodiment: str                 # quadruped name for loco, arm name for arm
    interface: dict
    tensors: dict                   # name -> float32 ndarray
    metadata: dict = field(default_factory=dict)
    version: int = FORMAT_VERSION

    def __post_init__(self):
        obs = self.interface["obs_dim"]
        w0 = self.tensors.get("actor.w0")
        if w0 is not None and w0.shape[0] != obs:
            raise ShapeMismatch(
                f"interface obs_dim {obs} does not match actor.w0 rows {w0.shape[0]}")


def save_checkpoint(ckpt: PolicyCheckpoint, path: str | Path) -> None:
    names = sorted(ckpt.tensors)
    header = {
        "format_version": ckpt.version,
        "role": ckpt.role,
        "embodiment": ckpt.embodiment,
        "interface": ckpt.interface,
        "metadata": ckpt.metadata,
        "tensors": [{"name": n, "shape": list(ckpt.tensors[n].shape)} for n in names],
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    blob = bytearray()
    blob += MAGIC
    blob += np.uint32(ckpt.version).tobytes()
    blob += np.uint32(len(header_bytes)).tobytes()
    blob += header_bytes
    for n in names:
        blob += np.ascontiguousarray(ckpt.tensors[n], dtype="<f4").tobytes()
    blob += np.uint32(zlib.crc32(bytes(blob)) & 0xFFFFFFFF).tobytes()
    Path(path).write_bytes(bytes(blob))


def load_checkpoint(path: str | Path) -> PolicyCheckpoint:
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:4] != MAGIC:
        raise CorruptFile(f"{path}: not a checkpoint file")
    stored_crc = int(np.frombuffer(raw[-4:], dtype="<u4")[0])
    if zlib.crc32(raw[:-4]) & 0xFFFFFFFF != stored_crc:
        raise CorruptFile(f"{path}: checksum mismatch")
    version = int(np.frombuffer(raw[4:8], dtype="<u4")[0])
    if version != FORMAT_VERSION:
        raise VersionError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    header_len = int(np.frombuffer(raw[8:12], dtype="<u4")[0])
    header = json.loads(raw[12:12 + header_len].decode())
    tensors = {}
    offset = 12 + header_len
    for spec in header["tensors"]:
        shape = tuple(spec["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(raw, dtype="<f4", count=count, offset=offset).reshape(shape)
        tensors[spec["name"]] = arr.copy()
        offset += 4 * count
    return PolicyCheckpoint(
        role=header["role"], embodiment=header["embodiment"],
        interface=header["interface"], tensors=tensors,
        metadata=header["metadata"], version=version,
    )


def checkpoint_from_net(net: ActorCritic, role: str, embodiment: str,
                        cfg: PolicyConfig, metadata: dict | None = None
                        ) -> PolicyCheckpoint:
    tensors = {k: v.astype("<f4") for k, v in net.tensors().items()}
    return PolicyCheckpoint(role=role, embodiment=embodiment,
                            interface=cfg.interface(role), tensors=tensors,
                            metadata=metadata or {})


def net_from_checkpoint(ckpt: PolicyCheckpoint) -> tuple[ActorCritic, PolicyConfig]:
    cfg = PolicyConfig.from_interface(ckpt.interface)
    net = ActorCritic(ckpt.interface["obs_dim"], ckpt.interface["act_dim"], cfg)
    net.load_tensors(ckpt.tensors)
    return net, cfg


# ---------------------------------------------------------------------------
# composition
# ---------------------------------------------------------------------------

class ComposedController:
    """Arm policy first, its body command injected into the loco observation."""

    def __init__(self, loco_ckpt: PolicyCheckpoint, arm_ckpt: PolicyCheckpoint):
        self.loco_net, self.loco_cfg = net_from_checkpoint(loco_ckpt)
        self.arm_net, self.arm_cfg = net_from_checkpoint(arm_ckpt)
        self.quad_name = loco_ckpt.embodiment
        self.arm_name = arm_ckpt.embodiment
        self.embodiment = f"{self.quad_name}_{self.arm_name}"

    def step_arrays(self, quad: QuadrupedModel, arm: ArmModel,
                    q_leg, qd_leg, roll_pitch, v_cmd, omega_cmd, clock,
                    last_leg_action, q_arm, qd_arm, target, last_arm_action):
        """One control tick over (N, ...) arrays.

        Returns (leg_targets, arm_targets, body_cmd, raw_leg, raw_arm).
        """
        arm_obs = arm_obs_from_arrays(q_arm, qd_arm, target, roll_pitch,
                                      last_arm_action, self.arm_cfg)
        raw_arm = self.arm_net.mean(arm_obs)
        arm_targets, body_cmd = decode_arm_action(raw_arm, arm, self.arm_cfg)
        cmd = np.stack([np.asarray(v_cmd, dtype=float),
                        np.asarray(omega_cmd, dtype=float),
                        body_cmd[..., 0], body_cmd[..., 1]], axis=-1)
        loco_obs = loco_obs_from_arrays(q_leg, qd_leg, roll_pitch, cmd, clock,
                                        last_leg_action, self.loco_cfg)
        raw_leg = self.loco_net.mean(loco_obs)
        leg_targets = decode_leg_action(raw_leg, quad, self.loco_cfg)
        return leg_targets, arm_targets, body_cmd, raw_leg, raw_arm


def compose(loco_ckpt: PolicyCheckpoint, arm_ckpt: PolicyCheckpoint
            ) -> ComposedController:
    """Pair a loco checkpoint with an arm checkpoint, interface-checked only."""
    if loco_ckpt.role != "loco":
        raise InterfaceMismatch(f"first checkpoint has role '{loco_ckpt.role}', need 'loco'")
    if arm_ckpt.role != "arm":
        raise InterfaceMismatch(f"second checkpoint has role '{arm_ckpt.role}', need 'arm'")
    li, ai = loco_ckpt.interface, arm_ckpt.interface
    for key in ("pitch_range", "roll_range"):
        if list(li[key]) != list(ai[key]):
            raise InterfaceMismatch(
                f"{key} differs: loco {li[key]} vs arm {ai[key]}")
    for key, want in (("obs_dim", LOCO_OBS_DIM), ("act_dim", LOCO_ACT_DIM)):
        if li[key] != want:
            raise InterfaceMismatch(f"loco {key} is {li[key]}, expected {want}")
    for key, want in (("obs_dim", ARM_OBS_DIM), ("act_dim", ARM_ACT_DIM)):
        if ai[key] != want:
            raise InterfaceMismatch(f"arm {key} is {ai[key]}, expected {want}")
    rate_l = loco_ckpt.metadata.get("control_rate_hz")
    rate_a = arm_ckpt.metadata.get("control_rate_hz")
    if rate_l is not None and rate_a is not None and rate_l != rate_a:
        raise InterfaceMismatch(f"control_rate_hz differs: {rate_l} vs {rate_a}")
    return ComposedController(loco_ckpt, arm_ckpt)
