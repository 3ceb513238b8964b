"""Teleoperation service: one live simulator session behind a FastAPI app.

A single session owns all mutable state. The simulation loop is an asyncio
task; inbound messages land in a queue and are drained exactly once at the
start of each control tick, so per tick there is one well-defined command.
State messages stream to every connected WebSocket client each tick.

Session logs are JSONL: a header line, command-application lines, and one
line per simulated tick using the same record schema as the trajectory
exports, so a recorded session replays bit-exactly through the replay tool.
"""

from __future__ import annotations

import asyncio
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from . import protocol as P
from .commands import CommandRanges, EVALUATION_RANGES
from .config import ExperimentConfig
from .env import CoopEnv
from .evaluation import tick_measurements, traj_record, _target_rotations
from .gait import BehaviorParams
from .geometry import realizable_target_rotation
from .models import SystemModel, load_bundled
from .policy import ComposedController, compose, load_checkpoint
from .rewards import RewardConfig
from .sim import PushEvent, SimConfig


@dataclass
class SessionConfig:
    embodiment: str
    loco_ckpt: str
    arm_ckpt: str
    seed: int = 0
    stream_rate_hz: float = 50.0
    record_path: str | None = None
    pace_s: float | None = None      # wall-clock pacing; None -> control dt
    initial_command: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    experiment_toml: str | None = None  # full config text, recorded for replay

    def __post_init__(self):
        if self.stream_rate_hz <= 0:
            raise ValueError("stream rate must be > 0")


class TeleopSession:
    """Owns the simulator, the composed policy, and the command state."""

    def __init__(self, cfg: SessionConfig, experiment: ExperimentConfig | None = None):
        self.cfg = cfg
        loco = load_checkpoint(cfg.loco_ckpt)
        arm = load_checkpoint(cfg.arm_ckpt)
        self.controller: ComposedController = compose(loco, arm)
        self.model: SystemModel = load_bundled(cfg.embodiment)
        if experiment is None and cfg.experiment_toml:
            from .config import parse_experiment_config
            experiment = parse_experiment_config(cfg.experiment_toml)
        if experiment is not None:
            sim_cfg = experiment.sim
            behavior = experiment.behavior
            rewards = experiment.rewards
            self.ranges: CommandRanges = experiment.evaluation_ranges
        else:
            sim_cfg, behavior, rewards = SimConfig(), BehaviorParams(), RewardConfig()
            self.ranges = EVALUATION_RANGES
        if cfg.stream_rate_hz > sim_cfg.control_rate_hz:
            raise ValueError("stream rate cannot exceed the control rate")
        self.env = CoopEnv(self.model, sim_cfg, behavior, rewards,
                           self.controller.loco_cfg, self.ranges, 1, cfg.seed,
                           stage=2, episode_length_s=1e18,
                           resample_interval_s=1e18)
        self.env.reset_envs(np.ones(1, dtype=bool), resample=False)
        self.env.set_commands(slice(None), *cfg.initial_command,
                              target=np.zeros((1, 6)))
        self.env.target[0, 0] = 0.4  # a reachable default radius
        self._target_rot = _target_rotations(self.env.target)

        self.tick = 0
        self.paused = False
        self.server_seq = 0
        self.last_record: dict = {}
        self.inbox: asyncio.Queue = asyncio.Queue()
        self.outbox_clients: dict = {}   # websocket -> stream divisor
        self._record_fh = None
        if cfg.record_path:
            Path(cfg.record_path).parent.mkdir(parents=True, exist_ok=True)
            self._record_fh = open(cfg.record_path, "w")
            self._record_fh.write(json.dumps({
                "kind": "header", "embodiment": cfg.embodiment,
                "seed": cfg.seed, "loco_ckpt": str(cfg.loco_ckpt),
                "arm_ckpt": str(cfg.arm_ckpt),
                "initial_command": list(cfg.initial_command),
                "experiment_toml": cfg.experiment_toml,
                "protocol_version": P.PROTOCOL_VERSION,
            }) + "\n")

    # ------------------------------------------------------------------
    # message application (tick boundary)
    # ------------------------------------------------------------------

    def _apply_set_command(self, msg: P.SetCommandMsg) -> P.Ack:
        clipped: dict = {}
        updates = {}
        bounds = {"v_x": self.ranges.v_x, "omega_z": self.ranges.omega_z,
                  "pitch": self.controller.loco_cfg.pitch_range,
                  "roll": self.controller.loco_cfg.roll_range}
        for name in ("v_x", "omega_z", "pitch", "roll"):
            value = getattr(msg, name)
            if value is not None:
                lo, hi = bounds[name]
                updates[name] = P.clip_with_report(value, lo, hi, name, clipped)
        if "v_x" in updates:
            self.env.cmd[0, 0] = updates["v_x"]
        if "omega_z" in updates:
            self.env.cmd[0, 1] = updates["omega_z"]
        # pitch/roll of the command tuple are produced by the arm policy every
        # tick; explicit pitch/roll updates are recorded as clip checks only
        self._log_command()
        return P.Ack(seq=self._next_seq(), acked_seq=msg.seq,
                     applied_tick=self.tick, clipped=clipped)

    def _apply_set_target(self, msg: P.SetTargetPoseMsg) -> P.Ack:
        clipped: dict = {}
        bounds = {"l": self.ranges.l, "p": self.ranges.p, "y": self.ranges.y,
                  "alpha": self.ranges.alpha, "beta": self.ranges.beta,
                  "gamma": self.ranges.gamma}
        cols = {"l": 0, "p": 1, "y": 2, "alpha": 3, "beta": 4, "gamma": 5}
        for name, col in cols.items():
            value = getattr(msg, name)
            if value is not None:
                lo, hi = bounds[name]
                self.env.target[0, col] = P.clip_with_report(value, lo, hi,
                                                             name, clipped)
        rot, exact = realizable_target_rotation(self.env.target[0, 3:])
        self._target_rot = rot[None, :, :]
        self._log_command()
        return P.Ack(seq=self._next_seq(), acked_seq=msg.seq,
                     applied_tick=self.tick, clipped=clipped,
                     projected_orientation=not exact)

    def _apply(self, msg) -> P.Ack | P.ErrorMsg | P.HelloAck:
        if isinstance(msg, P.HelloMsg):
            if msg.protocol_version != P.PROTOCOL_VERSION:
                return P.ErrorMsg(seq=self._next_seq(), acked_seq=msg.seq,
                                  message=f"protocol version {msg.protocol_version} "
                                          f"unsupported (server {P.PROTOCOL_VERSION})")
            return P.HelloAck(seq=self._next_seq(), acked_seq=msg.seq,
                              embodiment=self.controller.embodiment,
                              control_rate_hz=self.env.sim_cfg.control_rate_hz,
                              stream_rate_hz=self.cfg.stream_rate_hz,
                              session_seed=self.cfg.seed,
                              applied_tick=self.tick)
        if isinstance(msg, P.SetCommandMsg):
            return self._apply_set_command(msg)
        if isinstance(msg, P.SetTargetPoseMsg):
            return self._apply_set_target(msg)
        if isinstance(msg, P.PushMsg):
            event = PushEvent(magnitude=msg.magnitude, direction=msg.direction,
                              start_time=float(self.env.sim.time[0]),
                              duration=self.env.sim_cfg.push_duration)
            self.env.sim.schedule_push(0, event)
            self._log_event({"kind": "push", "tick": self.tick,
                             "magnitude": msg.magnitude, "direction": msg.direction})
            return P.Ack(seq=self._next_seq(), acked_seq=msg.seq,
                         applied_tick=self.tick)
        if isinstance(msg, P.PauseMsg):
            self.paused = True
            return P.Ack(seq=self._next_seq(), acked_seq=msg.seq,
                         applied_tick=self.tick)
        if isinstance(msg, P.ResumeMsg):
            self.paused = False
            return P.Ack(seq=self._next_seq(), acked_seq=msg.seq,
                         applied_tick=self.tick)
        if isinstance(msg, P.ResetMsg):
            seed = self.cfg.seed if msg.seed is None else msg.seed
            self.env.sim.rngs[0] = np.random.Generator(np.random.PCG64(seed))
            self.env.reset_envs(np.ones(1, dtype=bool), resample=False)
            self.env.set_commands(slice(None), *self.cfg.initial_command)
            self.tick = 0
            self._log_event({"kind": "reset", "tick": 0, "seed": seed})
            return P.Ack(seq=self._next_seq(), acked_seq=msg.seq, applied_tick=0)
        return P.ErrorMsg(seq=self._next_seq(), message="unhandled message type")

    def _log_command(self):
        self._log_event({
            "kind": "command", "tick": self.tick,
            "cmd": [float(v) for v in self.env.cmd[0][:2]],
            "target": [float(v) for v in self.env.target[0]],
        })

    def _log_event(self, obj: dict):
        if self._record_fh:
            self._record_fh.write(json.dumps(obj) + "\n")

    def _next_seq(self) -> int:
        self.server_seq += 1
        return self.server_seq

    # ------------------------------------------------------------------
    # stepping
    # ------------------------------------------------------------------

    def drain_and_step(self, messages: list) -> tuple[list, P.StateMsg | None]:
        """Apply queued messages at the tick boundary, then advance one tick."""
        replies = []
        for msg in messages:
            replies.append(self._apply(msg))
        if self.paused:
            return replies, None
        quad, arm = self.model.quadruped, self.model.arm
        rp = self.env.sim.roll_pitch()
        leg_t, arm_t, body_cmd, raw_leg, raw_arm = self.controller.step_arrays(
            quad, arm, self.env.sim.q_leg, self.env.sim.qd_leg, rp,
            self.env.cmd[:, 0], self.env.cmd[:, 1], self.env.clock_obs(),
            self.env.last_leg_action, self.env.sim.q_arm, self.env.sim.qd_arm,
            self.env.target, self.env.last_arm_action)
        self.env.cmd[:, 2] = body_cmd[:, 0]
        self.env.cmd[:, 3] = body_cmd[:, 1]
        breakdown, _ = self.env.step(raw_leg, raw_arm, arm_targets=arm_t)
        self.tick += 1
        state = self._state_message(breakdown)
        # full per-tick dump record: commanded vs actual plus state, action
        # and reward channels, so replay verification covers everything
        m = tick_measurements(self.env, self._target_rot)
        rec = traj_record(self.env, self.tick, m)
        rec.update({
            "base_pos": [float(v) for v in self.env.sim.base_pos[0]],
            "q_leg": [float(v) for v in self.env.sim.q_leg[0]],
            "q_arm": [float(v) for v in self.env.sim.q_arm[0]],
            "action_leg": [float(v) for v in raw_leg[0]],
            "action_arm": [float(v) for v in raw_arm[0]],
            "r_loco": float(np.asarray(breakdown.r_loco)[0]),
            "r_arm": float(np.asarray(breakdown.r_arm)[0]),
        })
        self.last_record = rec
        if self._record_fh:
            out = dict(rec)
            out["kind"] = "tick"
            self._record_fh.write(json.dumps(out) + "\n")
            self._record_fh.flush()
        return replies, state

    def _state_message(self, breakdown) -> P.StateMsg:
        env = self.env
        m = tick_measurements(env, self._target_rot)
        rp = env.sim.roll_pitch()[0]
        yaw = float(env.sim.yaw()[0])
        tgt = env.target[0]
        cp = math.cos(tgt[1])
        target_xyz = [float(tgt[0] * cp * math.cos(tgt[2])),
                      float(tgt[0] * cp * math.sin(tgt[2])),
                      float(tgt[0] * math.sin(tgt[1]))]
        pos, _ = env.ee_pose_yaw_frame()

        # display geometry in the yaw-only frame so the console never derives it
        from .models import arm_chain_points
        rot = env.sim.rotations()[0]
        cy, sy = math.cos(yaw), math.sin(yaw)
        unyaw = np.array([[cy, sy, 0.0], [-sy, cy, 0.0], [0.0, 0.0, 1.0]])
        feet_rel = env.sim.foot_positions_world()[0] - env.sim.base_pos[0]
        feet_yaw = (unyaw @ feet_rel.T).T
        chain, _ = arm_chain_points(self.model.arm, self.model.mount,
                                    env.sim.q_arm[0])
        chain_yaw = (unyaw @ (rot @ chain.T)).T
        return P.StateMsg(
            seq=self._next_seq(),
            tick=self.tick,
            time=float(env.sim.time[0]),
            paused=self.paused,
            base=P.BaseState(pos=[float(v) for v in env.sim.base_pos[0]],
                             rpy=[float(rp[0]), float(rp[1]), yaw],
                             v_x=float(m["act_v_x"][0]),
                             omega_z=float(m["act_omega_z"][0])),
            joints=P.JointState(q_leg=list(map(float, env.sim.q_leg[0])),
                                qd_leg=list(map(float, env.sim.qd_leg[0])),
                                q_arm=list(map(float, env.sim.q_arm[0])),
                                qd_arm=list(map(float, env.sim.qd_arm[0]))),
            feet=P.FootState(contact=[bool(v) for v in env.sim.foot_forces[0] > 0],
                             forces=list(map(float, env.sim.foot_forces[0])),
                             positions=[[float(v) for v in row] for row in feet_yaw]),
            ee=P.EEState(
                actual=[float(m["act_l"][0]), float(m["act_p"][0]),
                        float(m["act_y"][0]), float(m["act_abg"][0][0]),
                        float(m["act_abg"][0][1]), float(m["act_abg"][0][2])],
                actual_xyz=[float(v) for v in pos[0]],
                target=[float(v) for v in tgt],
                target_xyz=target_xyz,
                arm_points=[[float(v) for v in row] for row in chain_yaw]),
            cmd=P.CommandState(v_x=float(env.cmd[0, 0]), omega_z=float(env.cmd[0, 1]),
                               pitch=float(env.cmd[0, 2]), roll=float(env.cmd[0, 3])),
            distance_error=float(m["D"][0]),
            angle_error=float(m["theta"][0]),
            reward_terms={k: float(np.asarray(v)[0])
                          for k, v in breakdown.terms.items()},
            r_loco=float(np.asarray(breakdown.r_loco)[0]),
            r_arm=float(np.asarray(breakdown.r_arm)[0]),
        )

    def close(self):
        if self._record_fh:
            self._record_fh.close()
            self._record_fh = None


def create_app(session: TeleopSession) -> FastAPI:
    from contextlib import asynccontextmanager

    stop = asyncio.Event()

    async def loop():
        pace = (session.cfg.pace_s if session.cfg.pace_s is not None
                else session.env.sim_cfg.control_dt)
        stream_every = max(1, int(round(session.env.sim_cfg.control_rate_hz
                                        / session.cfg.stream_rate_hz)))
        while not stop.is_set():
            messages = []
            while not session.inbox.empty():
                messages.append(session.inbox.get_nowait())
            replies, state = session.drain_and_step(messages)
            reply_payloads = [r.model_dump_json() for r in replies]
            state_payload = (state.model_dump_json()
                             if state is not None and session.tick % stream_every == 0
                             else None)
            dead = []
            for ws, divisor in list(session.outbox_clients.items()):
                try:
                    for text in reply_payloads:
                        await ws.send_text(text)
                    if state_payload is not None and session.tick % divisor == 0:
                        await ws.send_text(state_payload)
                except Exception:
                    dead.append(ws)
            for ws in dead:
                session.outbox_clients.pop(ws, None)
            await asyncio.sleep(pace)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        task = asyncio.create_task(loop())
        yield
        stop.set()
        await task
        session.close()

    app = FastAPI(title="locoarm teleop service", lifespan=lifespan)
    app.state.session = session

    @app.get("/health")
    def health():
        return {"status": "ok", "embodiment": session.controller.embodiment,
                "tick": session.tick, "paused": session.paused}

    @app.get("/session")
    def session_info():
        return {
            "embodiment": session.controller.embodiment,
            "seed": session.cfg.seed,
            "control_rate_hz": session.env.sim_cfg.control_rate_hz,
            "stream_rate_hz": session.cfg.stream_rate_hz,
            "protocol_version": P.PROTOCOL_VERSION,
            "tick": session.tick,
        }

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        # clients may request a decimated stream: /ws?stream_rate=10
        divisor = 1
        rate = ws.query_params.get("stream_rate")
        if rate:
            try:
                divisor = max(1, int(round(session.env.sim_cfg.control_rate_hz
                                           / float(rate))))
            except ValueError:
                pass
        session.outbox_clients[ws] = divisor
        try:
            while True:
                text = await ws.receive_text()
                try:
                    msg = P.parse_client_message(text)
                except Exception as exc:
                    echoed = -1
                    try:
                        import json as _json
                        maybe = _json.loads(text)
                        if isinstance(maybe, dict) and isinstance(maybe.get("seq"), int):
                            echoed = maybe["seq"]
                    except Exception:
                        pass
                    err = P.ErrorMsg(seq=session._next_seq(), acked_seq=echoed,
                                     message=f"malformed message: {exc}")
                    await ws.send_text(err.model_dump_json())
                    continue
                await session.inbox.put(msg)
        except WebSocketDisconnect:
            pass
        finally:
            session.outbox_clients.pop(ws, None)

    return app
