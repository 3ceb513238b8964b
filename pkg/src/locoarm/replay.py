"""Offline replay of recorded teleoperation sessions.

A session log fully determines the trajectory: the header carries the
embodiment, seed and checkpoint paths; command/push/reset events carry the
tick they were applied at. Re-simulating and comparing the per-tick records
verifies the determinism contract bit-exactly (floats survive the JSON round
trip unchanged).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParseError
from .evaluation import export_trajectory
from .geometry import realizable_target_rotation


@dataclass
class ReplayReport:
    ticks: int
    bit_exact: bool | None = None
    mismatched_ticks: list = field(default_factory=list)
    exported: list = field(default_factory=list)


def load_session_log(path: Path) -> tuple[dict, list[dict], list[dict]]:
    """(header, events, tick_records) from a session JSONL file."""
    header = None
    events, ticks = [], []
    with open(path) as fh:
        for line in fh:
            obj = json.loads(line)
            kind = obj.get("kind")
            if kind == "header":
                header = obj
            elif kind == "tick":
                ticks.append(obj)
            elif kind in ("command", "push", "reset"):
                events.append(obj)
            else:
                raise ParseError(f"{path}: unknown record kind '{kind}'")
    if header is None:
        raise ParseError(f"{path}: missing session header")
    return header, events, ticks


def _resimulate(header: dict, events: list[dict], n_ticks: int) -> list[dict]:
    from .teleop import SessionConfig, TeleopSession

    cfg = SessionConfig(
        embodiment=header["embodiment"],
        loco_ckpt=header["loco_ckpt"],
        arm_ckpt=header["arm_ckpt"],
        seed=header["seed"],
        initial_command=tuple(header.get("initial_command", (0, 0, 0, 0))),
        experiment_toml=header.get("experiment_toml"),
    )
    session = TeleopSession(cfg)
    by_tick: dict[int, list[dict]] = {}
    for ev in events:
        by_tick.setdefault(ev["tick"], []).append(ev)

    records = []
    for _ in range(n_ticks):
        for ev in by_tick.get(session.tick, []):
            if ev["kind"] == "command":
                session.env.cmd[0, 0] = ev["cmd"][0]
                session.env.cmd[0, 1] = ev["cmd"][1]
                session.env.target[0] = np.array(ev["target"])
                rot, _ = realizable_target_rotation(session.env.target[0, 3:])
                session._target_rot = rot[None, :, :]
            elif ev["kind"] == "push":
                from .sim import PushEvent
                session.env.sim.schedule_push(0, PushEvent(
                    magnitude=ev["magnitude"], direction=ev["direction"],
                    start_time=float(session.env.sim.time[0]),
                    duration=session.env.sim_cfg.push_duration))
            elif ev["kind"] == "reset":
                seed = ev["seed"]
                session.env.sim.rngs[0] = np.random.Generator(np.random.PCG64(seed))
                session.env.reset_envs(np.ones(1, dtype=bool), resample=False)
                session.env.set_commands(slice(None), *cfg.initial_command)
                session.tick = 0
        session.drain_and_step([])
        records.append(session.last_record)
    return records


def replay_session(path: Path, export_base: Path | None = None,
                   verify: bool = False) -> ReplayReport:
    header, events, recorded = load_session_log(path)
    report = ReplayReport(ticks=len(recorded))
    if export_base is not None:
        jsonl, csv_path = export_trajectory(recorded, export_base)
        report.exported = [jsonl, csv_path]
    if verify:
        replayed = _resimulate(header, events, len(recorded))
        mismatches = []
        for rec, rep in zip(recorded, replayed):
            for col in rec:
                if col == "kind":
                    continue
                if rec[col] != rep.get(col):
                    mismatches.append((rec["tick"], col, rec[col], rep.get(col)))
                    break
        report.bit_exact = not mismatches
        report.mismatched_ticks = mismatches[:10]
    return report
