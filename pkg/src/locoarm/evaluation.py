"""Evaluation protocol: tracking metrics, survival, workspace volume, exports.

Episodes run 6 simulated seconds: 4 s to reach the commanded state, then
metrics averaged over the following 2 s (ticks 200..299 at 50 Hz). A command
counts as completed when the mean position error D stays within 0.03 m and
the mean orientation error theta within pi/18.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .commands import CommandRanges, CommandTuple
from .env import CoopEnv, sample_target_angles
from .errors import DegenerateInput, MissingCheckpoint
from .geometry import TargetEEPose, rotation_from_axis_angles_batch
from .policy import ActorCritic
from .sim import RUNNING, sample_push

D_THRESHOLD = 0.03
THETA_THRESHOLD = math.pi / 18.0
SETTLE_S = 4.0
MEASURE_S = 2.0

METRIC_NAMES = ("v_x", "omega_z", "l", "p", "y", "D",
                "alpha", "beta", "gamma", "theta")

TRAJ_COLUMNS = ["tick", "time",
                "cmd_v_x", "cmd_omega_z",
                "cmd_l", "cmd_p", "cmd_y", "cmd_alpha", "cmd_beta", "cmd_gamma",
                "act_v_x", "act_omega_z",
                "act_l", "act_p", "act_y", "act_alpha", "act_beta", "act_gamma",
                "D", "theta"]


@dataclass(frozen=True)
class EvalEpisodeResult:
    command: CommandTuple
    target: TargetEEPose
    errors: dict
    completed: bool
    survived: bool
    mode: str


@dataclass(frozen=True)
class WorkspaceResult:
    points: np.ndarray       # (K, 3) achieved positions of completed commands
    volume: float
    count: int
    degenerate: bool


class PolicyController:
    """Deterministic controller from trained nets; arm_net may be None."""

    def __init__(self, loco_net: ActorCritic, arm_net: ActorCritic | None = None):
        self.loco_net = loco_net
        self.arm_net = arm_net

    def tick(self, env: CoopEnv):
        arm_targets = None
        raw_arm = None
        if self.arm_net is not None:
            raw_arm = self.arm_net.mean(env.observe_arm())
            arm_targets = env.apply_arm_action(raw_arm)
        raw_leg = self.loco_net.mean(env.observe_loco())
        return raw_leg, raw_arm, arm_targets


class RandomController:
    """Seeded random-action baseline."""

    def __init__(self, seed: int = 0, with_arm: bool = False):
        self.rng = np.random.Generator(np.random.PCG64(seed))
        self.with_arm = with_arm

    def tick(self, env: CoopEnv):
        raw_leg = self.rng.normal(size=(env.n, 12))
        raw_arm = self.rng.normal(size=(env.n, 8)) if self.with_arm else None
        arm_targets = env.apply_arm_action(raw_arm) if self.with_arm else None
        return raw_leg, raw_arm, arm_targets


def tick_measurements(env: CoopEnv, target_rots: np.ndarray) -> dict:
    """All per-tick tracking quantities for the current post-step state."""
    from .geometry import axis_angles_batch
    rot = env.sim.rotations()
    v_body_x = np.einsum("nji,nj->ni", rot, env.sim.base_lin_vel)[:, 0]
    omega_z = np.einsum("nij,nj->ni", rot, env.sim.omega_body)[:, 2]
    delta_lpy, delta_abg, D, rot_ee = env.manip_errors()
    tr = np.einsum("nji,nji->n", target_rots, rot_ee)
    theta = np.arccos(np.clip((tr - 1.0) / 2.0, -1.0, 1.0))
    pos, _ = env.ee_pose_yaw_frame()
    l = np.linalg.norm(pos, axis=-1)
    safe = np.where(l > 1e-12, l, 1.0)
    return {
        "v_x": np.abs(v_body_x - env.cmd[:, 0]),
        "omega_z": np.abs(omega_z - env.cmd[:, 1]),
        "l": delta_lpy[:, 0], "p": delta_lpy[:, 1], "y": delta_lpy[:, 2],
        "D": D,
        "alpha": delta_abg[:, 0], "beta": delta_abg[:, 1],
        "gamma": delta_abg[:, 2], "theta": theta,
        "ee_pos": pos,
        "act_v_x": v_body_x, "act_omega_z": omega_z,
        "act_l": l,
        "act_p": np.arcsin(np.clip(pos[:, 2] / safe, -1.0, 1.0)),
        "act_y": np.arctan2(pos[:, 1], pos[:, 0]),
        "act_abg": axis_angles_batch(rot_ee),
    }


def traj_record(env: CoopEnv, tick: int, m: dict, i: int = 0) -> dict:
    """One exportable per-tick record for environment i."""
    return {
        "tick": tick, "time": float(env.sim.time[i]),
        "cmd_v_x": float(env.cmd[i, 0]), "cmd_omega_z": float(env.cmd[i, 1]),
        "cmd_l": float(env.target[i, 0]), "cmd_p": float(env.target[i, 1]),
        "cmd_y": float(env.target[i, 2]), "cmd_alpha": float(env.target[i, 3]),
        "cmd_beta": float(env.target[i, 4]), "cmd_gamma": float(env.target[i, 5]),
        "act_v_x": float(m["act_v_x"][i]), "act_omega_z": float(m["act_omega_z"][i]),
        "act_l": float(m["act_l"][i]), "act_p": float(m["act_p"][i]),
        "act_y": float(m["act_y"][i]),
        "act_alpha": float(m["act_abg"][i, 0]), "act_beta": float(m["act_abg"][i, 1]),
        "act_gamma": float(m["act_abg"][i, 2]),
        "D": float(m["D"][i]), "theta": float(m["theta"][i]),
    }


def _episode_metrics(env: CoopEnv, controller, ticks_total: int,
                     window_start: int, target_rots: np.ndarray,
                     push_plan: list | None = None,
                     record: list | None = None) -> tuple[dict, np.ndarray, np.ndarray, np.ndarray]:
    """Run a pinned-command batch episode and accumulate windowed errors.

    Fallen environments keep their last observed errors for the remainder of
    the window. Returns (per-metric mean arrays, survived, mean ee positions,
    measured-at-all flags).
    """
    n = env.n
    sums = {k: np.zeros(n) for k in METRIC_NAMES}
    current = {k: np.zeros(n) for k in METRIC_NAMES}
    current_pos = np.zeros((n, 3))
    ee_sum = np.zeros((n, 3))
    survived = np.ones(n, dtype=bool)
    ever_measured = np.zeros(n, dtype=bool)
    window_count = 0

    for tick in range(ticks_total):
        if push_plan:
            for (t_tick, env_idx, event) in push_plan:
                if t_tick == tick:
                    env.sim.schedule_push(env_idx, event)
        raw_leg, raw_arm, arm_targets = controller.tick(env)
        env.step(raw_leg, raw_arm, arm_targets=arm_targets)
        running = env.sim.status() == RUNNING
        survived &= running

        m = tick_measurements(env, target_rots)
        for k in METRIC_NAMES:
            current[k] = np.where(running, m[k], current[k])
        current_pos = np.where(running[:, None], m["ee_pos"], current_pos)

        if record is not None:
            record.append(traj_record(env, tick, m))

        if tick >= window_start:
            for k in METRIC_NAMES:
                sums[k] += current[k]
            ee_sum += current_pos
            ever_measured |= running
            window_count += 1

    means = {k: sums[k] / window_count for k in METRIC_NAMES}
    return means, survived, ee_sum / window_count, ever_measured


def rollout_recorded(controller, env: CoopEnv, ticks: int) -> list[dict]:
    """Free-running recorded rollout; the caller drives commands in between."""
    records = []
    for tick in range(ticks):
        raw_leg, raw_arm, arm_targets = controller.tick(env)
        env.step(raw_leg, raw_arm, arm_targets=arm_targets)
        target_rots = _target_rotations(env.target)
        records.append(traj_record(env, tick, tick_measurements(env, target_rots)))
    return records


def _target_rotations(targets: np.ndarray) -> np.ndarray:
    return rotation_from_axis_angles_batch(targets[:, 3:], strict=False)


def run_tracking_batch(controller, env: CoopEnv, commands: np.ndarray,
                       targets: np.ndarray, mode: str,
                       push_plan: list | None = None,
                       record: list | None = None) -> list[EvalEpisodeResult]:
    """Evaluate a batch of pinned (command, target) episodes in parallel."""
    dt = env.sim_cfg.control_dt
    ticks_total = int(round((SETTLE_S + MEASURE_S) / dt))
    window_start = int(round(SETTLE_S / dt))
    env.reset_envs(np.ones(env.n, dtype=bool), resample=False)
    env.set_commands(slice(None), v_x=commands[:, 0], omega=commands[:, 1],
                     pitch=commands[:, 2], roll=commands[:, 3], target=targets)
    target_rots = _target_rotations(targets)
    means, survived, ee_pos, measured = _episode_metrics(
        env, controller, ticks_total, window_start, target_rots,
        push_plan=push_plan, record=record)
    results = []
    for i in range(env.n):
        errors = {k: float(means[k][i]) for k in METRIC_NAMES}
        completed = (bool(survived[i]) and errors["D"] <= D_THRESHOLD
                     and errors["theta"] <= THETA_THRESHOLD)
        results.append(EvalEpisodeResult(
            command=CommandTuple.from_array(commands[i]),
            target=TargetEEPose.from_array(targets[i]),
            errors=errors, completed=completed,
            survived=bool(survived[i]), mode=mode))
    results_ee = ee_pos
    for r, pos in zip(results, results_ee):
        r.errors["ee_x"], r.errors["ee_y"], r.errors["ee_z"] = (float(v) for v in pos)
    return results


def run_tracking_episode(controller, env: CoopEnv, command: CommandTuple,
                         target: TargetEEPose, mode: str,
                         record: list | None = None) -> EvalEpisodeResult:
    """Single-episode wrapper over the batched runner (env must have n == 1)."""
    if env.n != 1:
        raise ValueError("run_tracking_episode needs a single-environment CoopEnv")
    if mode == "still":
        command = CommandTuple(0.0, 0.0, command.phi_pitch, command.phi_roll)
    return run_tracking_batch(controller, env, command.as_array()[None, :],
                              target.as_array()[None, :], mode, record=record)[0]


def sample_eval_batch(ranges: CommandRanges, rng: np.random.Generator, n: int,
                      mode: str, pitch_range=(-0.4, 0.4), roll_range=(-0.3, 0.3),
                      with_target: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """(commands (n, 4), targets (n, 6)) for an evaluation batch."""
    commands = np.zeros((n, 4))
    targets = np.zeros((n, 6))
    for i in range(n):
        if mode == "move":
            commands[i, 0] = rng.uniform(*ranges.v_x)
            commands[i, 1] = rng.uniform(*ranges.omega_z)
        if not with_target:
            commands[i, 2] = rng.uniform(*pitch_range)
            commands[i, 3] = rng.uniform(*roll_range)
        else:
            targets[i, 0] = rng.uniform(*ranges.l)
            targets[i, 1] = rng.uniform(*ranges.p)
            targets[i, 2] = rng.uniform(*ranges.y)
            targets[i, 3:] = sample_target_angles(rng, ranges)
    return commands, targets


def survival_test(controller, env: CoopEnv, n_episodes: int,
                  rng: np.random.Generator, ranges: CommandRanges,
                  mode: str = "still", with_pushes: bool = True,
                  with_target: bool = True) -> float:
    """Fraction of episodes that never fall; pushes land at random times."""
    if n_episodes < 1:
        raise ValueError("need at least one episode")
    total_survived = 0
    done = 0
    dt = env.sim_cfg.control_dt
    ticks_total = int(round((SETTLE_S + MEASURE_S) / dt))
    while done < n_episodes:
        batch = min(env.n, n_episodes - done)
        commands, targets = sample_eval_batch(ranges, rng, env.n, mode,
                                              with_target=with_target)
        push_plan = []
        if with_pushes:
            for i in range(batch):
                for push_tick in (50, 150, 250):
                    jitter = int(rng.integers(0, 50))
                    tick = push_tick + jitter
                    event = sample_push(rng, env.sim_cfg, start_time=0.0)
                    push_plan.append((tick, i, event))
        results = run_tracking_batch(controller, env, commands, targets, mode,
                                     push_plan=_materialize(push_plan, env, dt))
        total_survived += sum(r.survived for r in results[:batch])
        done += batch
    return total_survived / n_episodes


def _materialize(push_plan, env, dt):
    # push start times are tick-relative; schedule_push needs absolute sim time,
    # which is tick * dt after a reset
    out = []
    for tick, env_idx, event in push_plan:
        from .sim import PushEvent
        out.append((tick, env_idx, PushEvent(event.magnitude, event.direction,
                                             start_time=tick * dt,
                                             duration=event.duration)))
    return out


def convex_hull_volume(points: np.ndarray) -> tuple[float, bool]:
    """(volume, degenerate) of the hull of (K, 3) points.

    Quickhull supplies the facets; the volume is the sum of tetrahedra from
    the hull centroid, divided once at the end so integer-coordinate solids
    come out exact.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or (points.size and points.shape[1] != 3):
        raise DegenerateInput(f"expected (K, 3) points, got {points.shape}")
    if points.shape[0] < 4:
        return 0.0, True
    try:
        from scipy.spatial import ConvexHull, QhullError
        hull = ConvexHull(points)
    except QhullError:
        return 0.0, True
    centroid = points[np.unique(hull.simplices)].mean(axis=0)
    tri = points[hull.simplices] - centroid
    dets = np.abs(np.linalg.det(tri))
    return float(dets.sum() / 6.0), False


def workspace_eval(controller, env: CoopEnv, ranges: CommandRanges,
                   n_commands: int, rng: np.random.Generator,
                   mode: str = "still") -> WorkspaceResult:
    """Hull volume of achieved end-effector positions over completed commands."""
    cloud = []
    done = 0
    while done < n_commands:
        batch = min(env.n, n_commands - done)
        commands, targets = sample_eval_batch(ranges, rng, env.n, mode)
        results = run_tracking_batch(controller, env, commands, targets, mode)
        for r in results[:batch]:
            if r.completed:
                cloud.append([r.errors["ee_x"], r.errors["ee_y"], r.errors["ee_z"]])
        done += batch
    points = np.array(cloud) if cloud else np.zeros((0, 3))
    volume, degenerate = convex_hull_volume(points)
    return WorkspaceResult(points=points, volume=volume,
                           count=len(cloud), degenerate=degenerate)


def aggregate_results(results: list[EvalEpisodeResult]) -> dict:
    """Mean error per metric plus survival and completion rates."""
    out = {}
    for k in METRIC_NAMES:
        out[k] = float(np.mean([r.errors[k] for r in results]))
    out["survival_rate"] = float(np.mean([r.survived for r in results]))
    out["completion_rate"] = float(np.mean([r.completed for r in results]))
    return out


def checkpoint_ensemble_eval(run_dir: str | Path, spacing: int, count: int,
                             eval_fn) -> dict:
    """Per-metric mean and population stddev over trailing checkpoints.

    eval_fn(loco_path, arm_path or None) -> dict of metric values. Checkpoints
    are taken every `spacing` iterations backward from the newest.
    """
    run_dir = Path(run_dir)
    loco = {int(p.stem.split("_")[-1]): p for p in run_dir.glob("ckpt_loco_*.lacp")}
    arm = {int(p.stem.split("_")[-1]): p for p in run_dir.glob("ckpt_arm_*.lacp")}
    if not loco:
        raise MissingCheckpoint(f"no loco checkpoints under {run_dir}")
    newest = max(loco)
    wanted = [newest - i * spacing for i in range(count)]
    missing = [it for it in wanted if it not in loco]
    if missing:
        raise MissingCheckpoint(
            f"missing checkpoints at iterations {missing} (have {sorted(loco)})")
    per_metric: dict[str, list[float]] = {}
    for it in wanted:
        metrics = eval_fn(loco[it], arm.get(it))
        for k, v in metrics.items():
            per_metric.setdefault(k, []).append(float(v))
    out = {}
    for k, vals in per_metric.items():
        arr = np.array(vals)
        out[k] = {"mean": float(arr.mean()), "std": float(arr.std())}
    return out


def export_trajectory(records: list[dict], path_base: str | Path) -> tuple[Path, Path]:
    """Write an episode's per-tick commanded-vs-actual log as JSONL and CSV."""
    base = Path(path_base)
    jsonl = base.with_suffix(".jsonl")
    csv_path = base.with_suffix(".csv")
    base.parent.mkdir(parents=True, exist_ok=True)
    with open(jsonl, "w") as fh:
        for r in records:
            fh.write(json.dumps({k: r[k] for k in TRAJ_COLUMNS}) + "\n")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=TRAJ_COLUMNS)
        writer.writeheader()
        for r in records:
            writer.writerow({k: repr(r[k]) if isinstance(r[k], float) else r[k]
                             for k in TRAJ_COLUMNS})
    return jsonl, csv_path


def results_table_csv(rows: dict[str, dict], path: str | Path) -> Path:
    """Write the metrics table: one row per metric, mean/std per mode."""
    path = Path(path)
    modes = sorted(rows)
    metrics = list(METRIC_NAMES) + ["survival_rate", "workspace_m3", "completion_rate"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric"] + [f"{m}_mean" for m in modes]
                        + [f"{m}_std" for m in modes])
        for metric in metrics:
            row = [metric]
            for m in modes:
                cell = rows[m].get(metric)
                row.append(repr(cell["mean"]) if isinstance(cell, dict)
                           else (repr(cell) if cell is not None else ""))
            for m in modes:
                cell = rows[m].get(metric)
                row.append(repr(cell["std"]) if isinstance(cell, dict) else "")
            writer.writerow(row)
    return path
