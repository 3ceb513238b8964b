import math

import numpy as np
import pytest

from locoarm import evaluation as EV
from locoarm.commands import EVALUATION_RANGES, CommandTuple
from locoarm.env import CoopEnv
from locoarm.errors import MissingCheckpoint
from locoarm.gait import BehaviorParams
from locoarm.geometry import TargetEEPose, axis_angles_batch, spherical_from_cartesian
from locoarm.models import arm_forward_kinematics, load_bundled
from locoarm.policy import PolicyConfig
from locoarm.rewards import RewardConfig
from locoarm.sim import SimConfig

MODEL = load_bundled("go1_arx5")
PCFG = PolicyConfig(hidden_sizes=(16, 8))


def make_env(n, seed=0, stage=2):
    return CoopEnv(MODEL, SimConfig(), BehaviorParams(), RewardConfig(), PCFG,
                   EVALUATION_RANGES, n, seed, stage=stage,
                   episode_length_s=1e9, resample_interval_s=1e9)


class HoldDefaultController:
    """Zero action: PD holds the default standing pose."""

    def tick(self, env):
        return np.zeros((env.n, 12)), None, None


class FallController:
    """Immediately drives all joints against one limit; the robot collapses."""

    def tick(self, env):
        return np.full((env.n, 12), -4.0), None, None


def standing_ee_target(env):
    """Target equal to the standing robot's own end-effector pose."""
    env.reset_envs(np.ones(env.n, dtype=bool), resample=False)
    ctrl = HoldDefaultController()
    for _ in range(100):
        rl, ra, at = ctrl.tick(env)
        env.step(rl, ra, arm_targets=at)
    pos, rot_ee = env.ee_pose_yaw_frame()
    l, p, y = spherical_from_cartesian(pos[0])
    abg = axis_angles_batch(rot_ee[0])
    return np.array([l, p, y, abg[0], abg[1], abg[2]])


# ---------------------------------------------------------------------------
# tracking episodes
# ---------------------------------------------------------------------------

def test_self_consistent_target_completes():
    # the target is the standing robot's own pose, so a standing controller
    # tracks it perfectly: the whole metric pipeline must report ~zero errors
    env = make_env(2, seed=1)
    target = standing_ee_target(env)
    commands = np.zeros((2, 4))
    targets = np.tile(target, (2, 1))
    results = EV.run_tracking_batch(HoldDefaultController(), env, commands,
                                    targets, "still")
    for r in results:
        assert r.survived
        assert r.errors["D"] < 0.01
        assert r.errors["theta"] < 0.05
        assert r.errors["v_x"] < 0.02
        assert r.completed


def test_random_controller_fails():
    env = make_env(4, seed=2)
    commands, targets = EV.sample_eval_batch(EVALUATION_RANGES,
                                             np.random.default_rng(3), 4, "move")
    results = EV.run_tracking_batch(EV.RandomController(seed=1), env,
                                    commands, targets, "move")
    assert not any(r.completed for r in results)


def test_fallen_episode_marked():
    env = make_env(2, seed=3)
    commands = np.zeros((2, 4))
    targets = np.tile(standing_ee_target(env), (2, 1))
    results = EV.run_tracking_batch(FallController(), env, commands, targets, "still")
    for r in results:
        assert not r.survived
        assert not r.completed


def test_measurement_window_ticks():
    dt = SimConfig().control_dt
    assert int(round(EV.SETTLE_S / dt)) == 200
    assert int(round((EV.SETTLE_S + EV.MEASURE_S) / dt)) == 300


def test_still_mode_zeroes_velocity():
    env = make_env(1, seed=4)
    cmd = CommandTuple(v_x=1.0, omega_yaw=0.5)
    target = TargetEEPose.from_array(standing_ee_target(env))
    res = EV.run_tracking_episode(HoldDefaultController(), env, cmd, target, "still")
    assert res.command.v_x == 0.0 and res.command.omega_yaw == 0.0


# ---------------------------------------------------------------------------
# survival
# ---------------------------------------------------------------------------

def test_survival_standing_no_pushes():
    env = make_env(4, seed=5)
    rate = EV.survival_test(HoldDefaultController(), env, 4,
                            np.random.default_rng(0), EVALUATION_RANGES,
                            mode="still", with_pushes=False, with_target=False)
    assert rate == 1.0


def test_survival_faller_is_zero():
    env = make_env(4, seed=6)
    rate = EV.survival_test(FallController(), env, 4,
                            np.random.default_rng(0), EVALUATION_RANGES,
                            mode="still", with_pushes=False, with_target=False)
    assert rate == 0.0


def test_survival_deterministic_given_seed():
    rates = []
    for _ in range(2):
        env = make_env(4, seed=7)
        rates.append(EV.survival_test(HoldDefaultController(), env, 4,
                                      np.random.default_rng(9), EVALUATION_RANGES,
                                      mode="still", with_pushes=True,
                                      with_target=False))
    assert rates[0] == rates[1]


# ---------------------------------------------------------------------------
# convex hull
# ---------------------------------------------------------------------------

def test_hull_unit_cube_exact():
    corners = np.array([[x, y, z] for x in (0.0, 1.0)
                        for y in (0.0, 1.0) for z in (0.0, 1.0)])
    volume, degenerate = EV.convex_hull_volume(corners)
    assert volume == 1.0
    assert not degenerate


def test_hull_unit_tetrahedron():
    pts = np.array([[0.0, 0, 0], [1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0]])
    volume, degenerate = EV.convex_hull_volume(pts)
    assert abs(volume - 1.0 / 6.0) <= 1e-12
    assert not degenerate


def mc_rejection_volume(points, n_samples, rng):
    """Monte Carlo oracle: membership via linear programming, not via qhull."""
    from scipy.optimize import linprog
    lo, hi = points.min(axis=0), points.max(axis=0)
    box = np.prod(hi - lo)
    K = len(points)
    # p inside hull iff some convex combination of points equals p
    A_eq = np.vstack([points.T, np.ones(K)])
    inside = 0
    samples = rng.uniform(lo, hi, size=(n_samples, 3))
    for s in samples:
        res = linprog(np.zeros(K), A_eq=A_eq, b_eq=np.append(s, 1.0),
                      bounds=[(0, None)] * K, method="highs")
        inside += bool(res.success)
    return box * inside / n_samples


def test_hull_random_cloud_vs_monte_carlo():
    rng = np.random.default_rng(12)
    points = rng.uniform(-1.0, 1.0, size=(500, 3))
    volume, degenerate = EV.convex_hull_volume(points)
    assert not degenerate
    oracle = mc_rejection_volume(points, 3000, np.random.default_rng(13))
    assert abs(volume - oracle) / oracle < 0.02


def test_hull_rotation_invariance():
    rng = np.random.default_rng(14)
    points = rng.normal(size=(200, 3))
    v0, _ = EV.convex_hull_volume(points)
    from locoarm.geometry import compose_rotation
    R = compose_rotation(0.7, -0.4, 1.1)
    v1, _ = EV.convex_hull_volume(points @ R.T)
    assert abs(v1 - v0) / v0 <= 1e-9


def test_hull_scaling_cubic():
    rng = np.random.default_rng(15)
    points = rng.normal(size=(100, 3))
    v0, _ = EV.convex_hull_volume(points)
    v2, _ = EV.convex_hull_volume(2.5 * points)
    assert v2 == pytest.approx(2.5 ** 3 * v0, rel=1e-12)


def test_hull_degenerate_inputs():
    assert EV.convex_hull_volume(np.zeros((3, 3))) == (0.0, True)
    coplanar = np.array([[0.0, 0, 0], [1.0, 0, 0], [0, 1.0, 0], [1.0, 1.0, 0]])
    volume, degenerate = EV.convex_hull_volume(coplanar)
    assert volume == 0.0 and degenerate


def test_hull_monotone_in_points():
    rng = np.random.default_rng(16)
    points = rng.normal(size=(50, 3))
    v0, _ = EV.convex_hull_volume(points)
    more = np.vstack([points, rng.normal(size=(20, 3))])
    v1, _ = EV.convex_hull_volume(more)
    assert v1 >= v0 - 1e-12


# ---------------------------------------------------------------------------
# workspace, ensemble, export
# ---------------------------------------------------------------------------

def test_workspace_no_completions_degenerate():
    env = make_env(4, seed=8)
    result = EV.workspace_eval(EV.RandomController(seed=2), env,
                               EVALUATION_RANGES, 4, np.random.default_rng(4))
    assert result.volume == 0.0
    assert result.degenerate
    assert result.count == 0


def test_ensemble_requires_checkpoints(tmp_path):
    with pytest.raises(MissingCheckpoint):
        EV.checkpoint_ensemble_eval(tmp_path, 100, 2, lambda l, a: {})


def test_ensemble_mean_std(tmp_path):
    # two fake checkpoints with metric values 1.0 and 2.0
    for it in (100, 200):
        (tmp_path / f"ckpt_loco_{it:06d}.lacp").write_bytes(b"")
    vals = iter([2.0, 1.0])  # newest first
    out = EV.checkpoint_ensemble_eval(tmp_path, 100, 2,
                                      lambda l, a: {"metric": next(vals)})
    assert out["metric"]["mean"] == 1.5
    assert out["metric"]["std"] == 0.5


def test_ensemble_identical_values_zero_std(tmp_path):
    for it in (100, 200, 300):
        (tmp_path / f"ckpt_loco_{it:06d}.lacp").write_bytes(b"")
    out = EV.checkpoint_ensemble_eval(tmp_path, 100, 3, lambda l, a: {"m": 0.7})
    assert out["m"]["mean"] == pytest.approx(0.7, abs=1e-15)
    assert out["m"]["std"] == pytest.approx(0.0, abs=1e-15)


def test_export_trajectory_columns_and_rows(tmp_path):
    env = make_env(1, seed=9)
    env.reset_envs(np.ones(1, dtype=bool), resample=False)
    records = EV.rollout_recorded(HoldDefaultController(), env, 20)
    jsonl, csv_path = EV.export_trajectory(records, tmp_path / "episode")
    import csv as csv_mod
    with open(csv_path) as fh:
        rows = list(csv_mod.reader(fh))
    assert rows[0] == EV.TRAJ_COLUMNS
    assert len(rows) == 21
    import json
    with open(jsonl) as fh:
        lines = [json.loads(line) for line in fh]
    assert len(lines) == 20
    assert set(lines[0]) == set(EV.TRAJ_COLUMNS)


def test_command_switch_discontinuity(tmp_path):
    env = make_env(1, seed=10)
    env.reset_envs(np.ones(1, dtype=bool), resample=False)
    target_a = standing_ee_target(env)
    target_b = target_a + np.array([0.2, 0.1, 0.3, 0.0, 0.0, 0.0])
    env.reset_envs(np.ones(1, dtype=bool), resample=False)
    env.set_commands(slice(None), v_x=0.0, omega=0.0, pitch=0.0, roll=0.0,
                     target=target_a[None, :])
    ctrl = HoldDefaultController()
    records = EV.rollout_recorded(ctrl, env, 50)
    env.set_commands(slice(None), target=target_b[None, :])
    records += EV.rollout_recorded(ctrl, env, 50)
    cmd_l = np.array([r["cmd_l"] for r in records])
    act_l = np.array([r["act_l"] for r in records])
    # commanded trace jumps at the switch; the actual trace stays continuous
    assert abs(cmd_l[50] - cmd_l[49]) > 0.19
    assert np.abs(np.diff(act_l)).max() < 0.02


def test_aggregate_results_shape():
    env = make_env(2, seed=11)
    commands = np.zeros((2, 4))
    targets = np.tile(standing_ee_target(env), (2, 1))
    results = EV.run_tracking_batch(HoldDefaultController(), env, commands,
                                    targets, "still")
    agg = EV.aggregate_results(results)
    assert set(EV.METRIC_NAMES) <= set(agg)
    assert "survival_rate" in agg and "completion_rate" in agg
