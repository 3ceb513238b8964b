"""Acceptance suite: one test per criterion, run at the stated tolerances.

The end-to-end criteria train real policies with configs/desk.toml. Trained
artifacts are cached under .acceptance_cache/<config-hash>/ next to this
repo so repeated runs do not retrain; delete the cache to force a full
rebuild. Each criterion prints a PASS/FAIL line.
"""

import dataclasses
import json
import math
import shutil
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest

from locoarm import evaluation as EV
from locoarm import gait as GT
from locoarm import geometry as G
from locoarm import rewards as RW
from locoarm import trainer as TR
from locoarm.commands import EVALUATION_RANGES
from locoarm.config import load_experiment_config
from locoarm.env import CoopEnv
from locoarm.errors import InterfaceMismatch
from locoarm.models import load_bundled
from locoarm.policy import (ActorCritic, PolicyConfig, compose,
                            load_checkpoint, net_from_checkpoint,
                            save_checkpoint)
from locoarm.sim import SimConfig, Simulator, VecSim

REPO = Path(__file__).resolve().parent.parent
DESK_CONFIG = REPO / "configs" / "desk.toml"
CACHE_ROOT = REPO / ".acceptance_cache"

STAGE1_BUDGET_S = 30 * 60
STAGE2_BUDGET_S = 90 * 60


@contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        print(f"\nACCEPTANCE {name}: FAIL", flush=True)
        raise
    print(f"\nACCEPTANCE {name}: PASS", flush=True)


# ---------------------------------------------------------------------------
# trained-artifact fixtures (cached by config hash)
# ---------------------------------------------------------------------------

@pytest.fixture(scope="session")
def desk():
    return load_experiment_config(DESK_CONFIG)


def _train_cached(desk, tag, embodiment, stages, resume=None):
    cache = CACHE_ROOT / desk.config_hash[:16] / tag
    meta_path = cache / "train_meta.json"
    if meta_path.exists():
        return cache, json.loads(meta_path.read_text())
    cache.mkdir(parents=True, exist_ok=True)
    model = load_bundled(embodiment)
    loco_init = None
    if resume is not None:
        loco_init, _ = net_from_checkpoint(load_checkpoint(resume))
    t0 = time.time()
    result = TR.run_two_stage(model, desk.sim, desk.behavior, desk.rewards,
                              desk.policy, desk.training_ranges, desk.train,
                              cache, stages=stages, loco_init=loco_init,
                              config_hash=desk.config_hash)
    meta = {
        "wall_s": time.time() - t0,
        "loco": str(result.loco_checkpoint),
        "arm": str(result.arm_checkpoint) if result.arm_checkpoint else None,
        "stages": list(stages),
        "embodiment": embodiment,
    }
    meta_path.write_text(json.dumps(meta, indent=2))
    return cache, meta


@pytest.fixture(scope="session")
def stage1_run(desk):
    return _train_cached(desk, "stage1_go1", "go1_arx5", (1,))


@pytest.fixture(scope="session")
def stage2_run(desk, stage1_run):
    _, meta1 = stage1_run
    return _train_cached(desk, "stage2_go1", "go1_arx5", (2,),
                         resume=meta1["loco"])


@pytest.fixture(scope="session")
def stage1_run_a1(desk):
    return _train_cached(desk, "stage1_a1", "a1_arx5", (1,))


def make_eval_env(desk, embodiment, pcfg, n, seed, stage):
    return CoopEnv(load_bundled(embodiment), desk.sim, desk.behavior,
                   desk.rewards, pcfg, desk.evaluation_ranges, n, seed,
                   stage=stage, episode_length_s=1e18,
                   resample_interval_s=1e18)


# ---------------------------------------------------------------------------
# criterion 1: euler/rotation suite
# ---------------------------------------------------------------------------

def test_euler_rotation_suite():
    with criterion("euler-rotation round trip"):
        t0 = time.time()
        rng = np.random.default_rng(100)
        n = 10_000
        ez = rng.uniform(-0.45 * np.pi, 0.45 * np.pi, n)
        ex = rng.uniform(-0.33 * np.pi, 0.33 * np.pi, n)
        ey = rng.uniform(-0.42 * np.pi, 0.42 * np.pi, n)
        R = G.compose_rotation_batch(ez, ey, ex)
        angles = G.axis_angles_batch(R)
        R2 = G.rotation_from_axis_angles_batch(angles)
        back = G.axis_angles_batch(R2)
        max_err = float(np.abs(G.wrap_angle(back - angles)).max())
        assert max_err <= 1e-9, f"round-trip error {max_err}"
        ortho = np.abs(np.einsum("bji,bjk->bik", R2, R2) - np.eye(3)).max()
        det = np.abs(np.linalg.det(R2) - 1.0).max()
        assert ortho <= 1e-9 and det <= 1e-9
        elapsed = time.time() - t0
        assert elapsed < 5.0, f"euler suite took {elapsed:.1f}s"


# ---------------------------------------------------------------------------
# criterion 2: gait suite
# ---------------------------------------------------------------------------

def test_gait_suite():
    with criterion("gait trot/freeze/stance"):
        params = GT.BehaviorParams()
        ts = np.linspace(0.0, 1.0, 1000, endpoint=False)
        obs = GT.clock_observation_batch(ts, np.zeros(1000, dtype=bool), params)
        assert np.all(obs[:, 0] == obs[:, 3])
        assert np.all(obs[:, 1] == obs[:, 2])
        frozen = GT.clock_observation_batch(ts, np.ones(1000, dtype=bool), params)
        assert np.all(frozen == 1.0)
        phases = GT.foot_phases_batch(ts, params)
        boundary = np.any(np.isclose(phases, 0.5, atol=1e-9)
                          | np.isclose(phases, 0.0, atol=1e-9)
                          | np.isclose(phases, 1.0, atol=1e-9), axis=1)
        counts = GT.desired_contact_batch(phases).sum(axis=1)
        assert np.all(counts[~boundary] == 2.0)


# ---------------------------------------------------------------------------
# criterion 3: reward oracles
# ---------------------------------------------------------------------------

def test_reward_oracle_suite():
    with criterion("reward oracles"):
        swing_one = np.array([1.0, 1.0, 1.0, 0.0])
        assert RW.r_contact_force(np.ones(4), np.full(4, 50.0), 100.0) == 0.0
        assert RW.r_contact_force(swing_one, np.zeros(4), 100.0) == 1.0
        got = RW.r_contact_force(swing_one, np.array([0, 0, 0, 10.0]), 100.0)
        assert abs(got - math.exp(-1.0)) <= 1e-12
        got = RW.r_foot_velocity(np.array([1.0, 0, 0, 0]),
                                 np.array([0.5, 0, 0, 0]), 0.25)
        assert abs(got - math.exp(-1.0)) <= 1e-12
        actual = np.zeros((4, 2))
        actual[1] = [0.03, 0.04]
        assert abs(RW.r_raibert(actual, np.zeros((4, 2))) - 0.0025) <= 1e-12
        got = RW.r_swing_height(swing_one, np.array([0, 0, 0, 0.02]), 0.06)
        assert abs(got - 0.0016) <= 1e-12
        got = RW.r_manip(np.array([0.1, 0, 0]), np.array([0.3, 0, 0]), 2.0)
        assert abs(got - math.exp(-0.5)) <= 1e-12
        assert RW.r_manip(np.zeros(3), np.zeros(3), 2.0) == 1.0

        rng = np.random.default_rng(7)
        d = rng.uniform(0.0, 3.0, (100_000, 6))
        vals = RW.r_manip(d[:, :3], d[:, 3:], 2.0)
        assert np.all(vals > 0.0) and np.all(vals <= 1.0)
        bump = d.copy()
        idx = rng.integers(0, 6, size=len(d))
        bump[np.arange(len(d)), idx] += rng.uniform(0.01, 1.0, len(d))
        assert np.all(RW.r_manip(bump[:, :3], bump[:, 3:], 2.0) < vals)


# ---------------------------------------------------------------------------
# criterion 4: hull suite
# ---------------------------------------------------------------------------

def test_hull_suite():
    with criterion("convex hull"):
        t0 = time.time()
        corners = np.array([[x, y, z] for x in (0.0, 1.0)
                            for y in (0.0, 1.0) for z in (0.0, 1.0)])
        assert EV.convex_hull_volume(corners)[0] == 1.0
        tetra = np.array([[0.0, 0, 0], [1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0]])
        assert abs(EV.convex_hull_volume(tetra)[0] - 1.0 / 6.0) <= 1e-12

        from test_evaluation import mc_rejection_volume
        rng = np.random.default_rng(21)
        points = rng.uniform(-1, 1, (500, 3))
        volume, _ = EV.convex_hull_volume(points)
        oracle = mc_rejection_volume(points, 3000, np.random.default_rng(22))
        assert abs(volume - oracle) / oracle < 0.02

        R = G.compose_rotation(0.9, -0.5, 1.3)
        rotated, _ = EV.convex_hull_volume(points @ R.T)
        assert abs(rotated - volume) / volume <= 1e-9
        elapsed = time.time() - t0
        assert elapsed < 30.0, f"hull suite took {elapsed:.1f}s"


# ---------------------------------------------------------------------------
# criterion 5: PPO correctness
# ---------------------------------------------------------------------------

def test_ppo_correctness():
    with criterion("PPO gradient/ratio/GAE"):
        cfg = TR.TrainConfig(stage1_iterations=1, stage2_iterations=1,
                             num_envs=2, horizon=4, pretrain_ticks=0)
        pcfg = PolicyConfig(hidden_sizes=(8, 6), init_log_std=-0.2)
        net = ActorCritic(4, 2, pcfg, seed=11)
        rng = np.random.default_rng(12)
        obs = rng.normal(size=(3, 4))
        actions = rng.normal(size=(3, 2))
        old_logp = net.log_prob(obs, actions) + rng.normal(size=3) * 0.1
        adv = rng.normal(size=3)
        ret = rng.normal(size=3)

        def loss():
            logp = net.log_prob(obs, actions)
            ratio = np.exp(logp - old_logp)
            surr = TR.clipped_surrogate(ratio, adv, cfg.clip_eps)
            ent = np.sum(net.log_std) + 0.5 * 2 * (1 + np.log(2 * np.pi))
            v = net.value(obs)
            return (-np.mean(surr) - cfg.entropy_coef * ent
                    + cfg.value_coef * np.mean((v - ret) ** 2))

        grads, _ = TR.policy_gradients(net, obs, actions, old_logp, adv, ret, cfg)
        h = 1e-6
        checked = 0
        idx_rng = np.random.default_rng(13)
        for p, g in zip(TR.net_parameters(net), grads):
            fp, fg = p.reshape(-1), g.reshape(-1)
            for k in idx_rng.choice(fp.size, size=min(5, fp.size), replace=False):
                old = fp[k]
                fp[k] = old + h
                lp = loss()
                fp[k] = old - h
                lm = loss()
                fp[k] = old
                fd = (lp - lm) / (2 * h)
                if abs(fd) > 1e-9:
                    rel = abs(fd - fg[k]) / abs(fd)
                    assert rel <= 1e-4, f"gradient rel err {rel}"
                    checked += 1
        assert checked >= 20

        # epoch-0 ratios
        obs_b = rng.normal(size=(64, 4))
        actions_b, values_b, logp_b = net.act(obs_b, rng)
        _, stats = TR.policy_gradients(net, obs_b, actions_b, logp_b,
                                       rng.normal(size=64), values_b, cfg)
        assert abs(stats["mean_ratio"] - 1.0) <= 1e-6

        # GAE vs brute force on 5-step sequences
        from test_trainer import brute_force_gae
        for trial in range(10):
            r = rng.normal(size=5)
            v = rng.normal(size=6)
            d = rng.random(5) < 0.3
            adv5, _ = TR.gae(r[:, None], v[:, None], d[:, None], 0.95, 0.9)
            expect = brute_force_gae(r, v, d, 0.95, 0.9)
            assert np.abs(adv5[:, 0] - expect).max() <= 1e-12


# ---------------------------------------------------------------------------
# criterion 6: simulator physics
# ---------------------------------------------------------------------------

def test_simulator_physics():
    with criterion("simulator physics"):
        model = load_bundled("go1_arx5")
        fixed = dict(mass_scale_range=(1.0, 1.0), friction_range=(0.8, 0.8),
                     motor_scale_range=(1.0, 1.0))
        cfg = SimConfig(kp_leg=0, kd_leg=0, kp_arm=0, kd_arm=0, **fixed)
        sim = Simulator(model, cfg)
        sim.reset(seed=0)
        sim.vec.base_pos[0, 2] = 5.0
        for _ in range(5):
            s = sim.step(model.quadruped.default_pose, model.arm.default_pose)
        drop = 5.0 - s.base_pos[2]
        analytic = 0.5 * 9.81 * 0.01
        assert abs(drop - analytic) / analytic < 0.01

        sim = Simulator(model, SimConfig())
        s = sim.reset(seed=1)
        heights = []
        for _ in range(100):
            s = sim.step(model.quadruped.default_pose, model.arm.default_pose)
            heights.append(s.base_pos[2])
        assert max(heights) - min(heights) <= 0.02

        scfg = SimConfig()
        vec = VecSim(model, scfg, 4, seeds=[1, 2, 3, 4])
        rng = np.random.default_rng(3)
        for k in range(2500):
            lt = model.quadruped.default_pose + rng.uniform(-0.3, 0.3, (4, 12))
            vec.step(lt, np.tile(model.arm.default_pose, (4, 1)))
            f_t = (-scfg.tangential_stiffness
                   * (vec.prev_foot_pos[..., :2] - vec.foot_anchor)
                   - scfg.tangential_damping * vec.foot_vel[..., :2])
            t_norm = np.linalg.norm(f_t, axis=-1)
            cap = vec.friction[:, None] * vec.foot_forces
            assert np.all(np.minimum(t_norm, cap) <= cap + 1e-9)
            if vec.status().max() > 0:
                vec.reset_envs(vec.status() > 0)

        runs = []
        cmds = np.random.default_rng(5).uniform(-0.2, 0.2, (50, 12))
        for _ in range(2):
            sim = Simulator(model, SimConfig())
            sim.reset(seed=77)
            traj = []
            for k in range(50):
                s = sim.step(model.quadruped.default_pose + cmds[k],
                             model.arm.default_pose)
                traj.append(np.concatenate([s.base_pos, s.base_lin_vel, s.q_leg]))
            runs.append(np.array(traj))
        assert np.array_equal(runs[0], runs[1])


# ---------------------------------------------------------------------------
# criterion 7: stage-1 desk-scale training
# ---------------------------------------------------------------------------

def test_stage1_training(desk, stage1_run):
    with criterion("stage-1 end-to-end training"):
        cache, meta = stage1_run
        assert meta["wall_s"] <= STAGE1_BUDGET_S, \
            f"stage 1 took {meta['wall_s']:.0f}s"
        net, pcfg = net_from_checkpoint(load_checkpoint(meta["loco"]))
        ctrl = EV.PolicyController(net)
        env = make_eval_env(desk, "go1_arx5", pcfg, 64, 900, stage=1)
        rate = EV.survival_test(ctrl, env, 64, np.random.default_rng(901),
                                desk.evaluation_ranges, mode="still",
                                with_pushes=False, with_target=False)
        assert rate >= 0.9, f"still survival {rate}"
        rng = np.random.default_rng(902)
        cmds, tgts = EV.sample_eval_batch(desk.evaluation_ranges, rng, 64,
                                          "move", with_target=False)
        trained = EV.aggregate_results(
            EV.run_tracking_batch(ctrl, env, cmds, tgts, "move"))
        baseline = EV.aggregate_results(
            EV.run_tracking_batch(EV.RandomController(seed=903), env,
                                  cmds, tgts, "move"))
        ratio = trained["v_x"] / baseline["v_x"]
        print(f"\n  stage1: v_err {trained['v_x']:.3f} vs random "
              f"{baseline['v_x']:.3f} (ratio {ratio:.3f}), "
              f"survival {rate:.2f}, wall {meta['wall_s']:.0f}s")
        assert ratio <= 1.0 / 3.0, f"velocity ratio {ratio:.3f}"


# ---------------------------------------------------------------------------
# criterion 8: stage-2 desk-scale training
# ---------------------------------------------------------------------------

def test_stage2_training(desk, stage1_run, stage2_run):
    with criterion("stage-2 end-to-end training"):
        _, meta1 = stage1_run
        _, meta2 = stage2_run
        assert meta2["wall_s"] <= STAGE2_BUDGET_S, \
            f"stage 2 took {meta2['wall_s']:.0f}s"
        composed = compose(load_checkpoint(meta2["loco"]),
                           load_checkpoint(meta2["arm"]))
        loco_net, pcfg = net_from_checkpoint(load_checkpoint(meta2["loco"]))
        arm_net, _ = net_from_checkpoint(load_checkpoint(meta2["arm"]))
        ctrl = EV.PolicyController(loco_net, arm_net)
        env = make_eval_env(desk, "go1_arx5", pcfg, 64, 910, stage=2)
        ws = EV.workspace_eval(ctrl, env, desk.evaluation_ranges, 128,
                               np.random.default_rng(911), mode="still")
        assert ws.count >= 4, f"only {ws.count} completed commands"
        assert not ws.degenerate and ws.volume > 0.0

        # stage-1 baseline: same loco, arm frozen at default
        base_net, _ = net_from_checkpoint(load_checkpoint(meta1["loco"]))
        base_ctrl = EV.PolicyController(base_net, None)
        base_env = make_eval_env(desk, "go1_arx5", pcfg, 64, 912, stage=2)
        rng = np.random.default_rng(913)
        cmds, tgts = EV.sample_eval_batch(desk.evaluation_ranges, rng, 64, "still")
        trained_D = EV.aggregate_results(
            EV.run_tracking_batch(ctrl, env, cmds, tgts, "still"))["D"]
        frozen_D = EV.aggregate_results(
            EV.run_tracking_batch(base_ctrl, base_env, cmds, tgts, "still"))["D"]
        print(f"\n  stage2: workspace {ws.volume*100:.2f}x10^-2 m^3 over "
              f"{ws.count} completions; mean D {trained_D:.4f} vs arm-frozen "
              f"{frozen_D:.4f}; wall {meta2['wall_s']:.0f}s")
        assert trained_D < frozen_D


# ---------------------------------------------------------------------------
# criterion 9: cross-embodiment composition
# ---------------------------------------------------------------------------

def test_cross_embodiment(desk, stage2_run, stage1_run_a1):
    with criterion("cross-embodiment composition"):
        _, meta2 = stage2_run
        _, meta_a1 = stage1_run_a1
        loco_b = load_checkpoint(meta_a1["loco"])
        arm_a = load_checkpoint(meta2["arm"])
        composed = compose(loco_b, arm_a)  # InterfaceMismatch would fail here
        assert composed.embodiment == "a1_arx5"

        loco_net, pcfg = net_from_checkpoint(loco_b)
        arm_net, _ = net_from_checkpoint(arm_a)
        ctrl = EV.PolicyController(loco_net, arm_net)
        env = make_eval_env(desk, "a1_arx5", pcfg, 64, 920, stage=2)
        rng = np.random.default_rng(921)
        cmds, tgts = EV.sample_eval_batch(desk.evaluation_ranges, rng, 64, "still")
        results = EV.run_tracking_batch(ctrl, env, cmds, tgts, "still")
        no_fall = np.mean([r.survived for r in results])
        assert no_fall >= 0.5, f"still-mode no-fall rate {no_fall}"

        ws_b = EV.workspace_eval(ctrl, env, desk.evaluation_ranges, 96,
                                 np.random.default_rng(922), mode="still")
        # native pairing for the side-by-side report
        loco_a_net, _ = net_from_checkpoint(load_checkpoint(meta2["loco"]))
        ctrl_a = EV.PolicyController(loco_a_net, arm_net)
        env_a = make_eval_env(desk, "go1_arx5", pcfg, 64, 923, stage=2)
        ws_a = EV.workspace_eval(ctrl_a, env_a, desk.evaluation_ranges, 96,
                                 np.random.default_rng(922), mode="still")
        print("\n  workspace still (x10^-2 m^3):")
        print(f"    arx5 + go1 (native): {ws_a.volume*100:8.3f} ({ws_a.count} pts)")
        print(f"    arx5 + a1  (zero-shot): {ws_b.volume*100:8.3f} ({ws_b.count} pts)")
        print(f"    no-fall rate on a1: {no_fall:.2f}")


# ---------------------------------------------------------------------------
# criterion 10: determinism & persistence
# ---------------------------------------------------------------------------

def test_determinism_and_persistence(tmp_path, tiny_checkpoints):
    with criterion("determinism & persistence"):
        # checkpoint byte round trip
        ckpt = load_checkpoint(tiny_checkpoints["loco"])
        p1 = tmp_path / "a.lacp"
        save_checkpoint(ckpt, p1)
        p2 = tmp_path / "b.lacp"
        save_checkpoint(load_checkpoint(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

        # same-seed training logs bit-identical
        desk = load_experiment_config(DESK_CONFIG)
        tiny = dataclasses.replace(desk.train, stage1_iterations=3,
                                   stage2_iterations=0, num_envs=4, horizon=8,
                                   pretrain_ticks=40, pretrain_epochs=5,
                                   critic_warmup_iterations=1,
                                   checkpoint_every=100)
        model = load_bundled("go1_arx5")
        logs = []
        for run in range(2):
            out = tmp_path / f"run{run}"
            TR.run_two_stage(model, desk.sim, desk.behavior, desk.rewards,
                             desk.policy, desk.training_ranges, tiny, out,
                             stages=(1,), quiet=True)
            logs.append((out / "training_log.csv").read_bytes())
        assert logs[0] == logs[1]

        # session replay reproduces the stream bit-exactly
        from locoarm import protocol as P
        from locoarm.replay import replay_session
        from locoarm.teleop import SessionConfig, TeleopSession
        log = tmp_path / "session.jsonl"
        session = TeleopSession(SessionConfig(
            embodiment="go1_arx5", loco_ckpt=str(tiny_checkpoints["loco"]),
            arm_ckpt=str(tiny_checkpoints["arm"]), seed=31,
            record_path=str(log)))
        session.drain_and_step([P.SetCommandMsg(type="set_command", seq=1, v_x=0.4)])
        for _ in range(30):
            session.drain_and_step([])
        session.drain_and_step([P.SetTargetPoseMsg(type="set_target_pose",
                                                   seq=2, l=0.5, p=0.3)])
        for _ in range(30):
            session.drain_and_step([])
        session.close()
        report = replay_session(log, verify=True)
        assert report.bit_exact, report.mismatched_ticks
