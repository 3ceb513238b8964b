import numpy as np
import pytest

from locoarm.commands import TRAINING_RANGES
from locoarm.env import CoopEnv, sample_target_angles
from locoarm.gait import BehaviorParams
from locoarm.models import load_bundled
from locoarm.policy import PolicyConfig, decode_arm_action
from locoarm.rewards import ARM_TERMS, LOCO_TERMS, RewardConfig
from locoarm.sim import SimConfig

MODEL = load_bundled("go1_arx5")
PCFG = PolicyConfig(hidden_sizes=(16, 8))


def make_env(n=4, stage=2, seed=0, **kw):
    return CoopEnv(MODEL, SimConfig(), BehaviorParams(), RewardConfig(), PCFG,
                   TRAINING_RANGES, n, seed, stage=stage, **kw)


def test_observation_shapes():
    env = make_env()
    assert env.observe_loco().shape == (4, 46)
    assert env.observe_arm().shape == (4, 28)


def test_stage2_loco_obs_carries_arm_body_cmd():
    env = make_env(stage=2)
    rng = np.random.default_rng(0)
    raw_arm = rng.normal(size=(4, 8))
    env.apply_arm_action(raw_arm)
    obs = env.observe_loco()
    _, body_cmd = decode_arm_action(raw_arm, MODEL.arm, PCFG)
    # command slot: indices 26..30 scaled by (2.0, 0.25, 1.0, 1.0)
    assert np.array_equal(obs[:, 28], body_cmd[:, 0])
    assert np.array_equal(obs[:, 29], body_cmd[:, 1])


def test_stage1_arm_holds_default():
    env = make_env(stage=1)
    for _ in range(10):
        env.step(np.zeros((4, 12)), None)
    assert np.abs(env.sim.q_arm - MODEL.arm.default_pose).max() < 1e-6


def test_clock_freezes_on_zero_command():
    env = make_env(stage=1)
    env.set_commands(slice(None), v_x=0.0, omega=0.0, pitch=0.0, roll=0.0)
    env.step(np.zeros((4, 12)), None)
    t0 = env.clock_t.copy()
    env.step(np.zeros((4, 12)), None)
    assert np.all(env.clock_frozen)
    assert np.array_equal(env.clock_t, t0)
    assert np.all(env.clock_obs() == 1.0)


def test_clock_advances_when_moving():
    env = make_env(stage=1)
    env.set_commands(slice(None), v_x=0.5, omega=0.0, pitch=0.0, roll=0.0)
    t0 = env.clock_t.copy()
    env.step(np.zeros((4, 12)), None)
    expect = np.mod(t0 + 3.0 * 0.02, 1.0)
    assert np.allclose(env.clock_t, expect, atol=1e-12)


def test_reward_breakdown_totals_match():
    env = make_env(stage=2)
    rng = np.random.default_rng(1)
    raw_arm = rng.normal(size=(4, 8)) * 0.1
    arm_targets = env.apply_arm_action(raw_arm)
    breakdown, _ = env.step(rng.normal(size=(4, 12)) * 0.1, raw_arm,
                            arm_targets=arm_targets)
    loco = sum(breakdown.weights[k] * np.asarray(breakdown.terms[k])
               for k in LOCO_TERMS)
    arm = sum(breakdown.weights[k] * np.asarray(breakdown.terms[k])
              for k in ARM_TERMS)
    assert np.abs(np.asarray(breakdown.r_loco) - loco).max() <= 1e-12
    assert np.abs(np.asarray(breakdown.r_arm) - arm).max() <= 1e-12


def test_stage1_zero_arm_reward():
    env = make_env(stage=1)
    breakdown, _ = env.step(np.zeros((4, 12)), None)
    assert np.all(np.asarray(breakdown.r_arm) == 0.0)


def test_resample_changes_commands_on_schedule():
    env = make_env(stage=1, resample_interval_s=0.1, episode_length_s=1e9)
    before = env.cmd.copy()
    for _ in range(6):
        env.step(np.zeros((4, 12)), None)
        env.finish_tick()
    assert not np.array_equal(env.cmd, before)


def test_timeout_resets_episode():
    env = make_env(stage=1, episode_length_s=0.1)
    for _ in range(5):
        env.step(np.zeros((4, 12)), None)
        fallen, timeout = env.finish_tick()
    assert np.all(env.episode_tick <= 5)
    assert env.sim.time.max() <= 0.1 + 1e-9


def test_sampled_target_angles_realizable_batch():
    from locoarm.geometry import rotation_from_axis_angles_batch
    rng = np.random.default_rng(5)
    angles = np.array([sample_target_angles(rng, TRAINING_RANGES)
                       for _ in range(300)])
    rotation_from_axis_angles_batch(angles)  # must not raise


def test_golden_breakdown_single_step():
    # frozen after hand-checking: swing_height and raibert recompute below,
    # totals must match the recorded values bit-for-bit on this seeded step
    env = make_env(n=1, stage=2, seed=42)
    env.reset_envs(np.ones(1, dtype=bool), resample=False)
    env.set_commands(slice(None), v_x=0.5, omega=0.1, pitch=0.05, roll=-0.02,
                     target=np.array([[0.4, 0.2, 0.3, 0.1, -0.1, 0.2]]))
    raw_leg = np.full((1, 12), 0.1)
    raw_arm = np.full((1, 8), 0.05)
    at = env.apply_arm_action(raw_arm)
    bd, _ = env.step(raw_leg, raw_arm, arm_targets=at)
    golden = {
        "follow": 3.455726592561696,
        "contact_force": 6.4071395448197885e-06,
        "foot_velocity": 1.995907625670607,
        "raibert": 0.048238468245850895,
        "swing_height": 0.007778404660439279,
        "loco_reg": -0.004384246086760626,
        "manip": 0.0014696020604045644,
        "arm_reg": -0.00031245886170394924,
    }
    for k, v in golden.items():
        assert float(np.asarray(bd.terms[k])[0]) == pytest.approx(v, abs=1e-12), k
    assert float(np.asarray(bd.r_loco)[0]) == pytest.approx(5.383461101718358, abs=1e-12)
    assert float(np.asarray(bd.r_arm)[0]) == pytest.approx(0.0011571431987006152, abs=1e-12)


def test_manip_errors_zero_for_self_target():
    env = make_env(n=1, stage=2)
    env.reset_envs(np.ones(1, dtype=bool), resample=False)
    pos, rot_ee = env.ee_pose_yaw_frame()
    from locoarm.geometry import axis_angles_batch, spherical_from_cartesian
    l, p, y = spherical_from_cartesian(pos[0])
    abg = axis_angles_batch(rot_ee[0])
    env.target[0] = [l, p, y, abg[0], abg[1], abg[2]]
    delta_lpy, delta_abg, D, _ = env.manip_errors()
    assert delta_lpy.max() < 1e-9
    assert delta_abg.max() < 1e-9
    assert D.max() < 1e-9
