"""PPO with generalized advantage estimation and the two-stage schedule.

Stage 1 trains the loco policy with the arm held at its default pose and the
body pitch/roll commands drawn by the sampler. Stage 2 activates the arm
policy, whose decoded body command replaces the sampled pitch/roll every
tick, and trains both policies on their own reward channels (the loco policy
can be frozen instead). Everything is seeded; two runs with the same config
and seed produce bit-identical training logs and checkpoints.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .commands import CommandRanges, CommandTuple
from .env import CoopEnv, sample_target_angles
from .errors import ConfigError, NonFiniteLoss
from .gait import BehaviorParams
from .geometry import TargetEEPose
from .models import SystemModel
from .policy import (ARM_ACT_DIM, ARM_OBS_DIM, LOCO_ACT_DIM, LOCO_OBS_DIM,
                     ActorCritic, PolicyConfig, checkpoint_from_net,
                     save_checkpoint)
from .rewards import ARM_TERMS, LOCO_TERMS, RewardConfig
from .sim import SimConfig


@dataclass(frozen=True)
class TrainConfig:
    stage1_iterations: int = 500
    stage2_iterations: int = 1500
    num_envs: int = 256
    horizon: int = 24
    clip_eps: float = 0.2
    gamma: float = 0.99
    gae_lambda: float = 0.95
    learning_rate: float = 3e-4
    epochs: int = 5
    minibatches: int = 4
    entropy_coef: float = 0.005
    value_coef: float = 1.0
    max_grad_norm: float = 1.0
    resample_interval_s: float = 6.0
    episode_length_s: float = 10.0
    push_interval_s: float = 0.0
    freeze_loco_in_stage2: bool = False
    checkpoint_every: int = 100
    pretrain_ticks: int = 400       # reference-gait imitation before stage 1;
    pretrain_epochs: int = 120      # 0 disables the bootstrap
    critic_warmup_iterations: int = 15
    seed: int = 0

    def __post_init__(self):
        if min(self.stage1_iterations, self.stage2_iterations) < 0 \
                or min(self.num_envs, self.horizon) < 1:
            raise ConfigError("iteration/env counts must be positive")
        if not 0.0 < self.clip_eps < 1.0:
            raise ConfigError("clip_eps must be in (0, 1)")
        if not (0.0 < self.gamma <= 1.0 and 0.0 < self.gae_lambda <= 1.0):
            raise ConfigError("gamma and lambda must be in (0, 1]")


def sample_commands(ranges: CommandRanges, rng: np.random.Generator, stage: int,
                    pitch_range=(-0.4, 0.4), roll_range=(-0.3, 0.3)
                    ) -> tuple[CommandTuple, TargetEEPose]:
    """One (command, target) draw; stage 1 zeroes the target pose."""
    v_x = float(rng.uniform(*ranges.v_x))
    omega = float(rng.uniform(*ranges.omega_z))
    if stage == 1:
        cmd = CommandTuple(v_x, omega, float(rng.uniform(*pitch_range)),
                           float(rng.uniform(*roll_range)))
        return cmd, TargetEEPose(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    cmd = CommandTuple(v_x, omega, 0.0, 0.0)
    l = float(rng.uniform(*ranges.l))
    p = float(rng.uniform(*ranges.p))
    y = float(rng.uniform(*ranges.y))
    alpha, beta, gamma = sample_target_angles(rng, ranges)
    return cmd, TargetEEPose(l, p, y, alpha, beta, gamma)


def resample_schedule(sim_time: float, interval: float) -> bool:
    """True on every interval boundary of accumulated sim time."""
    if interval <= 0:
        raise ConfigError("resample interval must be > 0")
    if sim_time <= 0:
        return False
    remainder = sim_time % interval
    return remainder < 1e-9 or interval - remainder < 1e-9


def gae(rewards: np.ndarray, values: np.ndarray, dones: np.ndarray,
        gamma: float, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimation over a (T, N) rollout.

    values has shape (T+1, N): the trailing row bootstraps non-terminal
    truncation at the end of the buffer. Done steps block bootstrapping.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=bool)
    T = rewards.shape[0]
    if values.shape[0] != T + 1:
        raise ValueError(f"values must have {T + 1} rows, got {values.shape[0]}")
    adv = np.zeros_like(rewards)
    last = np.zeros(rewards.shape[1:])
    for t in reversed(range(T)):
        mask = 1.0 - dones[t].astype(float)
        delta = rewards[t] + gamma * values[t + 1] * mask - values[t]
        last = delta + gamma * lam * mask * last
        adv[t] = last
    return adv, adv + values[:-1]


def clipped_surrogate(ratio, advantage, eps: float):
    """Per-sample PPO objective: min(r A, clip(r) A)."""
    ratio = np.asarray(ratio, dtype=float)
    advantage = np.asarray(advantage, dtype=float)
    return np.minimum(ratio * advantage,
                      np.clip(ratio, 1.0 - eps, 1.0 + eps) * advantage)


class Adam:
    def __init__(self, params: list[np.ndarray], lr: float,
                 betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.b1 ** self.t
        bc2 = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def _clip_grads(grads: list[np.ndarray], max_norm: float) -> float:
    total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / total
        for g in grads:
            g *= scale
    return total


def policy_gradients(net: ActorCritic, obs, actions, old_logp, advantages,
                     returns, cfg: TrainConfig,
                     policy_scale: float = 1.0) -> tuple[list, dict]:
    """Gradients of the clipped surrogate + value + entropy loss.

    Returns (grads aligned with net parameter order, loss statistics).
    Parameter order: actor weights, actor biases, log_std, critic weights,
    critic biases.
    """
    M = obs.shape[0]
    cache_a: list = []
    mean = net.actor.forward(obs, cache_a)
    std = np.exp(net.log_std)
    z = (actions - mean) / std
    logp = -0.5 * np.sum(z * z, axis=-1) - np.sum(net.log_std) \
        - 0.5 * net.act_dim * float(np.log(2.0 * np.pi))
    ratio = np.exp(logp - old_logp)
    s1 = ratio * advantages
    s2 = np.clip(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * advantages
    surrogate = np.minimum(s1, s2)
    policy_loss = -float(np.mean(surrogate))
    entropy = float(np.sum(net.log_std) + 0.5 * net.act_dim
                    * (1.0 + np.log(2.0 * np.pi)))

    use_s1 = s1 <= s2
    dL_dlogp = np.where(use_s1, -advantages * ratio / M, 0.0) * policy_scale
    g_mean = dL_dlogp[:, None] * (z / std)
    g_log_std = (np.sum(dL_dlogp[:, None] * (z * z - 1.0), axis=0)
                 - cfg.entropy_coef * policy_scale)
    gw_a, gb_a = net.actor.backward(cache_a, g_mean)

    cache_c: list = []
    v = net.critic.forward(obs, cache_c)[..., 0]
    v_err = v - returns
    value_loss = float(np.mean(v_err * v_err))
    g_v = (2.0 * cfg.value_coef / M) * v_err
    gw_c, gb_c = net.critic.backward(cache_c, g_v[:, None])

    grads = gw_a + gb_a + [g_log_std] + gw_c + gb_c
    stats = {
        "policy_loss": policy_loss,
        "value_loss": value_loss,
        "entropy": entropy,
        "mean_ratio": float(np.mean(ratio)),
        "clip_fraction": float(np.mean((np.abs(ratio - 1.0) > cfg.clip_eps))),
    }
    return grads, stats


def net_parameters(net: ActorCritic) -> list[np.ndarray]:
    return (net.actor.weights + net.actor.biases + [net.log_std]
            + net.critic.weights + net.critic.biases)


def ppo_update(net: ActorCritic, optimizer: Adam, batch: dict,
               cfg: TrainConfig, shuffle_rng: np.random.Generator,
               policy_scale: float = 1.0) -> dict:
    """Multi-epoch minibatched PPO update; returns averaged loss stats.

    policy_scale=0 turns the update into a critic-only fit (warmup phase).
    """
    obs = batch["obs"].reshape(-1, net.obs_dim)
    actions = batch["actions"].reshape(-1, net.act_dim)
    old_logp = batch["log_probs"].reshape(-1)
    adv = batch["advantages"].reshape(-1)
    ret = batch["returns"].reshape(-1)
    adv = (adv - adv.mean()) / (adv.std() + 1e-8)

    B = obs.shape[0]
    mb = max(1, B // cfg.minibatches)
    totals: dict[str, float] = {}
    count = 0
    for _ in range(cfg.epochs):
        order = shuffle_rng.permutation(B)
        for start in range(0, B, mb):
            sel = order[start:start + mb]
            grads, stats = policy_gradients(
                net, obs[sel], actions[sel], old_logp[sel], adv[sel], ret[sel],
                cfg, policy_scale=policy_scale)
            if not np.isfinite(stats["policy_loss"]) or not np.isfinite(stats["value_loss"]):
                raise NonFiniteLoss(f"non-finite loss in PPO update: {stats}")
            _clip_grads(grads, cfg.max_grad_norm)
            optimizer.step(grads)
            for k, val in stats.items():
                totals[k] = totals.get(k, 0.0) + val
            count += 1
    return {k: val / count for k, val in totals.items()}


def pretrain_actor_on_reference(net: ActorCritic, env: CoopEnv,
                                cfg: TrainConfig,
                                rng: np.random.Generator) -> float:
    """Bootstrap the actor and critic from the clock-entrained reference trot.

    The sin-only clock observation leaves the gait phase direction ambiguous
    to a memoryless policy; seeding the mean with a working reference gait
    lets the legs themselves carry the phase, after which PPO refines
    tracking. The critic is fitted to the reference rollout's discounted
    returns so early PPO advantages do not destroy the gait. Returns the
    final actor regression loss.
    """
    from . import gait as gait_mod

    obs_rows, act_rows, rew_rows, done_rows = [], [], [], []
    for t in range(cfg.pretrain_ticks):
        obs = env.observe_loco()
        phases = gait_mod.foot_phases_batch(env.clock_t, env.behavior)
        targets = gait_mod.reference_leg_targets(
            phases, env.clock_frozen, env.cmd[:, 0], env.cmd[:, 1],
            env.model.quadruped, env.behavior)
        raw = (targets - env.model.quadruped.default_pose) / env.policy_cfg.action_scale_leg
        obs_rows.append(obs)
        act_rows.append(raw)
        # perturb the executed action so recovery states enter the dataset;
        # the imitation label stays the clean reference
        noisy = raw + 0.2 * rng.standard_normal(raw.shape)
        breakdown, _ = env.step(noisy, None)
        rew_rows.append(np.asarray(breakdown.r_loco, dtype=float).copy())
        fallen, timeout = env.finish_tick()
        done_rows.append(fallen | timeout)
    obs = np.stack(obs_rows)          # (T, N, obs)
    acts = np.stack(act_rows)
    rews = np.stack(rew_rows)
    dones = np.stack(done_rows)

    # reward-to-go with zero tail bootstrap; drop the biased tail for fitting
    T = rews.shape[0]
    rets = np.zeros_like(rews)
    running = np.zeros(rews.shape[1])
    for t in reversed(range(T)):
        running = rews[t] + cfg.gamma * running * (1.0 - dones[t])
        rets[t] = running
    keep = max(1, T - int(1.0 / max(1.0 - cfg.gamma, 1e-6)))
    flat_obs = obs[:keep].reshape(-1, obs.shape[-1])
    flat_act = acts[:keep].reshape(-1, acts.shape[-1])
    flat_ret = rets[:keep].reshape(-1)

    a_opt = Adam(net.actor.weights + net.actor.biases, lr=1e-3)
    c_opt = Adam(net.critic.weights + net.critic.biases, lr=1e-3)
    B = flat_obs.shape[0]
    mb = 2048
    loss = float("inf")
    for _ in range(cfg.pretrain_epochs):
        order = rng.permutation(B)
        for start in range(0, B, mb):
            sel = order[start:start + mb]
            cache: list = []
            pred = net.actor.forward(flat_obs[sel], cache)
            diff = pred - flat_act[sel]
            loss = float(np.mean(diff * diff))
            gw, gb = net.actor.backward(cache, 2.0 * diff / diff.size)
            _clip_grads(gw + gb, cfg.max_grad_norm)
            a_opt.step(gw + gb)

            cache_c: list = []
            v = net.critic.forward(flat_obs[sel], cache_c)[..., 0]
            v_diff = v - flat_ret[sel]
            gwc, gbc = net.critic.backward(cache_c, (2.0 / v.size) * v_diff[:, None])
            _clip_grads(gwc + gbc, cfg.max_grad_norm)
            c_opt.step(gwc + gbc)
    env.reset_envs(np.ones(env.n, dtype=bool))
    return loss


# ---------------------------------------------------------------------------
# rollout collection
# ---------------------------------------------------------------------------

def collect_rollout(env: CoopEnv, loco_net: ActorCritic,
                    arm_net: ActorCritic | None, cfg: TrainConfig,
                    noise_rng: np.random.Generator) -> tuple[dict, dict, dict]:
    """Gather (T, N) experience for both channels; envs reset in place.

    Returns (loco batch, arm batch or empty, rollout stats).
    """
    T, N = cfg.horizon, env.n
    stage2 = arm_net is not None
    buf = {
        "obs": np.zeros((T, N, LOCO_OBS_DIM)),
        "actions": np.zeros((T, N, LOCO_ACT_DIM)),
        "log_probs": np.zeros((T, N)),
        "values": np.zeros((T + 1, N)),
        "rewards": np.zeros((T, N)),
        "dones": np.zeros((T, N), dtype=bool),
    }
    abuf = {
        "obs": np.zeros((T, N, ARM_OBS_DIM)),
        "actions": np.zeros((T, N, ARM_ACT_DIM)),
        "log_probs": np.zeros((T, N)),
        "values": np.zeros((T + 1, N)),
        "rewards": np.zeros((T, N)),
        "dones": np.zeros((T, N), dtype=bool),
    } if stage2 else {}

    term_sums = {k: 0.0 for k in LOCO_TERMS + ARM_TERMS}
    falls = 0
    for t in range(T):
        if stage2:
            arm_obs = env.observe_arm()
            raw_arm, v_arm, lp_arm = arm_net.act(arm_obs, noise_rng)
            arm_targets = env.apply_arm_action(raw_arm)
        loco_obs = env.observe_loco()
        raw_leg, v_leg, lp_leg = loco_net.act(loco_obs, noise_rng)

        if stage2:
            breakdown, _ = env.step(raw_leg, raw_arm, arm_targets=arm_targets)
        else:
            breakdown, _ = env.step(raw_leg, None)

        fallen = env.sim.status() != 0
        timeout = env.timeout_mask() & ~fallen
        done = fallen | timeout

        r_loco = np.asarray(breakdown.r_loco, dtype=float).copy()
        r_arm = np.asarray(breakdown.r_arm, dtype=float).copy() if stage2 else None
        if np.any(timeout):
            # non-terminal truncation: fold the bootstrap value into the reward
            final_loco = env.observe_loco()[timeout]
            r_loco[timeout] += cfg.gamma * loco_net.value(final_loco)
            if stage2:
                final_arm = env.observe_arm()[timeout]
                r_arm[timeout] += cfg.gamma * arm_net.value(final_arm)

        buf["obs"][t] = loco_obs
        buf["actions"][t] = raw_leg
        buf["log_probs"][t] = lp_leg
        buf["values"][t] = v_leg
        buf["rewards"][t] = r_loco
        buf["dones"][t] = done
        if stage2:
            abuf["obs"][t] = arm_obs
            abuf["actions"][t] = raw_arm
            abuf["log_probs"][t] = lp_arm
            abuf["values"][t] = v_arm
            abuf["rewards"][t] = r_arm
            abuf["dones"][t] = done

        for k in LOCO_TERMS + ARM_TERMS:
            term_sums[k] += float(np.mean(breakdown.terms[k]))
        falls += int(np.sum(fallen))
        env.finish_tick(fallen, timeout)

    buf["values"][T] = loco_net.value(env.observe_loco())
    if stage2:
        abuf["values"][T] = arm_net.value(env.observe_arm())

    stats = {f"term_{k}": v / T for k, v in term_sums.items()}
    stats["falls"] = falls
    stats["mean_reward_loco"] = float(np.mean(buf["rewards"]))
    stats["mean_reward_arm"] = float(np.mean(abuf["rewards"])) if stage2 else 0.0
    return buf, abuf, stats


# ---------------------------------------------------------------------------
# two-stage orchestration
# ---------------------------------------------------------------------------

LOG_COLUMNS = ["iteration", "stage", "mean_reward_loco", "mean_reward_arm",
               "policy_loss_loco", "value_loss_loco", "entropy_loco",
               "mean_ratio_loco", "policy_loss_arm", "value_loss_arm",
               "entropy_arm", "falls"] + [f"term_{k}" for k in LOCO_TERMS + ARM_TERMS]


@dataclass
class TrainResult:
    loco_checkpoint: Path
    arm_checkpoint: Path | None
    log_path: Path
    run_dir: Path


def _write_log_row(writer, iteration, stage, roll_stats, loco_stats, arm_stats):
    row = {
        "iteration": iteration,
        "stage": stage,
        "mean_reward_loco": repr(roll_stats["mean_reward_loco"]),
        "mean_reward_arm": repr(roll_stats["mean_reward_arm"]),
        "policy_loss_loco": repr(loco_stats.get("policy_loss", 0.0)),
        "value_loss_loco": repr(loco_stats.get("value_loss", 0.0)),
        "entropy_loco": repr(loco_stats.get("entropy", 0.0)),
        "mean_ratio_loco": repr(loco_stats.get("mean_ratio", 1.0)),
        "policy_loss_arm": repr(arm_stats.get("policy_loss", 0.0)),
        "value_loss_arm": repr(arm_stats.get("value_loss", 0.0)),
        "entropy_arm": repr(arm_stats.get("entropy", 0.0)),
        "falls": roll_stats["falls"],
    }
    for k in LOCO_TERMS + ARM_TERMS:
        row[f"term_{k}"] = repr(roll_stats[f"term_{k}"])
    writer.writerow(row)


def run_two_stage(model: SystemModel, sim_cfg: SimConfig,
                  behavior: BehaviorParams, reward_cfg: RewardConfig,
                  policy_cfg: PolicyConfig, ranges: CommandRanges,
                  cfg: TrainConfig, run_dir: str | Path,
                  stages: tuple[int, ...] = (1, 2),
                  loco_init: ActorCritic | None = None,
                  config_hash: str = "", quiet: bool = False) -> TrainResult:
    """Train stage 1 then stage 2, writing checkpoints and a CSV log."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    log_path = run_dir / "training_log.csv"

    seed_root = np.random.SeedSequence([cfg.seed, 2])
    words = seed_root.generate_state(4, dtype=np.uint64)
    noise_rng = np.random.Generator(np.random.PCG64(int(words[0])))
    shuffle_rng = np.random.Generator(np.random.PCG64(int(words[1])))

    loco_net = loco_init or ActorCritic(LOCO_OBS_DIM, LOCO_ACT_DIM, policy_cfg,
                                        seed=int(words[2]))
    arm_net: ActorCritic | None = None

    def metadata(stage, iteration):
        return {"stage": stage, "iteration": iteration, "seed": cfg.seed,
                "config_hash": config_hash,
                "control_rate_hz": sim_cfg.control_rate_hz}

    def save(role, net, embodiment, stage, iteration):
        ckpt = checkpoint_from_net(net, role, embodiment, policy_cfg,
                                   metadata(stage, iteration))
        path = run_dir / f"ckpt_{role}_{iteration:06d}.lacp"
        save_checkpoint(ckpt, path)
        return path

    loco_path = arm_path = None
    t_start = time.time()
    with open(log_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=LOG_COLUMNS)
        writer.writeheader()
        iteration = 0

        if 1 in stages:
            env = CoopEnv(model, sim_cfg, behavior, reward_cfg, policy_cfg,
                          ranges, cfg.num_envs, cfg.seed, stage=1,
                          episode_length_s=cfg.episode_length_s,
                          resample_interval_s=cfg.resample_interval_s,
                          push_interval_s=cfg.push_interval_s)
            if cfg.pretrain_ticks > 0 and loco_init is None:
                pre_rng = np.random.Generator(np.random.PCG64(int(words[3]) ^ 0x5A))
                loss = pretrain_actor_on_reference(loco_net, env, cfg, pre_rng)
                if not quiet:
                    print(f"[stage 1] reference-gait bootstrap, loss {loss:.4f}",
                          flush=True)
            opt = Adam(net_parameters(loco_net), cfg.learning_rate)
            for it in range(cfg.stage1_iterations):
                iteration = it
                buf, _, roll_stats = collect_rollout(env, loco_net, None, cfg, noise_rng)
                adv, ret = gae(buf["rewards"], buf["values"], buf["dones"],
                               cfg.gamma, cfg.gae_lambda)
                batch = dict(buf, advantages=adv, returns=ret)
                scale = 0.0 if it < cfg.critic_warmup_iterations else 1.0
                try:
                    loco_stats = ppo_update(loco_net, opt, batch, cfg,
                                            shuffle_rng, policy_scale=scale)
                except NonFiniteLoss as exc:
                    raise NonFiniteLoss(f"stage 1 iteration {it}: {exc}") from exc
                _write_log_row(writer, it, 1, roll_stats, loco_stats, {})
                if (it + 1) % cfg.checkpoint_every == 0 or it + 1 == cfg.stage1_iterations:
                    loco_path = save("loco", loco_net, model.quadruped.name, 1, it + 1)
                if not quiet and (it % 50 == 0 or it + 1 == cfg.stage1_iterations):
                    print(f"[stage 1] it {it:5d}  r_loco {roll_stats['mean_reward_loco']:8.3f}"
                          f"  falls {roll_stats['falls']:4d}"
                          f"  ({time.time() - t_start:6.1f}s)", flush=True)

        if 2 in stages:
            env = CoopEnv(model, sim_cfg, behavior, reward_cfg, policy_cfg,
                          ranges, cfg.num_envs, cfg.seed + 1, stage=2,
                          episode_length_s=cfg.episode_length_s,
                          resample_interval_s=cfg.resample_interval_s,
                          push_interval_s=cfg.push_interval_s)
            arm_net = ActorCritic(ARM_OBS_DIM, ARM_ACT_DIM, policy_cfg,
                                  seed=int(words[3]))
            arm_opt = Adam(net_parameters(arm_net), cfg.learning_rate)
            loco_opt = Adam(net_parameters(loco_net), cfg.learning_rate)
            base = cfg.stage1_iterations if 1 in stages else 0
            for it in range(cfg.stage2_iterations):
                iteration = base + it
                buf, abuf, roll_stats = collect_rollout(env, loco_net, arm_net,
                                                        cfg, noise_rng)
                a_adv, a_ret = gae(abuf["rewards"], abuf["values"], abuf["dones"],
                                   cfg.gamma, cfg.gae_lambda)
                # the arm critic starts cold in stage 2; the loco one is warm
                arm_scale = 0.0 if it < cfg.critic_warmup_iterations else 1.0
                try:
                    arm_stats = ppo_update(arm_net, arm_opt,
                                           dict(abuf, advantages=a_adv, returns=a_ret),
                                           cfg, shuffle_rng, policy_scale=arm_scale)
                    loco_stats = {}
                    if not cfg.freeze_loco_in_stage2:
                        l_adv, l_ret = gae(buf["rewards"], buf["values"],
                                           buf["dones"], cfg.gamma, cfg.gae_lambda)
                        loco_stats = ppo_update(loco_net, loco_opt,
                                                dict(buf, advantages=l_adv, returns=l_ret),
                                                cfg, shuffle_rng)
                except NonFiniteLoss as exc:
                    raise NonFiniteLoss(f"stage 2 iteration {it}: {exc}") from exc
                _write_log_row(writer, iteration, 2, roll_stats, loco_stats, arm_stats)
                if (it + 1) % cfg.checkpoint_every == 0 or it + 1 == cfg.stage2_iterations:
                    loco_path = save("loco", loco_net, model.quadruped.name, 2, iteration + 1)
                    arm_path = save("arm", arm_net, model.arm.name, 2, iteration + 1)
                if not quiet and (it % 50 == 0 or it + 1 == cfg.stage2_iterations):
                    print(f"[stage 2] it {it:5d}  r_loco {roll_stats['mean_reward_loco']:8.3f}"
                          f"  r_arm {roll_stats['mean_reward_arm']:8.3f}"
                          f"  falls {roll_stats['falls']:4d}"
                          f"  ({time.time() - t_start:6.1f}s)", flush=True)

    if loco_path is None:
        loco_path = save("loco", loco_net, model.quadruped.name, 1, 0)
    return TrainResult(loco_checkpoint=loco_path, arm_checkpoint=arm_path,
                       log_path=log_path, run_dir=run_dir)
