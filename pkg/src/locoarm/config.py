"""Experiment configuration: one TOML document covering every subsystem.

Sections: [run], [model], [sim], [gait], [rewards] (+ [rewards.weights]),
[policy], [commands.training], [commands.evaluation], [train], [eval].
Unknown keys are rejected by name so typos cannot silently fall back to
defaults. All numeric defaults live in the section dataclasses.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .commands import CommandRanges, EVALUATION_RANGES, TRAINING_RANGES
from .errors import ConfigError, ParseError
from .gait import BehaviorParams
from .policy import PolicyConfig
from .rewards import DEFAULT_WEIGHTS, RewardConfig
from .sim import SimConfig
from .trainer import TrainConfig


@dataclass(frozen=True)
class EvalSpec:
    episodes: int = 64             # tracking episodes per mode
    workspace_commands: int = 64
    survival_episodes: int = 32
    batch: int = 64                # parallel episodes per batch
    modes: tuple[str, ...] = ("still", "move")
    seed: int = 1234
    ensemble_count: int = 1
    ensemble_spacing: int = 100
    d_threshold: float = 0.03
    theta_threshold: float = 0.17453292519943295  # pi/18

    def __post_init__(self):
        for m in self.modes:
            if m not in ("still", "move"):
                raise ConfigError(f"eval mode must be still|move, got '{m}'")


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    seed: int
    embodiment: str
    sim: SimConfig
    behavior: BehaviorParams
    rewards: RewardConfig
    policy: PolicyConfig
    training_ranges: CommandRanges
    evaluation_ranges: CommandRanges
    train: TrainConfig
    eval: EvalSpec
    config_hash: str = ""


def _coerce(value, target):
    if isinstance(target, tuple) and isinstance(value, list):
        return tuple(value)
    if isinstance(target, float) and isinstance(value, int):
        return float(value)
    return value


def _build_simple(cls, section: dict, name: str):
    """Build a dataclass whose defaults are all declared on the class."""
    proto = cls()
    fields = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in section.items():
        if key not in fields:
            raise ConfigError(f"[{name}] unknown key '{key}'")
        kwargs[key] = _coerce(value, getattr(proto, key))
    try:
        return dataclasses.replace(proto, **kwargs)
    except (TypeError, ValueError, ConfigError) as exc:
        raise ConfigError(f"[{name}] {exc}") from exc


def _ranges(section: dict, name: str, defaults: CommandRanges) -> CommandRanges:
    base = {k: list(getattr(defaults, k)) for k in
            ("v_x", "omega_z", "l", "p", "y", "alpha", "beta", "gamma")}
    for key, value in section.items():
        if key not in base:
            raise ConfigError(f"[{name}] unknown command '{key}'")
        base[key] = value
    try:
        return CommandRanges.from_dict(base)
    except ConfigError as exc:
        raise ConfigError(f"[{name}] {exc}") from exc


def parse_experiment_config(text: str, config_hash: str = "") -> ExperimentConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(f"config parse error: {exc}") from exc

    known = {"run", "model", "sim", "gait", "rewards", "policy",
             "commands", "train", "eval"}
    for key in raw:
        if key not in known:
            raise ConfigError(f"unknown section [{key}]")

    run = raw.get("run", {})
    name = str(run.get("name", "run"))
    seed = int(run.get("seed", 0))
    for key in run:
        if key not in ("name", "seed"):
            raise ConfigError(f"[run] unknown key '{key}'")

    model = raw.get("model", {})
    embodiment = str(model.get("embodiment", "go1_arx5"))
    for key in model:
        if key != "embodiment":
            raise ConfigError(f"[model] unknown key '{key}'")

    rewards_sec = dict(raw.get("rewards", {}))
    weights = dict(DEFAULT_WEIGHTS)
    weights.update(rewards_sec.pop("weights", {}))
    rewards = _build_simple(RewardConfig,
                            dict(rewards_sec, weights=weights), "rewards")

    commands = raw.get("commands", {})
    for key in commands:
        if key not in ("training", "evaluation"):
            raise ConfigError(f"[commands] unknown subsection '{key}'")

    sim = _build_simple(SimConfig, dict(raw.get("sim", {}), seed=seed), "sim")
    train = _build_simple(TrainConfig, dict(raw.get("train", {}), seed=seed), "train")
    return ExperimentConfig(
        name=name,
        seed=seed,
        embodiment=embodiment,
        sim=sim,
        behavior=_build_simple(BehaviorParams, raw.get("gait", {}), "gait"),
        rewards=rewards,
        policy=_build_simple(PolicyConfig, raw.get("policy", {}), "policy"),
        training_ranges=_ranges(commands.get("training", {}),
                                "commands.training", TRAINING_RANGES),
        evaluation_ranges=_ranges(commands.get("evaluation", {}),
                                  "commands.evaluation", EVALUATION_RANGES),
        train=train,
        eval=_build_simple(EvalSpec, raw.get("eval", {}), "eval"),
        config_hash=config_hash,
    )


def load_experiment_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise ParseError(f"config not found: {path}") from None
    digest = hashlib.sha256(text.encode()).hexdigest()
    return parse_experiment_config(text, config_hash=digest)
