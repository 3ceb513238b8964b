"""Command-line entry point: train, evaluate, compose, serve, replay.

Every run writes a manifest (config hash, seed, command line, timestamps,
outputs) before any work starts. Exit codes: 1 config error, 2 runtime
error, 3 numerical divergence, 4 bind error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, load_experiment_config
from .errors import (ConfigError, InterfaceMismatch, LocoArmError,
                     MissingCheckpoint, NumericalDivergence, ParseError)

EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_DIVERGENCE = 3
EXIT_BIND = 4


def write_manifest(out_dir: Path, command_line: list[str], config_hash: str,
                   seed: int, outputs: list[str]) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "version": __version__,
        "config_hash": config_hash,
        "seed": seed,
        "command_line": command_line,
        "started_unix": time.time(),
        "outputs": outputs,
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _experiment(args) -> ExperimentConfig:
    cfg = load_experiment_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(
            cfg, seed=args.seed,
            sim=dataclasses.replace(cfg.sim, seed=args.seed),
            train=dataclasses.replace(cfg.train, seed=args.seed))
    return cfg


def cmd_check_config(args) -> int:
    cfg = _experiment(args)
    print(f"ok: {args.config} (name={cfg.name}, embodiment={cfg.embodiment}, "
          f"hash={cfg.config_hash[:16]})")
    return 0


def cmd_train(args) -> int:
    from .models import load_bundled
    from .policy import load_checkpoint, net_from_checkpoint
    from .trainer import run_two_stage

    cfg = _experiment(args)
    model = load_bundled(cfg.embodiment)
    stages = {"1": (1,), "2": (2,), "both": (1, 2)}[args.stage]
    out_dir = Path(args.out or f"runs/{cfg.name}")
    write_manifest(out_dir, sys.argv, cfg.config_hash, cfg.seed,
                   ["training_log.csv", "ckpt_*.lacp"])

    loco_init = None
    if args.resume:
        ckpt = load_checkpoint(args.resume)
        if ckpt.role != "loco":
            raise ConfigError(f"--resume expects a loco checkpoint, got role "
                              f"'{ckpt.role}'")
        loco_init, _ = net_from_checkpoint(ckpt)
    result = run_two_stage(model, cfg.sim, cfg.behavior, cfg.rewards, cfg.policy,
                           cfg.training_ranges, cfg.train, out_dir,
                           stages=stages, loco_init=loco_init,
                           config_hash=cfg.config_hash)
    print(f"run dir: {result.run_dir}")
    print(f"loco checkpoint: {result.loco_checkpoint}")
    if result.arm_checkpoint:
        print(f"arm checkpoint: {result.arm_checkpoint}")
    return 0


def _load_controller_paths(args):
    """(loco_path, arm_path) from a run dir, composition file, or checkpoints."""
    src = Path(args.source)
    if src.is_dir():
        locos = sorted(src.glob("ckpt_loco_*.lacp"))
        if not locos:
            raise MissingCheckpoint(f"no loco checkpoints in {src}")
        arms = sorted(src.glob("ckpt_arm_*.lacp"))
        return locos[-1], (arms[-1] if arms else None)
    if src.suffix == ".json":
        desc = json.loads(src.read_text())
        return Path(desc["loco_checkpoint"]), Path(desc["arm_checkpoint"])
    if args.arm:
        return src, Path(args.arm)
    return src, None


def cmd_eval(args) -> int:
    from .env import CoopEnv
    from .evaluation import (PolicyController, aggregate_results,
                             results_table_csv, run_tracking_batch,
                             sample_eval_batch, survival_test, workspace_eval)
    from .models import load_bundled
    from .policy import load_checkpoint, net_from_checkpoint

    cfg = _experiment(args)
    loco_path, arm_path = _load_controller_paths(args)
    loco_net, pcfg = net_from_checkpoint(load_checkpoint(loco_path))
    arm_net = None
    if arm_path is not None:
        arm_net, _ = net_from_checkpoint(load_checkpoint(arm_path))
    model = load_bundled(cfg.embodiment)
    spec = cfg.eval
    out_dir = Path(args.out or "eval_out")
    write_manifest(out_dir, sys.argv, cfg.config_hash, spec.seed,
                   ["results.csv"])

    modes = {"still": ("still",), "move": ("move",), "both": ("still", "move")}
    stage = 2 if arm_net is not None else 1
    controller = PolicyController(loco_net, arm_net)
    rows = {}
    for mode in modes[args.mode]:
        rng = np.random.default_rng([spec.seed, hash(mode) % (2 ** 31)])
        env = CoopEnv(model, cfg.sim, cfg.behavior, cfg.rewards, pcfg,
                      cfg.evaluation_ranges, spec.batch, spec.seed, stage=stage,
                      episode_length_s=1e18, resample_interval_s=1e18)
        metrics = {}
        done = 0
        collected = []
        while done < spec.episodes:
            batch = min(spec.batch, spec.episodes - done)
            commands, targets = sample_eval_batch(
                cfg.evaluation_ranges, rng, spec.batch, mode,
                with_target=arm_net is not None)
            collected += run_tracking_batch(controller, env, commands,
                                            targets, mode)[:batch]
            done += batch
        metrics.update({k: {"mean": v, "std": 0.0}
                        for k, v in aggregate_results(collected).items()})
        if not args.skip_survival:
            rate = survival_test(controller, env, spec.survival_episodes, rng,
                                 cfg.evaluation_ranges, mode=mode,
                                 with_target=arm_net is not None)
            metrics["survival_rate"] = {"mean": rate, "std": 0.0}
        if not args.skip_workspace and arm_net is not None:
            ws = workspace_eval(controller, env, cfg.evaluation_ranges,
                                spec.workspace_commands, rng, mode=mode)
            metrics["workspace_m3"] = {"mean": ws.volume, "std": 0.0}
            metrics["workspace_points"] = {"mean": float(ws.count), "std": 0.0}
        rows[mode] = metrics
        print(f"[{mode}] " + "  ".join(
            f"{k}={v['mean']:.4f}" for k, v in sorted(metrics.items())
            if k in ("v_x", "omega_z", "D", "theta", "survival_rate",
                     "workspace_m3", "completion_rate")))
    out = results_table_csv(rows, out_dir / "results.csv")
    print(f"results: {out}")

    src = Path(args.source)
    if spec.ensemble_count > 1 and src.is_dir():
        from .evaluation import checkpoint_ensemble_eval

        def eval_ckpt(loco_p, arm_p):
            net, pc = net_from_checkpoint(load_checkpoint(loco_p))
            anet = (net_from_checkpoint(load_checkpoint(arm_p))[0]
                    if arm_p else None)
            c = PolicyController(net, anet)
            e = CoopEnv(model, cfg.sim, cfg.behavior, cfg.rewards, pc,
                        cfg.evaluation_ranges, spec.batch, spec.seed,
                        stage=2 if anet else 1,
                        episode_length_s=1e18, resample_interval_s=1e18)
            rng_e = np.random.default_rng(spec.seed)
            commands, targets = sample_eval_batch(
                cfg.evaluation_ranges, rng_e, spec.batch, "still",
                with_target=anet is not None)
            return aggregate_results(
                run_tracking_batch(c, e, commands, targets, "still"))

        ensemble = checkpoint_ensemble_eval(src, spec.ensemble_spacing,
                                            spec.ensemble_count, eval_ckpt)
        ens_path = out_dir / "ensemble.csv"
        with open(ens_path, "w") as fh:
            fh.write("metric,mean,std\n")
            for k, v in sorted(ensemble.items()):
                fh.write(f"{k},{v['mean']!r},{v['std']!r}\n")
        print(f"ensemble ({spec.ensemble_count} checkpoints every "
              f"{spec.ensemble_spacing}): {ens_path}")
    return 0


def cmd_compose(args) -> int:
    from .policy import compose, load_checkpoint

    loco = load_checkpoint(args.loco)
    arm = load_checkpoint(args.arm)
    controller = compose(loco, arm)  # raises InterfaceMismatch on conflict
    descriptor = {
        "loco_checkpoint": str(Path(args.loco).resolve()),
        "arm_checkpoint": str(Path(args.arm).resolve()),
        "quadruped": controller.quad_name,
        "arm": controller.arm_name,
        "embodiment": controller.embodiment,
        "created_unix": time.time(),
    }
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(descriptor, indent=2, sort_keys=True) + "\n")
    print(f"composed {controller.embodiment} -> {out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .teleop import SessionConfig, TeleopSession, create_app

    desc = json.loads(Path(args.composition).read_text())
    experiment_toml = Path(args.config).read_text() if args.config else None
    embodiment = desc.get("embodiment")
    session_cfg = SessionConfig(
        embodiment=embodiment,
        loco_ckpt=desc["loco_checkpoint"],
        arm_ckpt=desc["arm_checkpoint"],
        seed=args.seed if args.seed is not None else 0,
        record_path=args.record,
        stream_rate_hz=args.stream_rate,
        experiment_toml=experiment_toml,
    )
    session = TeleopSession(session_cfg)
    app = create_app(session)
    if args.console_dir:
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=args.console_dir, html=True),
                  name="console")
    host, _, port = args.listen.rpartition(":")
    try:
        uvicorn.run(app, host=host or "127.0.0.1", port=int(port),
                    log_level="warning")
    except SystemExit as exc:  # uvicorn exits 1 when the port is taken
        if exc.code:
            print(f"bind failed on {args.listen}", file=sys.stderr)
            return EXIT_BIND
    except OSError as exc:
        print(f"bind failed on {args.listen}: {exc}", file=sys.stderr)
        return EXIT_BIND
    return 0


def cmd_replay(args) -> int:
    from .replay import replay_session

    export_base = Path(args.export) if args.export else None
    report = replay_session(Path(args.log), export_base=export_base,
                            verify=args.verify)
    if report.exported:
        print(f"exported: {', '.join(str(p) for p in report.exported)}")
    if args.verify:
        print(f"replay verification: {'bit-exact' if report.bit_exact else 'MISMATCH'}"
              f" over {report.ticks} ticks")
        if not report.bit_exact:
            return EXIT_RUNTIME
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="locoarm",
        description="Cooperative quadruped+arm control: train, evaluate, "
                    "compose, serve, replay.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check-config", help="validate an experiment config")
    p.add_argument("config")
    p.set_defaults(func=cmd_check_config)

    p = sub.add_parser("train", help="run two-stage training")
    p.add_argument("config")
    p.add_argument("--stage", choices=["1", "2", "both"], default="both")
    p.add_argument("--resume", help="loco checkpoint to start from")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="run directory (default runs/<name>)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="tracking/survival/workspace evaluation")
    p.add_argument("source", help="run dir, composition .json, or loco checkpoint")
    p.add_argument("--arm", help="arm checkpoint when source is a loco checkpoint")
    p.add_argument("--config", required=True)
    p.add_argument("--mode", choices=["still", "move", "both"], default="both")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--skip-survival", action="store_true")
    p.add_argument("--skip-workspace", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compose", help="pair a loco and an arm checkpoint")
    p.add_argument("loco")
    p.add_argument("arm")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compose)

    p = sub.add_parser("serve", help="run the teleoperation service")
    p.add_argument("composition", help="composition descriptor .json")
    p.add_argument("--config", help="experiment config for sim settings")
    p.add_argument("--listen", default="127.0.0.1:8800")
    p.add_argument("--seed", type=int)
    p.add_argument("--record", help="session log path (.jsonl)")
    p.add_argument("--stream-rate", type=float, default=50.0)
    p.add_argument("--console-dir", help="static console assets to serve at /")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("replay", help="replay/export a recorded session log")
    p.add_argument("log")
    p.add_argument("--export", help="output base path for .jsonl/.csv export")
    p.add_argument("--verify", action="store_true",
                   help="re-simulate and compare bit-exactly")
    p.set_defaults(func=cmd_replay)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ParseError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalDivergence as exc:
        print(f"numerical divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InterfaceMismatch, MissingCheckpoint, LocoArmError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
