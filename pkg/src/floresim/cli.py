"""Command-line entry point: train, eval, replay, compare, inspect."""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from ._build import build_id, derive_seed

LOG_ENV = "FLORESIM_LOG"
PROTOCOLS = ("straight", "sweep", "lateral", "circle", "course")

log = logging.getLogger("floresim")


def _setup_logging() -> None:
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _emit(title: str, rows: dict) -> None:
    """Tab-delimited block on stdout."""
    print(f"[{title}]")
    for k, v in rows.items():
        print(f"{k}\t{v}")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="floresim", description=__doc__)
    p.add_argument("--threads", type=int, default=1, help="worker threads for env stepping and torch")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a policy")
    t.add_argument("--morphology", choices=("flores", "baseline"), default="flores")
    t.add_argument("--envs", type=int, default=128)
    t.add_argument("--iters", type=int, default=1500)
    t.add_argument("--horizon", type=int, default=24)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", type=Path, required=True)
    t.add_argument("--config", type=Path, help="environment config YAML")
    t.add_argument("--terrain", help="terrain kind override")
    t.add_argument("--toy", action="store_true", help="flat-ground tracking-only task")
    t.add_argument("--no-randomize", action="store_true")
    t.add_argument("--checkpoint-every", type=int, default=100)
    t.add_argument("--threads", type=int, default=None, dest="sub_threads", help=argparse.SUPPRESS)

    e = sub.add_parser("eval", help="run an evaluation protocol")
    e.add_argument("--protocol", choices=PROTOCOLS, required=True)
    e.add_argument("--checkpoint", type=Path, required=True)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--radius", type=float, default=0.5)
    e.add_argument("--speed", type=float, default=None)
    e.add_argument("--terrain", default="flat")
    e.add_argument("--out", type=Path, default=Path("eval_out"))
    e.add_argument("--threads", type=int, default=None, dest="sub_threads", help=argparse.SUPPRESS)

    r = sub.add_parser("replay", help="deterministic rollout with a trajectory hash")
    r.add_argument("--checkpoint", type=Path, required=True)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--steps", type=int, default=500)
    r.add_argument("--out", type=Path, default=None, help="telemetry CSV path")
    r.add_argument("--threads", type=int, default=None, dest="sub_threads", help=argparse.SUPPRESS)

    c = sub.add_parser("compare", help="CoT ratios between two sets of reports")
    c.add_argument("a", type=Path, help="report file or directory of reports")
    c.add_argument("b", type=Path)
    c.add_argument("--out", type=Path, default=None)

    i = sub.add_parser("inspect", help="describe a checkpoint or a morphology")
    i.add_argument("target", help="checkpoint path, or a morphology tag (flores, baseline)")
    return p


# ---------------------------------------------------------------------- commands

def cmd_train(args) -> int:
    from .env import load_env_config, save_env_config, tracking_only
    from .learn import TrainConfig, train

    env_cfg = load_env_config(args.config)
    if args.toy:
        env_cfg = tracking_only(env_cfg)
    if args.terrain:
        env_cfg = dataclasses.replace(env_cfg, terrain_kind=args.terrain)
    if args.no_randomize:
        env_cfg = dataclasses.replace(env_cfg, randomize=False, randomize_pushes=False)
    cfg = TrainConfig(num_envs=args.envs, iterations=args.iters, horizon=args.horizon, seed=args.seed,
                      threads=args.threads, checkpoint_every=args.checkpoint_every)
    args.out.mkdir(parents=True, exist_ok=True)
    save_env_config(env_cfg, args.out / "env_config.yaml")
    (args.out / "run.json").write_text(json.dumps(
        {"command": "train", "morphology": args.morphology, "seed": args.seed, "build": build_id(),
         "train_config": cfg.to_dict(), "env_config": env_cfg.to_dict()}, indent=2, sort_keys=True))
    result = train(args.morphology, cfg, env_cfg, args.out)
    last = result.curve[-1] if result.curve else {}
    _emit("train", {"morphology": args.morphology, "seed": args.seed, "iterations": len(result.curve),
                    "wall_time_s": f"{result.wall_time:.1f}",
                    "final_tracking_lin_vel": f"{last.get('tracking_lin_vel', float('nan')):.4f}",
                    "checkpoint": result.checkpoints[-1] if result.checkpoints else "",
                    "curve": args.out / "curve.csv", "build": build_id()})
    return 0


def _load_policy(path: Path):
    from .learn import policy_from_checkpoint
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    return policy_from_checkpoint(path)


def cmd_eval(args) -> int:
    from .eval import (ProtocolSettings, run_circle, run_course, run_lateral, run_straight_line,
                       sweep_straight_line)
    from .eval.plots import plot_cot_series, plot_cot_vs_speed, write_cot_vs_speed, write_series_data
    from .eval.telemetry import write_telemetry

    policy, meta = _load_policy(args.checkpoint)
    morph = meta["morphology"]
    echo = {"command": "eval", "protocol": args.protocol, "checkpoint": str(args.checkpoint),
            "seed": args.seed, "radius": args.radius, "speed": args.speed, "terrain": args.terrain,
            "build": build_id(), "train_iterations": meta.get("iteration"),
            "train_seed": meta.get("seed")}
    settings = ProtocolSettings(seed=args.seed, threads=args.threads, meta={"config": echo,
                                "build": build_id(), "train_iterations": meta.get("iteration")})
    if args.protocol == "straight":
        reports = [run_straight_line(policy, morph, args.terrain, args.speed or 1.0, settings=settings)]
    elif args.protocol == "sweep":
        reports = sweep_straight_line(policy, morph, settings=settings)
    elif args.protocol == "lateral":
        reports = [run_lateral(policy, morph, args.speed or 0.5, settings=settings)]
    elif args.protocol == "circle":
        reports = [run_circle(policy, morph, args.radius, args.speed or 0.4, settings=settings)]
    else:
        reports = [run_course(policy, morph, speed=args.speed or 0.5, settings=settings)]

    args.out.mkdir(parents=True, exist_ok=True)
    for k, rep in enumerate(reports):
        stem = f"{rep.protocol}_{morph}_s{args.seed}" + (f"_{k}" if len(reports) > 1 else "")
        path = rep.save(args.out / f"{stem}.json")
        write_series_data(rep, args.out / f"{stem}_cot.dat")
        plot_cot_series([rep], args.out / f"{stem}_cot.png")
        write_telemetry(rep.records, args.out / f"{stem}_telemetry.csv",
                        {"seed": args.seed, "build": build_id(), "config": json.dumps(echo, sort_keys=True)})
        _emit(f"report {stem}", {
            "protocol": rep.protocol_id, "morphology": morph, "seed": rep.seed,
            "aggregate_cot": "undefined" if rep.aggregate_cot is None else f"{rep.aggregate_cot:.5f}",
            "flags": ",".join(rep.flags) or "-", "tracking_lin_mean": rep.tracking.get("lin_mean"),
            "report": path, "build": build_id()})
    if args.protocol == "sweep":
        write_cot_vs_speed(reports, args.out / "cot_vs_speed.dat")
        plot_cot_vs_speed(reports, args.out / "cot_vs_speed.png")
    return 0


def replay_telemetry(policy, meta: dict, seed: int, steps: int, threads: int = 1):
    """Deterministic rollout under the checkpoint's environment, randomization off."""
    import torch

    from .env import EnvConfig, WheelLeggedEnv
    from .eval.telemetry import TelemetryRecord

    env_cfg = EnvConfig.from_dict(meta["env_config"]) if "env_config" in meta else EnvConfig()
    env_cfg = dataclasses.replace(env_cfg, randomize=False, randomize_pushes=False)
    env = WheelLeggedEnv(meta["morphology"], 1, env_cfg, seed=derive_seed(seed, "eval"), threads=threads)
    states = env.reset()
    records = []
    try:
        for k in range(steps):
            cmd = env.commands[0].copy()
            with torch.no_grad():
                a = policy.act(torch.as_tensor(states, dtype=torch.float32), deterministic=True)
            states, _, _, info = env.step(a.numpy().astype(np.float64))
            v = info["true_velocity"][0]
            records.append(TelemetryRecord(
                (k + 1) * env_cfg.control_dt, info["torques"][0], info["joint_velocities"][0],
                info["base_position"][0], float(np.hypot(v[0], v[1])), float(info["heading"][0]),
                cmd, info["wheel_contact"][0].astype(float)))
    finally:
        env.close()
    return records, env_cfg


def cmd_replay(args) -> int:
    from .eval.telemetry import telemetry_csv

    policy, meta = _load_policy(args.checkpoint)
    records, env_cfg = replay_telemetry(policy, meta, args.seed, args.steps, args.threads)
    body = telemetry_csv(records)
    digest = hashlib.sha256(body.encode()).hexdigest()
    header = {"checkpoint": args.checkpoint, "seed": args.seed, "steps": args.steps,
              "build": build_id(), "trajectory_sha256": digest,
              "config": json.dumps({"env_config": env_cfg.to_dict(), "morphology": meta["morphology"]},
                                   sort_keys=True)}
    if args.out is not None:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(telemetry_csv(records, header))
    _emit("replay", {"checkpoint": args.checkpoint, "seed": args.seed, "steps": len(records),
                     "trajectory_sha256": digest, "build": build_id()})
    return 0


def _reports(path: Path):
    from .eval import ExperimentReport
    files = sorted(path.glob("*.json")) if path.is_dir() else [path]
    return [ExperimentReport.load(f) for f in files]


def cmd_compare(args) -> int:
    from .eval import compare_many, comparison_table

    rows = compare_many(_reports(args.a), _reports(args.b))
    table = comparison_table(rows)
    print("[compare]")
    print(table)
    if args.out is not None:
        args.out.write_text(f"# build={build_id()} a={args.a} b={args.b}\n{table}\n")
    return 0


def cmd_inspect(args) -> int:
    from .morphology import MORPHOLOGY_TAGS, build, validate

    if args.target in MORPHOLOGY_TAGS:
        model = build(args.target)
        issues = validate(model)
        _emit(f"morphology {args.target}", {
            "total_mass_kg": f"{model.total_mass:.3f}", "links": len(model.links),
            "joints": len(model.joints), "valid": not issues,
            **{j.name: f"{j.kind} axis={tuple(round(a, 3) for a in j.axis)}" for j in model.joints}})
        return 0
    from .learn import load_checkpoint
    params, meta = load_checkpoint(Path(args.target))
    _emit("checkpoint", {"path": args.target, "version": meta["version"],
                         "morphology": meta["morphology"], "seed": meta["seed"],
                         "iteration": meta.get("iteration"), "build": meta.get("build"),
                         "parameters": sum(int(np.prod(s)) if s else 1 for _, s in meta["shapes"])})
    for name, shape in meta["shapes"]:
        print(f"{name}\t{'x'.join(map(str, shape))}")
    return 0


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "replay": cmd_replay, "compare": cmd_compare,
            "inspect": cmd_inspect}


def run(argv=None) -> int:
    _setup_logging()
    parser = _parser()
    args = parser.parse_args(argv)
    if getattr(args, "sub_threads", None) is not None:
        args.threads = args.sub_threads
    if args.threads < 1:
        parser.error("argument --threads: must be at least 1")
    import torch
    torch.set_num_threads(args.threads)
    try:
        return COMMANDS[args.command](args)
    except FileNotFoundError as exc:
        print(f"floresim: error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, OSError) as exc:
        print(f"floresim: error: {exc}", file=sys.stderr)
        return 4


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
