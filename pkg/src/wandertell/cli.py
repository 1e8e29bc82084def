"""Command-line entry points: generate-env, run, sweep, report, replay."""

from __future__ import annotations

import argparse
import sys

from ._version import __version__
from .errors import ConfigError, WandertellError
from .harness import (EpisodeConfig, replay, report, run_episode, sweep,
                      write_log)
from .mapping import OdometryNoiseModel
from .speaker import THRESHOLD_SETS
from .world import SensorConfig, generate_world, save_world

REWARD_CHOICES = ("curiosity", "coverage", "anticipation", "impact-grid",
                  "impact-dme")
SPEAKER_CHOICES = tuple(THRESHOLD_SETS)


def _add_episode_flags(p: argparse.ArgumentParser):
    p.add_argument("--env", default=None,
                   help="world JSON file; omitted means generate from the seed")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--reward", choices=REWARD_CHOICES, default="curiosity")
    p.add_argument("--policy", choices=("plan", "random"), default="plan",
                   help="'plan' follows exploration goals, 'random' samples actions")
    p.add_argument("--speaker", choices=SPEAKER_CHOICES, default="always")
    p.add_argument("--threshold", type=float, default=None,
                   help="speaker threshold; defaults to the first value of the variant's set")
    p.add_argument("--captioner", default="template",
                   help="'template' or 'external:<cmd:...|tcp:host:port>'")
    p.add_argument("--odom-sigma", type=float, default=0.0,
                   help="translation noise std per step (meters)")
    p.add_argument("--odom-sigma-rot", type=float, default=0.0,
                   help="rotation noise std per step (radians)")
    p.add_argument("--scan-match", action=argparse.BooleanOptionalAction,
                   default=True)


def _config_from_args(args) -> EpisodeConfig:
    threshold = args.threshold
    if threshold is None:
        threshold = THRESHOLD_SETS[args.speaker][0]
    return EpisodeConfig(
        seed=args.seed,
        steps=args.steps,
        env=args.env,
        policy=args.policy,
        reward_kind=args.reward,
        speaker_variant=args.speaker,
        speaker_threshold=float(threshold),
        captioner=args.captioner,
        sensor=SensorConfig(),
        odometry=OdometryNoiseModel(sigma_translation=args.odom_sigma,
                                    sigma_rotation=args.odom_sigma_rot),
        scan_match=args.scan_match,
    )


def _cmd_generate_env(args) -> int:
    world = generate_world(args.seed, extent_m=args.extent, n_rooms=args.rooms,
                           n_objects=args.objects)
    save_world(world, args.out)
    print(f"wrote {args.out} ({world.name}: {len(world.objects)} objects, "
          f"{len(world.spawn_poses)} spawns)")
    return 0


def _cmd_run(args) -> int:
    cfg = _config_from_args(args)
    prefix = args.out[:-6] if args.out.endswith(".jsonl") else args.out
    log = run_episode(cfg, snapshot_every=args.snapshot_every,
                      snapshot_prefix=prefix if args.snapshot_every else None)
    write_log(log, args.out)
    m = log.footer["metrics"]
    print(f"wrote {args.out}: {log.footer['steps_executed']} steps, "
          f"{m['n_captions']} captions, ED-S {m['ed_s']:.4f}, "
          f"area seen {m['area_seen']:.2f} m2")
    return 0


def _cmd_sweep(args) -> int:
    base = _config_from_args(args)
    grid = []
    variants = args.speakers or list(THRESHOLD_SETS)
    for variant in variants:
        for threshold in THRESHOLD_SETS[variant]:
            grid.append((variant, threshold))
    csv_path = sweep(base, grid, args.seeds, args.out, workers=args.workers)
    print(f"wrote {csv_path}: {len(args.seeds)} seeds x {len(grid)} cells")
    return 0


def _cmd_report(args) -> int:
    summary = report(args.logs, args.out)
    means = summary["mean"]
    print(f"{summary['n_episodes']} episodes: ED-S {means['ed_s']:.4f}, "
          f"map IoU {means['map_iou']:.4f}, area seen {means['area_seen']:.2f} m2")
    return 0


def _cmd_replay(args) -> int:
    matches, recomputed = replay(args.log)
    if matches:
        print(f"{args.log}: metrics reproduced")
        return 0
    print(f"{args.log}: METRIC MISMATCH; recomputed {recomputed.to_dict()}",
          file=sys.stderr)
    return 2


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="wandertell",
        description="Deterministic explore-and-describe simulator and evaluator")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="verb", required=True)

    gen = sub.add_parser("generate-env", help="write a procedural world JSON")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--extent", type=float, default=20.0)
    gen.add_argument("--rooms", type=int, default=4)
    gen.add_argument("--objects", type=int, default=12)
    gen.add_argument("--out", required=True)
    gen.set_defaults(fn=_cmd_generate_env)

    run_p = sub.add_parser("run", help="run one episode and write its log")
    _add_episode_flags(run_p)
    run_p.add_argument("--out", required=True, help="episode log path (.jsonl)")
    run_p.add_argument("--snapshot-every", type=int, default=0,
                       help="export PGM map snapshots every N steps")
    run_p.set_defaults(fn=_cmd_run)

    sweep_p = sub.add_parser("sweep", help="threshold sweep over seeds")
    _add_episode_flags(sweep_p)
    sweep_p.add_argument("--seeds", type=int, nargs="+", required=True)
    sweep_p.add_argument("--speakers", choices=SPEAKER_CHOICES, nargs="*",
                         help="variants to sweep; default all four")
    sweep_p.add_argument("--workers", type=int, default=1)
    sweep_p.add_argument("--out", required=True, help="output directory")
    sweep_p.set_defaults(fn=_cmd_sweep)

    rep = sub.add_parser("report", help="aggregate episode logs")
    rep.add_argument("logs", nargs="+")
    rep.add_argument("--out", required=True, help="output prefix for .csv/.json")
    rep.set_defaults(fn=_cmd_report)

    repl = sub.add_parser("replay", help="re-score a log and verify its footer")
    repl.add_argument("log")
    repl.set_defaults(fn=_cmd_replay)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (WandertellError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
