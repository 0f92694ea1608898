"""Command-line entry point: ``tl3dqn {train,baseline,ablate,rush,eval}``."""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import harness
from .config import PRESETS, SCENARIOS, VARIANTS, load_config


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(2, f"error: usage: {self.prog}: {message}\n")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value file; flags override it")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--variant", choices=VARIANTS)
    p.add_argument("--scenario", choices=SCENARIOS)
    p.add_argument("--episodes", type=int, dest="episode_count")
    p.add_argument("--episode-seconds", type=int, dest="episode_length_s")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="runs/latest", help="output directory (default: %(default)s)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tl3dqn", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log each episode")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train a learner")
    _common(train)
    train.add_argument("--resume", metavar="CKPT", help="continue from a checkpoint")

    base = sub.add_parser("baseline", help="fixed-time signal baseline")
    _common(base)
    base.add_argument("--fixed-seconds", type=int, help="phase duration (default: from the variant, else 30)")

    ablate = sub.add_parser("ablate", help="train full and each ablated variant")
    _common(ablate)

    rush = sub.add_parser("rush", help="train under rush-hour arrivals")
    _common(rush)

    ev = sub.add_parser("eval", help="greedy rollouts of a checkpoint")
    ev.add_argument("checkpoint")
    ev.add_argument("--episodes", type=int, default=10)
    ev.add_argument("--seed", type=int)
    ev.add_argument("--out", default="runs/eval")
    return parser


def _summary(series) -> str:
    if not series:
        return "episodes=0"
    tail = series[-min(50, len(series)):]
    return (f"episodes={len(series)} last_avg_wait_s={series[-1].avg_wait_s:.3f} "
            f"tail_mean_avg_wait_s={np.mean([m.avg_wait_s for m in tail]):.3f}")


def run(args) -> str:
    if args.command == "eval":
        return _summary(harness.evaluate(args.checkpoint, args.episodes, args.seed, args.out))

    overrides = {k: getattr(args, k) for k in ("variant", "scenario", "episode_count", "episode_length_s", "seed")}
    config = load_config(args.config, args.preset, **overrides)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "config.txt"), "w", encoding="utf-8") as fh:
        fh.write(config.dump())

    if args.command == "train":
        if args.resume:
            trainer = harness.Trainer.load(args.resume, args.out,
                                           **{k: v for k, v in overrides.items() if v is not None})
        else:
            trainer = harness.Trainer(config, args.out)
        return _summary(trainer.run())
    if args.command == "baseline":
        return _summary(harness.run_baseline(config, args.fixed_seconds, args.out))
    if args.command == "ablate":
        results = harness.run_ablation(config, out_dir=args.out)
        return " | ".join(f"{k}: {_summary(v)}" for k, v in results.items())
    if args.command == "rush":
        return _summary(harness.run_rush_hour(config, args.out))
    raise AssertionError(args.command)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        print(run(args))
    except KeyboardInterrupt:
        print("error: interrupted", file=sys.stderr)
        return 130
    except Exception as exc:  # one parseable line, no traceback
        message = " ".join(str(exc).split())
        print(f"error: {type(exc).__name__}: {message}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
