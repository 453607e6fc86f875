"""Command-line entry point: train, bench, plot, sweep."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from ..gridworld import OPTIMAL_RETURN
from .config import IM_CHOICES, build_run_config, read_config_file

log = logging.getLogger("imexplore")

_TRAIN_FLAGS = ("env", "im", "scaling", "beta_strategy", "beta", "beta_floor", "beta_smooth", "beta_frames",
                "arch", "im_arch", "seed", "frames", "out", "stop_at", "lr", "entropy_coef")


def _setup_logging() -> None:
    level = os.environ.get("IMEXPLORE_LOG_LEVEL", "INFO").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="imexplore", description="Intrinsic-motivation exploration experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run one seeded training configuration")
    t.add_argument("--config", help="key = value or JSON file; flags override it")
    t.add_argument("--env")
    t.add_argument("--im", choices=IM_CHOICES)
    t.add_argument("--scaling", choices=("noep", "ep", "first"))
    t.add_argument("--beta-strategy")
    t.add_argument("--beta", type=float)
    t.add_argument("--beta-floor", type=float)
    t.add_argument("--beta-smooth", type=float)
    t.add_argument("--beta-frames", type=float)
    t.add_argument("--arch", choices=("lightweight", "default"))
    t.add_argument("--im-arch", choices=("lightweight", "default"))
    t.add_argument("--seed", type=int)
    t.add_argument("--frames", type=int)
    t.add_argument("--out")
    t.add_argument("--stop-at", choices=("none", "95", "optimal"))
    t.add_argument("--lr", type=float)
    t.add_argument("--entropy-coef", type=float)

    b = sub.add_parser("bench", help="parameter counts and rollout latency")
    b.add_argument("--arch", required=True, choices=("lightweight", "default"))
    b.add_argument("--im", required=True, choices=IM_CHOICES)
    b.add_argument("--repeats", type=int, default=20)
    b.add_argument("--warmup", type=int, default=3)
    b.add_argument("--no-timing", action="store_true", help="only print parameter counts")

    pl = sub.add_parser("plot", help="mean +- std return curve from progress CSVs")
    pl.add_argument("files", nargs="*")
    pl.add_argument("--out", required=True)
    pl.add_argument("--env", help="draw optimal / 95%% lines for this env")
    pl.add_argument("--optimal", type=float)
    pl.add_argument("--title")

    s = sub.add_parser("sweep", help="run a cartesian grid of configurations")
    s.add_argument("--config", required=True)
    s.add_argument("--out")
    return p


def _train(args) -> int:
    from .runner import run_experiment

    file_values = read_config_file(args.config) if args.config else {}
    overrides = {k: getattr(args, k) for k in _TRAIN_FLAGS}
    cfg = build_run_config(file_values, overrides)
    out = Path(cfg.out or cfg.run_name())
    summary = run_experiment(cfg, out)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def _bench(args) -> int:
    from .bench import bench

    report = bench(args.arch, args.im, repeats=args.repeats, warmup=args.warmup, timing=not args.no_timing)
    print("\n".join(report.lines()))
    return 0


def _plot(args, parser) -> int:
    from .plotting import plot

    if not args.files:
        parser.error("plot: at least one CSV file is required")
    optimal = args.optimal if args.optimal is not None else OPTIMAL_RETURN.get((args.env or "").lower())
    print(plot(args.files, args.out, optimal=optimal, title=args.title))
    return 0


def _sweep(args) -> int:
    from .sweep import SweepSpec, run_sweep

    spec = SweepSpec.from_file(args.config)
    table = run_sweep(spec, args.out)
    for row in table:
        print(f"{row['env']:>7} {row['im']:>6}_{row['scaling']:<5} {row['beta_strategy']:<7} "
              f"{row['arch']:<11} {row['cell']}")
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "train":
            return _train(args)
        if args.command == "bench":
            return _bench(args)
        if args.command == "plot":
            return _plot(args, parser)
        return _sweep(args)
    except (ValueError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
