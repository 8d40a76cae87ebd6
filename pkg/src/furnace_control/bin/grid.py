"""Run a hyperparameter grid (or a seeded sample of it) and collect one score row per job."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from furnace_control.lib.config import load_twin_config
from furnace_control.lib.console import (
    ArgumentParser,
    add_config_argument,
    add_verbose_argument,
    configure_logging,
    guarded,
)
from furnace_control.lib.grid import RESULTS_FILE, load_grid, run_grid, write_results


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    """Parse command-line arguments."""
    parser = ArgumentParser(
        prog="furnace grid", description="Train every job of a hyperparameter grid."
    )
    parser.add_argument("grid", type=Path, help="Grid TOML with [grid] and [grid.values]")
    add_config_argument(parser)
    parser.add_argument("--seed", type=int, default=None, help="Override the sampling seed")
    parser.add_argument(
        "--budget", type=int, default=None, help="Run at most this many combinations"
    )
    parser.add_argument("--workers", type=int, default=1, help="Worker processes")
    parser.add_argument(
        "--keep-jobs",
        action="store_true",
        help="Also write each job's checkpoint and metrics under OUT/job-NNN",
    )
    parser.add_argument("--dry-run", action="store_true", help="List the jobs without training")
    parser.add_argument("--out", type=Path, default=Path("grid-output"), help="Output directory")
    add_verbose_argument(parser)
    return parser.parse_args(argv)


def run(args: argparse.Namespace) -> int:
    spec = load_grid(args.grid)
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    if args.budget is not None:
        if args.budget < 1:
            msg = f"--budget must be >= 1 (got {args.budget})"
            raise ValueError(msg)
        spec = replace(spec, budget=args.budget)
    jobs = spec.jobs()
    print(f"{len(jobs)} of {spec.size} combination(s) selected")
    if args.dry_run:
        for index, combo in zip(spec.indices(), spec.combinations(), strict=True):
            print(f"  [{index}] " + ", ".join(f"{k}={v}" for k, v in combo.items()))
        return 0
    twin_config = load_twin_config(args.config)
    frame = run_grid(
        jobs,
        twin_config,
        workers=args.workers,
        out_dir=args.out if args.keep_jobs else None,
    )
    path = args.out / RESULTS_FILE
    write_results(frame, path)
    ranked = frame.sort_values("best_score", ascending=False)
    columns = ["job", *spec.names, "best_score"]
    print(ranked[columns].head(10).to_string(index=False))
    print(f"\nResults: {path}")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = parse_args(argv)
    configure_logging(args.verbose)
    return guarded(lambda: run(args))


if __name__ == "__main__":
    sys.exit(main())
