"""Turn an evaluation trace or training metrics into plot-ready CSV series."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from furnace_control.lib.console import (
    ArgumentParser,
    add_verbose_argument,
    configure_logging,
    guarded,
)
from furnace_control.lib.report import build_report, write_report
from furnace_control.lib.twin import CRITICAL_BAND


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    """Parse command-line arguments."""
    parser = ArgumentParser(
        prog="furnace report",
        description="Write temperature and power series aligned with the zone-3 band.",
    )
    parser.add_argument("input", type=Path, help="trace.csv or metrics.csv from 'furnace train'")
    parser.add_argument(
        "--band",
        type=float,
        nargs=2,
        metavar=("MIN", "MAX"),
        default=list(CRITICAL_BAND),
        help="Temperature band drawn with the series",
    )
    parser.add_argument("--out", type=Path, default=Path("report"), help="Output directory")
    add_verbose_argument(parser)
    return parser.parse_args(argv)


def run(args: argparse.Namespace) -> int:
    if not args.input.is_file():
        msg = f"{args.input} not found"
        raise FileNotFoundError(msg)
    low, high = args.band
    if not high > low:
        msg = f"--band MIN must be below MAX (got {low}, {high})"
        raise ValueError(msg)
    frames = build_report(args.input, (low, high))
    for path in write_report(frames, args.out):
        print(f"wrote {path} ({len(frames[path.name])} rows)")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = parse_args(argv)
    configure_logging(args.verbose)
    return guarded(lambda: run(args))


if __name__ == "__main__":
    sys.exit(main())
