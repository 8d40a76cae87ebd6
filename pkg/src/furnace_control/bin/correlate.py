"""Correlate grid hyperparameters with job scores."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import pandas as pd

from furnace_control.lib.console import (
    ArgumentParser,
    add_verbose_argument,
    configure_logging,
    guarded,
)
from furnace_control.lib.correlation import SIGNIFICANCE, correlate, format_report, write_report


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    """Parse command-line arguments."""
    parser = ArgumentParser(
        prog="furnace correlate",
        description="Pearson correlation of each hyperparameter with the job scores.",
    )
    parser.add_argument("results", type=Path, help="results.csv written by 'furnace grid'")
    parser.add_argument("--score", default="best_score", help="Score column to correlate with")
    parser.add_argument(
        "--threshold", type=float, default=SIGNIFICANCE, help="Flag rows with |r| above this"
    )
    parser.add_argument(
        "--table",
        action="append",
        dest="tables",
        default=None,
        help="Hyperparameter to tabulate mean scores for (repeatable; default: all that vary)",
    )
    parser.add_argument("--out", type=Path, default=None, help="Directory for the CSV outputs")
    add_verbose_argument(parser)
    return parser.parse_args(argv)


def run(args: argparse.Namespace) -> int:
    if not args.results.is_file():
        msg = f"{args.results} not found"
        raise FileNotFoundError(msg)
    results = pd.read_csv(args.results)
    report = correlate(results, args.score, threshold=args.threshold, tables=args.tables)
    print(format_report(report), end="")
    if args.out is not None:
        for path in write_report(report, args.out):
            print(f"wrote {path}")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = parse_args(argv)
    configure_logging(args.verbose)
    return guarded(lambda: run(args))


if __name__ == "__main__":
    sys.exit(main())
