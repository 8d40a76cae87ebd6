"""Drive the full control chain with synthetic plant telemetry and report stage latencies.

Exits 2 when the run fails its verdict (a stage over budget, records not
accounted for, or the backlog over its bound).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from furnace_control.lib.clock import WallClock
from furnace_control.lib.config import load_twin_config
from furnace_control.lib.console import (
    EXIT_FAILED,
    ArgumentParser,
    add_config_argument,
    add_verbose_argument,
    configure_logging,
    error,
    guarded,
)
from furnace_control.lib.latency import format_table
from furnace_control.lib.pipeline import (
    DEFAULT_BACKLOG_BOUND,
    DEFAULT_RATE,
    Pipeline,
    PipelineResult,
)
from furnace_control.lib.stores import Stores


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    """Parse command-line arguments."""
    parser = ArgumentParser(
        prog="furnace pipeline",
        description="Run the telemetry and power-control pipeline against a simulated plant.",
    )
    add_config_argument(parser)
    parser.add_argument("--duration", type=int, default=60, help="Seconds of plant time")
    parser.add_argument(
        "--rate", type=int, default=DEFAULT_RATE, help="Telemetry records per second"
    )
    parser.add_argument(
        "--model-version",
        default=None,
        help="Deployed version to run in normal production (default: the stored selection)",
    )
    parser.add_argument(
        "--store", type=Path, default=None, help="Store directory (default: in memory)"
    )
    parser.add_argument(
        "--tag-delay-ms",
        type=float,
        default=0.0,
        help="Artificial delay added to every tag server call",
    )
    parser.add_argument(
        "--backlog-bound",
        type=int,
        default=DEFAULT_BACKLOG_BOUND,
        help="Fail when more messages than this wait unprocessed",
    )
    parser.add_argument(
        "--virtual-clock",
        action="store_true",
        help="Run on a simulated clock, as fast as possible and deterministically",
    )
    parser.add_argument("--out", type=Path, default=None, help="Write the result as JSON here")
    add_verbose_argument(parser)
    return parser.parse_args(argv)


def summarize(result: PipelineResult) -> str:
    c = result.counts
    lines = [
        format_table(result.reports),
        f"Records: {c['forwarded']} forwarded, {c['reformatted']} parsed, "
        f"{c['dead_lettered']} dead-lettered",
        f"Snapshots: {c['snapshots_published']} published, "
        f"{c['snapshots_incomplete']} incomplete of {c['windows']} windows",
        f"Updates: {c['updates_published']} published, {c['updates_rejected']} rejected, "
        f"{c['updates_applied']} applied",
        f"Backlog: max {result.backlog_max} (bound {result.backlog_bound})",
        f"Verdict: {'pass' if result.passed else 'fail'}",
    ]
    return "\n".join(lines)


def run(args: argparse.Namespace) -> int:
    if args.duration < 0 or args.rate < 0 or args.tag_delay_ms < 0:
        msg = "--duration, --rate and --tag-delay-ms must be >= 0"
        raise ValueError(msg)
    twin_config = load_twin_config(args.config)
    stores = Stores() if args.store is None else Stores.in_directory(args.store)
    pipeline = Pipeline(
        twin_config,
        stores,
        clock=None if args.virtual_clock else WallClock(),
        rate=args.rate,
        tag_delay_s=args.tag_delay_ms / 1000.0,
        backlog_bound=args.backlog_bound,
        model_version=args.model_version,
    )
    if pipeline.virtual:
        result = pipeline.run_virtual(args.duration)
    else:
        result = pipeline.run_live(float(args.duration))
    print(summarize(result))
    for line in result.diagnostics:
        error(line)
    if args.out is not None:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(json.dumps(result.to_json(), indent=2) + "\n", encoding="utf-8")
    return 0 if result.passed else EXIT_FAILED


def main(argv: list[str] | None = None) -> int:
    args = parse_args(argv)
    configure_logging(args.verbose)
    return guarded(lambda: run(args))


if __name__ == "__main__":
    sys.exit(main())
