"""Wrap a trained checkpoint and register it in the algorithm store.

The printed version id is what ``furnace manage select`` and
``furnace pipeline --model-version`` expect. Nothing is stored when the
checkpoint cannot be loaded or wrapped.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from furnace_control.lib import checkpoint
from furnace_control.lib.config import load_twin_config
from furnace_control.lib.console import (
    ArgumentParser,
    add_config_argument,
    add_verbose_argument,
    configure_logging,
    guarded,
)
from furnace_control.lib.managers import MODEL
from furnace_control.lib.stores import MODES, Stores
from furnace_control.lib.twin import SensorMode
from furnace_control.lib.wrapper import NormBounds, wrap_model

DEFAULT_STORE = Path(".furnace-store")


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    """Parse command-line arguments."""
    parser = ArgumentParser(
        prog="furnace deploy", description="Wrap a checkpoint and store it as a deployable model."
    )
    parser.add_argument("checkpoint", type=Path, help="checkpoint.bundle written by training")
    add_config_argument(parser)
    parser.add_argument(
        "--zone", type=int, default=None, help="Zone the agent controls, 1-5 (default: trained)"
    )
    parser.add_argument(
        "--sensor-mode",
        choices=[m.value for m in SensorMode],
        default=None,
        help="Sensor layout the agent reads (default: as trained)",
    )
    parser.add_argument("--store", type=Path, default=DEFAULT_STORE, help="Store directory")
    parser.add_argument(
        "--activate",
        choices=MODES,
        default=None,
        help="Also make the new version the active manager for this production mode",
    )
    add_verbose_argument(parser)
    return parser.parse_args(argv)


def run(args: argparse.Namespace) -> int:
    twin_config = load_twin_config(args.config)
    trained = checkpoint.load(args.checkpoint)
    zone = trained.zone if args.zone is None else args.zone - 1
    sensor_mode = trained.sensor_mode if args.sensor_mode is None else SensorMode(args.sensor_mode)
    bounds = NormBounds() if trained.config.normalize else None
    model = wrap_model(trained.policy_network, zone, sensor_mode, twin_config, bounds)
    stores = Stores.in_directory(args.store)
    version = stores.algorithms.put(model.to_bytes())
    if args.activate is not None:
        stores.power_config.set(args.activate, MODEL, version)
        print(f"{args.activate} now runs {MODEL}@{version}", file=sys.stderr)
    print(version)
    return 0


def main(argv: list[str] | None = None) -> int:
    args = parse_args(argv)
    configure_logging(args.verbose)
    return guarded(lambda: run(args))


if __name__ == "__main__":
    sys.exit(main())
