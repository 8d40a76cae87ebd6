"""Run the furnace twin under a fixed controller and export the trajectory.

Writes the trajectory CSV (step, rod_front_m, T_sensor_1..k, P_z1..z5) and
a JSON summary of the last zone-3 sensor next to it.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import TYPE_CHECKING

from furnace_control.lib.config import load_twin_config
from furnace_control.lib.console import (
    ArgumentParser,
    add_config_argument,
    add_verbose_argument,
    configure_logging,
    guarded,
)
from furnace_control.lib.power import NUM_ZONES, PowerAction
from furnace_control.lib.twin import (
    CRITICAL_ZONE,
    FurnaceTwin,
    SensorMode,
    export_trajectory_csv,
    feed_rod,
    trajectory_frame,
    zone_sensor_slice,
)

if TYPE_CHECKING:
    from collections.abc import Callable, Sequence

    from furnace_control.lib.twin import FurnaceState, SensorReadout, TwinConfig

CONTROLLERS = {
    "hold": None,
    "increase": PowerAction.INCREASE,
    "decrease": PowerAction.DECREASE,
}


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    """Parse command-line arguments."""
    parser = ArgumentParser(
        prog="furnace simulate", description="Run the furnace twin and export its trajectory."
    )
    add_config_argument(parser)
    parser.add_argument("--steps", type=int, default=100, help="Steps to simulate")
    parser.add_argument(
        "--controller",
        choices=sorted(CONTROLLERS),
        default="hold",
        help="hold: no change; increase/decrease: that action on every zone each step",
    )
    parser.add_argument(
        "--rod-temperature",
        type=float,
        default=None,
        help="Initial rod temperature (default: ambient)",
    )
    parser.add_argument(
        "--out", type=Path, default=Path("trajectory.csv"), help="Trajectory CSV to write"
    )
    add_verbose_argument(parser)
    return parser.parse_args(argv)


def scripted(action: PowerAction | None) -> Callable[..., Sequence[PowerAction] | None]:
    def control(
        _state: FurnaceState, _readout: SensorReadout | None
    ) -> Sequence[PowerAction] | None:
        return None if action is None else (action,) * NUM_ZONES

    return control


def last_sensor_column(config: TwinConfig) -> str:
    """Trajectory column of the last sensor over zone 3 in the configured sensor mode."""
    if config.sensor_mode is SensorMode.FORGE:
        return f"T_sensor_{zone_sensor_slice(CRITICAL_ZONE).stop}"
    return f"T_sensor_{len(config.sensor_positions_virtual)}"


def run(args: argparse.Namespace) -> int:
    config = load_twin_config(args.config)
    twin = FurnaceTwin(config)
    state = twin.init([feed_rod(config, args.rod_temperature)])
    trajectory = twin.run(state, scripted(CONTROLLERS[args.controller]), args.steps)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    export_trajectory_csv(trajectory, args.out)
    column = last_sensor_column(config)
    temps = trajectory_frame(trajectory)[column]
    summary = {
        "steps": len(trajectory),
        "controller": args.controller,
        "sensor": column,
        "min": float(temps.min()),
        "max": float(temps.max()),
        "mean": float(temps.mean()),
    }
    summary_path = args.out.with_suffix(".summary.json")
    summary_path.write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    print(f"Wrote {len(trajectory)} steps to {args.out}")
    print(
        f"Zone 3 last sensor: min {summary['min']:.1f}, max {summary['max']:.1f}, "
        f"mean {summary['mean']:.1f}"
    )
    return 0


def main(argv: list[str] | None = None) -> int:
    args = parse_args(argv)
    configure_logging(args.verbose)
    return guarded(lambda: run(args))


if __name__ == "__main__":
    sys.exit(main())
