"""Manage deployed algorithms: upload bundles, select the active manager, show the state."""

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
from furnace_control.lib.managers import MANAGER_IDS, MODEL
from furnace_control.lib.stores import MODES, NotFoundError, Stores
from furnace_control.lib.wrapper import WrappedModel

DEFAULT_STORE = Path(".furnace-store")


def _cmd_upload(args: argparse.Namespace, stores: Stores) -> int:
    blob = args.bundle.read_bytes()
    WrappedModel.from_bytes(blob)
    print(stores.algorithms.put(blob))
    return 0


def _cmd_select(args: argparse.Namespace, stores: Stores) -> int:
    if args.manager == MODEL:
        if args.version is None:
            msg = f"manager '{MODEL}' needs --version"
            raise ValueError(msg)
        if args.version not in stores.algorithms:
            msg = f"algorithm version '{args.version}' not found"
            raise NotFoundError(msg)
    elif args.version is not None:
        msg = f"manager '{args.manager}' takes no version"
        raise ValueError(msg)
    stores.power_config.set(args.mode, args.manager, args.version)
    print(f"{args.mode}: {args.manager}" + (f"@{args.version}" if args.version else ""))
    return 0


def _cmd_show(_args: argparse.Namespace, stores: Stores) -> int:
    print("Active managers:")
    for mode in MODES:
        active = stores.power_config.get(mode)
        suffix = f"@{active.version}" if active.version else ""
        print(f"  {mode}: {active.manager_id}{suffix}")
    versions = stores.algorithms.versions()
    print(f"Stored algorithms ({len(versions)}):")
    for version in versions:
        print(f"  {version}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = ArgumentParser(
        prog="furnace manage", description="Manage deployed control algorithms."
    )
    parser.add_argument("--store", type=Path, default=DEFAULT_STORE, help="Store directory")
    add_verbose_argument(parser)
    sub = parser.add_subparsers(dest="command")

    upload = sub.add_parser("upload", help="Store a wrapped-model bundle and print its version")
    upload.add_argument("bundle", type=Path)

    select = sub.add_parser("select", help="Set the active manager for a production mode")
    select.add_argument("mode", choices=MODES)
    select.add_argument("manager", choices=MANAGER_IDS)
    select.add_argument("--version", default=None, help="Algorithm version (drl only)")

    sub.add_parser("show", help="Show active managers and stored versions")

    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return 1
    configure_logging(args.verbose)

    dispatch = {"upload": _cmd_upload, "select": _cmd_select, "show": _cmd_show}
    return guarded(lambda: dispatch[args.command](args, Stores.in_directory(args.store)))


if __name__ == "__main__":
    sys.exit(main())
