"""Shared plumbing for the ``furnace`` command-line verbs."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import TYPE_CHECKING, NoReturn

from furnace_control.lib.errors import ConfigError, FurnaceError
from furnace_control.lib.wrapper import WrappingError

if TYPE_CHECKING:
    from collections.abc import Callable

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_FAILED = 2

VALIDATION_ERRORS: tuple[type[Exception], ...] = (ConfigError, WrappingError, ValueError)


class ArgumentParser(argparse.ArgumentParser):
    """Usage errors exit with the validation-error status."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def add_config_argument(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--config",
        type=Path,
        default=None,
        help="Twin configuration TOML (default: $FURNACE_CONTROL_CONFIG or the packaged twin)",
    )


def add_verbose_argument(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--verbose", "-v", action="store_true", help="Log progress to stderr")


def configure_logging(verbose: bool) -> None:
    if verbose:
        logging.basicConfig(
            level=logging.INFO, format="%(asctime)s %(levelname)s %(name)s: %(message)s"
        )


def error(message: object) -> None:
    print(f"ERROR: {message}", file=sys.stderr)


def guarded(action: Callable[[], int]) -> int:
    """Run *action*; report failures on stderr and map them to exit codes."""
    try:
        return action()
    except VALIDATION_ERRORS as exc:
        error(exc)
        return EXIT_INVALID
    except (FurnaceError, OSError) as exc:
        error(exc)
        return EXIT_FAILED
