"""Exception roots shared across the package."""

from __future__ import annotations


class FurnaceError(Exception):
    """Base class for every error raised by furnace_control."""


class ConfigError(FurnaceError):
    """Raised when a configuration, job spec or grid file has invalid content."""


class DimensionError(FurnaceError):
    """Raised when a vector does not have the size a component expects."""
