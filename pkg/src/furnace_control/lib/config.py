"""Read twin configuration, job and grid files (TOML).

Keys use the ``TwinConfig`` field names with ``-`` or ``_`` accepted. A file
may hold only the keys it changes; everything else keeps its default.
"""

from __future__ import annotations

import os
import sys
from dataclasses import fields
from importlib import resources
from pathlib import Path
from typing import TYPE_CHECKING, Any

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from furnace_control.lib.errors import ConfigError
from furnace_control.lib.twin import Coil, Mode, SensorMode, TemperatureBand, TwinConfig

if TYPE_CHECKING:
    from collections.abc import Callable, Mapping

CONFIG_ENV = "FURNACE_CONTROL_CONFIG"
DEFAULT_TWIN_CONFIG = "twin.toml"


def read_toml(path: Path) -> dict[str, Any]:
    if not path.is_file():
        msg = f"{path} not found"
        raise FileNotFoundError(msg)
    try:
        with path.open("rb") as f:
            return tomllib.load(f)
    except tomllib.TOMLDecodeError as exc:
        msg = f"{path} is not valid TOML: {exc}"
        raise ConfigError(msg) from exc


def normalize_keys(raw: Mapping[str, Any]) -> dict[str, Any]:
    return {key.replace("-", "_"): value for key, value in raw.items()}


def _number(key: str, value: Any) -> float:
    if isinstance(value, bool) or not isinstance(value, int | float):
        msg = f"twin: '{key}' must be a number (got {value!r})"
        raise ConfigError(msg)
    return float(value)


def _integer(key: str, value: Any) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        msg = f"twin: '{key}' must be an integer (got {value!r})"
        raise ConfigError(msg)
    return value


def _vector(key: str, value: Any, size: int | None = None) -> tuple[float, ...]:
    if not isinstance(value, list):
        msg = f"twin: '{key}' must be an array (got {value!r})"
        raise ConfigError(msg)
    if size is not None and len(value) != size:
        msg = f"twin: '{key}' must have {size} entries (got {len(value)})"
        raise ConfigError(msg)
    return tuple(_number(key, v) for v in value)


def _pair(key: str, value: Any) -> tuple[float, float]:
    low, high = _vector(key, value, 2)
    return low, high


def _coils(key: str, value: Any) -> tuple[Coil, ...]:
    if not isinstance(value, list) or not all(isinstance(c, dict) for c in value):
        msg = f"twin: '{key}' must be an array of tables with number, zone, start, end"
        raise ConfigError(msg)
    coils = []
    for entry in value:
        missing = {"number", "zone", "start", "end"} - entry.keys()
        if missing:
            msg = f"twin: '{key}' entry lacks {', '.join(sorted(missing))}"
            raise ConfigError(msg)
        coils.append(
            Coil(
                number=_integer(key, entry["number"]),
                zone=_integer(key, entry["zone"]) - 1,
                start=_number(key, entry["start"]),
                end=_number(key, entry["end"]),
            )
        )
    return tuple(coils)


def _bands(key: str, value: Any) -> tuple[TemperatureBand, ...]:
    if not isinstance(value, list):
        msg = f"twin: '{key}' must be an array of [min, target, max] arrays"
        raise ConfigError(msg)
    return tuple(TemperatureBand(*_vector(key, band, 3)) for band in value)


def _enum(kind: type[Mode] | type[SensorMode]) -> Callable[[str, Any], Any]:
    def convert(key: str, value: Any) -> Any:
        try:
            return kind(value)
        except ValueError:
            allowed = ", ".join(m.value for m in kind)
            msg = f"twin: invalid {key} {value!r} (allowed: {allowed})"
            raise ConfigError(msg) from None

    return convert


_CONVERTERS: dict[str, Callable[[str, Any], Any]] = {
    "coil_layout": _coils,
    "sensor_positions_forge": _vector,
    "sensor_positions_virtual": _vector,
    "step_seconds": _number,
    "total_steps": _integer,
    "rod_velocity": _number,
    "initial_powers": _vector,
    "initial_voltages": _vector,
    "ambient_temp": _number,
    "heating_gain": _number,
    "cooling_rate": _number,
    "segment_length": _number,
    "zone_temp_bands": _bands,
    "mode": _enum(Mode),
    "warmhold_span": _pair,
    "warmhold_velocity": _number,
    "power_action_step": _number,
    "power_bounds": _pair,
    "sensor_mode": _enum(SensorMode),
}


def twin_config_from_mapping(raw: Mapping[str, Any]) -> TwinConfig:
    known = {f.name for f in fields(TwinConfig)}
    values: dict[str, Any] = {}
    for key, value in raw.items():
        name = key.replace("-", "_")
        if name not in known:
            msg = f"twin: unknown key '{key}'"
            raise ConfigError(msg)
        values[name] = _CONVERTERS[name](key, value)
    return TwinConfig(**values)


def default_twin_config() -> TwinConfig:
    """The packaged configuration: 21 coils, 18 forge and 15 virtual sensors."""
    ref = resources.files("furnace_control.configs").joinpath(DEFAULT_TWIN_CONFIG)
    try:
        raw = tomllib.loads(ref.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        msg = f"packaged {DEFAULT_TWIN_CONFIG} is not valid TOML: {exc}"
        raise ConfigError(msg) from exc
    return twin_config_from_mapping(raw.get("twin", {}))


def resolve_config_path(path: Path | None) -> Path | None:
    """*path* if given, else ``$FURNACE_CONTROL_CONFIG`` if set."""
    if path is not None:
        return path
    override = os.environ.get(CONFIG_ENV)
    return Path(override) if override else None


def load_twin_config(path: Path | None = None) -> TwinConfig:
    resolved = resolve_config_path(path)
    if resolved is None:
        return default_twin_config()
    raw = read_toml(resolved)
    twin = raw.get("twin", {})
    if not isinstance(twin, dict):
        msg = f"{resolved}: [twin] must be a table"
        raise ConfigError(msg)
    return twin_config_from_mapping(twin)
