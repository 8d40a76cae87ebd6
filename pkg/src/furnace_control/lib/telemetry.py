"""Telemetry parser macroservice: raw tag records to per-second state snapshots.

Raw telemetry arrives on the ``telemetry`` topic as ``{"schema": 1, "tag":
..., "value": ..., "ts": ...}``. ``TelemetryParser`` validates and types each
record against the tag map and republishes it on ``reformatted_telemetry``;
anything malformed goes to the dead-letter log with a reason. ``StorageDump``
stores records, groups them into one-second windows and publishes a
``StateSnapshot`` for every window complete enough to act on.
"""

from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any

import numpy as np

from furnace_control.lib.clock import NS_PER_SECOND, to_second
from furnace_control.lib.errors import FurnaceError
from furnace_control.lib.fabric import (
    REFORMATTED_TELEMETRY,
    SCHEMA_VERSION,
    STATE_SNAPSHOTS,
    TELEMETRY,
)
from furnace_control.lib.latency import Stage
from furnace_control.lib.power import NUM_ZONES
from furnace_control.lib.services import Service
from furnace_control.lib.stores import NORMAL_PRODUCTION, TelemetryStore
from furnace_control.lib.twin import FORGE_SENSORS_PER_ZONE, Mode

if TYPE_CHECKING:
    from collections.abc import Sequence
    from pathlib import Path

    from numpy.typing import NDArray

    from furnace_control.lib.fabric import Bus, Message
    from furnace_control.lib.latency import LatencyRecorder
    from furnace_control.lib.stores import Stores

logger = logging.getLogger(__name__)

DEFAULT_COMPLETENESS_THRESHOLD = 0.9


class RecordKind(enum.Enum):
    TEMPERATURE = "temperature"
    POSITION = "position"
    VELOCITY = "velocity"
    POWER = "power"
    VOLTAGE = "voltage"
    MODE = "mode"
    MATERIAL = "material"


_NUMERIC_KINDS = frozenset(
    {
        RecordKind.TEMPERATURE,
        RecordKind.POSITION,
        RecordKind.VELOCITY,
        RecordKind.POWER,
        RecordKind.VOLTAGE,
    }
)


@dataclass(frozen=True)
class TagSpec:
    kind: RecordKind
    index: int | None = None


def temperature_tag(zone: int, sensor: int) -> str:
    """Tag of the *sensor*-th (1-based) forge pyrometer of *zone* (1-based)."""
    return f"T_Z{zone}_{sensor}"


def power_tag(zone: int) -> str:
    return f"P_Z{zone}"


def voltage_tag(zone: int) -> str:
    return f"V_Z{zone}"


ROD_POSITION_TAG = "ROD_POS"
ROD_VELOCITY_TAG = "ROD_VEL"
MODE_TAG = "MODE"
MATERIAL_TAG = "MATERIAL"


def build_tag_map() -> dict[str, TagSpec]:
    tags: dict[str, TagSpec] = {}
    index = 0
    for zone, count in enumerate(FORGE_SENSORS_PER_ZONE, start=1):
        for sensor in range(1, count + 1):
            tags[temperature_tag(zone, sensor)] = TagSpec(RecordKind.TEMPERATURE, index)
            index += 1
    for zone in range(1, NUM_ZONES + 1):
        tags[power_tag(zone)] = TagSpec(RecordKind.POWER, zone - 1)
        tags[voltage_tag(zone)] = TagSpec(RecordKind.VOLTAGE, zone - 1)
    tags[ROD_POSITION_TAG] = TagSpec(RecordKind.POSITION)
    tags[ROD_VELOCITY_TAG] = TagSpec(RecordKind.VELOCITY)
    tags[MODE_TAG] = TagSpec(RecordKind.MODE)
    tags[MATERIAL_TAG] = TagSpec(RecordKind.MATERIAL)
    return tags


TAG_MAP = build_tag_map()
TEMPERATURE_TAGS = tuple(t for t, s in TAG_MAP.items() if s.kind is RecordKind.TEMPERATURE)
POWER_TAGS = tuple(power_tag(z) for z in range(1, NUM_ZONES + 1))
VOLTAGE_TAGS = tuple(voltage_tag(z) for z in range(1, NUM_ZONES + 1))

# Fields counted by snapshot completeness; voltages and rod position are optional.
EXPECTED_FIELDS = (*TEMPERATURE_TAGS, *POWER_TAGS, MODE_TAG, MATERIAL_TAG)

_MODE_VALUES = frozenset(m.value for m in Mode)


def raw_record(tag: str, value: Any, ts: int) -> dict[str, Any]:
    return {"schema": SCHEMA_VERSION, "tag": tag, "value": value, "ts": ts}


class MalformedRecord(FurnaceError):
    """A raw telemetry payload that cannot be turned into a record."""

    def __init__(self, reason: str, detail: str = "") -> None:
        self.reason = reason
        super().__init__(f"{reason}: {detail}" if detail else reason)


@dataclass(frozen=True)
class TelemetryRecord:
    source_tag: str
    kind: RecordKind
    value: float | str
    timestamp: int
    sensor_index: int | None = None

    def to_json(self) -> dict[str, Any]:
        return {
            "schema": SCHEMA_VERSION,
            "source_tag": self.source_tag,
            "kind": self.kind.value,
            "value": self.value,
            "timestamp": self.timestamp,
            "sensor_index": self.sensor_index,
        }

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> TelemetryRecord:
        return cls(
            source_tag=data["source_tag"],
            kind=RecordKind(data["kind"]),
            value=data["value"],
            timestamp=int(data["timestamp"]),
            sensor_index=data.get("sensor_index"),
        )


class Parser:
    """Validates raw payloads; remembers the last timestamp seen per tag."""

    def __init__(self, tag_map: dict[str, TagSpec] | None = None) -> None:
        self.tag_map = TAG_MAP if tag_map is None else tag_map
        self._last_ts: dict[str, int] = {}

    def parse(self, payload: bytes) -> TelemetryRecord:
        try:
            data = json.loads(payload)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise MalformedRecord("invalid json", str(exc)) from None
        if not isinstance(data, dict):
            raise MalformedRecord("invalid json", "payload is not an object")
        if data.get("schema") != SCHEMA_VERSION:
            raise MalformedRecord("schema version", repr(data.get("schema")))
        missing = [k for k in ("tag", "value", "ts") if k not in data]
        if missing:
            raise MalformedRecord("missing field", ", ".join(missing))
        tag, value, ts = data["tag"], data["value"], data["ts"]
        spec = self.tag_map.get(tag) if isinstance(tag, str) else None
        if spec is None:
            raise MalformedRecord("unknown tag", repr(tag))
        if type(ts) is not int:
            raise MalformedRecord("type mismatch", f"ts of {tag} is {type(ts).__name__}")
        value = self._check_value(tag, spec, value)
        last = self._last_ts.get(tag)
        if last is not None and ts < last:
            raise MalformedRecord("timestamp regression", f"{tag}: {ts} < {last}")
        self._last_ts[tag] = ts
        return TelemetryRecord(tag, spec.kind, value, ts, spec.index)

    @staticmethod
    def _check_value(tag: str, spec: TagSpec, value: Any) -> float | str:
        if spec.kind in _NUMERIC_KINDS:
            if type(value) not in (int, float):
                raise MalformedRecord("type mismatch", f"{tag} expects a number")
            number = float(value)
            if not math.isfinite(number):
                raise MalformedRecord("non-finite value", tag)
            if spec.kind in (RecordKind.POWER, RecordKind.VOLTAGE) and number < 0:
                raise MalformedRecord("negative value", f"{tag} = {number}")
            return number
        if not isinstance(value, str):
            raise MalformedRecord("type mismatch", f"{tag} expects a string")
        if spec.kind is RecordKind.MODE and value not in _MODE_VALUES:
            raise MalformedRecord("unknown mode", value)
        return value


@dataclass(frozen=True)
class DeadLetter:
    offset: int
    reason: str
    detail: str
    payload: str

    def to_json(self) -> dict[str, Any]:
        return {
            "offset": self.offset,
            "reason": self.reason,
            "detail": self.detail,
            "payload": self.payload,
        }


class TelemetryParser(Service):
    name = "telemetry-parser"
    stage = Stage.TELEMETRY_PARSER

    def __init__(self, bus: Bus, latency: LatencyRecorder | None = None) -> None:
        super().__init__(bus, [TELEMETRY], latency)
        self.parser = Parser()
        self.dead_letters: list[DeadLetter] = []
        self.records_in = 0
        self.reformatted = 0

    def handle(self, message: Message) -> None:
        self.records_in += 1
        try:
            record = self.parser.parse(message.payload)
        except MalformedRecord as exc:
            letter = DeadLetter(
                offset=message.offset,
                reason=exc.reason,
                detail=str(exc),
                payload=message.payload.decode("utf-8", errors="replace"),
            )
            self.dead_letters.append(letter)
            logger.debug("dead-lettered offset %d: %s", message.offset, exc)
            return
        self.bus.publish_json(REFORMATTED_TELEMETRY, record.to_json())
        self.reformatted += 1

    @property
    def dead_lettered(self) -> int:
        return len(self.dead_letters)

    def dump_dead_letters(self, path: Path) -> None:
        with path.open("w", encoding="utf-8") as f:
            for letter in self.dead_letters:
                f.write(json.dumps(letter.to_json()) + "\n")


@dataclass(frozen=True)
class StateSnapshot:
    """The fused furnace state for one second.

    ``temps`` follows the forge sensor order (zone 1 sensors 1-2, zone 2
    sensors 1-4, ... zone 5 sensors 1-4); ``powers`` and ``voltages`` follow
    zone order.
    """

    snapshot_time: int
    temps: tuple[float, ...]
    powers: tuple[float, ...]
    voltages: tuple[float, ...] | None
    mode: str
    material_id: str
    rod_front_m: float | None
    completeness: float

    def features(self) -> NDArray[np.float64]:
        """The 23 model inputs: 18 temperatures then 5 powers."""
        return np.array((*self.temps, *self.powers), dtype=np.float64)

    def to_json(self) -> dict[str, Any]:
        return {
            "schema": SCHEMA_VERSION,
            "snapshot_time": self.snapshot_time,
            "temps": list(self.temps),
            "powers": list(self.powers),
            "voltages": None if self.voltages is None else list(self.voltages),
            "mode": self.mode,
            "material_id": self.material_id,
            "rod_front_m": self.rod_front_m,
            "completeness": self.completeness,
        }

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> StateSnapshot:
        voltages = data["voltages"]
        return cls(
            snapshot_time=int(data["snapshot_time"]),
            temps=tuple(float(t) for t in data["temps"]),
            powers=tuple(float(p) for p in data["powers"]),
            voltages=None if voltages is None else tuple(float(v) for v in voltages),
            mode=data["mode"],
            material_id=data["material_id"],
            rod_front_m=data["rod_front_m"],
            completeness=float(data["completeness"]),
        )


@dataclass(frozen=True)
class Incomplete:
    snapshot_time: int
    completeness: float
    missing: tuple[str, ...]


def build_snapshot(
    records: Sequence[TelemetryRecord],
    threshold: float = DEFAULT_COMPLETENESS_THRESHOLD,
    previous: StateSnapshot | None = None,
    fallback_voltages: tuple[float, ...] | None = None,
) -> StateSnapshot | Incomplete:
    """Fuse one second of records; the latest timestamp per field wins.

    Fields absent from the window are carried over from *previous* (NaN for
    temperatures and powers when there is none).
    """
    if not records:
        msg = "cannot build a snapshot from an empty window"
        raise ValueError(msg)
    seconds = {to_second(r.timestamp) for r in records}
    if len(seconds) != 1:
        msg = f"window spans several seconds: {sorted(seconds)}"
        raise ValueError(msg)
    second = seconds.pop()

    latest: dict[str, TelemetryRecord] = {}
    for record in sorted(records, key=lambda r: r.timestamp):
        latest[record.source_tag] = record
    missing = tuple(f for f in EXPECTED_FIELDS if f not in latest)
    completeness = (len(EXPECTED_FIELDS) - len(missing)) / len(EXPECTED_FIELDS)
    if completeness < threshold:
        return Incomplete(second, completeness, missing)

    def numbers(tags: Sequence[str], carried: tuple[float, ...] | None) -> tuple[float, ...]:
        return tuple(
            float(latest[t].value) if t in latest else (carried[i] if carried else math.nan)
            for i, t in enumerate(tags)
        )

    voltages: tuple[float, ...] | None
    if all(t in latest for t in VOLTAGE_TAGS):
        voltages = numbers(VOLTAGE_TAGS, None)
    elif previous is not None and previous.voltages is not None:
        voltages = numbers(VOLTAGE_TAGS, previous.voltages)
    elif fallback_voltages is not None:
        voltages = numbers(VOLTAGE_TAGS, fallback_voltages)
    else:
        voltages = None

    def text(tag: str, carried: str | None, default: str) -> str:
        if tag in latest:
            return str(latest[tag].value)
        return carried if carried is not None else default

    rod = latest.get(ROD_POSITION_TAG)
    return StateSnapshot(
        snapshot_time=second,
        temps=numbers(TEMPERATURE_TAGS, previous.temps if previous else None),
        powers=numbers(POWER_TAGS, previous.powers if previous else None),
        voltages=voltages,
        mode=text(MODE_TAG, previous.mode if previous else None, NORMAL_PRODUCTION),
        material_id=text(MATERIAL_TAG, previous.material_id if previous else None, "unknown"),
        rod_front_m=float(rod.value) if rod else (previous.rod_front_m if previous else None),
        completeness=completeness,
    )


class StorageDump(Service):
    """Stores reformatted records and closes one-second snapshot windows.

    A window closes when a record from a later second arrives, or on
    ``flush``. Records older than the open window are stored but not fused.
    """

    name = "storage-dump"

    def __init__(
        self,
        bus: Bus,
        stores: Stores,
        threshold: float = DEFAULT_COMPLETENESS_THRESHOLD,
    ) -> None:
        super().__init__(bus, [REFORMATTED_TELEMETRY])
        self.stores = stores
        self.threshold = threshold
        self._window: list[TelemetryRecord] = []
        self._window_second: int | None = None
        self._previous: StateSnapshot | None = None
        self.windows = 0
        self.published = 0
        self.incomplete = 0
        self.late = 0
        self.production_changes = 0

    def handle(self, message: Message) -> None:
        record = TelemetryRecord.from_json(message.json())
        self.stores.telemetry.append(TelemetryStore.RECORD, record.timestamp, record.to_json())
        self.stores.cache.put(record.source_tag, record.value)
        second = to_second(record.timestamp)
        if self._window_second is None:
            self._window_second = second
        if second > self._window_second:
            self.flush()
            self._window_second = second
        elif second < self._window_second:
            self.late += 1
            return
        self._window.append(record)

    def flush(self) -> StateSnapshot | Incomplete | None:
        """Close the open window, if any."""
        if not self._window:
            return None
        window, self._window = self._window, []
        self.windows += 1
        cached = self.stores.forge_sensors.current()
        result = build_snapshot(
            window,
            self.threshold,
            self._previous,
            cached.voltages if cached is not None else None,
        )
        timestamp = result.snapshot_time * NS_PER_SECOND
        if isinstance(result, Incomplete):
            self.incomplete += 1
            logger.info(
                "snapshot %d incomplete (%.2f), missing %d fields",
                result.snapshot_time,
                result.completeness,
                len(result.missing),
            )
            return result
        if self._previous is not None and result.material_id != self._previous.material_id:
            self.production_changes += 1
            self.stores.telemetry.append(
                TelemetryStore.PRODUCTION_CHANGE,
                timestamp,
                {"from": self._previous.material_id, "to": result.material_id},
            )
            logger.info(
                "production change %s -> %s", self._previous.material_id, result.material_id
            )
        self.stores.telemetry.append(TelemetryStore.SNAPSHOT, timestamp, result.to_json())
        self.stores.cache.put("material", result.material_id)
        self.bus.publish_json(STATE_SNAPSHOTS, result.to_json())
        self.published += 1
        self._previous = result
        return result

    def finish(self) -> None:
        self.flush()
