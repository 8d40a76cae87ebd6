"""The storage services shared by the pipeline microservices.

* ``CacheStore`` - small key-value pieces (latest telemetry per tag, material).
* ``TelemetryStore`` - append-only log of records, snapshots, production
  changes and operational events.
* ``AlgorithmStore`` - content-addressed blobs for exported models, in memory
  or on the plain file system.
* ``PowerConfigStore`` - the active manager and algorithm version per mode.
* ``ForgeSensorsStore`` - current mode, voltages and material read from the plant.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any

from furnace_control.lib.errors import FurnaceError

if TYPE_CHECKING:
    from pathlib import Path

logger = logging.getLogger(__name__)

NORMAL_PRODUCTION = "normal-production"
WARMHOLDING = "warmholding"
MODES = (NORMAL_PRODUCTION, WARMHOLDING)

DEFAULT_MANAGERS = {NORMAL_PRODUCTION: "hold", WARMHOLDING: "warmhold-rule"}


class NotFoundError(FurnaceError):
    """Raised when a key, version or mode is missing from a store."""


class CacheStore:
    def __init__(self) -> None:
        self._data: dict[str, Any] = {}
        self._lock = threading.Lock()

    def put(self, key: str, value: Any) -> None:
        with self._lock:
            self._data[key] = value

    def get(self, key: str) -> Any:
        with self._lock:
            try:
                return self._data[key]
            except KeyError:
                msg = f"cache key '{key}' not found"
                raise NotFoundError(msg) from None

    def get_or(self, key: str, default: Any) -> Any:
        with self._lock:
            return self._data.get(key, default)


@dataclass(frozen=True)
class LogEntry:
    sequence: int
    kind: str
    timestamp: int
    payload: dict[str, Any]


class TelemetryStore:
    """Append-only structured log; entries are never mutated in place."""

    RECORD = "record"
    SNAPSHOT = "snapshot"
    PRODUCTION_CHANGE = "production_change"
    EVENT = "event"

    def __init__(self) -> None:
        self._entries: list[LogEntry] = []
        self._lock = threading.Lock()

    def append(self, kind: str, timestamp: int, payload: dict[str, Any]) -> LogEntry:
        with self._lock:
            entry = LogEntry(len(self._entries), kind, timestamp, dict(payload))
            self._entries.append(entry)
        return entry

    def event(self, timestamp: int, name: str, **detail: Any) -> LogEntry:
        """Record an operational event (alarm, staleness, rejection) and log it."""
        logger.warning("%s: %s", name, detail)
        return self.append(self.EVENT, timestamp, {"event": name, **detail})

    def events(self, name: str | None = None) -> list[LogEntry]:
        entries = self.scan(kind=self.EVENT)
        return [e for e in entries if name is None or e.payload["event"] == name]

    def scan(
        self,
        start: int | None = None,
        end: int | None = None,
        kind: str | None = None,
    ) -> list[LogEntry]:
        """Entries with ``start <= timestamp < end`` and matching *kind*."""
        with self._lock:
            entries = list(self._entries)
        return [
            e
            for e in entries
            if (kind is None or e.kind == kind)
            and (start is None or e.timestamp >= start)
            and (end is None or e.timestamp < end)
        ]

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)


def content_version(blob: bytes) -> str:
    return hashlib.sha256(blob).hexdigest()[:16]


class AlgorithmStore:
    """Immutable blobs addressed by a hash of their content."""

    def __init__(self, root: Path | None = None) -> None:
        self._root = root
        self._blobs: dict[str, bytes] = {}
        self._lock = threading.Lock()
        if root is not None:
            root.mkdir(parents=True, exist_ok=True)

    def put(self, blob: bytes) -> str:
        version = content_version(blob)
        with self._lock:
            if self._root is not None:
                path = self._root / f"{version}.bundle"
                if not path.exists():
                    path.write_bytes(blob)
            else:
                self._blobs.setdefault(version, blob)
        return version

    def get(self, version: str) -> bytes:
        with self._lock:
            if self._root is not None:
                path = self._root / f"{version}.bundle"
                if path.is_file():
                    return path.read_bytes()
            elif version in self._blobs:
                return self._blobs[version]
        msg = f"algorithm version '{version}' not found"
        raise NotFoundError(msg)

    def __contains__(self, version: object) -> bool:
        if not isinstance(version, str):
            return False
        try:
            self.get(version)
        except NotFoundError:
            return False
        return True

    def versions(self) -> list[str]:
        with self._lock:
            if self._root is not None:
                return sorted(p.stem for p in self._root.glob("*.bundle"))
            return sorted(self._blobs)


@dataclass(frozen=True)
class ActiveAlgorithm:
    manager_id: str
    version: str | None = None


class PowerConfigStore:
    """One active (manager, version) per production mode; last writer wins."""

    def __init__(self, path: Path | None = None) -> None:
        self._path = path
        self._active = {mode: ActiveAlgorithm(mgr) for mode, mgr in DEFAULT_MANAGERS.items()}
        self._lock = threading.Lock()
        if path is not None and path.is_file():
            raw = json.loads(path.read_text(encoding="utf-8"))
            for mode, entry in raw.items():
                self._active[mode] = ActiveAlgorithm(entry["manager_id"], entry.get("version"))

    def get(self, mode: str) -> ActiveAlgorithm:
        with self._lock:
            try:
                return self._active[mode]
            except KeyError:
                msg = f"unknown production mode '{mode}'"
                raise NotFoundError(msg) from None

    def set(self, mode: str, manager_id: str, version: str | None = None) -> None:
        if mode not in MODES:
            msg = f"unknown production mode '{mode}'"
            raise NotFoundError(msg)
        with self._lock:
            self._active[mode] = ActiveAlgorithm(manager_id, version)
            if self._path is not None:
                self._save(self._path)

    def _save(self, path: Path) -> None:
        data = {
            mode: {"manager_id": a.manager_id, "version": a.version}
            for mode, a in self._active.items()
        }
        path.write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")


@dataclass
class ForgeSensorsEntry:
    mode: str
    voltages: tuple[float, ...]
    material_id: str
    refreshed_at: int
    stale: bool = False


class ForgeSensorsStore:
    def __init__(self) -> None:
        self._entry: ForgeSensorsEntry | None = None
        self._lock = threading.Lock()

    def update(
        self, mode: str, voltages: tuple[float, ...], material_id: str, refreshed_at: int
    ) -> None:
        with self._lock:
            self._entry = ForgeSensorsEntry(mode, voltages, material_id, refreshed_at)

    def mark_stale(self) -> None:
        with self._lock:
            if self._entry is not None:
                self._entry.stale = True

    def current(self) -> ForgeSensorsEntry | None:
        with self._lock:
            if self._entry is None:
                return None
            e = self._entry
            return ForgeSensorsEntry(e.mode, e.voltages, e.material_id, e.refreshed_at, e.stale)


@dataclass
class Stores:
    cache: CacheStore = field(default_factory=CacheStore)
    telemetry: TelemetryStore = field(default_factory=TelemetryStore)
    algorithms: AlgorithmStore = field(default_factory=AlgorithmStore)
    power_config: PowerConfigStore = field(default_factory=PowerConfigStore)
    forge_sensors: ForgeSensorsStore = field(default_factory=ForgeSensorsStore)

    @classmethod
    def in_directory(cls, root: Path) -> Stores:
        """Stores whose algorithm and power-config parts persist under *root*."""
        root.mkdir(parents=True, exist_ok=True)
        return cls(
            algorithms=AlgorithmStore(root / "algorithms"),
            power_config=PowerConfigStore(root / "power_config.json"),
        )
