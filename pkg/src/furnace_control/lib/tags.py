"""Simulated plant tag server: strongly typed key-value cells.

Stands in for the plant's OPC-UA server. A tag is created by its first write
and keeps that value type for life; reads return the latest value, writes
bump the tag timestamp and notify subscribers. Fault injection hooks
(unavailability, failing the next calls, artificial per-call delay) let the
data-manager services be exercised against a misbehaving server.
"""

from __future__ import annotations

import json
import logging
import queue
import threading
from dataclasses import dataclass
from typing import TYPE_CHECKING

from furnace_control.lib.clock import WallClock
from furnace_control.lib.errors import FurnaceError

if TYPE_CHECKING:
    from collections.abc import Callable, Mapping
    from pathlib import Path

    from furnace_control.lib.clock import Clock

logger = logging.getLogger(__name__)

TagScalar = int | float | bool | str

_ALLOWED_TYPES: dict[type, str] = {int: "int", float: "float", bool: "bool", str: "string"}


class TagError(FurnaceError):
    """Base class for tag server errors."""


class UnknownTagError(TagError):
    """Raised when reading or subscribing to a tag that was never written."""


class TagTypeError(TagError):
    """Raised when a write would change a tag's value type."""


class TagServerUnavailable(TagError):
    """Raised by every call while the server is unreachable."""


@dataclass(frozen=True)
class TagValue:
    value: TagScalar
    type_name: str
    timestamp: int


@dataclass(frozen=True)
class TagUpdate:
    name: str
    value: TagScalar
    timestamp: int


class TagSubscription:
    """Queue of updates for one tag; closed subscriptions stop receiving."""

    def __init__(self, name: str) -> None:
        self.name = name
        self._updates: queue.Queue[TagUpdate] = queue.Queue()
        self.closed = False

    def push(self, update: TagUpdate) -> None:
        if not self.closed:
            self._updates.put(update)

    def get(self, timeout: float | None = None) -> TagUpdate:
        return self._updates.get(timeout=timeout)

    def drain(self) -> list[TagUpdate]:
        items: list[TagUpdate] = []
        while True:
            try:
                items.append(self._updates.get_nowait())
            except queue.Empty:
                return items

    def close(self) -> None:
        self.closed = True


def _type_name(value: object) -> str:
    try:
        return _ALLOWED_TYPES[type(value)]
    except KeyError:
        msg = f"unsupported tag value type {type(value).__name__}"
        raise TagTypeError(msg) from None


class TagServer:
    def __init__(self, clock: Clock | None = None, delay_seconds: float = 0.0) -> None:
        self._clock = clock or WallClock()
        self.delay_seconds = delay_seconds
        self.available = True
        self._failures_pending = 0
        self._tags: dict[str, TagValue] = {}
        self._tag_locks: dict[str, threading.Lock] = {}
        self._subscribers: dict[str, list[TagSubscription]] = {}
        self._listeners: list[Callable[[TagUpdate], None]] = []
        self._lock = threading.Lock()

    # -- fault injection -----------------------------------------------------

    def fail_next(self, count: int) -> None:
        """Make the next *count* calls raise ``TagServerUnavailable``."""
        with self._lock:
            self._failures_pending = count

    def _enter_call(self) -> None:
        with self._lock:
            if not self.available:
                msg = "tag server unreachable"
                raise TagServerUnavailable(msg)
            if self._failures_pending > 0:
                self._failures_pending -= 1
                msg = "tag server call failed (injected)"
                raise TagServerUnavailable(msg)
        if self.delay_seconds > 0:
            self._clock.sleep(self.delay_seconds)

    # -- tag operations ------------------------------------------------------

    def _tag_lock(self, name: str) -> threading.Lock:
        with self._lock:
            return self._tag_locks.setdefault(name, threading.Lock())

    def read(self, name: str) -> TagScalar:
        self._enter_call()
        return self._lookup(name).value

    def read_entry(self, name: str) -> TagValue:
        self._enter_call()
        return self._lookup(name)

    def _lookup(self, name: str) -> TagValue:
        with self._lock:
            try:
                return self._tags[name]
            except KeyError:
                msg = f"unknown tag '{name}'"
                raise UnknownTagError(msg) from None

    def write(self, name: str, value: TagScalar) -> None:
        self._enter_call()
        self._store(name, value)

    def write_many(self, values: Mapping[str, TagScalar]) -> None:
        """Write several tags in one server call (one artificial delay)."""
        self._enter_call()
        for name, value in values.items():
            self._check_type(name, value)
        for name, value in values.items():
            self._store(name, value)

    def plant_write(self, name: str, value: TagScalar) -> None:
        """Write from the plant side of the server: no availability check, no delay."""
        self._store(name, value)

    def peek(self, name: str) -> TagScalar:
        """Plant-side read; see ``plant_write``."""
        return self._lookup(name).value

    def _check_type(self, name: str, value: TagScalar) -> str:
        type_name = _type_name(value)
        with self._lock:
            existing = self._tags.get(name)
        if existing is not None and existing.type_name != type_name:
            msg = f"tag '{name}' holds {existing.type_name}, refusing {type_name}"
            raise TagTypeError(msg)
        return type_name

    def _store(self, name: str, value: TagScalar) -> None:
        with self._tag_lock(name):
            type_name = self._check_type(name, value)
            update = TagUpdate(name, value, self._clock.now_ns())
            with self._lock:
                self._tags[name] = TagValue(value, type_name, update.timestamp)
                subscribers = list(self._subscribers.get(name, ()))
                listeners = list(self._listeners)
            for sub in subscribers:
                sub.push(update)
            for listener in listeners:
                listener(update)

    def subscribe(self, name: str) -> TagSubscription:
        self._enter_call()
        self._lookup(name)
        sub = TagSubscription(name)
        with self._lock:
            self._subscribers.setdefault(name, []).append(sub)
        return sub

    def add_listener(self, listener: Callable[[TagUpdate], None]) -> None:
        """Register a callback for updates of every tag (used by the gateway bridge)."""
        with self._lock:
            self._listeners.append(listener)

    # -- persistence ---------------------------------------------------------

    def snapshot(self) -> dict[str, dict[str, object]]:
        with self._lock:
            return {
                name: {"value": tag.value, "type": tag.type_name, "timestamp": tag.timestamp}
                for name, tag in sorted(self._tags.items())
            }

    def dump(self, path: Path) -> None:
        path.write_text(json.dumps(self.snapshot(), indent=2) + "\n", encoding="utf-8")
