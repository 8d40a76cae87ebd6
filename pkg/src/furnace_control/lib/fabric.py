"""In-process publish/subscribe bus with named, retained, replayable topics.

Each topic is an append-only log with dense offsets. Subscribers pull from
their own cursor, so every subscriber sees every retained message exactly
once and in offset order, and a crashed consumer can resume from the last
offset it processed plus one.
"""

from __future__ import annotations

import json
import logging
import threading
from collections import deque
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any

from furnace_control.lib.clock import WallClock
from furnace_control.lib.errors import FurnaceError

if TYPE_CHECKING:
    from collections.abc import Iterable, Iterator
    from pathlib import Path

    from furnace_control.lib.clock import Clock

logger = logging.getLogger(__name__)

TELEMETRY = "telemetry"
REFORMATTED_TELEMETRY = "reformatted_telemetry"
STATE_SNAPSHOTS = "state_snapshots"
NP_POWER_UPDATES = "np_power_updates"
WH_POWER_UPDATES = "wh_power_updates"

CANONICAL_TOPICS = (
    TELEMETRY,
    REFORMATTED_TELEMETRY,
    STATE_SNAPSHOTS,
    NP_POWER_UPDATES,
    WH_POWER_UPDATES,
)
DEFAULT_RETENTION = 100_000
SCHEMA_VERSION = 1


class FabricError(FurnaceError):
    """Base class for bus errors."""


class RoutingError(FabricError):
    """Raised when publishing to or subscribing on an unknown topic."""


class TruncationError(FabricError):
    """Raised when a requested offset has already fallen out of retention."""

    def __init__(self, topic: str, requested: int, earliest_offset: int) -> None:
        self.topic = topic
        self.requested = requested
        self.earliest_offset = earliest_offset
        super().__init__(
            f"offset {requested} on '{topic}' is older than retention "
            f"(earliest available: {earliest_offset})"
        )


def encode(payload: Any) -> bytes:
    """Canonical JSON encoding used for every built-in record type."""
    return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")


@dataclass(frozen=True)
class Topic:
    name: str
    retention: int = DEFAULT_RETENTION


@dataclass(frozen=True)
class Message:
    topic: str
    offset: int
    timestamp: int
    payload: bytes

    def json(self) -> Any:
        return json.loads(self.payload)


class _TopicLog:
    def __init__(self, topic: Topic) -> None:
        self.topic = topic
        self.messages: deque[Message] = deque(maxlen=topic.retention)
        self.next_offset = 0

    @property
    def earliest_offset(self) -> int:
        return self.next_offset - len(self.messages)

    def slice(self, start: int, limit: int | None) -> list[Message]:
        first = start - self.earliest_offset
        stop = len(self.messages) if limit is None else min(len(self.messages), first + limit)
        return [self.messages[i] for i in range(first, stop)]


class Bus:
    """Topic registry plus the logs behind it; safe for concurrent use."""

    def __init__(
        self,
        topics: Iterable[str] = CANONICAL_TOPICS,
        retention: int = DEFAULT_RETENTION,
        clock: Clock | None = None,
    ) -> None:
        self._clock = clock or WallClock()
        self._logs: dict[str, _TopicLog] = {}
        self._changed = threading.Condition()
        for name in topics:
            self.create_topic(Topic(name, retention))

    def create_topic(self, topic: Topic) -> None:
        if topic.retention < 1:
            msg = f"retention must be >= 1 (got {topic.retention})"
            raise FabricError(msg)
        with self._changed:
            if topic.name in self._logs:
                msg = f"topic '{topic.name}' already exists"
                raise FabricError(msg)
            self._logs[topic.name] = _TopicLog(topic)

    @property
    def topics(self) -> tuple[str, ...]:
        return tuple(self._logs)

    def _log(self, topic: str) -> _TopicLog:
        try:
            return self._logs[topic]
        except KeyError:
            msg = f"unknown topic '{topic}'"
            raise RoutingError(msg) from None

    def publish(self, topic: str, payload: bytes) -> int:
        """Append *payload* and wake subscribers; return the assigned offset."""
        with self._changed:
            log = self._log(topic)
            offset = log.next_offset
            log.messages.append(Message(topic, offset, self._clock.now_ns(), payload))
            log.next_offset += 1
            self._changed.notify_all()
        return offset

    def publish_json(self, topic: str, payload: Any) -> int:
        return self.publish(topic, encode(payload))

    def subscribe(self, topic: str, from_offset: int = 0) -> Subscription:
        with self._changed:
            log = self._log(topic)
            if from_offset > log.next_offset:
                msg = f"offset {from_offset} is ahead of '{topic}' (next: {log.next_offset})"
                raise FabricError(msg)
            if from_offset < log.earliest_offset:
                raise TruncationError(topic, from_offset, log.earliest_offset)
        return Subscription(self, topic, from_offset)

    def next_offset(self, topic: str) -> int:
        with self._changed:
            return self._log(topic).next_offset

    def earliest_offset(self, topic: str) -> int:
        with self._changed:
            return self._log(topic).earliest_offset

    def lag(self, subscription: Subscription) -> int:
        """Messages published on the subscription's topic it has not consumed yet."""
        return self.next_offset(subscription.topic) - subscription.position

    def _fetch(self, topic: str, position: int, limit: int | None, timeout: float) -> list[Message]:
        with self._changed:
            log = self._log(topic)
            if position >= log.next_offset and timeout > 0:
                self._changed.wait_for(lambda: position < log.next_offset, timeout=timeout)
            if position < log.earliest_offset:
                raise TruncationError(topic, position, log.earliest_offset)
            return log.slice(position, limit)

    def dump(self, topic: str, path: Path) -> int:
        """Write the retained messages of *topic* as newline-delimited JSON."""
        with self._changed:
            messages = list(self._log(topic).messages)
        with path.open("w", encoding="utf-8") as f:
            for m in messages:
                record = {
                    "offset": m.offset,
                    "timestamp": m.timestamp,
                    "payload": m.payload.decode("utf-8"),
                }
                f.write(json.dumps(record) + "\n")
        return len(messages)

    def load(self, topic: str, path: Path) -> int:
        """Restore a dump into an empty *topic*, keeping offsets and timestamps."""
        records = [
            json.loads(line)
            for line in path.read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]
        with self._changed:
            log = self._log(topic)
            if log.next_offset:
                msg = f"topic '{topic}' must be empty to load a dump"
                raise FabricError(msg)
            offsets = [r["offset"] for r in records]
            if offsets and offsets != list(range(offsets[0], offsets[0] + len(offsets))):
                msg = f"dump {path} does not hold dense offsets"
                raise FabricError(msg)
            for r in records:
                log.messages.append(
                    Message(topic, r["offset"], r["timestamp"], r["payload"].encode("utf-8"))
                )
            log.next_offset = offsets[-1] + 1 if offsets else 0
            self._changed.notify_all()
        return len(records)


class Subscription:
    """A subscriber's cursor on one topic; delivery to it is serialized."""

    def __init__(self, bus: Bus, topic: str, position: int) -> None:
        self._bus = bus
        self.topic = topic
        self.position = position
        self._lock = threading.Lock()

    def poll(self, max_messages: int | None = None, timeout: float = 0.0) -> list[Message]:
        """Return the next available messages, waiting up to *timeout* seconds for one."""
        with self._lock:
            batch = self._bus._fetch(self.topic, self.position, max_messages, timeout)
            if batch:
                self.position = batch[-1].offset + 1
            return batch

    def stream(self, stop: threading.Event, timeout: float = 0.1) -> Iterator[Message]:
        """Yield messages until *stop* is set."""
        while not stop.is_set():
            yield from self.poll(timeout=timeout)
