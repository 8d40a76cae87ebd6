"""Data manager macroservice: the bridge from decisions back to the plant.

* ``PowerUpdater`` consumes both power-update topics and writes the voltage
  tags, but only for the topic matching the production mode active at write
  time.
* ``ForgeDataRetriever`` periodically caches the voltages, mode and material
  read from the tag server.
* ``ConnectionCheck`` round-trips a nonce through a heartbeat tag and raises
  alarms on slow or corrupted connections.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass
from typing import TYPE_CHECKING

from furnace_control.lib.clock import NS_PER_SECOND
from furnace_control.lib.fabric import NP_POWER_UPDATES, WH_POWER_UPDATES
from furnace_control.lib.latency import Stage
from furnace_control.lib.power import PowerUpdate
from furnace_control.lib.services import Service
from furnace_control.lib.stores import NORMAL_PRODUCTION, WARMHOLDING
from furnace_control.lib.tags import TagError, TagServerUnavailable
from furnace_control.lib.telemetry import MATERIAL_TAG, MODE_TAG, VOLTAGE_TAGS

if TYPE_CHECKING:
    from furnace_control.lib.clock import Clock
    from furnace_control.lib.fabric import Bus, Message
    from furnace_control.lib.latency import LatencyRecorder
    from furnace_control.lib.stores import Stores
    from furnace_control.lib.tags import TagServer

logger = logging.getLogger(__name__)

HEARTBEAT_TAG = "HEARTBEAT"

TOPIC_FOR_MODE = {NORMAL_PRODUCTION: NP_POWER_UPDATES, WARMHOLDING: WH_POWER_UPDATES}


@dataclass(frozen=True)
class RetryPolicy:
    retries: int = 3
    initial_backoff: float = 0.05
    max_backoff: float = 0.5

    def delays(self) -> list[float]:
        return [
            min(self.initial_backoff * 2**attempt, self.max_backoff)
            for attempt in range(self.retries)
        ]


class PowerUpdater(Service):
    name = "power-updater"
    stage = Stage.DATA_MANAGER

    def __init__(
        self,
        bus: Bus,
        stores: Stores,
        tags: TagServer,
        clock: Clock,
        latency: LatencyRecorder | None = None,
        retry: RetryPolicy | None = None,
    ) -> None:
        super().__init__(bus, [NP_POWER_UPDATES, WH_POWER_UPDATES], latency)
        self.stores = stores
        self.tags = tags
        self.clock = clock
        self.retry = retry or RetryPolicy()
        self.applied = 0
        self.ignored = 0
        self.failed = 0
        self.written_versions: list[str | None] = []

    def active_mode(self) -> str:
        """Mode from the forge sensors cache, falling back to the plant tag."""
        cached = self.stores.forge_sensors.current()
        if cached is not None:
            return cached.mode
        return str(self.tags.read(MODE_TAG))

    def handle(self, message: Message) -> None:
        update = PowerUpdate.from_json(message.json())
        mode = self.active_mode()
        if TOPIC_FOR_MODE.get(mode) != message.topic:
            self.ignored += 1
            logger.debug("ignored update from %s while mode is %s", message.topic, mode)
            return
        values = {
            tag: float(v) for tag, v in zip(VOLTAGE_TAGS, update.new_voltages, strict=True)
        }
        if self._write_with_retry(values, update):
            self.applied += 1
            self.written_versions.append(update.provenance.version)
        else:
            self.failed += 1

    def _write_with_retry(self, values: dict[str, float], update: PowerUpdate) -> bool:
        delays = self.retry.delays()
        for attempt in range(len(delays) + 1):
            try:
                self.tags.write_many(values)
            except TagError as exc:
                if attempt == len(delays):
                    self.stores.telemetry.event(
                        self.clock.now_ns(),
                        "power_update_failed",
                        attempts=attempt + 1,
                        error=str(exc),
                        manager_id=update.provenance.manager_id,
                        snapshot_time=update.provenance.snapshot_time,
                    )
                    return False
                logger.info("tag write failed (%s), retrying in %.3fs", exc, delays[attempt])
                self.clock.sleep(delays[attempt])
            else:
                return True
        return False


class ForgeDataRetriever:
    def __init__(self, stores: Stores, tags: TagServer, clock: Clock, period: float = 1.0) -> None:
        if period <= 0:
            msg = f"period must be > 0 (got {period})"
            raise ValueError(msg)
        self.stores = stores
        self.tags = tags
        self.clock = clock
        self.period = period
        self.refreshes = 0
        self.failures = 0

    def poll_once(self) -> bool:
        """Refresh the forge sensors cache; mark it stale when the plant is unreachable."""
        try:
            voltages = tuple(float(self.tags.read(tag)) for tag in VOLTAGE_TAGS)
            mode = str(self.tags.read(MODE_TAG))
            material = str(self.tags.read(MATERIAL_TAG))
        except TagError as exc:
            self.failures += 1
            self.stores.forge_sensors.mark_stale()
            if isinstance(exc, TagServerUnavailable):
                self.stores.telemetry.event(self.clock.now_ns(), "forge_data_stale", error=str(exc))
            else:
                logger.warning("forge data refresh failed: %s", exc)
            return False
        self.stores.forge_sensors.update(mode, voltages, material, self.clock.now_ns())
        self.refreshes += 1
        return True

    def run(self, stop: threading.Event) -> None:
        while not stop.is_set():
            self.poll_once()
            stop.wait(self.period)

    def start(self, stop: threading.Event) -> threading.Thread:
        thread = threading.Thread(target=self.run, args=(stop,), name="forge-data", daemon=True)
        thread.start()
        return thread


@dataclass(frozen=True)
class HeartbeatSample:
    nonce: int
    latency_s: float
    intact: bool


class ConnectionCheck:
    """Heartbeat: write a nonce, read it back, time the round trip.

    A latency alarm fires when ``consecutive`` samples in a row exceed
    ``bound_s``; it fires once per streak.
    """

    def __init__(
        self,
        stores: Stores,
        tags: TagServer,
        clock: Clock,
        bound_s: float = 0.5,
        consecutive: int = 3,
        tag: str = HEARTBEAT_TAG,
    ) -> None:
        if consecutive < 1:
            msg = f"consecutive must be >= 1 (got {consecutive})"
            raise ValueError(msg)
        self.stores = stores
        self.tags = tags
        self.clock = clock
        self.bound_s = bound_s
        self.consecutive = consecutive
        self.tag = tag
        self.samples: list[HeartbeatSample] = []
        self.latency_alarms = 0
        self.integrity_alarms = 0
        self._nonce = 0
        self._over = 0

    def sample(self) -> HeartbeatSample | None:
        self._nonce += 1
        nonce = self._nonce
        start = self.clock.now_ns()
        try:
            self.tags.write(self.tag, nonce)
            echoed = self.tags.read(self.tag)
        except TagError as exc:
            self.stores.telemetry.event(self.clock.now_ns(), "heartbeat_failed", error=str(exc))
            return None
        latency = (self.clock.now_ns() - start) / NS_PER_SECOND
        sample = HeartbeatSample(nonce, latency, intact=echoed == nonce)
        self.samples.append(sample)
        if not sample.intact:
            self.integrity_alarms += 1
            self.stores.telemetry.event(
                self.clock.now_ns(), "heartbeat_integrity", sent=nonce, received=echoed
            )
        if latency > self.bound_s:
            self._over += 1
            if self._over == self.consecutive:
                self.latency_alarms += 1
                self.stores.telemetry.event(
                    self.clock.now_ns(),
                    "heartbeat_latency",
                    samples=self.consecutive,
                    bound_s=self.bound_s,
                    latest_s=latency,
                )
        else:
            self._over = 0
        return sample

    def run(self, stop: threading.Event, period: float = 1.0) -> None:
        while not stop.is_set():
            self.sample()
            stop.wait(period)

    def start(self, stop: threading.Event, period: float = 1.0) -> threading.Thread:
        thread = threading.Thread(
            target=self.run, args=(stop, period), name="connection-check", daemon=True
        )
        thread.start()
        return thread
