"""End-to-end pipeline: plant simulator, gateway bridge and the microservice chain.

The chain is parse -> snapshot -> decide -> sanity check -> tag writes. It runs
either on a virtual clock, pumping every service to quiescence once per
simulated second, or live, with one thread per service and the simulator
paced by the wall clock.
"""

from __future__ import annotations

import logging
import math
import threading
import time
from collections import Counter
from dataclasses import asdict, dataclass, field, replace
from typing import TYPE_CHECKING, Any

from furnace_control.lib.clock import NS_PER_SECOND, VirtualClock
from furnace_control.lib.data_manager import (
    HEARTBEAT_TAG,
    ConnectionCheck,
    ForgeDataRetriever,
    PowerUpdater,
)
from furnace_control.lib.fabric import TELEMETRY, Bus
from furnace_control.lib.latency import BUDGET_MS, NETWORK_NOTE, LatencyRecorder, build_reports
from furnace_control.lib.managers import MODEL, PowerControl
from furnace_control.lib.stores import NORMAL_PRODUCTION, Stores
from furnace_control.lib.tags import TagServer
from furnace_control.lib.telemetry import (
    MATERIAL_TAG,
    MODE_TAG,
    POWER_TAGS,
    ROD_POSITION_TAG,
    ROD_VELOCITY_TAG,
    TEMPERATURE_TAGS,
    VOLTAGE_TAGS,
    StorageDump,
    TelemetryParser,
    raw_record,
)
from furnace_control.lib.twin import FurnaceTwin, feed_rod

if TYPE_CHECKING:
    from collections.abc import Callable

    from furnace_control.lib.clock import Clock
    from furnace_control.lib.latency import LatencyReport, Stage
    from furnace_control.lib.services import Service
    from furnace_control.lib.tags import TagScalar, TagUpdate
    from furnace_control.lib.twin import FurnaceState, TwinConfig

logger = logging.getLogger(__name__)

DEFAULT_RATE = 200
DEFAULT_BACKLOG_BOUND = 10_000
PLANT_TAGS = (
    *TEMPERATURE_TAGS,
    *POWER_TAGS,
    *VOLTAGE_TAGS,
    ROD_POSITION_TAG,
    ROD_VELOCITY_TAG,
    MODE_TAG,
    MATERIAL_TAG,
)


class GatewayBridge:
    """Forwards every tag update (heartbeat excepted) onto the telemetry topic."""

    def __init__(
        self, bus: Bus, tags: TagServer, exclude: tuple[str, ...] = (HEARTBEAT_TAG,)
    ) -> None:
        self.bus = bus
        self.exclude = frozenset(exclude)
        self.forwarded = 0
        self._lock = threading.Lock()
        tags.add_listener(self._on_update)

    def _on_update(self, update: TagUpdate) -> None:
        if update.name in self.exclude:
            return
        self.bus.publish_json(TELEMETRY, raw_record(update.name, update.value, update.timestamp))
        with self._lock:
            self.forwarded += 1


class PlantSimulator:
    """Twin-backed plant: reads the voltage setpoints, steps, writes its sensor tags.

    Zone powers follow the voltage setpoints through ``P = P_prev * (V / V_prev)**2``.
    Each simulated second writes *rate* tag values, cycling through the plant
    tags, evenly spread over the second.

    The plant carries the single bar from ``feed_rod``. With the default twin
    and warm-up it keeps the forge sensors covered for roughly 2300 simulated
    seconds; longer runs see the sensors fall back to ambient.
    """

    def __init__(
        self,
        twin_config: TwinConfig,
        tags: TagServer,
        clock: Clock,
        rate: int = DEFAULT_RATE,
        warmup_steps: int = 800,
        material_id: str = "default",
    ) -> None:
        if rate < 0:
            msg = f"rate must be >= 0 (got {rate})"
            raise ValueError(msg)
        self.twin = FurnaceTwin(twin_config)
        self.tags = tags
        self.clock = clock
        self.rate = rate
        state = self.twin.init([feed_rod(twin_config)], material_id)
        for _ in range(warmup_steps):
            state, _ = self.twin.step(state)
        self.state: FurnaceState = state
        self.written = 0
        self._cursor = 0
        self._values: dict[str, TagScalar] = {}

    def _current_values(self) -> dict[str, TagScalar]:
        cfg = self.twin.config
        readout = self.twin.read(self.state, cfg.sensor_positions_forge)
        values: dict[str, TagScalar] = {
            tag: float(t) for tag, t in zip(TEMPERATURE_TAGS, readout.temps, strict=True)
        }
        values.update(
            {tag: float(p) for tag, p in zip(POWER_TAGS, self.state.zone_powers, strict=True)}
        )
        values.update(
            {tag: float(v) for tag, v in zip(VOLTAGE_TAGS, self.state.zone_voltages, strict=True)}
        )
        values[ROD_POSITION_TAG] = float(self.state.rods[0].front_position)
        values[ROD_VELOCITY_TAG] = float(cfg.rod_velocity)
        values[MODE_TAG] = self.state.mode.value
        values[MATERIAL_TAG] = self.state.material_id
        return values

    def prime(self) -> None:
        """Write every plant tag once so readers find them (not counted in ``written``)."""
        self._values = self._current_values()
        for tag in PLANT_TAGS:
            self.tags.plant_write(tag, self._values[tag])

    def _follow_setpoints(self) -> None:
        low, high = self.twin.config.power_bounds
        powers = []
        voltages = []
        for zone, tag in enumerate(VOLTAGE_TAGS):
            v_prev = float(self.state.zone_voltages[zone])
            p_prev = self.state.zone_powers[zone]
            v_set = float(self.tags.peek(tag))
            if v_set != v_prev and v_prev > 0:
                p_prev = min(max(p_prev * (v_set / v_prev) ** 2, low), high)
            powers.append(p_prev)
            voltages.append(max(1, math.ceil(v_set)))
        self.state = replace(self.state, zone_powers=tuple(powers), zone_voltages=tuple(voltages))

    def tick(self, pace: Callable[[float], None] | None = None) -> int:
        """Advance one simulated second; return the number of tag values written."""
        self._follow_setpoints()
        self.state, _ = self.twin.step(self.state)
        self._values = self._current_values()
        if self.rate == 0:
            self.clock.sleep(1.0)
            return 0
        interval = 1.0 / self.rate
        for _ in range(self.rate):
            tag = PLANT_TAGS[self._cursor % len(PLANT_TAGS)]
            self._cursor += 1
            self.tags.plant_write(tag, self._values[tag])
            self.written += 1
            (pace or self.clock.sleep)(interval)
        return self.rate


@dataclass
class PipelineResult:
    duration_s: float
    rate: int
    reports: list[LatencyReport]
    counts: dict[str, int]
    events: dict[str, int]
    backlog_max: int
    backlog_bound: int
    diagnostics: list[str] = field(default_factory=list)

    @property
    def conserved(self) -> bool:
        c = self.counts
        return (
            c["forwarded"] == c["records_in"] == c["reformatted"] + c["dead_lettered"]
            and c["windows"] == c["snapshots_published"] + c["snapshots_incomplete"]
        )

    @property
    def passed(self) -> bool:
        return not self.diagnostics and all(r.passed for r in self.reports)

    def to_json(self) -> dict[str, Any]:
        return {
            "duration_s": self.duration_s,
            "rate": self.rate,
            "verdict": "pass" if self.passed else "fail",
            "conserved": self.conserved,
            "counts": self.counts,
            "events": self.events,
            "backlog_max": self.backlog_max,
            "backlog_bound": self.backlog_bound,
            "diagnostics": self.diagnostics,
            "latency": [asdict(r) for r in self.reports],
            "note": NETWORK_NOTE,
        }


class Pipeline:
    def __init__(
        self,
        twin_config: TwinConfig,
        stores: Stores | None = None,
        *,
        clock: Clock | None = None,
        rate: int = DEFAULT_RATE,
        tag_delay_s: float = 0.0,
        backlog_bound: int = DEFAULT_BACKLOG_BOUND,
        model_version: str | None = None,
        budgets: dict[Stage, float] | None = None,
    ) -> None:
        self.clock = clock or VirtualClock()
        self.virtual = isinstance(self.clock, VirtualClock)
        self.stores = stores or Stores()
        self.rate = rate
        self.backlog_bound = backlog_bound
        self.budgets = budgets or BUDGET_MS
        self.latency = LatencyRecorder(self._timer()) if self.virtual else LatencyRecorder()
        self.bus = Bus(clock=self.clock)
        self.tags = TagServer(self.clock, delay_seconds=tag_delay_s)
        self.simulator = PlantSimulator(twin_config, self.tags, self.clock, rate)
        # Tags exist before the gateway connects; only later writes are forwarded.
        self.simulator.prime()
        self.bridge = GatewayBridge(self.bus, self.tags)
        self.parser = TelemetryParser(self.bus, self.latency)
        self.storage = StorageDump(self.bus, self.stores)
        self.control = PowerControl(self.bus, self.stores, self.clock, twin_config, self.latency)
        self.updater = PowerUpdater(self.bus, self.stores, self.tags, self.clock, self.latency)
        self.retriever = ForgeDataRetriever(self.stores, self.tags, self.clock)
        self.heartbeat = ConnectionCheck(self.stores, self.tags, self.clock)
        self.services: list[Service] = [self.parser, self.storage, self.control, self.updater]
        self.backlog_max = 0
        if model_version is not None:
            self.control.hot_swap(NORMAL_PRODUCTION, MODEL, model_version)

    def _timer(self) -> Callable[[], float]:
        clock = self.clock

        # Real processing time plus any virtual time slept inside a handler.
        def now() -> float:
            return time.perf_counter() + clock.now_ns() / NS_PER_SECOND

        return now

    def backlog(self) -> int:
        return sum(s.backlog() for s in self.services)

    def pump(self) -> int:
        """Drain every service until the whole chain is idle."""
        total = 0
        while True:
            handled = sum(s.drain() for s in self.services)
            if handled == 0:
                return total
            total += handled

    def _observe_backlog(self) -> None:
        self.backlog_max = max(self.backlog_max, self.backlog())

    def run_virtual(
        self, duration_s: int, on_second: Callable[[int, Pipeline], None] | None = None
    ) -> PipelineResult:
        for second in range(duration_s):
            if on_second is not None:
                on_second(second, self)
            self.retriever.poll_once()
            self.heartbeat.sample()
            self.simulator.tick()
            self._observe_backlog()
            self.pump()
        self._shutdown_virtual()
        return self.result(float(duration_s))

    def _shutdown_virtual(self) -> None:
        self.pump()
        self.storage.flush()
        self.pump()

    def run_live(self, duration_s: float, drain_timeout_s: float = 10.0) -> PipelineResult:
        stop_services = threading.Event()
        stop_plant = threading.Event()
        threads = [s.start(stop_services) for s in self.services]
        threads.append(self.retriever.start(stop_plant))
        threads.append(self.heartbeat.start(stop_plant))
        started = time.monotonic()
        ticks = 0
        while time.monotonic() - started < duration_s:
            tick_start = time.monotonic()
            self.simulator.tick(pace=self._pacer(tick_start))
            ticks += 1
            self._observe_backlog()
            remaining = ticks - (time.monotonic() - started)
            if remaining > 0:
                time.sleep(remaining)
        stop_plant.set()
        deadline = time.monotonic() + drain_timeout_s
        while self.backlog() > 0 and time.monotonic() < deadline:
            time.sleep(0.01)
        stop_services.set()
        for thread in threads:
            thread.join(timeout=drain_timeout_s)
        self.storage.flush()
        self.pump()
        return self.result(time.monotonic() - started)

    def _pacer(self, tick_start: float) -> Callable[[float], None]:
        """Sleep so that the i-th write of a tick lands at ``tick_start + i * interval``."""
        written = 0

        def pace(interval: float) -> None:
            nonlocal written
            written += 1
            delay = tick_start + written * interval - time.monotonic()
            if delay > 0:
                time.sleep(delay)

        return pace

    def result(self, duration_s: float) -> PipelineResult:
        counts = {
            "generated": self.simulator.written,
            "forwarded": self.bridge.forwarded,
            "records_in": self.parser.records_in,
            "reformatted": self.parser.reformatted,
            "dead_lettered": self.parser.dead_lettered,
            "windows": self.storage.windows,
            "snapshots_published": self.storage.published,
            "snapshots_incomplete": self.storage.incomplete,
            "late_records": self.storage.late,
            "decisions": self.control.decided,
            "updates_published": self.control.published,
            "updates_rejected": self.control.rejected,
            "decisions_skipped": self.control.skipped,
            "updates_applied": self.updater.applied,
            "updates_ignored": self.updater.ignored,
            "updates_failed": self.updater.failed,
            "service_errors": sum(s.errors for s in self.services),
        }
        events = Counter(e.payload["event"] for e in self.stores.telemetry.events())
        result = PipelineResult(
            duration_s=duration_s,
            rate=self.rate,
            reports=build_reports(self.latency, self.budgets),
            counts=counts,
            events=dict(sorted(events.items())),
            backlog_max=self.backlog_max,
            backlog_bound=self.backlog_bound,
        )
        if self.backlog_max > self.backlog_bound:
            result.diagnostics.append(
                f"backlog reached {self.backlog_max} messages (bound {self.backlog_bound}); "
                f"parser lag {self.parser.backlog()}, storage lag {self.storage.backlog()}"
            )
        if not result.conserved:
            result.diagnostics.append(f"record accounting does not balance: {counts}")
        return result
