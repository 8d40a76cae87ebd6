"""Power control macroservice: mode managers that turn snapshots into voltage updates.

Each production mode has one active (manager, version) pair in the power
config store. ``PowerControl`` resolves it per snapshot, asks the manager for
one action per zone, converts the resulting powers to voltages, sanity-checks
the update and publishes it on the mode's power-update topic.

``hot_swap`` changes the active pair while snapshots keep flowing: the
manager object is resolved under a lock, so a decision in flight finishes on
the version it started with and the next one sees the new version.
"""

from __future__ import annotations

import logging
import math
import threading
from dataclasses import dataclass
from typing import TYPE_CHECKING, Protocol

import numpy as np

from furnace_control.lib.clock import NS_PER_SECOND
from furnace_control.lib.data_manager import TOPIC_FOR_MODE
from furnace_control.lib.errors import FurnaceError
from furnace_control.lib.fabric import STATE_SNAPSHOTS
from furnace_control.lib.latency import Stage
from furnace_control.lib.power import (
    NUM_ZONES,
    PowerAction,
    PowerUpdate,
    Provenance,
    SanityLimits,
    UndefinedRatioError,
    apply_actions,
    new_voltage,
    sanity_check,
)
from furnace_control.lib.services import Service
from furnace_control.lib.stores import MODES, NotFoundError
from furnace_control.lib.telemetry import StateSnapshot
from furnace_control.lib.twin import zone_sensor_slice
from furnace_control.lib.wrapper import WrappedModel

if TYPE_CHECKING:
    from collections.abc import Sequence

    from furnace_control.lib.clock import Clock
    from furnace_control.lib.fabric import Bus, Message
    from furnace_control.lib.latency import LatencyRecorder
    from furnace_control.lib.stores import Stores
    from furnace_control.lib.twin import TemperatureBand, TwinConfig

logger = logging.getLogger(__name__)

HOLD = "hold"
WARMHOLD_RULE = "warmhold-rule"
MODEL = "drl"
MANAGER_IDS = (HOLD, WARMHOLD_RULE, MODEL)

STALENESS_BOUND_S = 5.0


class Manager(Protocol):
    manager_id: str

    def decide(self, snapshot: StateSnapshot) -> tuple[PowerAction, ...]: ...


class HoldManager:
    manager_id = HOLD

    def decide(self, _snapshot: StateSnapshot) -> tuple[PowerAction, ...]:
        return (PowerAction.NO_CHANGE,) * NUM_ZONES


class WarmholdRuleManager:
    """Per zone: above the band target -> Decrease, below the band minimum -> Increase."""

    manager_id = WARMHOLD_RULE

    def __init__(self, bands: Sequence[TemperatureBand]) -> None:
        self.bands = tuple(bands)

    def decide(self, snapshot: StateSnapshot) -> tuple[PowerAction, ...]:
        temps = np.asarray(snapshot.temps, dtype=np.float64)
        actions = []
        for zone, band in enumerate(self.bands):
            mean = float(np.mean(temps[zone_sensor_slice(zone)]))
            if mean > band.target:
                actions.append(PowerAction.DECREASE)
            elif mean < band.minimum:
                actions.append(PowerAction.INCREASE)
            else:
                actions.append(PowerAction.NO_CHANGE)
        return tuple(actions)


class ModelManager:
    manager_id = MODEL

    def __init__(self, model: WrappedModel) -> None:
        self.model = model

    def decide(self, snapshot: StateSnapshot) -> tuple[PowerAction, ...]:
        return self.model.decide(snapshot.features())


def convert_voltages(
    v_old: Sequence[float], p_old: Sequence[float], p_new: Sequence[float]
) -> tuple[tuple[float, ...], tuple[int, ...]]:
    """New voltages per zone plus the zones with an undefined ratio.

    Flagged zones keep their voltage; zones with non-finite inputs come out as
    NaN so the sanity check rejects the update.
    """
    voltages: list[float] = []
    flagged: list[int] = []
    for zone, (v, po, pn) in enumerate(zip(v_old, p_old, p_new, strict=True)):
        try:
            voltages.append(float(new_voltage(v, po, pn)))
        except UndefinedRatioError:
            flagged.append(zone)
            voltages.append(float(math.ceil(v)))
        except ValueError:
            voltages.append(math.nan)
    return tuple(voltages), tuple(flagged)


@dataclass(frozen=True)
class DecisionSettings:
    power_step: float = 5.0
    power_bounds: tuple[float, float] = (10.0, 600.0)
    staleness_bound_s: float = STALENESS_BOUND_S
    limits: SanityLimits = SanityLimits()

    @classmethod
    def from_twin(cls, config: TwinConfig) -> DecisionSettings:
        return cls(power_step=config.power_action_step, power_bounds=config.power_bounds)


def np_manager_decide(
    snapshot: StateSnapshot,
    manager: Manager,
    version: str | None,
    stores: Stores,
    clock: Clock,
    settings: DecisionSettings | None = None,
) -> PowerUpdate | None:
    """One decision; ``None`` (with an event) when the snapshot cannot be acted on."""
    settings = settings or DecisionSettings()
    now = clock.now_ns()
    age = now / NS_PER_SECOND - snapshot.snapshot_time
    if age > settings.staleness_bound_s:
        stores.telemetry.event(
            now, "snapshot_stale", snapshot_time=snapshot.snapshot_time, age_s=round(age, 3)
        )
        return None
    cached = stores.forge_sensors.current()
    if cached is not None and not cached.stale:
        v_old: tuple[float, ...] | None = cached.voltages
    else:
        v_old = snapshot.voltages
    if v_old is None:
        stores.telemetry.event(now, "missing_voltages", snapshot_time=snapshot.snapshot_time)
        return None
    actions = manager.decide(snapshot)
    p_new = apply_actions(snapshot.powers, actions, settings.power_step, settings.power_bounds)
    voltages, flagged = convert_voltages(v_old, snapshot.powers, p_new)
    if flagged:
        stores.telemetry.event(now, "undefined_power_ratio", zones=[z + 1 for z in flagged])
    return PowerUpdate(
        new_voltages=voltages,
        old_voltages=tuple(float(v) for v in v_old),
        provenance=Provenance(manager.manager_id, version, snapshot.snapshot_time),
        mode=snapshot.mode,
        flagged_zones=flagged,
    )


class PowerControl(Service):
    name = "power-control"
    stage = Stage.POWER_CONTROL

    def __init__(
        self,
        bus: Bus,
        stores: Stores,
        clock: Clock,
        twin_config: TwinConfig,
        latency: LatencyRecorder | None = None,
        settings: DecisionSettings | None = None,
    ) -> None:
        super().__init__(bus, [STATE_SNAPSHOTS], latency)
        self.stores = stores
        self.clock = clock
        self.bands = twin_config.zone_temp_bands
        self.settings = settings or DecisionSettings.from_twin(twin_config)
        self._lock = threading.Lock()
        self._loaded: dict[tuple[str, str | None], Manager] = {}
        self.decided = 0
        self.published = 0
        self.rejected = 0
        self.skipped = 0
        self.versions_used: list[str | None] = []

    def _build(self, manager_id: str, version: str | None) -> Manager:
        key = (manager_id, version)
        if key in self._loaded:
            return self._loaded[key]
        manager: Manager
        if manager_id == HOLD:
            manager = HoldManager()
        elif manager_id == WARMHOLD_RULE:
            manager = WarmholdRuleManager(self.bands)
        elif manager_id == MODEL:
            if version is None:
                msg = f"manager '{MODEL}' needs an algorithm version"
                raise NotFoundError(msg)
            manager = ModelManager(WrappedModel.from_bytes(self.stores.algorithms.get(version)))
        else:
            msg = f"unknown manager '{manager_id}' (known: {', '.join(MANAGER_IDS)})"
            raise NotFoundError(msg)
        self._loaded[key] = manager
        return manager

    def active(self, mode: str) -> tuple[Manager, str | None]:
        with self._lock:
            entry = self.stores.power_config.get(mode)
            return self._build(entry.manager_id, entry.version), entry.version

    def hot_swap(self, mode: str, manager_id: str, version: str | None = None) -> None:
        """Make (manager, version) active for *mode*; unknown versions leave it unchanged."""
        if mode not in MODES:
            msg = f"unknown production mode '{mode}'"
            raise NotFoundError(msg)
        with self._lock:
            self._build(manager_id, version)
            self.stores.power_config.set(mode, manager_id, version)
        logger.info("hot swap: %s now runs %s@%s", mode, manager_id, version)

    def handle(self, message: Message) -> None:
        snapshot = StateSnapshot.from_json(message.json())
        manager, version = self.active(snapshot.mode)
        update = np_manager_decide(
            snapshot, manager, version, self.stores, self.clock, self.settings
        )
        self.decided += 1
        self.versions_used.append(version)
        if update is None:
            self.skipped += 1
            return
        verdict = sanity_check(update, self.settings.limits)
        if not verdict.accepted:
            self.rejected += 1
            self.stores.telemetry.event(
                self.clock.now_ns(),
                "power_update_rejected",
                rule=verdict.rule,
                zone=None if verdict.zone is None else verdict.zone + 1,
                manager_id=update.provenance.manager_id,
                version=version,
            )
            return
        topic = TOPIC_FOR_MODE.get(snapshot.mode)
        if topic is None:
            msg = f"no power-update topic for mode '{snapshot.mode}'"
            raise FurnaceError(msg)
        self.bus.publish_json(topic, update.to_json())
        self.published += 1
