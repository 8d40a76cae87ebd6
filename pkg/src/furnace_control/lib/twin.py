"""Discrete-time digital twin of the induction furnace.

The twin is a value-in, value-out simulator: ``FurnaceTwin.step`` takes a
``FurnaceState`` and returns a new one without mutating its input. The work of
one step is split across cooperating managers (warmholding, controller,
movement, temperature, sensor), each of which owns one concern of the state.

Thermal model: rods are discretized into segments of ``segment_length``. A
segment whose center lies inside a coil with positive zone power heats
linearly (``T += heating_gain * P * dt``); every other segment follows Newton
cooling towards ambient (``T -= cooling_rate * (T - ambient) * dt``).
Heated segments do not cool, so the spread of temperatures along a rod only
stays bounded while the whole rod sits under coils at one power; segments in
coil gaps fall behind their heated neighbours.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING

import numpy as np
import pandas as pd

from furnace_control.lib.errors import ConfigError, FurnaceError
from furnace_control.lib.power import NUM_ZONES, PowerAction, apply_actions, new_voltage

if TYPE_CHECKING:
    from collections.abc import Callable, Sequence
    from pathlib import Path

    from numpy.typing import NDArray

logger = logging.getLogger(__name__)

COILS_PER_ZONE = (4, 4, 4, 4, 5)
FORGE_SENSORS_PER_ZONE = (2, 4, 4, 4, 4)
VIRTUAL_SENSOR_COUNT = 15
CRITICAL_ZONE = 2  # zero-based index of zone 3
CRITICAL_BAND = (1140.0, 1275.0)

_COIL_LENGTH = 1.0
_COIL_GAP = 0.25
_FURNACE_START = 60.0


class Mode(enum.Enum):
    NORMAL_PRODUCTION = "normal-production"
    WARMHOLDING = "warmholding"


class Direction(enum.Enum):
    FORWARD = 1
    BACKWARD = -1


class SensorMode(enum.Enum):
    FORGE = "forge"
    VIRTUAL = "virtual"


class TrajectoryAborted(FurnaceError):
    """Raised when a controller callback fails mid-run; carries the partial trajectory."""

    def __init__(self, partial: list[tuple[FurnaceState, SensorReadout]], cause: Exception) -> None:
        self.partial = partial
        super().__init__(f"controller failed after {len(partial)} step(s): {cause}")


@dataclass(frozen=True)
class Coil:
    number: int
    zone: int  # zero-based
    start: float
    end: float


@dataclass(frozen=True)
class TemperatureBand:
    minimum: float
    target: float
    maximum: float


def build_coil_layout(
    furnace_start: float = _FURNACE_START,
    coil_length: float = _COIL_LENGTH,
    gap: float = _COIL_GAP,
) -> tuple[Coil, ...]:
    """Lay out 21 coils (4/4/4/4/5 per zone) separated by *gap*.

    The last coil is split into two halves with one extra gap between them,
    so the layout has 22 intervals for 21 coils.
    """
    coils: list[Coil] = []
    position = furnace_start
    number = 1
    for zone, count in enumerate(COILS_PER_ZONE):
        for _ in range(count):
            if number == sum(COILS_PER_ZONE):
                half = coil_length / 2
                coils.append(Coil(number, zone, position, position + half))
                position += half + gap
                coils.append(Coil(number, zone, position, position + half))
                position += half
            else:
                coils.append(Coil(number, zone, position, position + coil_length))
                position += coil_length + gap
            number += 1
    return tuple(coils)


def _gap_centers_after(coils: Sequence[Coil]) -> dict[int, float]:
    """Map coil number to the center of the gap that follows it."""
    centers: dict[int, float] = {}
    for current, following in zip(coils, coils[1:], strict=False):
        if following.number != current.number:
            centers[current.number] = (current.end + following.start) / 2
    return centers


def default_sensor_positions(
    coils: Sequence[Coil],
) -> tuple[tuple[float, ...], tuple[float, ...]]:
    """Return (18 forge positions, 15 virtual zone-3 positions).

    Forge sensors sit in the gaps that follow a zone's coils: zone 1 uses the
    gaps after its 2nd and 4th coils, zones 2-5 the gaps after their first
    four coils.
    """
    gaps = _gap_centers_after(coils)
    forge: list[float] = []
    for zone in range(NUM_ZONES):
        numbers = sorted({c.number for c in coils if c.zone == zone})
        picked = numbers[1::2] if FORGE_SENSORS_PER_ZONE[zone] == 2 else numbers[:4]
        forge.extend(gaps[n] for n in picked)
    zone3 = [c for c in coils if c.zone == CRITICAL_ZONE]
    virtual = np.linspace(zone3[0].start, zone3[-1].end, VIRTUAL_SENSOR_COUNT)
    return tuple(forge), tuple(float(v) for v in virtual)


def zone_sensor_slice(zone: int) -> slice:
    """Indices of *zone*'s temperatures within the 18 forge readings."""
    start = sum(FORGE_SENSORS_PER_ZONE[:zone])
    return slice(start, start + FORGE_SENSORS_PER_ZONE[zone])


_DEFAULT_BANDS = (
    TemperatureBand(600.0, 800.0, 1000.0),
    TemperatureBand(950.0, 1100.0, 1200.0),
    TemperatureBand(CRITICAL_BAND[0], sum(CRITICAL_BAND) / 2, CRITICAL_BAND[1]),
    TemperatureBand(1150.0, 1220.0, 1280.0),
    TemperatureBand(1150.0, 1230.0, 1290.0),
)


@dataclass(frozen=True)
class TwinConfig:
    """Static description of the furnace and of the simulation.

    ``warmhold_span`` has no default because the oscillation amplitude of the
    plant is not published; a twin in warmholding mode requires it.
    """

    coil_layout: tuple[Coil, ...] = field(default_factory=build_coil_layout)
    sensor_positions_forge: tuple[float, ...] = ()
    sensor_positions_virtual: tuple[float, ...] = ()
    step_seconds: float = 1.0
    total_steps: int = 2000
    rod_velocity: float = 0.02
    initial_powers: tuple[float, ...] = (300.0, 350.0, 200.0, 150.0, 100.0)
    initial_voltages: tuple[float, ...] = (400.0, 420.0, 350.0, 300.0, 280.0)
    ambient_temp: float = 25.0
    heating_gain: float = 0.01
    cooling_rate: float = 0.005
    segment_length: float = 0.05
    zone_temp_bands: tuple[TemperatureBand, ...] = _DEFAULT_BANDS
    mode: Mode = Mode.NORMAL_PRODUCTION
    warmhold_span: tuple[float, float] | None = None
    warmhold_velocity: float | None = None
    power_action_step: float = 5.0
    power_bounds: tuple[float, float] = (10.0, 600.0)
    sensor_mode: SensorMode = SensorMode.FORGE

    def __post_init__(self) -> None:
        _validate_layout(self.coil_layout)
        if not self.sensor_positions_forge or not self.sensor_positions_virtual:
            forge, virtual = default_sensor_positions(self.coil_layout)
            if not self.sensor_positions_forge:
                object.__setattr__(self, "sensor_positions_forge", forge)
            if not self.sensor_positions_virtual:
                object.__setattr__(self, "sensor_positions_virtual", virtual)
        validate_config(self)

    @property
    def furnace_start(self) -> float:
        return self.coil_layout[0].start

    @property
    def furnace_end(self) -> float:
        return self.coil_layout[-1].end

    @property
    def sensor_positions(self) -> tuple[float, ...]:
        if self.sensor_mode is SensorMode.FORGE:
            return self.sensor_positions_forge
        return self.sensor_positions_virtual

    def zone_positions(self, zone: int) -> tuple[float, ...]:
        """Positions of the sensors observing *zone* in the configured sensor mode."""
        if self.sensor_mode is SensorMode.FORGE:
            return self.sensor_positions_forge[zone_sensor_slice(zone)]
        if zone != CRITICAL_ZONE:
            msg = "virtual sensors are only laid out for zone 3"
            raise ConfigError(msg)
        return self.sensor_positions_virtual


def validate_config(config: TwinConfig) -> None:
    """Raise ``ConfigError`` unless *config* satisfies the twin invariants."""
    if config.step_seconds <= 0:
        msg = f"step_seconds must be > 0 (got {config.step_seconds})"
        raise ConfigError(msg)
    if config.segment_length <= 0:
        msg = f"segment_length must be > 0 (got {config.segment_length})"
        raise ConfigError(msg)
    if config.total_steps < 1:
        msg = f"total_steps must be >= 1 (got {config.total_steps})"
        raise ConfigError(msg)
    if not 0 <= config.cooling_rate * config.step_seconds < 1:
        msg = "cooling_rate * step_seconds must lie in [0, 1) for stable cooling"
        raise ConfigError(msg)
    if config.heating_gain < 0:
        msg = "heating_gain must be >= 0"
        raise ConfigError(msg)
    low, high = config.power_bounds
    if low < 0 or high < low:
        msg = f"power_bounds must satisfy 0 <= min <= max (got {config.power_bounds})"
        raise ConfigError(msg)
    for name in ("initial_powers", "initial_voltages", "zone_temp_bands"):
        if len(getattr(config, name)) != NUM_ZONES:
            msg = f"{name} must have {NUM_ZONES} entries"
            raise ConfigError(msg)
    if any(not low <= p <= high for p in config.initial_powers):
        msg = f"initial_powers {config.initial_powers} outside power_bounds {config.power_bounds}"
        raise ConfigError(msg)
    if any(v <= 0 for v in config.initial_voltages):
        msg = "initial_voltages must be > 0"
        raise ConfigError(msg)
    _validate_layout(config.coil_layout)
    if len(config.sensor_positions_forge) != sum(FORGE_SENSORS_PER_ZONE):
        msg = f"expected {sum(FORGE_SENSORS_PER_ZONE)} forge sensor positions"
        raise ConfigError(msg)
    band = config.zone_temp_bands[CRITICAL_ZONE]
    if (band.minimum, band.maximum) != CRITICAL_BAND:
        msg = f"zone 3 band must span {CRITICAL_BAND[0]}-{CRITICAL_BAND[1]} C"
        raise ConfigError(msg)
    for zone, b in enumerate(config.zone_temp_bands):
        if not b.minimum <= b.target <= b.maximum:
            msg = f"zone {zone + 1} band must satisfy min <= target <= max"
            raise ConfigError(msg)
    if config.warmhold_span is not None:
        left, right = config.warmhold_span
        if left >= right:
            msg = f"warmhold_span must satisfy left < right (got {config.warmhold_span})"
            raise ConfigError(msg)
    elif config.mode is Mode.WARMHOLDING:
        msg = "warmholding mode requires warmhold_span"
        raise ConfigError(msg)


def _validate_layout(coils: Sequence[Coil]) -> None:
    for previous, current in zip(coils, coils[1:], strict=False):
        if current.start < previous.end:
            msg = f"coil intervals overlap or are unsorted near coil {current.number}"
            raise ConfigError(msg)
    for coil in coils:
        if coil.end <= coil.start:
            msg = f"coil {coil.number} has non-positive length"
            raise ConfigError(msg)
    for zone, expected in enumerate(COILS_PER_ZONE):
        count = len({c.number for c in coils if c.zone == zone})
        if count != expected:
            msg = f"zone {zone + 1} must have {expected} coils (got {count})"
            raise ConfigError(msg)


@dataclass(frozen=True)
class Rod:
    id: str
    front_position: float
    length: float
    segment_temps: NDArray[np.float64]
    direction: Direction = Direction.FORWARD

    @property
    def rear_position(self) -> float:
        return self.front_position - self.length


def make_rod(
    rod_id: str,
    front_position: float,
    length: float,
    config: TwinConfig,
    temperature: float | None = None,
) -> Rod:
    """Build a rod with ``ceil(length / segment_length)`` segments at one temperature."""
    count = max(1, math.ceil(length / config.segment_length - 1e-9))
    temp = config.ambient_temp if temperature is None else temperature
    temps = np.full(count, temp, dtype=np.float64)
    temps.setflags(write=False)
    return Rod(id=rod_id, front_position=front_position, length=length, segment_temps=temps)


def zebra_init(config: TwinConfig, rod: Rod, hot: float, cold: float, band_m: float) -> Rod:
    """Paint alternating hot/cold bands of width *band_m* starting hot at the front."""
    if band_m < config.segment_length:
        msg = f"band width {band_m} m is narrower than one segment ({config.segment_length} m)"
        raise ConfigError(msg)
    if hot < cold or cold < config.ambient_temp:
        msg = "zebra pattern needs hot >= cold >= ambient"
        raise ConfigError(msg)
    centers = (np.arange(rod.segment_temps.size) + 0.5) * config.segment_length
    bands = np.floor(centers / band_m).astype(np.int64)
    temps = np.where(bands % 2 == 0, hot, cold).astype(np.float64)
    temps.setflags(write=False)
    return replace(rod, segment_temps=temps)


@dataclass(frozen=True)
class FurnaceState:
    clock: int
    rods: tuple[Rod, ...]
    zone_powers: tuple[float, ...]
    zone_voltages: tuple[int, ...]
    mode: Mode
    material_id: str = "default"


@dataclass(frozen=True)
class SensorReadout:
    temps: NDArray[np.float64]
    powers: tuple[float, ...]
    positions: NDArray[np.float64]


class WarmholdingManager:
    """Tracks the production mode and keeps rods inside the oscillation span."""

    def __init__(self, config: TwinConfig) -> None:
        self.config = config

    def switch(self, state: FurnaceState, mode: Mode) -> FurnaceState:
        if mode is state.mode:
            return state
        rods = state.rods
        if mode is Mode.WARMHOLDING:
            if self.config.warmhold_span is None:
                msg = "warmholding mode requires warmhold_span"
                raise ConfigError(msg)
            left, right = self.config.warmhold_span
            rods = tuple(
                replace(r, front_position=min(max(r.front_position, left), right)) for r in rods
            )
        else:
            rods = tuple(replace(r, direction=Direction.FORWARD) for r in rods)
        logger.info("furnace mode %s -> %s at step %d", state.mode.value, mode.value, state.clock)
        return replace(state, rods=rods, mode=mode)


class ControllerManager:
    """Applies power actions and keeps voltages consistent with the powers."""

    def __init__(self, config: TwinConfig) -> None:
        self.config = config

    def apply(
        self, state: FurnaceState, actions: Sequence[PowerAction] | None
    ) -> FurnaceState:
        if actions is None:
            return state
        powers = apply_actions(
            state.zone_powers, actions, self.config.power_action_step, self.config.power_bounds
        )
        voltages = list(state.zone_voltages)
        for zone, (old, new) in enumerate(zip(state.zone_powers, powers, strict=True)):
            if new != old:
                voltages[zone] = self._voltage_for(zone, new)
        return replace(state, zone_powers=powers, zone_voltages=tuple(voltages))

    def _voltage_for(self, zone: int, power: float) -> int:
        v_ref = self.config.initial_voltages[zone]
        p_ref = self.config.initial_powers[zone]
        if p_ref <= 0:
            return math.ceil(v_ref)
        return max(1, new_voltage(v_ref, p_ref, power))


class MovementManager:
    def __init__(self, config: TwinConfig) -> None:
        self.config = config

    def move(self, state: FurnaceState) -> tuple[Rod, ...]:
        if state.mode is Mode.NORMAL_PRODUCTION:
            shift = self.config.rod_velocity * self.config.step_seconds
            return tuple(replace(r, front_position=r.front_position + shift) for r in state.rods)
        return tuple(self._oscillate(r) for r in state.rods)

    def _oscillate(self, rod: Rod) -> Rod:
        if self.config.warmhold_span is None:
            msg = "warmholding mode requires warmhold_span"
            raise ConfigError(msg)
        left, right = self.config.warmhold_span
        speed = (
            self.config.rod_velocity
            if self.config.warmhold_velocity is None
            else self.config.warmhold_velocity
        )
        position = rod.front_position + rod.direction.value * speed * self.config.step_seconds
        direction = rod.direction
        if position >= right:
            position, direction = 2 * right - position, Direction.BACKWARD
        elif position <= left:
            position, direction = 2 * left - position, Direction.FORWARD
        position = min(max(position, left), right)
        return replace(rod, front_position=position, direction=direction)


class TemperatureManager:
    def __init__(self, config: TwinConfig) -> None:
        self.config = config
        self._starts = np.array([c.start for c in config.coil_layout])
        self._ends = np.array([c.end for c in config.coil_layout])
        self._zones = np.array([c.zone for c in config.coil_layout])

    def segment_centers(self, rod: Rod) -> NDArray[np.float64]:
        offsets = (np.arange(rod.segment_temps.size) + 0.5) * self.config.segment_length
        return rod.front_position - offsets

    def update(
        self,
        rod: Rod,
        powers: Sequence[float],
        disturbance: Sequence[float] | None = None,
    ) -> Rod:
        cfg = self.config
        centers = self.segment_centers(rod)
        index = np.searchsorted(self._starts, centers, side="right") - 1
        safe = np.clip(index, 0, len(self._starts) - 1)
        inside = (index >= 0) & (centers < self._ends[safe])
        zone_power = np.asarray(powers, dtype=np.float64)
        if disturbance is not None:
            zone_power = zone_power * np.asarray(disturbance, dtype=np.float64)
        segment_power = np.where(inside, zone_power[self._zones[safe]], 0.0)
        live = segment_power > 0
        temps = rod.segment_temps
        heated = temps + cfg.heating_gain * segment_power * cfg.step_seconds
        cooled = temps - cfg.cooling_rate * (temps - cfg.ambient_temp) * cfg.step_seconds
        updated = np.where(live, heated, cooled)
        updated.setflags(write=False)
        return replace(rod, segment_temps=updated)


class SensorManager:
    def __init__(self, config: TwinConfig) -> None:
        self.config = config

    def read(
        self, state: FurnaceState, positions: Sequence[float] | None = None
    ) -> SensorReadout:
        where = np.asarray(
            self.config.sensor_positions if positions is None else positions, dtype=np.float64
        )
        temps = np.full(where.shape, self.config.ambient_temp, dtype=np.float64)
        for rod in state.rods:
            index = np.floor((rod.front_position - where) / self.config.segment_length)
            covered = (index >= 0) & (index < rod.segment_temps.size)
            temps[covered] = rod.segment_temps[index[covered].astype(np.int64)]
        return SensorReadout(temps=temps, powers=state.zone_powers, positions=where)


class FurnaceTwin:
    """The furnace digital twin: configuration plus its managers."""

    def __init__(self, config: TwinConfig) -> None:
        self.config = config
        self.warmholding = WarmholdingManager(config)
        self.controller = ControllerManager(config)
        self.movement = MovementManager(config)
        self.temperature = TemperatureManager(config)
        self.sensors = SensorManager(config)

    def init(self, rods: Sequence[Rod], material_id: str = "default") -> FurnaceState:
        """Return the clock-0 state for *rods* at the configured initial powers."""
        self._validate_rods(rods)
        return FurnaceState(
            clock=0,
            rods=tuple(rods),
            zone_powers=tuple(float(p) for p in self.config.initial_powers),
            zone_voltages=tuple(math.ceil(v) for v in self.config.initial_voltages),
            mode=self.config.mode,
            material_id=material_id,
        )

    def _validate_rods(self, rods: Sequence[Rod]) -> None:
        cfg = self.config
        for rod in rods:
            expected = max(1, math.ceil(rod.length / cfg.segment_length - 1e-9))
            if rod.segment_temps.size != expected:
                msg = f"rod {rod.id}: expected {expected} segments, got {rod.segment_temps.size}"
                raise ConfigError(msg)
            if rod.rear_position < 0 or rod.front_position > cfg.furnace_end:
                msg = f"rod {rod.id} lies outside the track [0, {cfg.furnace_end}]"
                raise ConfigError(msg)
            if cfg.mode is Mode.WARMHOLDING and cfg.warmhold_span is not None:
                left, right = cfg.warmhold_span
                if not left <= rod.front_position <= right:
                    msg = f"rod {rod.id} front outside warmhold_span {cfg.warmhold_span}"
                    raise ConfigError(msg)
        ordered = sorted(rods, key=lambda r: r.front_position)
        for behind, ahead in zip(ordered, ordered[1:], strict=False):
            if ahead.rear_position < behind.front_position:
                msg = f"rods {behind.id} and {ahead.id} overlap"
                raise ConfigError(msg)

    def switch_mode(self, state: FurnaceState, mode: Mode) -> FurnaceState:
        return self.warmholding.switch(state, mode)

    def step(
        self,
        state: FurnaceState,
        actions: Sequence[PowerAction] | None = None,
        disturbance: Sequence[float] | None = None,
    ) -> tuple[FurnaceState, SensorReadout]:
        """Advance one step: controller, movement, temperature, then sensors.

        *disturbance* scales the heating power of each zone for this step only.
        """
        state = self.controller.apply(state, actions)
        rods = self.movement.move(state)
        rods = tuple(self.temperature.update(r, state.zone_powers, disturbance) for r in rods)
        state = replace(state, clock=state.clock + 1, rods=rods)
        return state, self.sensors.read(state)

    def run(
        self,
        state: FurnaceState,
        controller: Callable[[FurnaceState, SensorReadout | None], Sequence[PowerAction] | None],
        steps: int,
    ) -> list[tuple[FurnaceState, SensorReadout]]:
        """Step *steps* times, asking *controller* for actions before each step."""
        if steps < 1:
            msg = f"steps must be >= 1 (got {steps})"
            raise ConfigError(msg)
        trajectory: list[tuple[FurnaceState, SensorReadout]] = []
        readout: SensorReadout | None = None
        for _ in range(steps):
            try:
                actions = controller(state, readout)
            except Exception as exc:
                raise TrajectoryAborted(trajectory, exc) from exc
            state, readout = self.step(state, actions)
            trajectory.append((state, readout))
        return trajectory

    def read(self, state: FurnaceState, positions: Sequence[float] | None = None) -> SensorReadout:
        return self.sensors.read(state, positions)


def hold(_state: FurnaceState, _readout: SensorReadout | None) -> None:
    """Controller that never changes the powers."""


def feed_rod(config: TwinConfig, temperature: float | None = None) -> Rod:
    """A bar spanning the whole track with its front at the furnace exit.

    The bar is never re-fed. In normal production its rear reaches the first
    forge sensor after roughly ``furnace_start / rod_velocity`` seconds (about
    50 minutes with the defaults); sensors it has passed read ambient from then
    on, so runs driven by this bar are finite.
    """
    return make_rod("bar-1", config.furnace_end, config.furnace_end, config, temperature)


def trajectory_frame(trajectory: Sequence[tuple[FurnaceState, SensorReadout]]) -> pd.DataFrame:
    rows = []
    for state, readout in trajectory:
        row: dict[str, float] = {
            "step": state.clock,
            "rod_front_m": state.rods[0].front_position if state.rods else math.nan,
        }
        for i, temp in enumerate(readout.temps, start=1):
            row[f"T_sensor_{i}"] = float(temp)
        for zone, power in enumerate(state.zone_powers, start=1):
            row[f"P_z{zone}"] = power
        rows.append(row)
    return pd.DataFrame(rows)


def export_trajectory_csv(
    trajectory: Sequence[tuple[FurnaceState, SensorReadout]], path: Path
) -> None:
    trajectory_frame(trajectory).to_csv(path, index=False)
