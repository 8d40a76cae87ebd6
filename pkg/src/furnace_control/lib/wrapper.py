"""Deployment wrapper giving every zone agent the plant's model interface.

Whatever its native inputs, a wrapped model takes the 23 plant features (18
forge temperatures in sensor order, then 5 zone powers) and returns 20
scores, four per zone in the order increase, decrease, no change, drop. The
wrapper picks the zone's features, interpolates virtual sensors when the
agent was trained on them, normalizes, runs the agent and maps its three
outputs into the zone's slots. Every other slot is zero.

The environment builds agent observations with the same ``FeatureMap``, so a
wrapped model decides exactly as the agent did on its native input.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Any

import numpy as np

from furnace_control.lib import bundle
from furnace_control.lib.errors import FurnaceError
from furnace_control.lib.mlp import Mlp
from furnace_control.lib.power import NUM_ZONES, PowerAction, actions_from_scores
from furnace_control.lib.twin import (
    CRITICAL_ZONE,
    FORGE_SENSORS_PER_ZONE,
    SensorMode,
    zone_sensor_slice,
)

if TYPE_CHECKING:
    from collections.abc import Sequence

    from numpy.typing import NDArray

    from furnace_control.lib.twin import TwinConfig

N_FEATURES = sum(FORGE_SENSORS_PER_ZONE) + NUM_ZONES
N_SCORES = 4 * NUM_ZONES

# Agent output index -> action: 0 Decrease, 1 NoChange, 2 Increase.
AGENT_ACTIONS = (PowerAction.DECREASE, PowerAction.NO_CHANGE, PowerAction.INCREASE)
# Wrapper slot -> agent output index feeding it (None: always zero).
_SLOT_SOURCES = (2, 0, 1, None)
ACTIVE_SLOTS = (True, True, True, False)


class WrappingError(FurnaceError):
    """Raised when an agent cannot be wrapped or a bundle does not describe one."""


@dataclass(frozen=True)
class NormBounds:
    temperature: tuple[float, float] = (0.0, 1400.0)
    power: tuple[float, float] = (0.0, 600.0)

    def __post_init__(self) -> None:
        for name, (low, high) in (("temperature", self.temperature), ("power", self.power)):
            if not high > low:
                msg = f"{name} normalization bounds must satisfy min < max (got {low}, {high})"
                raise WrappingError(msg)


@dataclass(frozen=True)
class InterpolationSpec:
    """Piecewise-linear map from forge knots to virtual sensor positions."""

    knots: tuple[float, ...]
    query: tuple[float, ...]

    def __post_init__(self) -> None:
        steps = zip(self.knots, self.knots[1:], strict=False)
        if len(self.knots) < 2 or any(b <= a for a, b in steps):
            msg = f"interpolation knots must be >= 2 strictly increasing positions: {self.knots}"
            raise WrappingError(msg)

    def evaluate(self, knot_temps: NDArray[np.float64]) -> NDArray[np.float64]:
        """Temperatures at the query points; ends are clamped to the outer knots."""
        if len(knot_temps) != len(self.knots):
            msg = f"expected {len(self.knots)} knot temperatures, got {len(knot_temps)}"
            raise WrappingError(msg)
        return np.interp(self.query, self.knots, knot_temps)


@dataclass(frozen=True)
class FeatureMap:
    """Turns plant readings into one zone agent's native input."""

    zone: int
    sensor_mode: SensorMode
    norm_bounds: NormBounds | None = None
    interpolation: InterpolationSpec | None = None

    @property
    def native_size(self) -> int:
        if self.sensor_mode is SensorMode.VIRTUAL and self.interpolation is not None:
            return len(self.interpolation.query) + 1
        return FORGE_SENSORS_PER_ZONE[self.zone] + 1

    def native(self, temps: NDArray[np.float64], powers: Sequence[float]) -> NDArray[np.float64]:
        zone_temps = np.asarray(temps, dtype=np.float64)[zone_sensor_slice(self.zone)]
        if self.interpolation is not None:
            zone_temps = self.interpolation.evaluate(zone_temps)
        power = float(powers[self.zone])
        if self.norm_bounds is not None:
            t_low, t_high = self.norm_bounds.temperature
            p_low, p_high = self.norm_bounds.power
            zone_temps = (zone_temps - t_low) / (t_high - t_low)
            power = (power - p_low) / (p_high - p_low)
        return np.append(zone_temps, power)

    def from_features(self, features: NDArray[np.float64]) -> NDArray[np.float64]:
        x = np.asarray(features, dtype=np.float64)
        if x.shape != (N_FEATURES,):
            msg = f"expected {N_FEATURES} features, got shape {x.shape}"
            raise WrappingError(msg)
        n_temps = sum(FORGE_SENSORS_PER_ZONE)
        return self.native(x[:n_temps], x[n_temps:])


def feature_map(
    zone: int,
    sensor_mode: SensorMode,
    config: TwinConfig,
    norm_bounds: NormBounds | None = None,
) -> FeatureMap:
    if not 0 <= zone < NUM_ZONES:
        msg = f"zone index must be in [0, {NUM_ZONES}) (got {zone})"
        raise WrappingError(msg)
    interpolation = None
    if sensor_mode is SensorMode.VIRTUAL:
        if zone != CRITICAL_ZONE:
            msg = f"virtual sensors exist only for zone {CRITICAL_ZONE + 1}"
            raise WrappingError(msg)
        interpolation = InterpolationSpec(
            knots=config.sensor_positions_forge[zone_sensor_slice(zone)],
            query=tuple(config.sensor_positions_virtual),
        )
    return FeatureMap(zone, sensor_mode, norm_bounds, interpolation)


@dataclass(frozen=True)
class WrappedModel:
    features: FeatureMap
    network: Mlp

    @property
    def zone(self) -> int:
        return self.features.zone

    @property
    def controlled_zones(self) -> tuple[int, ...]:
        return (self.features.zone,)

    @property
    def active_slots(self) -> tuple[bool, ...]:
        return ACTIVE_SLOTS

    def __call__(self, features: NDArray[np.float64]) -> NDArray[np.float64]:
        """Map 23 plant features to 20 zone-action scores."""
        raw = self.network(self.features.from_features(features))
        scores = np.zeros(N_SCORES)
        base = 4 * self.zone
        for slot, source in enumerate(_SLOT_SOURCES):
            if source is not None:
                scores[base + slot] = raw[source]
        return scores

    def decide(self, features: NDArray[np.float64]) -> tuple[PowerAction, ...]:
        return actions_from_scores(self(features), self.controlled_zones, self.active_slots)

    def to_bytes(self) -> bytes:
        fm = self.features
        header: dict[str, Any] = {
            "kind": "wrapped-model",
            "zone": fm.zone,
            "sensor_mode": fm.sensor_mode.value,
            "norm_bounds": None
            if fm.norm_bounds is None
            else {
                "temperature": list(fm.norm_bounds.temperature),
                "power": list(fm.norm_bounds.power),
            },
            "interpolation": None
            if fm.interpolation is None
            else {"knots": list(fm.interpolation.knots), "query": list(fm.interpolation.query)},
        }
        names = ("W1", "b1", "W2", "b2", "W3", "b3")
        arrays = dict(zip(names, self.network.parameters(), strict=True))
        return bundle.pack(header, arrays)

    @classmethod
    def from_bytes(cls, blob: bytes) -> WrappedModel:
        header, arrays = bundle.unpack(blob)
        if header.get("kind") != "wrapped-model":
            msg = f"bundle holds a {header.get('kind')!r}, not a wrapped model"
            raise WrappingError(msg)
        bounds = header["norm_bounds"]
        interp = header["interpolation"]
        features = FeatureMap(
            zone=int(header["zone"]),
            sensor_mode=SensorMode(header["sensor_mode"]),
            norm_bounds=None
            if bounds is None
            else NormBounds(tuple(bounds["temperature"]), tuple(bounds["power"])),
            interpolation=None
            if interp is None
            else InterpolationSpec(tuple(interp["knots"]), tuple(interp["query"])),
        )
        network = Mlp(
            [arrays["W1"], arrays["W2"], arrays["W3"]], [arrays["b1"], arrays["b2"], arrays["b3"]]
        )
        return cls(features, network)


def wrap_model(
    network: Mlp,
    zone: int,
    sensor_mode: SensorMode,
    config: TwinConfig,
    norm_bounds: NormBounds | None = None,
) -> WrappedModel:
    """Wrap a three-action zone agent; the network's input must match the sensor mode."""
    features = feature_map(zone, sensor_mode, config, norm_bounds)
    if network.output_size != len(AGENT_ACTIONS):
        msg = f"agent must have {len(AGENT_ACTIONS)} outputs (got {network.output_size})"
        raise WrappingError(msg)
    if network.input_size != features.native_size:
        msg = (
            f"agent takes {network.input_size} inputs but zone {zone + 1} with "
            f"{sensor_mode.value} sensors provides {features.native_size}"
        )
        raise WrappingError(msg)
    return WrappedModel(features, network.copy())
