"""Reinforcement-learning environment: one zone agent driving the furnace twin.

The agent picks Decrease, NoChange or Increase for its zone every step; the
other zones hold their power. Observations are built from the forge sensor
readings with the deployment ``FeatureMap``; the reward is computed from the
temperature at the zone's last forge sensor.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Protocol

import numpy as np

from furnace_control.lib.errors import FurnaceError
from furnace_control.lib.power import NUM_ZONES, PowerAction
from furnace_control.lib.rewards import reward
from furnace_control.lib.twin import FurnaceTwin, feed_rod, zebra_init, zone_sensor_slice
from furnace_control.lib.wrapper import AGENT_ACTIONS

if TYPE_CHECKING:
    from numpy.typing import NDArray

    from furnace_control.lib.rewards import RewardSpec
    from furnace_control.lib.twin import FurnaceState, TwinConfig
    from furnace_control.lib.wrapper import FeatureMap

logger = logging.getLogger(__name__)

NOISE_FRACTION = 0.05
NOISY_ZONES = (0, 1)


class Scenario(enum.Enum):
    NORMAL_PRODUCTION = "normal-production"
    AFTER_WARMHOLDING = "after-warmholding"


class EnvironmentFailure(FurnaceError):
    """Raised when the twin fails underneath an episode."""


class Environment(Protocol):
    def reset(self) -> NDArray[np.float64]: ...

    def step(self, action: int) -> tuple[NDArray[np.float64], float, bool]: ...

    @property
    def temperature(self) -> float: ...

    @property
    def power(self) -> float: ...


@dataclass(frozen=True)
class EnvConfig:
    scenario: Scenario = Scenario.NORMAL_PRODUCTION
    episode_steps: int | None = None
    warmup_steps: int = 800
    zebra_hot: float = 1150.0
    zebra_cold: float = 900.0
    zebra_band_m: float = 0.5
    noise: bool = False


class FurnaceEnv:
    """Episodes start from a cached initial state and last ``episode_steps`` steps."""

    def __init__(
        self,
        twin_config: TwinConfig,
        features: FeatureMap,
        reward_spec: RewardSpec,
        config: EnvConfig | None = None,
        rng: np.random.Generator | None = None,
    ) -> None:
        self.twin = FurnaceTwin(twin_config)
        self.features = features
        self.reward_spec = reward_spec
        self.config = config or EnvConfig()
        self.rng = rng or np.random.default_rng()
        self.episode_steps = self.config.episode_steps or twin_config.total_steps
        self._forge = twin_config.sensor_positions_forge
        self._last_sensor = zone_sensor_slice(features.zone).stop - 1
        self._initial: FurnaceState | None = None
        self._state: FurnaceState | None = None
        self._temps: NDArray[np.float64] = np.zeros(len(self._forge))
        self.steps = 0

    @property
    def zone(self) -> int:
        return self.features.zone

    def initial_state(self) -> FurnaceState:
        """Warm a bar through the furnace at the initial powers (computed once)."""
        if self._initial is None:
            cfg = self.twin.config
            state = self.twin.init([feed_rod(cfg)])
            for _ in range(self.config.warmup_steps):
                state, _ = self.twin.step(state)
            if self.config.scenario is Scenario.AFTER_WARMHOLDING:
                state = self._paint_zebra(state)
            self._initial = replace(state, clock=0)
            logger.debug(
                "initial %s state ready after %d warm-up steps",
                self.config.scenario.value,
                self.config.warmup_steps,
            )
        return self._initial

    def _paint_zebra(self, state: FurnaceState) -> FurnaceState:
        """Overlay the warmholding band pattern on the part of the bar inside the furnace."""
        cfg = self.twin.config
        rod = state.rods[0]
        zebra = zebra_init(
            cfg, rod, self.config.zebra_hot, self.config.zebra_cold, self.config.zebra_band_m
        )
        centers = self.twin.temperature.segment_centers(rod)
        inside = (centers >= cfg.furnace_start) & (centers <= cfg.furnace_end)
        temps = np.where(inside, zebra.segment_temps, rod.segment_temps)
        temps.setflags(write=False)
        return replace(state, rods=(replace(rod, segment_temps=temps),))

    def _observe(self) -> NDArray[np.float64]:
        if self._state is None:
            msg = "environment used before reset()"
            raise EnvironmentFailure(msg)
        self._temps = self.twin.read(self._state, self._forge).temps
        return self.features.native(self._temps, self._state.zone_powers)

    def reset(self) -> NDArray[np.float64]:
        try:
            self._state = self.initial_state()
        except FurnaceError as exc:
            raise EnvironmentFailure(str(exc)) from exc
        self.steps = 0
        return self._observe()

    def _disturbance(self) -> NDArray[np.float64] | None:
        if not self.config.noise:
            return None
        factors = np.ones(NUM_ZONES)
        factors[list(NOISY_ZONES)] += self.rng.uniform(
            -NOISE_FRACTION, NOISE_FRACTION, len(NOISY_ZONES)
        )
        return factors

    def step(self, action: int) -> tuple[NDArray[np.float64], float, bool]:
        if self._state is None:
            msg = "environment used before reset()"
            raise EnvironmentFailure(msg)
        actions = [PowerAction.NO_CHANGE] * NUM_ZONES
        actions[self.zone] = AGENT_ACTIONS[action]
        try:
            self._state, _ = self.twin.step(self._state, actions, self._disturbance())
        except FurnaceError as exc:
            raise EnvironmentFailure(str(exc)) from exc
        observation = self._observe()
        self.steps += 1
        return observation, reward(self.reward_spec, self.temperature), (
            self.steps >= self.episode_steps
        )

    @property
    def temperature(self) -> float:
        return float(self._temps[self._last_sensor])

    @property
    def power(self) -> float:
        if self._state is None:
            return float(self.twin.config.initial_powers[self.zone])
        return float(self._state.zone_powers[self.zone])
