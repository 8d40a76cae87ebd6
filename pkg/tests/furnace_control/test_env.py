"""Tests for furnace_control.lib.env."""

from __future__ import annotations

from typing import TYPE_CHECKING

import numpy as np
import pytest

from furnace_control.lib.env import EnvConfig, EnvironmentFailure, FurnaceEnv, Scenario
from furnace_control.lib.rewards import RewardSpec, reward
from furnace_control.lib.twin import CRITICAL_ZONE, SensorMode, TwinConfig
from furnace_control.lib.wrapper import NormBounds, feature_map

if TYPE_CHECKING:
    from numpy.typing import NDArray

TWIN = TwinConfig()
DECREASE, NO_CHANGE, INCREASE = 0, 1, 2


def _env(
    mode: SensorMode = SensorMode.FORGE,
    *,
    seed: int = 0,
    scenario: Scenario = Scenario.NORMAL_PRODUCTION,
    noise: bool = False,
    episode_steps: int = 4,
) -> FurnaceEnv:
    config = EnvConfig(
        scenario=scenario, episode_steps=episode_steps, warmup_steps=30, noise=noise
    )
    features = feature_map(CRITICAL_ZONE, mode, TWIN, NormBounds())
    return FurnaceEnv(TWIN, features, RewardSpec(), config, np.random.default_rng(seed))


def _rollout(env: FurnaceEnv, actions: list[int]) -> list[tuple[NDArray[np.float64], float, bool]]:
    env.reset()
    return [env.step(a) for a in actions]


# -- episodes -----------------------------------------------------------------


@pytest.mark.parametrize(("mode", "size"), [(SensorMode.FORGE, 5), (SensorMode.VIRTUAL, 16)])
def test_observation_matches_the_feature_map(mode: SensorMode, size: int) -> None:
    env = _env(mode)
    assert env.reset().shape == (size,)
    assert env.step(NO_CHANGE)[0].shape == (size,)


def test_episode_ends_after_episode_steps() -> None:
    results = _rollout(_env(), [NO_CHANGE] * 4)
    assert [done for _, _, done in results] == [False, False, False, True]


def test_episode_length_defaults_to_twin_total_steps() -> None:
    env = FurnaceEnv(
        TWIN,
        feature_map(CRITICAL_ZONE, SensorMode.FORGE, TWIN),
        RewardSpec(),
        EnvConfig(warmup_steps=1),
    )
    assert env.episode_steps == TWIN.total_steps


def test_reset_restarts_from_the_same_state() -> None:
    env = _env()
    first = env.reset()
    env.step(INCREASE)
    env.step(INCREASE)
    np.testing.assert_array_equal(env.reset(), first)
    assert env.steps == 0
    assert env.power == TWIN.initial_powers[CRITICAL_ZONE]


def test_actions_move_only_the_agent_zone() -> None:
    env = _env()
    env.reset()
    env.step(INCREASE)
    assert env.power == TWIN.initial_powers[CRITICAL_ZONE] + TWIN.power_action_step
    env.step(DECREASE)
    env.step(DECREASE)
    assert env.power == TWIN.initial_powers[CRITICAL_ZONE] - TWIN.power_action_step
    assert env._state is not None
    others = [p for z, p in enumerate(env._state.zone_powers) if z != CRITICAL_ZONE]
    assert others == [p for z, p in enumerate(TWIN.initial_powers) if z != CRITICAL_ZONE]


def test_reward_comes_from_the_last_zone_sensor() -> None:
    env = _env()
    env.reset()
    _, r, _ = env.step(NO_CHANGE)
    assert r == reward(RewardSpec(), env.temperature)
    assert env.temperature == env._temps[9]


def test_step_before_reset_fails() -> None:
    with pytest.raises(EnvironmentFailure, match="before reset"):
        _env().step(NO_CHANGE)


# -- determinism and noise ----------------------------------------------------


def test_same_seed_same_trajectory() -> None:
    actions = [INCREASE, DECREASE, NO_CHANGE, INCREASE]
    first = _rollout(_env(noise=True, seed=5), actions)
    second = _rollout(_env(noise=True, seed=5), actions)
    for (o1, r1, _), (o2, r2, _) in zip(first, second, strict=True):
        np.testing.assert_array_equal(o1, o2)
        assert r1 == r2


def test_noise_perturbs_the_trajectory() -> None:
    actions = [NO_CHANGE] * 4
    quiet = _rollout(_env(), actions)
    noisy = _rollout(_env(noise=True, seed=1), actions)
    assert any(
        not np.array_equal(a, b) for (a, _, _), (b, _, _) in zip(quiet, noisy, strict=True)
    )


def test_noise_only_touches_the_first_two_zones() -> None:
    env = _env(noise=True, seed=2)
    for _ in range(200):
        factors = env._disturbance()
        assert factors is not None
        assert np.all(np.abs(factors[:2] - 1.0) <= 0.05)
        np.testing.assert_array_equal(factors[2:], 1.0)


def test_after_warmholding_starts_from_a_banded_bar() -> None:
    normal = _env()
    banded = _env(scenario=Scenario.AFTER_WARMHOLDING)
    assert not np.array_equal(normal.reset(), banded.reset())
    rod = banded.initial_state().rods[0]
    centers = banded.twin.temperature.segment_centers(rod)
    inside = rod.segment_temps[(centers >= TWIN.furnace_start) & (centers <= TWIN.furnace_end)]
    assert set(np.unique(inside)) <= {1150.0, 900.0}
    assert banded.initial_state().clock == 0
