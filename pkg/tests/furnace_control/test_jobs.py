"""Tests for furnace_control.lib.jobs."""

from __future__ import annotations

import json
from typing import TYPE_CHECKING

import numpy as np
import pytest

from furnace_control.lib import checkpoint
from furnace_control.lib.env import Scenario
from furnace_control.lib.errors import ConfigError
from furnace_control.lib.hyperparams import Algorithm, DqnConfig, PpoConfig
from furnace_control.lib.jobs import (
    CHECKPOINT_FILE,
    CONFIG_FILE,
    METRICS_FILE,
    build_env,
    format_config_table,
    job_from_mapping,
    job_rngs,
    load_job,
    run_job,
    write_job_outputs,
)
from furnace_control.lib.rewards import RewardFamily, RewardSpec
from furnace_control.lib.training import (
    evaluate,
    greedy_policy,
    random_policy,
    read_metrics_csv,
)
from furnace_control.lib.twin import SensorMode, TwinConfig

if TYPE_CHECKING:
    from pathlib import Path

TWIN = TwinConfig()
SMALL_DQN = {"episodes": 2, "hidden1": 8, "hidden2": 8, "batch-size": 2, "memory-capacity": 16}
TINY_JOB = {"algorithm": "dqn", "episode-steps": 3, "warmup-steps": 5}


# -- job files ----------------------------------------------------------------


def test_job_defaults() -> None:
    spec = job_from_mapping({"algorithm": "ppo"}, {})
    assert spec.algorithm is Algorithm.PPO
    assert isinstance(spec.config, PpoConfig)
    assert spec.reward is RewardFamily.SYMMETRIC
    assert spec.scenario is Scenario.NORMAL_PRODUCTION
    assert spec.episode_steps is None
    assert spec.warmup_steps == 800
    assert spec.sensor_mode is SensorMode.VIRTUAL


def test_shared_flags_may_sit_in_the_job_table() -> None:
    spec = job_from_mapping(
        {"algorithm": "dqn", "seed": 39, "use-forge-sensors": True, "reward": "hyperbolic"},
        {"seed": 19, "gamma": 0.9},
    )
    assert spec.seed == 39
    assert spec.sensor_mode is SensorMode.FORGE
    assert spec.reward is RewardFamily.HYPERBOLIC
    assert isinstance(spec.config, DqnConfig)
    assert spec.config.gamma == 0.9


@pytest.mark.parametrize(
    ("job", "match"),
    [
        ({}, "missing required key 'algorithm'"),
        ({"algorithm": "a2c"}, "invalid algorithm 'a2c'"),
        ({"algorithm": "dqn", "reward": "cubic"}, "invalid reward"),
        ({"algorithm": "dqn", "scenario": "idle"}, "invalid scenario"),
        ({"algorithm": "dqn", "colour": 1}, "unknown key"),
        ({"algorithm": "dqn", "episode-steps": 0}, "episode-steps must be a positive integer"),
        ({"algorithm": "dqn", "episode-steps": True}, "episode-steps"),
    ],
)
def test_invalid_jobs(job: dict[str, object], match: str) -> None:
    with pytest.raises(ConfigError, match=match):
        job_from_mapping(job, {})


def test_grid_flag_enforces_domains() -> None:
    with pytest.raises(ConfigError, match="grid domain"):
        job_from_mapping({"algorithm": "dqn", "grid": True}, {"hidden1": 8})
    assert job_from_mapping({"algorithm": "dqn", "grid": True}, {"hidden1": 8}, grid=False)


def test_load_job(tmp_path: Path) -> None:
    path = tmp_path / "job.toml"
    path.write_text(
        '[job]\nalgorithm = "ppo"\nscenario = "after-warmholding"\n\n'
        "[hyperparameters]\nepochs = 5\nclip-epsilon = 0.1\n",
        encoding="utf-8",
    )
    spec = load_job(path)
    assert spec.scenario is Scenario.AFTER_WARMHOLDING
    assert isinstance(spec.config, PpoConfig)
    assert (spec.config.epochs, spec.config.clip_epsilon) == (5, 0.1)


def test_config_table_lists_every_field() -> None:
    spec = job_from_mapping({"algorithm": "dqn"}, {})
    table = format_config_table(spec).splitlines()
    assert table[0].split() == ["Hyperparameter", "Value"]
    assert len(table) == 2 + len(spec.describe())
    assert any(line.split()[:2] == ["target", "update"] for line in table)


# -- running ------------------------------------------------------------------


def test_job_rngs_are_independent_and_reproducible() -> None:
    agent_a, env_a = job_rngs(19)
    agent_b, env_b = job_rngs(19)
    assert agent_a.random() == agent_b.random()
    assert env_a.random() == env_b.random()
    agent, env = job_rngs(19)
    assert agent.random() != env.random()


def test_build_env_follows_the_job() -> None:
    spec = job_from_mapping({**TINY_JOB, "no-noise": False, "normalize": False}, SMALL_DQN)
    env = build_env(spec, TWIN, np.random.default_rng(0))
    assert env.config.noise
    assert env.episode_steps == 3
    assert env.features.norm_bounds is None
    assert env.features.sensor_mode is SensorMode.VIRTUAL


def test_run_job_is_reproducible() -> None:
    spec = job_from_mapping(TINY_JOB, SMALL_DQN)
    first = run_job(spec, TWIN)
    second = run_job(spec, TWIN)
    assert [m.score for m in first.metrics] == [m.score for m in second.metrics]
    assert first.checkpoint_bytes() == second.checkpoint_bytes()
    assert len(first.metrics) == 2


def test_write_job_outputs(tmp_path: Path) -> None:
    spec = job_from_mapping({**TINY_JOB, "reward": "asymmetric"}, SMALL_DQN)
    result = run_job(spec, TWIN)
    paths = write_job_outputs(result, tmp_path / "job")
    assert {p.name for p in paths.values()} == {CHECKPOINT_FILE, METRICS_FILE, CONFIG_FILE}
    restored = checkpoint.load(paths["checkpoint"])
    assert restored.config == spec.config
    assert restored.sensor_mode is SensorMode.VIRTUAL
    assert restored.metadata["reward"] == "asymmetric"
    assert restored.metadata["best_score"] == result.best_score
    assert len(read_metrics_csv(paths["metrics"])) == 2
    described = json.loads(paths["config"].read_text(encoding="utf-8"))
    assert described["algorithm"] == "dqn"
    assert described["episode_steps"] == 3


# -- learning smoke test ------------------------------------------------------


@pytest.mark.slow
def test_dqn_beats_a_random_policy() -> None:
    reward = RewardSpec(RewardFamily.HYPERBOLIC)
    trained_scores = []
    baseline_scores = []
    for seed in (19, 39, 1, 2, 3):
        spec = job_from_mapping({"algorithm": "dqn", "reward": "hyperbolic"}, {"seed": seed})
        result = run_job(spec, TWIN)
        trained_scores.append(np.mean([m.score for m in result.metrics[-10:]]))
        baseline_env = build_env(spec, TWIN, job_rngs(seed)[1])
        baseline = evaluate(baseline_env, random_policy(np.random.default_rng(seed)), reward)
        baseline_scores.append(baseline.score)
        greedy_env = build_env(spec, TWIN, job_rngs(seed)[1])
        greedy = evaluate(greedy_env, greedy_policy(result.agent), reward)
        assert greedy.in_band_fraction >= 0.8
    assert np.mean(trained_scores) >= 1.5 * np.mean(baseline_scores)
