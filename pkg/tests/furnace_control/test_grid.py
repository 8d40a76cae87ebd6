"""Tests for furnace_control.lib.grid."""

from __future__ import annotations

import itertools
from typing import TYPE_CHECKING

import pandas as pd
import pytest

from furnace_control.lib.env import Scenario
from furnace_control.lib.errors import ConfigError
from furnace_control.lib.grid import (
    RESULTS_FILE,
    grid_from_mapping,
    load_grid,
    run_grid,
    write_results,
)
from furnace_control.lib.hyperparams import Algorithm
from furnace_control.lib.jobs import job_from_mapping
from furnace_control.lib.rewards import RewardFamily
from furnace_control.lib.twin import TwinConfig

if TYPE_CHECKING:
    from pathlib import Path

    from furnace_control.lib.jobs import JobSpec

TWIN = TwinConfig()
SMALL_DQN = {"episodes": 2, "hidden1": 8, "hidden2": 8, "batch-size": 2, "memory-capacity": 16}
TINY_JOB = {"algorithm": "dqn", "episode-steps": 3, "warmup-steps": 5}


# -- grid files ---------------------------------------------------------------


def test_full_product_in_product_order() -> None:
    spec = grid_from_mapping(
        {"algorithm": "dqn", "values": {"gamma": [0.9, 0.99], "epsilon-start": [0.7, 1.0]}},
        {},
    )
    assert spec.names == ["gamma", "epsilon_start"]
    assert spec.shape == (2, 2)
    assert spec.size == 4
    expected = [
        {"gamma": g, "epsilon_start": e} for g, e in itertools.product([0.9, 0.99], [0.7, 1.0])
    ]
    assert spec.combinations() == expected
    jobs = spec.jobs()
    assert len(jobs) == 4
    assert [(j.config.gamma, j.config.epsilon_start) for j in jobs] == [
        (c["gamma"], c["epsilon_start"]) for c in expected
    ]


def test_budget_samples_a_sorted_unique_subset() -> None:
    grid = {"algorithm": "ppo", "budget": 5, "seed": 3}
    values = {"epochs": [5, 10, 15, 20], "training-interval": [10, 25, 50, 100]}
    spec = grid_from_mapping({**grid, "values": values}, {})
    indices = spec.indices()
    assert len(indices) == 5
    assert indices == sorted(set(indices))
    assert all(0 <= i < 16 for i in indices)
    assert spec.indices() == indices
    again = grid_from_mapping({**grid, "values": values}, {})
    assert again.indices() == indices


def test_budget_above_size_runs_everything() -> None:
    spec = grid_from_mapping({"algorithm": "dqn", "budget": 10, "values": {"gamma": [0.9]}}, {})
    assert spec.indices() == [0]


def test_reward_and_scenario_vary_at_job_level() -> None:
    spec = grid_from_mapping(
        {
            "algorithm": "ppo",
            "scenario": "after-warmholding",
            "values": {"reward": ["symmetric", "hyperbolic"]},
        },
        {"epochs": 10},
    )
    jobs = spec.jobs()
    assert [j.reward for j in jobs] == [RewardFamily.SYMMETRIC, RewardFamily.HYPERBOLIC]
    assert all(j.scenario is Scenario.AFTER_WARMHOLDING for j in jobs)
    assert all(j.algorithm is Algorithm.PPO for j in jobs)
    assert all(j.config.epochs == 10 for j in jobs)


def test_jobs_are_checked_against_grid_domains() -> None:
    spec = grid_from_mapping({"algorithm": "dqn", "values": {"gamma": [0.5]}}, {})
    with pytest.raises(ConfigError, match="outside its grid domain"):
        spec.jobs()


@pytest.mark.parametrize(
    ("grid", "message"),
    [
        ({"algorithm": "dqn"}, "nothing to explore"),
        ({"algorithm": "dqn", "values": {}}, "nothing to explore"),
        ({"values": {"gamma": [0.9]}}, "missing required key 'algorithm'"),
        ({"algorithm": "sarsa", "values": {"gamma": [0.9]}}, "grid:"),
        ({"algorithm": "dqn", "values": {"gamma": []}}, "non-empty array"),
        ({"algorithm": "dqn", "values": {"gamma": 0.9}}, "non-empty array"),
        ({"algorithm": "dqn", "budget": 0, "values": {"gamma": [0.9]}}, "budget"),
        ({"algorithm": "dqn", "seed": "x", "values": {"gamma": [0.9]}}, "seed"),
        ({"algorithm": "dqn", "colour": "red", "values": {"gamma": [0.9]}}, "unknown key"),
    ],
)
def test_invalid_grids(grid: dict[str, object], message: str) -> None:
    with pytest.raises(ConfigError, match=message):
        grid_from_mapping(grid, {})


def test_load_grid(tmp_path: Path) -> None:
    path = tmp_path / "grid.toml"
    path.write_text(
        '[grid]\nalgorithm = "ppo"\nbudget = 2\n\n'
        "[grid.values]\nepochs = [5, 10, 15]\n\n"
        "[hyperparameters]\nepisodes = 50\n",
        encoding="utf-8",
    )
    spec = load_grid(path)
    assert spec.algorithm is Algorithm.PPO
    assert spec.budget == 2
    assert spec.fixed == {"episodes": 50}
    assert len(spec.jobs()) == 2


def test_load_grid_needs_a_grid_table(tmp_path: Path) -> None:
    path = tmp_path / "grid.toml"
    path.write_text("[hyperparameters]\nepisodes = 50\n", encoding="utf-8")
    with pytest.raises(ConfigError, match=r"missing \[grid\] table"):
        load_grid(path)


# -- running ------------------------------------------------------------------


def _tiny_jobs() -> list[JobSpec]:
    return [
        job_from_mapping({**TINY_JOB, "reward": reward}, {**SMALL_DQN, "seed": seed})
        for reward, seed in (("symmetric", 1), ("hyperbolic", 2))
    ]


def test_run_grid_returns_one_row_per_job(tmp_path: Path) -> None:
    frame = run_grid(_tiny_jobs(), TWIN, out_dir=tmp_path)
    assert list(frame["job"]) == [0, 1]
    assert list(frame["status"]) == ["ok", "ok"]
    assert list(frame["episodes_run"]) == [2, 2]
    assert list(frame["reward"]) == ["symmetric", "hyperbolic"]
    assert list(frame["seed"]) == [1, 2]
    assert (frame["best_score"] >= frame["final_score"]).all()
    assert (tmp_path / "job-000" / "checkpoint.bundle").is_file()
    assert (tmp_path / "job-001" / "metrics.csv").is_file()


def test_worker_pool_matches_serial_run() -> None:
    jobs = _tiny_jobs()
    serial = run_grid(jobs, TWIN)
    pooled = run_grid(jobs, TWIN, workers=2)
    pd.testing.assert_frame_equal(serial, pooled)


def test_write_results(tmp_path: Path) -> None:
    frame = pd.DataFrame({"job": [0, 1], "best_score": [1.5, -2.0]})
    path = tmp_path / "out" / RESULTS_FILE
    write_results(frame, path)
    pd.testing.assert_frame_equal(pd.read_csv(path), frame)
