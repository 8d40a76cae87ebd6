"""Hyperparameter grids: enumerate or sample combinations and run them as jobs.

A grid file looks like::

    [grid]
    algorithm = "ppo"
    reward = "hyperbolic"
    budget = 12
    seed = 7

    [grid.values]
    epochs = [10, 20]
    training-interval = [50, 100, 200]
    reward = ["symmetric", "hyperbolic"]

    [hyperparameters]
    episodes = 20

``reward`` and ``scenario`` may be varied like any hyperparameter. Every job is
built and validated against the grid domains before the first one runs.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import repeat
from typing import TYPE_CHECKING, Any

import numpy as np
import pandas as pd

from furnace_control.lib.config import normalize_keys, read_toml
from furnace_control.lib.env import EnvConfig, Scenario
from furnace_control.lib.errors import ConfigError
from furnace_control.lib.hyperparams import Algorithm
from furnace_control.lib.jobs import job_from_mapping, run_job, write_job_outputs
from furnace_control.lib.rewards import RewardFamily
from furnace_control.lib.training import TrainingAborted

if TYPE_CHECKING:
    from collections.abc import Mapping
    from pathlib import Path

    from furnace_control.lib.jobs import JobSpec
    from furnace_control.lib.twin import TwinConfig

logger = logging.getLogger(__name__)

RESULTS_FILE = "results.csv"
SCORE_COLUMNS = ("best_score", "final_score", "mean_score")
_JOB_LEVEL = ("reward", "scenario")
_GRID_KEYS = {"algorithm", "reward", "scenario", "budget", "seed", "episode_steps", "warmup_steps"}


@dataclass(frozen=True)
class GridSpec:
    algorithm: Algorithm
    values: dict[str, list[Any]]
    reward: RewardFamily = RewardFamily.SYMMETRIC
    scenario: Scenario = Scenario.NORMAL_PRODUCTION
    fixed: dict[str, Any] = field(default_factory=dict)
    budget: int | None = None
    seed: int = 0
    episode_steps: int | None = None
    warmup_steps: int = EnvConfig.warmup_steps

    @property
    def names(self) -> list[str]:
        return list(self.values)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(v) for v in self.values.values())

    @property
    def size(self) -> int:
        return math.prod(self.shape)

    def indices(self) -> list[int]:
        """Flat product indices to run: all of them, or a seeded sample of ``budget``."""
        if self.budget is None or self.budget >= self.size:
            return list(range(self.size))
        rng = np.random.default_rng(self.seed)
        picked = rng.choice(self.size, size=self.budget, replace=False)
        return sorted(int(i) for i in picked)

    def combination(self, index: int) -> dict[str, Any]:
        """The combination at *index* in ``itertools.product`` order."""
        position = np.unravel_index(index, self.shape)
        return {
            name: options[int(i)]
            for (name, options), i in zip(self.values.items(), position, strict=True)
        }

    def combinations(self) -> list[dict[str, Any]]:
        return [self.combination(i) for i in self.indices()]

    def jobs(self) -> list[JobSpec]:
        jobs = []
        for combo in self.combinations():
            job: dict[str, Any] = {
                "algorithm": self.algorithm.value,
                "reward": self.reward.value,
                "scenario": self.scenario.value,
                "episode_steps": self.episode_steps,
                "warmup_steps": self.warmup_steps,
            }
            if self.episode_steps is None:
                del job["episode_steps"]
            hyper = dict(self.fixed)
            for name, value in combo.items():
                if name in _JOB_LEVEL:
                    job[name] = value
                else:
                    hyper[name] = value
            jobs.append(job_from_mapping(job, hyper, grid=True))
        return jobs


def _positive(name: str, value: Any) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        msg = f"grid: {name} must be a positive integer (got {value!r})"
        raise ConfigError(msg)
    return value


def grid_from_mapping(grid: Mapping[str, Any], hyperparameters: Mapping[str, Any]) -> GridSpec:
    table = normalize_keys(grid)
    raw_values = table.pop("values", {})
    unknown = set(table) - _GRID_KEYS
    if unknown:
        msg = f"grid: unknown key(s) {', '.join(sorted(unknown))}"
        raise ConfigError(msg)
    if "algorithm" not in table:
        msg = "grid: missing required key 'algorithm'"
        raise ConfigError(msg)
    if not isinstance(raw_values, dict) or not raw_values:
        msg = "grid: [grid.values] is empty; nothing to explore"
        raise ConfigError(msg)
    values = normalize_keys(raw_values)
    for name, options in values.items():
        if not isinstance(options, list) or not options:
            msg = f"grid: '{name}' must be a non-empty array of values"
            raise ConfigError(msg)
    try:
        algorithm = Algorithm(table["algorithm"])
        reward = RewardFamily(table.get("reward", RewardFamily.SYMMETRIC.value))
        scenario = Scenario(table.get("scenario", Scenario.NORMAL_PRODUCTION.value))
    except ValueError as exc:
        msg = f"grid: {exc}"
        raise ConfigError(msg) from None
    budget = table.get("budget")
    seed = table.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        msg = f"grid: seed must be an integer (got {seed!r})"
        raise ConfigError(msg)
    steps = table.get("episode_steps")
    return GridSpec(
        algorithm=algorithm,
        values=values,
        reward=reward,
        scenario=scenario,
        fixed=normalize_keys(hyperparameters),
        budget=None if budget is None else _positive("budget", budget),
        seed=seed,
        episode_steps=None if steps is None else _positive("episode-steps", steps),
        warmup_steps=int(table.get("warmup_steps", EnvConfig.warmup_steps)),
    )


def load_grid(path: Path) -> GridSpec:
    raw = read_toml(path)
    grid = raw.get("grid")
    if not isinstance(grid, dict):
        msg = f"{path}: missing [grid] table"
        raise ConfigError(msg)
    return grid_from_mapping(grid, raw.get("hyperparameters", {}))


def run_one(
    index: int, spec: JobSpec, twin_config: TwinConfig, out_dir: Path | None = None
) -> dict[str, Any]:
    """Train one job and return its results row. Top level so worker processes can pickle it."""
    row: dict[str, Any] = {"job": index, **spec.describe()}
    try:
        result = run_job(spec, twin_config)
    except TrainingAborted as exc:
        scores = [m.score for m in exc.metrics]
        row.update(status="aborted", episodes_run=len(scores))
    else:
        scores = [m.score for m in result.metrics]
        row.update(status="ok", episodes_run=len(scores))
        if out_dir is not None:
            write_job_outputs(result, out_dir / f"job-{index:03d}")
    row["best_score"] = max(scores, default=math.nan)
    row["final_score"] = scores[-1] if scores else math.nan
    row["mean_score"] = float(np.mean(scores)) if scores else math.nan
    return row


def run_grid(
    jobs: list[JobSpec],
    twin_config: TwinConfig,
    *,
    workers: int = 1,
    out_dir: Path | None = None,
) -> pd.DataFrame:
    """Run *jobs* and return one results row per job, in job order."""
    logger.info("running %d job(s) on %d worker(s)", len(jobs), workers)
    if workers <= 1:
        rows = [run_one(i, spec, twin_config, out_dir) for i, spec in enumerate(jobs)]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(
                pool.map(run_one, range(len(jobs)), jobs, repeat(twin_config), repeat(out_dir))
            )
    frame = pd.DataFrame(rows)
    aborted = int((frame["status"] == "aborted").sum()) if not frame.empty else 0
    if aborted:
        logger.warning("%d of %d job(s) aborted", aborted, len(frame))
    return frame


def write_results(frame: pd.DataFrame, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
