"""Training jobs: one agent, one reward family, one scenario, one seed."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, fields
from typing import TYPE_CHECKING, Any

import numpy as np

from furnace_control.lib import checkpoint
from furnace_control.lib.config import normalize_keys, read_toml
from furnace_control.lib.env import EnvConfig, FurnaceEnv, Scenario
from furnace_control.lib.errors import ConfigError
from furnace_control.lib.hyperparams import (
    Algorithm,
    TrainingConfig,
    algorithm_of,
    config_from_mapping,
    config_to_mapping,
)
from furnace_control.lib.rewards import RewardFamily, RewardSpec
from furnace_control.lib.training import best_score, drl_train, make_agent, write_metrics_csv
from furnace_control.lib.twin import CRITICAL_ZONE, SensorMode
from furnace_control.lib.wrapper import NormBounds, feature_map

if TYPE_CHECKING:
    from collections.abc import Callable, Mapping
    from pathlib import Path

    from furnace_control.lib.hyperparams import AgentConfig
    from furnace_control.lib.training import Agent, EpisodeMetrics
    from furnace_control.lib.twin import TwinConfig
    from furnace_control.lib.wrapper import FeatureMap

logger = logging.getLogger(__name__)

CHECKPOINT_FILE = "checkpoint.bundle"
METRICS_FILE = "metrics.csv"
CONFIG_FILE = "config.json"

_JOB_KEYS = {"algorithm", "reward", "scenario", "episode_steps", "warmup_steps", "grid"}
_SHARED_KEYS = {f.name for f in fields(TrainingConfig)}


@dataclass(frozen=True)
class JobSpec:
    config: AgentConfig
    reward: RewardFamily = RewardFamily.SYMMETRIC
    scenario: Scenario = Scenario.NORMAL_PRODUCTION
    episode_steps: int | None = None
    warmup_steps: int = EnvConfig.warmup_steps

    @property
    def algorithm(self) -> Algorithm:
        return algorithm_of(self.config)

    @property
    def seed(self) -> int:
        return self.config.seed

    @property
    def sensor_mode(self) -> SensorMode:
        return SensorMode.FORGE if self.config.use_forge_sensors else SensorMode.VIRTUAL

    def describe(self) -> dict[str, Any]:
        return {
            "reward": self.reward.value,
            "scenario": self.scenario.value,
            "episode_steps": self.episode_steps,
            "warmup_steps": self.warmup_steps,
            **config_to_mapping(self.config),
        }


def _choice(kind: type[Any], name: str, value: Any) -> Any:
    try:
        return kind(value)
    except ValueError:
        allowed = ", ".join(m.value for m in kind)
        msg = f"job: invalid {name} {value!r} (allowed: {allowed})"
        raise ConfigError(msg) from None


def job_from_mapping(
    job: Mapping[str, Any],
    hyperparameters: Mapping[str, Any],
    *,
    grid: bool | None = None,
) -> JobSpec:
    """Build a job from a ``[job]`` table and a ``[hyperparameters]`` table.

    Shared training flags (seed, normalize, no-noise, use-forge-sensors) may
    sit in either table.
    """
    job = normalize_keys(job)
    unknown = set(job) - _JOB_KEYS - _SHARED_KEYS
    if unknown:
        msg = f"job: unknown key(s) {', '.join(sorted(unknown))}"
        raise ConfigError(msg)
    if "algorithm" not in job:
        msg = "job: missing required key 'algorithm'"
        raise ConfigError(msg)
    algorithm = _choice(Algorithm, "algorithm", job["algorithm"])
    shared = {k: v for k, v in job.items() if k in _SHARED_KEYS}
    merged = {**normalize_keys(hyperparameters), **shared}
    grid_mode = bool(job.get("grid", False)) if grid is None else grid
    steps = job.get("episode_steps")
    if steps is not None and (isinstance(steps, bool) or not isinstance(steps, int) or steps < 1):
        msg = f"job: episode-steps must be a positive integer (got {steps!r})"
        raise ConfigError(msg)
    return JobSpec(
        config=config_from_mapping(algorithm, merged, grid=grid_mode),
        reward=_choice(RewardFamily, "reward", job.get("reward", RewardFamily.SYMMETRIC.value)),
        scenario=_choice(
            Scenario, "scenario", job.get("scenario", Scenario.NORMAL_PRODUCTION.value)
        ),
        episode_steps=steps,
        warmup_steps=int(job.get("warmup_steps", EnvConfig.warmup_steps)),
    )


def load_job(path: Path, *, grid: bool | None = None) -> JobSpec:
    raw = read_toml(path)
    return job_from_mapping(raw.get("job", {}), raw.get("hyperparameters", {}), grid=grid)


def job_features(spec: JobSpec, twin_config: TwinConfig) -> FeatureMap:
    bounds = NormBounds() if spec.config.normalize else None
    return feature_map(CRITICAL_ZONE, spec.sensor_mode, twin_config, bounds)


def build_env(
    spec: JobSpec, twin_config: TwinConfig, rng: np.random.Generator | None = None
) -> FurnaceEnv:
    env_config = EnvConfig(
        scenario=spec.scenario,
        episode_steps=spec.episode_steps,
        warmup_steps=spec.warmup_steps,
        noise=not spec.config.no_noise,
    )
    return FurnaceEnv(
        twin_config, job_features(spec, twin_config), RewardSpec(spec.reward), env_config, rng
    )


def job_rngs(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent (agent, environment) streams derived from the job seed."""
    agent_seq, env_seq = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(agent_seq), np.random.default_rng(env_seq)


@dataclass
class JobResult:
    spec: JobSpec
    agent: Agent
    metrics: list[EpisodeMetrics] = field(default_factory=list)

    @property
    def best_score(self) -> float:
        return best_score(self.metrics)

    def checkpoint_bytes(self) -> bytes:
        return checkpoint.dumps(
            self.agent,
            self.spec.config,
            CRITICAL_ZONE,
            self.spec.sensor_mode,
            metadata={
                "reward": self.spec.reward.value,
                "scenario": self.spec.scenario.value,
                "seed": self.spec.seed,
                "best_score": self.best_score,
            },
        )


def run_job(
    spec: JobSpec,
    twin_config: TwinConfig,
    on_episode: Callable[[EpisodeMetrics], None] | None = None,
) -> JobResult:
    agent_rng, env_rng = job_rngs(spec.seed)
    env = build_env(spec, twin_config, env_rng)
    agent = make_agent(spec.config, env.features.native_size, agent_rng)
    logger.info(
        "training %s on %s (%s reward, seed %d)",
        spec.algorithm.value,
        spec.scenario.value,
        spec.reward.value,
        spec.seed,
    )
    agent, metrics = drl_train(env, agent, spec.config, RewardSpec(spec.reward), on_episode)
    return JobResult(spec, agent, metrics)


def write_job_outputs(result: JobResult, out_dir: Path) -> dict[str, Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "checkpoint": out_dir / CHECKPOINT_FILE,
        "metrics": out_dir / METRICS_FILE,
        "config": out_dir / CONFIG_FILE,
    }
    checkpoint.save(paths["checkpoint"], result.checkpoint_bytes())
    write_metrics_csv(result.metrics, paths["metrics"])
    paths["config"].write_text(
        json.dumps(result.spec.describe(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return paths


def format_config_table(spec: JobSpec) -> str:
    """Two-column hyperparameter listing."""
    rows = [(name.replace("_", " "), str(value)) for name, value in spec.describe().items()]
    width = max(len("Hyperparameter"), *(len(name) for name, _ in rows))
    lines = [f"{'Hyperparameter':<{width}}  Value", f"{'-' * width}  -----"]
    lines.extend(f"{name:<{width}}  {value}" for name, value in rows)
    return "\n".join(lines)
