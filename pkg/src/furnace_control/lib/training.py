"""The training loop, greedy evaluation and the per-episode metric set."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from typing import TYPE_CHECKING

import numpy as np
import pandas as pd

from furnace_control.lib.dqn import DqnAgent, epsilon_schedule
from furnace_control.lib.errors import FurnaceError
from furnace_control.lib.hyperparams import DqnConfig
from furnace_control.lib.ppo import PpoAgent
from furnace_control.lib.rewards import episode_score
from furnace_control.lib.twin import CRITICAL_BAND

if TYPE_CHECKING:
    from collections.abc import Callable, Sequence
    from pathlib import Path

    from numpy.typing import NDArray

    from furnace_control.lib.env import Environment
    from furnace_control.lib.hyperparams import AgentConfig
    from furnace_control.lib.rewards import RewardSpec

logger = logging.getLogger(__name__)

SAMPLE_EVERY = 500
SERIES_COLUMNS = ("temperatures", "powers")

Agent = DqnAgent | PpoAgent


@dataclass(frozen=True)
class EpisodeMetrics:
    episode: int
    score: float
    mean_loss: float
    mean_step_time: float
    episode_time: float
    steps: int
    temperatures: tuple[float, ...]
    powers: tuple[float, ...]
    epsilon: float | None = None


class TrainingAborted(FurnaceError):
    """The environment failed mid-run; ``metrics`` holds the completed episodes."""

    def __init__(self, metrics: list[EpisodeMetrics], cause: Exception) -> None:
        self.metrics = metrics
        self.cause = cause
        super().__init__(f"training aborted after {len(metrics)} episode(s): {cause}")


def make_agent(config: AgentConfig, state_size: int, rng: np.random.Generator) -> Agent:
    if isinstance(config, DqnConfig):
        return DqnAgent(state_size, config, rng)
    return PpoAgent(state_size, config, rng)


@dataclass
class _EpisodeLog:
    rewards: list[float] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)
    step_times: list[float] = field(default_factory=list)
    temperatures: list[float] = field(default_factory=list)
    powers: list[float] = field(default_factory=list)

    def sample(self, env: Environment) -> None:
        self.temperatures.append(env.temperature)
        self.powers.append(env.power)


def _ppo_loss(agent: PpoAgent) -> float:
    losses = agent.update()
    c = agent.config
    return losses.policy_loss + c.c1 * losses.value_loss - c.c2 * losses.entropy


def drl_train(
    env: Environment,
    agent: Agent,
    config: AgentConfig,
    reward_spec: RewardSpec,
    on_episode: Callable[[EpisodeMetrics], None] | None = None,
) -> tuple[Agent, list[EpisodeMetrics]]:
    """Run ``config.episodes`` episodes, training at the algorithm's cadence.

    DQN trains on a replay batch every step once the memory holds a batch;
    PPO updates whenever its rollout reaches ``training_interval`` steps.
    Losses are reported as the total minimized objective of each update.
    """
    history: list[EpisodeMetrics] = []
    for episode in range(config.episodes):
        epsilon = None
        if isinstance(config, DqnConfig):
            epsilon = epsilon_schedule(
                config.epsilon_start, config.epsilon_step, config.epsilon_min, episode
            )
        log = _EpisodeLog()
        started = time.perf_counter()
        try:
            state = env.reset()
            log.sample(env)
            done = False
            while not done:
                tick = time.perf_counter()
                state, done = _train_step(env, agent, state, epsilon, log)
                log.step_times.append(time.perf_counter() - tick)
                if len(log.rewards) % SAMPLE_EVERY == 0:
                    log.sample(env)
        except FurnaceError as exc:
            logger.error("episode %d failed after %d steps: %s", episode, len(log.rewards), exc)
            raise TrainingAborted(history, exc) from exc
        metrics = EpisodeMetrics(
            episode=episode,
            score=episode_score(reward_spec, log.rewards),
            mean_loss=float(np.mean(log.losses)) if log.losses else math.nan,
            mean_step_time=float(np.mean(log.step_times)) if log.step_times else 0.0,
            episode_time=time.perf_counter() - started,
            steps=len(log.rewards),
            temperatures=tuple(log.temperatures),
            powers=tuple(log.powers),
            epsilon=epsilon,
        )
        history.append(metrics)
        logger.info(
            "episode %d: score %.3f over %d steps", episode, metrics.score, metrics.steps
        )
        if on_episode is not None:
            on_episode(metrics)
    return agent, history


def _train_step(
    env: Environment,
    agent: Agent,
    state: NDArray[np.float64],
    epsilon: float | None,
    log: _EpisodeLog,
) -> tuple[NDArray[np.float64], bool]:
    if isinstance(agent, DqnAgent):
        action = agent.act(state, epsilon if epsilon is not None else 0.0)
        next_state, reward, done = env.step(action)
        agent.memory.push(state, action, reward, next_state, done)
        if agent.ready():
            log.losses.append(agent.train_step())
    else:
        action, log_p = agent.act(state)
        next_state, reward, done = env.step(action)
        agent.rollout.append(state, action, log_p, reward, done, next_state)
        if len(agent.rollout) >= agent.config.training_interval:
            log.losses.append(_ppo_loss(agent))
    log.rewards.append(reward)
    return next_state, done


def greedy_policy(agent: Agent) -> Callable[[NDArray[np.float64]], int]:
    return agent.greedy


def random_policy(rng: np.random.Generator, n_actions: int = 3) -> Callable[..., int]:
    def choose(_state: NDArray[np.float64]) -> int:
        return int(rng.integers(n_actions))

    return choose


@dataclass(frozen=True)
class EvaluationTrace:
    temperatures: tuple[float, ...]
    powers: tuple[float, ...]
    rewards: tuple[float, ...]
    score: float
    in_band_fraction: float

    def frame(self, band: tuple[float, float] = CRITICAL_BAND) -> pd.DataFrame:
        steps = len(self.temperatures)
        return pd.DataFrame(
            {
                "step": np.arange(1, steps + 1),
                "temperature": self.temperatures,
                "power": self.powers,
                "band_min": np.full(steps, band[0]),
                "band_max": np.full(steps, band[1]),
            }
        )


def evaluate(
    env: Environment,
    policy: Callable[[NDArray[np.float64]], int],
    reward_spec: RewardSpec,
    band: tuple[float, float] = CRITICAL_BAND,
) -> EvaluationTrace:
    """Run one episode without training and trace every step."""
    state = env.reset()
    temps: list[float] = []
    powers: list[float] = []
    rewards: list[float] = []
    done = False
    while not done:
        state, reward, done = env.step(policy(state))
        temps.append(env.temperature)
        powers.append(env.power)
        rewards.append(reward)
    inside = sum(band[0] <= t <= band[1] for t in temps)
    return EvaluationTrace(
        temperatures=tuple(temps),
        powers=tuple(powers),
        rewards=tuple(rewards),
        score=episode_score(reward_spec, rewards),
        in_band_fraction=inside / len(temps) if temps else 0.0,
    )


# -- metrics CSV ------------------------------------------------------------


def metrics_frame(metrics: Sequence[EpisodeMetrics]) -> pd.DataFrame:
    columns = [f.name for f in fields(EpisodeMetrics)]
    rows = []
    for m in metrics:
        row = asdict(m)
        for name in SERIES_COLUMNS:
            row[name] = json.dumps(list(row[name]))
        rows.append(row)
    return pd.DataFrame(rows, columns=columns)


def write_metrics_csv(metrics: Sequence[EpisodeMetrics], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    metrics_frame(metrics).to_csv(path, index=False)


def read_metrics_csv(path: Path) -> list[EpisodeMetrics]:
    frame = pd.read_csv(path)
    missing = [f.name for f in fields(EpisodeMetrics) if f.name not in frame.columns]
    if missing:
        msg = f"{path}: missing metrics columns {', '.join(missing)}"
        raise ValueError(msg)
    result = []
    for row in frame.to_dict(orient="records"):
        epsilon = row["epsilon"]
        result.append(
            EpisodeMetrics(
                episode=int(row["episode"]),
                score=float(row["score"]),
                mean_loss=float(row["mean_loss"]),
                mean_step_time=float(row["mean_step_time"]),
                episode_time=float(row["episode_time"]),
                steps=int(row["steps"]),
                temperatures=tuple(json.loads(row["temperatures"])),
                powers=tuple(json.loads(row["powers"])),
                epsilon=None if pd.isna(epsilon) else float(epsilon),
            )
        )
    return result


def best_score(metrics: Sequence[EpisodeMetrics]) -> float:
    return max((m.score for m in metrics), default=math.nan)
