"""Training hyperparameters and their value domains.

The domains ship as ``data/hyperparameters.json``. A configuration checked in
grid mode must take every tabulated field from its domain; free mode only
checks that values are well-typed and in range.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, fields
from importlib import resources
from typing import TYPE_CHECKING, Any

from furnace_control.lib.errors import ConfigError

if TYPE_CHECKING:
    from collections.abc import Mapping


class Algorithm(enum.Enum):
    DQN = "dqn"
    PPO = "ppo"


def load_domains() -> dict[str, dict[str, list[Any]]]:
    """Return the domains keyed by group (``common``, ``dqn``, ``ppo``)."""
    ref = resources.files("furnace_control.data").joinpath("hyperparameters.json")
    data: dict[str, dict[str, list[Any]]] = json.loads(ref.read_text(encoding="utf-8"))
    return data


@dataclass(frozen=True)
class TrainingConfig:
    episodes: int = 50
    learning_rate: float = 0.001
    seed: int = 19
    batch_size: int = 64
    normalize: bool = True
    no_noise: bool = True
    use_forge_sensors: bool = False


@dataclass(frozen=True)
class DqnConfig(TrainingConfig):
    gamma: float = 0.99
    epsilon_start: float = 1.0
    epsilon_min: float = 0.01
    epsilon_step: float = 0.05
    hidden1: int = 128
    hidden2: int = 128
    target_update: int = 1000
    memory_capacity: int = 100_000


@dataclass(frozen=True)
class PpoConfig(TrainingConfig):
    """PPO settings. ``batch_size`` is unused: each epoch trains on the whole rollout."""

    gamma: float = 0.99
    gae_lambda: float = 0.95
    c1: float = 0.5
    c2: float = 0.01
    clip_epsilon: float = 0.2
    epochs: int = 10
    training_interval: int = 100
    actor_hidden1: int = 128
    actor_hidden2: int = 128
    critic_hidden1: int = 128
    critic_hidden2: int = 128


AgentConfig = DqnConfig | PpoConfig

_CONFIG_TYPES: dict[Algorithm, type[DqnConfig] | type[PpoConfig]] = {
    Algorithm.DQN: DqnConfig,
    Algorithm.PPO: PpoConfig,
}

_UNIT_FIELDS = ("gamma", "epsilon_start", "epsilon_min", "epsilon_step", "gae_lambda")
_POSITIVE_INT_FIELDS = (
    "episodes",
    "batch_size",
    "hidden1",
    "hidden2",
    "target_update",
    "memory_capacity",
    "epochs",
    "training_interval",
    "actor_hidden1",
    "actor_hidden2",
    "critic_hidden1",
    "critic_hidden2",
)


def algorithm_of(config: AgentConfig) -> Algorithm:
    return Algorithm.DQN if isinstance(config, DqnConfig) else Algorithm.PPO


def _coerce(name: str, value: Any, annotation: str) -> Any:
    if annotation == "bool":
        if not isinstance(value, bool):
            msg = f"hyperparameter '{name}' must be a boolean (got {value!r})"
            raise ConfigError(msg)
        return value
    if annotation == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            msg = f"hyperparameter '{name}' must be an integer (got {value!r})"
            raise ConfigError(msg)
        return value
    if isinstance(value, bool) or not isinstance(value, int | float):
        msg = f"hyperparameter '{name}' must be a number (got {value!r})"
        raise ConfigError(msg)
    return float(value)


def config_from_mapping(
    algorithm: Algorithm, raw: Mapping[str, Any], *, grid: bool = False
) -> AgentConfig:
    """Build a config from TOML-style keys (``-`` or ``_``) and validate it."""
    cls = _CONFIG_TYPES[algorithm]
    known = {f.name: str(f.type) for f in fields(cls)}
    values: dict[str, Any] = {}
    for key, value in raw.items():
        name = key.replace("-", "_")
        if name not in known:
            msg = f"unknown {algorithm.value} hyperparameter '{key}'"
            raise ConfigError(msg)
        values[name] = _coerce(name, value, known[name])
    config = cls(**values)
    validate(config, grid=grid)
    return config


def config_to_mapping(config: AgentConfig) -> dict[str, Any]:
    return {"algorithm": algorithm_of(config).value, **asdict(config)}


def validate(config: AgentConfig, *, grid: bool = False) -> None:
    values = asdict(config)
    if values["learning_rate"] <= 0 or not math.isfinite(values["learning_rate"]):
        msg = f"learning_rate must be a positive finite number (got {values['learning_rate']})"
        raise ConfigError(msg)
    for name in _POSITIVE_INT_FIELDS:
        if name in values and values[name] < 1:
            msg = f"{name} must be >= 1 (got {values[name]})"
            raise ConfigError(msg)
    for name in _UNIT_FIELDS:
        if name in values and not 0 <= values[name] <= 1:
            msg = f"{name} must lie in [0, 1] (got {values[name]})"
            raise ConfigError(msg)
    if isinstance(config, DqnConfig) and config.epsilon_min > config.epsilon_start:
        msg = f"epsilon_min {config.epsilon_min} exceeds epsilon_start {config.epsilon_start}"
        raise ConfigError(msg)
    if isinstance(config, PpoConfig):
        if config.clip_epsilon <= 0 or config.c1 < 0 or config.c2 < 0:
            msg = "clip_epsilon must be > 0 and c1, c2 must be >= 0"
            raise ConfigError(msg)
    if grid:
        _check_domains(config, values)


def _in_domain(value: Any, domain: list[Any]) -> bool:
    if isinstance(value, bool):
        return value in domain
    return any(
        not isinstance(d, bool) and math.isclose(value, d, rel_tol=1e-12) for d in domain
    )


def _check_domains(config: AgentConfig, values: dict[str, Any]) -> None:
    domains = load_domains()
    for group in ("common", algorithm_of(config).value):
        for name, domain in domains[group].items():
            if not _in_domain(values[name], domain):
                allowed = ", ".join(str(d) for d in domain)
                msg = f"{name}={values[name]} is outside its grid domain (allowed: {allowed})"
                raise ConfigError(msg)
