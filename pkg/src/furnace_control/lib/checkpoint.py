"""Agent checkpoints: configuration echo, feature setup, RNG state and network weights."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Any

import numpy as np

from furnace_control.lib import bundle
from furnace_control.lib.bundle import BundleError
from furnace_control.lib.dqn import DqnAgent
from furnace_control.lib.errors import ConfigError, DimensionError
from furnace_control.lib.hyperparams import (
    Algorithm,
    algorithm_of,
    config_from_mapping,
    config_to_mapping,
)
from furnace_control.lib.mlp import Mlp
from furnace_control.lib.training import make_agent
from furnace_control.lib.twin import SensorMode

if TYPE_CHECKING:
    from pathlib import Path

    from numpy.typing import NDArray

    from furnace_control.lib.hyperparams import AgentConfig
    from furnace_control.lib.training import Agent

KIND = "checkpoint"
_LAYERS = ("W1", "b1", "W2", "b2", "W3", "b3")


@dataclass(frozen=True)
class Checkpoint:
    config: AgentConfig
    agent: Agent
    zone: int
    sensor_mode: SensorMode
    metadata: dict[str, Any]

    @property
    def algorithm(self) -> Algorithm:
        return algorithm_of(self.config)

    @property
    def policy_network(self) -> Mlp:
        """The network whose three outputs pick the action (Q-values or logits)."""
        if isinstance(self.agent, DqnAgent):
            return self.agent.online
        return self.agent.actor


def _networks(agent: Agent) -> dict[str, Mlp]:
    if isinstance(agent, DqnAgent):
        return {"online": agent.online, "target": agent.target}
    return {"actor": agent.actor, "critic": agent.critic}


def dumps(
    agent: Agent,
    config: AgentConfig,
    zone: int,
    sensor_mode: SensorMode,
    metadata: dict[str, Any] | None = None,
) -> bytes:
    header: dict[str, Any] = {
        "kind": KIND,
        "config": config_to_mapping(config),
        "state_size": agent.state_size,
        "zone": zone,
        "sensor_mode": sensor_mode.value,
        "rng_state": agent.rng.bit_generator.state,
        "metadata": metadata or {},
    }
    if isinstance(agent, DqnAgent):
        header["train_steps"] = agent.train_steps
    arrays: dict[str, NDArray[np.float64]] = {}
    for prefix, net in _networks(agent).items():
        for name, value in zip(_LAYERS, net.parameters(), strict=True):
            arrays[f"{prefix}.{name}"] = value
    return bundle.pack(header, arrays)


def loads(blob: bytes) -> Checkpoint:
    """Rebuild the agent; replay memory and any partial rollout are not kept."""
    header, arrays = bundle.unpack(blob)
    if header.get("kind") != KIND:
        msg = f"bundle holds a {header.get('kind')!r}, not a checkpoint"
        raise BundleError(msg)
    try:
        raw = dict(header["config"])
        algorithm = Algorithm(raw.pop("algorithm"))
        config = config_from_mapping(algorithm, raw)
        agent = make_agent(config, int(header["state_size"]), np.random.default_rng())
        agent.rng.bit_generator.state = header["rng_state"]
        for prefix, net in _networks(agent).items():
            net.set_parameters([arrays[f"{prefix}.{name}"] for name in _LAYERS])
        if isinstance(agent, DqnAgent):
            agent.train_steps = int(header.get("train_steps", 0))
        return Checkpoint(
            config=config,
            agent=agent,
            zone=int(header["zone"]),
            sensor_mode=SensorMode(header["sensor_mode"]),
            metadata=dict(header.get("metadata", {})),
        )
    except (KeyError, ValueError, TypeError, ConfigError, DimensionError) as exc:
        msg = f"checkpoint is incomplete or inconsistent: {exc}"
        raise BundleError(msg) from exc


def save(path: Path, blob: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(blob)


def load(path: Path) -> Checkpoint:
    return loads(path.read_bytes())
