"""Deep Q-network agent: online and target networks, replay memory, epsilon-greedy.

Actions are indices into (Decrease, NoChange, Increase); the power change of
action ``i`` is ``i - 1`` steps.
"""

from __future__ import annotations

import logging
from typing import TYPE_CHECKING

import numpy as np

from furnace_control.lib.mlp import Mlp
from furnace_control.lib.replay import ReplayMemory

if TYPE_CHECKING:
    from numpy.typing import NDArray

    from furnace_control.lib.hyperparams import DqnConfig
    from furnace_control.lib.mlp import Gradients
    from furnace_control.lib.replay import Batch

logger = logging.getLogger(__name__)

N_ACTIONS = 3


def epsilon_schedule(start: float, step: float, minimum: float, episodes_elapsed: int) -> float:
    return max(minimum, start - episodes_elapsed * step)


class DqnAgent:
    def __init__(
        self,
        state_size: int,
        config: DqnConfig,
        rng: np.random.Generator,
        n_actions: int = N_ACTIONS,
    ) -> None:
        self.config = config
        self.rng = rng
        self.n_actions = n_actions
        self.online = Mlp.create((state_size, config.hidden1, config.hidden2, n_actions), rng)
        self.target = self.online.copy()
        self.memory = ReplayMemory(config.memory_capacity, state_size, rng)
        self.train_steps = 0

    @property
    def state_size(self) -> int:
        return self.online.input_size

    def q_values(self, state: NDArray[np.float64]) -> NDArray[np.float64]:
        return self.online(state)

    def greedy(self, state: NDArray[np.float64]) -> int:
        # np.argmax returns the lowest index among ties.
        return int(np.argmax(self.online(state)))

    def act(self, state: NDArray[np.float64], epsilon: float) -> int:
        if self.rng.random() < epsilon:
            return int(self.rng.integers(self.n_actions))
        return self.greedy(state)

    def td_targets(self, batch: Batch) -> NDArray[np.float64]:
        next_q = self.target(batch.next_states).max(axis=1)
        return batch.rewards + (1.0 - batch.dones) * self.config.gamma * next_q

    def loss_and_gradients(self, batch: Batch) -> tuple[float, Gradients]:
        """Mean squared TD error of the taken actions and its online-net gradients."""
        targets = self.td_targets(batch)
        q, cache = self.online.forward(batch.states)
        rows = np.arange(len(targets))
        error = q[rows, batch.actions] - targets
        dq = np.zeros_like(q)
        dq[rows, batch.actions] = 2.0 * error / len(targets)
        return float(np.mean(error**2)), self.online.backward(cache, dq)

    def train_step(self, batch: Batch | None = None) -> float:
        if batch is None:
            batch = self.memory.sample(self.config.batch_size)
        loss, grads = self.loss_and_gradients(batch)
        self.online.apply(grads, self.config.learning_rate)
        self.train_steps += 1
        if self.train_steps % self.config.target_update == 0:
            self.sync_target()
        return loss

    def sync_target(self) -> None:
        self.target = self.online.copy()
        logger.debug("target network synced at train step %d", self.train_steps)

    def ready(self) -> bool:
        return len(self.memory) >= self.config.batch_size
