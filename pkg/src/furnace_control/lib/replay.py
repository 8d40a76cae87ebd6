"""Fixed-capacity experience replay memory backed by numpy ring buffers."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from numpy.typing import NDArray


@dataclass(frozen=True)
class Batch:
    states: NDArray[np.float64]
    actions: NDArray[np.int64]
    rewards: NDArray[np.float64]
    next_states: NDArray[np.float64]
    dones: NDArray[np.float64]
    indices: NDArray[np.int64]


class ReplayMemory:
    """Transitions ``(s, a, r, s', done)``; the oldest is overwritten when full.

    ``serials`` holds the 1-based insertion number of each stored transition.
    """

    def __init__(self, capacity: int, state_size: int, rng: np.random.Generator) -> None:
        if capacity < 1:
            msg = f"capacity must be >= 1 (got {capacity})"
            raise ValueError(msg)
        self.capacity = capacity
        self.rng = rng
        self.states = np.zeros((capacity, state_size))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, state_size))
        self.dones = np.zeros(capacity)
        self.serials = np.zeros(capacity, dtype=np.int64)
        self.total = 0

    def __len__(self) -> int:
        return min(self.total, self.capacity)

    def push(
        self,
        state: NDArray[np.float64],
        action: int,
        reward: float,
        next_state: NDArray[np.float64],
        done: bool,
    ) -> None:
        slot = self.total % self.capacity
        self.states[slot] = state
        self.actions[slot] = action
        self.rewards[slot] = reward
        self.next_states[slot] = next_state
        self.dones[slot] = float(done)
        self.total += 1
        self.serials[slot] = self.total

    def sample(self, batch_size: int) -> Batch:
        """Uniform sample without replacement inside the batch."""
        size = len(self)
        if batch_size > size:
            msg = f"cannot sample {batch_size} transitions from {size}"
            raise ValueError(msg)
        idx = self.rng.choice(size, size=batch_size, replace=False)
        return Batch(
            self.states[idx],
            self.actions[idx],
            self.rewards[idx],
            self.next_states[idx],
            self.dones[idx],
            idx,
        )

    def oldest_serial(self) -> int:
        return int(self.serials[: len(self)].min()) if len(self) else 0
