"""Proximal policy optimization with separate actor and critic networks.

The actor emits raw logits; a normalized exponential is applied only when an
action is sampled or a probability is needed. Each update trains on the
whole rollout once per epoch, with advantages, value targets and old-policy
probabilities frozen for the duration of the update.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from furnace_control.lib.errors import DimensionError
from furnace_control.lib.mlp import Mlp

if TYPE_CHECKING:
    from numpy.typing import NDArray

    from furnace_control.lib.hyperparams import PpoConfig
    from furnace_control.lib.mlp import Gradients

N_ACTIONS = 3
PROB_FLOOR = 1e-8


def log_softmax(logits: NDArray[np.float64]) -> NDArray[np.float64]:
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def softmax(logits: NDArray[np.float64]) -> NDArray[np.float64]:
    return np.exp(log_softmax(logits))


def gae(
    rewards: NDArray[np.float64],
    values: NDArray[np.float64],
    masks: NDArray[np.float64],
    gamma: float,
    lam: float,
) -> NDArray[np.float64]:
    """Generalized advantage estimates by the backward recursion.

    ``values`` holds one more entry than ``rewards``: the value of the state
    reached after the last step. ``masks`` is 0 where an episode ended.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    masks = np.asarray(masks, dtype=np.float64)
    if not len(rewards) == len(masks) == len(values) - 1:
        msg = (
            f"lengths disagree: {len(rewards)} rewards, {len(masks)} masks, "
            f"{len(values)} values (expected one more value than rewards)"
        )
        raise DimensionError(msg)
    advantages = np.zeros_like(rewards)
    running = 0.0
    for t in reversed(range(len(rewards))):
        delta = rewards[t] + gamma * values[t + 1] * masks[t] - values[t]
        running = delta + gamma * lam * masks[t] * running
        advantages[t] = running
    return advantages


def clipped_surrogate(
    ratio: NDArray[np.float64], advantages: NDArray[np.float64], clip_epsilon: float
) -> NDArray[np.float64]:
    """Elementwise ``min(r * A, clip(r, 1 - eps, 1 + eps) * A)``."""
    clipped = np.clip(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon)
    return np.minimum(ratio * advantages, clipped * advantages)


@dataclass
class Rollout:
    states: list[NDArray[np.float64]] = field(default_factory=list)
    actions: list[int] = field(default_factory=list)
    log_probs: list[float] = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)
    dones: list[bool] = field(default_factory=list)
    last_state: NDArray[np.float64] | None = None

    def append(
        self,
        state: NDArray[np.float64],
        action: int,
        log_prob: float,
        reward: float,
        done: bool,
        next_state: NDArray[np.float64],
    ) -> None:
        self.states.append(state)
        self.actions.append(action)
        self.log_probs.append(log_prob)
        self.rewards.append(reward)
        self.dones.append(done)
        self.last_state = next_state

    def __len__(self) -> int:
        return len(self.actions)

    def clear(self) -> None:
        self.states.clear()
        self.actions.clear()
        self.log_probs.clear()
        self.rewards.clear()
        self.dones.clear()
        self.last_state = None


@dataclass(frozen=True)
class PpoLosses:
    policy_loss: float
    value_loss: float
    entropy: float


class PpoAgent:
    def __init__(
        self,
        state_size: int,
        config: PpoConfig,
        rng: np.random.Generator,
        n_actions: int = N_ACTIONS,
    ) -> None:
        self.config = config
        self.rng = rng
        self.n_actions = n_actions
        self.actor = Mlp.create(
            (state_size, config.actor_hidden1, config.actor_hidden2, n_actions), rng
        )
        self.critic = Mlp.create((state_size, config.critic_hidden1, config.critic_hidden2, 1), rng)
        self.rollout = Rollout()

    @property
    def state_size(self) -> int:
        return self.actor.input_size

    def probabilities(self, state: NDArray[np.float64]) -> NDArray[np.float64]:
        return softmax(self.actor(state))

    def act(self, state: NDArray[np.float64]) -> tuple[int, float]:
        """Sample an action; return it with its log-probability."""
        log_p = log_softmax(self.actor(state))
        action = int(self.rng.choice(self.n_actions, p=np.exp(log_p)))
        return action, float(log_p[action])

    def greedy(self, state: NDArray[np.float64]) -> int:
        return int(np.argmax(self.actor(state)))

    def values(self, states: NDArray[np.float64]) -> NDArray[np.float64]:
        return self.critic(np.atleast_2d(states))[:, 0]

    def advantages(self, rollout: Rollout) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """Advantages and value targets for *rollout* under the current critic."""
        if rollout.last_state is None:
            msg = "rollout is empty"
            raise DimensionError(msg)
        states = np.asarray(rollout.states)
        values = np.append(self.values(states), self.values(rollout.last_state)[0])
        masks = 1.0 - np.asarray(rollout.dones, dtype=np.float64)
        adv = gae(
            np.asarray(rollout.rewards),
            values,
            masks,
            self.config.gamma,
            self.config.gae_lambda,
        )
        return adv, adv + values[:-1]

    def actor_objective(
        self,
        states: NDArray[np.float64],
        actions: NDArray[np.int64],
        old_log_probs: NDArray[np.float64],
        advantages: NDArray[np.float64],
    ) -> tuple[float, float, Gradients]:
        """Clipped surrogate, mean entropy, and gradients of ``-(L_clip + c2 * S)``."""
        logits, cache = self.actor.forward(states)
        log_p = log_softmax(logits)
        p = np.exp(log_p)
        rows = np.arange(len(actions))
        old = np.maximum(np.exp(old_log_probs), PROB_FLOOR)
        ratio = p[rows, actions] / old
        clipped = np.clip(ratio, 1.0 - self.config.clip_epsilon, 1.0 + self.config.clip_epsilon)
        unclipped_term = ratio * advantages
        # The gradient flows through the ratio only where min() picks it.
        use = unclipped_term <= clipped * advantages
        l_clip = float(np.mean(np.minimum(unclipped_term, clipped * advantages)))
        sample_entropy = -np.sum(p * log_p, axis=1)
        entropy = float(np.mean(sample_entropy))

        batch = len(actions)
        onehot = np.zeros_like(p)
        onehot[rows, actions] = 1.0
        d_clip = (use * advantages * ratio)[:, None] * (onehot - p)
        d_entropy = -p * (log_p + sample_entropy[:, None])
        d_objective = (d_clip + self.config.c2 * d_entropy) / batch
        return l_clip, entropy, self.actor.backward(cache, -d_objective)

    def critic_loss(
        self, states: NDArray[np.float64], targets: NDArray[np.float64]
    ) -> tuple[float, Gradients]:
        """Mean squared value error and gradients of ``c1 * MSE``."""
        v, cache = self.critic.forward(states)
        error = v[:, 0] - targets
        dv = (self.config.c1 * 2.0 * error / len(targets))[:, None]
        return float(np.mean(error**2)), self.critic.backward(cache, dv)

    def update(self, rollout: Rollout | None = None) -> PpoLosses:
        rollout = self.rollout if rollout is None else rollout
        advantages, targets = self.advantages(rollout)
        states = np.asarray(rollout.states)
        actions = np.asarray(rollout.actions, dtype=np.int64)
        old_log_probs = np.asarray(rollout.log_probs)
        policy_losses, value_losses, entropies = [], [], []
        for _ in range(self.config.epochs):
            l_clip, entropy, actor_grads = self.actor_objective(
                states, actions, old_log_probs, advantages
            )
            value_loss, critic_grads = self.critic_loss(states, targets)
            self.actor.apply(actor_grads, self.config.learning_rate)
            self.critic.apply(critic_grads, self.config.learning_rate)
            policy_losses.append(-l_clip)
            value_losses.append(value_loss)
            entropies.append(entropy)
        rollout.clear()
        return PpoLosses(
            float(np.mean(policy_losses)), float(np.mean(value_losses)), float(np.mean(entropies))
        )
