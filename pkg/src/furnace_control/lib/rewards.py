"""Per-step rewards on the temperature read at the last zone-3 sensor."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from furnace_control.lib.errors import ConfigError
from furnace_control.lib.twin import CRITICAL_BAND

if TYPE_CHECKING:
    from collections.abc import Sequence


class RewardFamily(enum.Enum):
    SYMMETRIC = "symmetric"
    ASYMMETRIC = "asymmetric"
    HYPERBOLIC = "hyperbolic"


@dataclass(frozen=True)
class RewardSpec:
    family: RewardFamily = RewardFamily.SYMMETRIC
    target: float = sum(CRITICAL_BAND) / 2
    half_band: float = (CRITICAL_BAND[1] - CRITICAL_BAND[0]) / 2
    over_weight: float = 2.0

    def __post_init__(self) -> None:
        if not self.half_band > 0:
            msg = f"half_band must be > 0 (got {self.half_band})"
            raise ConfigError(msg)
        if self.family is RewardFamily.ASYMMETRIC and not self.over_weight > 1:
            msg = f"over_weight must be > 1 for the asymmetric reward (got {self.over_weight})"
            raise ConfigError(msg)


def reward(spec: RewardSpec, temperature: float) -> float:
    if not math.isfinite(temperature):
        msg = f"temperature must be finite (got {temperature})"
        raise ValueError(msg)
    error = abs(temperature - spec.target) / spec.half_band
    if spec.family is RewardFamily.HYPERBOLIC:
        return 1.0 / (1.0 + error)
    if spec.family is RewardFamily.ASYMMETRIC and temperature > spec.target:
        error *= spec.over_weight
    return min(max(1.0 - error, -1.0), 1.0)


def episode_score(spec: RewardSpec, rewards: Sequence[float]) -> float:
    """Hyperbolic episodes score the mean reward (in [0, 1]); the others the sum."""
    if not rewards:
        return 0.0
    if spec.family is RewardFamily.HYPERBOLIC:
        return float(np.mean(rewards))
    return float(np.sum(rewards))
