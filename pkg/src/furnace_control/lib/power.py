"""Zone power actions, the power-to-voltage conversion and update sanity checks.

A power decision is expressed per zone as one of four actions. The plant is
driven by voltages, so every decision is converted with

    V_new = ceil(V_old * sqrt(P_new / P_old))

evaluated in exact rational arithmetic so that the ceiling never depends on
floating-point rounding of the square root.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import TYPE_CHECKING, Any

from furnace_control.lib.errors import DimensionError, FurnaceError

if TYPE_CHECKING:
    from collections.abc import Sequence

logger = logging.getLogger(__name__)

NUM_ZONES = 5


class PowerAction(enum.Enum):
    INCREASE = "increase"
    DECREASE = "decrease"
    NO_CHANGE = "no-change"
    DROP_TO_LOW = "drop-to-low"


# Slot order of the unified 4-score output block of each zone.
SLOT_ORDER: tuple[PowerAction, ...] = (
    PowerAction.INCREASE,
    PowerAction.DECREASE,
    PowerAction.NO_CHANGE,
    PowerAction.DROP_TO_LOW,
)

# Ties between equal scores resolve in this order, which matches the
# lowest-index rule of the 3-action agents (Decrease, NoChange, Increase).
TIE_BREAK_ORDER: tuple[PowerAction, ...] = (
    PowerAction.DECREASE,
    PowerAction.NO_CHANGE,
    PowerAction.INCREASE,
    PowerAction.DROP_TO_LOW,
)


class UndefinedRatioError(FurnaceError):
    """Raised when a zone goes from zero power to a positive power."""

    def __init__(self, zones: Sequence[int]) -> None:
        self.zones = tuple(zones)
        listed = ", ".join(str(z + 1) for z in self.zones)
        super().__init__(f"undefined power ratio (P_old = 0) for zone(s) {listed}")


def _ceil_sqrt(value: Fraction) -> int:
    """Smallest integer k >= 0 with k * k >= value."""
    k = math.isqrt(math.floor(value))
    return k if k * k == value else k + 1


def new_voltage(v_old: float, p_old: float, p_new: float) -> int:
    """Apply the voltage conversion to one zone.

    Raises ``UndefinedRatioError`` (zone 0) when *p_old* is zero and *p_new*
    positive; a zero-to-zero transition keeps the voltage.
    """
    if not all(math.isfinite(x) for x in (v_old, p_old, p_new)):
        msg = f"non-finite voltage conversion input ({v_old}, {p_old}, {p_new})"
        raise ValueError(msg)
    if v_old <= 0 or p_old < 0 or p_new < 0:
        msg = f"voltage conversion needs V_old > 0 and P >= 0 (got {v_old}, {p_old}, {p_new})"
        raise ValueError(msg)
    if p_old == 0:
        if p_new > 0:
            raise UndefinedRatioError([0])
        return math.ceil(v_old)
    squared = Fraction(v_old) ** 2 * Fraction(p_new) / Fraction(p_old)
    return _ceil_sqrt(squared)


def power_to_voltage(
    v_old: Sequence[float], p_old: Sequence[float], p_new: Sequence[float]
) -> tuple[int, ...]:
    """Convert old voltages and old/new powers into the full new voltage vector.

    Every zone with an undefined ratio is collected before raising, so the
    caller learns all flagged zones at once.
    """
    voltages, flagged = convert_with_flags(v_old, p_old, p_new)
    if flagged:
        raise UndefinedRatioError(flagged)
    return voltages


def convert_with_flags(
    v_old: Sequence[float], p_old: Sequence[float], p_new: Sequence[float]
) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Like ``power_to_voltage`` but keeps V_old for flagged zones instead of raising."""
    if not len(v_old) == len(p_old) == len(p_new):
        msg = f"vector lengths differ: {len(v_old)}, {len(p_old)}, {len(p_new)}"
        raise DimensionError(msg)
    voltages: list[int] = []
    flagged: list[int] = []
    for zone, (v, po, pn) in enumerate(zip(v_old, p_old, p_new, strict=True)):
        try:
            voltages.append(new_voltage(v, po, pn))
        except UndefinedRatioError:
            flagged.append(zone)
            voltages.append(math.ceil(v))
    return tuple(voltages), tuple(flagged)


def apply_action(
    power: float, action: PowerAction, step: float, bounds: tuple[float, float]
) -> float:
    """Return the zone power after *action*, clamped to *bounds*."""
    low, high = bounds
    if action is PowerAction.INCREASE:
        power += step
    elif action is PowerAction.DECREASE:
        power -= step
    elif action is PowerAction.DROP_TO_LOW:
        power = low
    return min(max(power, low), high)


def apply_actions(
    powers: Sequence[float],
    actions: Sequence[PowerAction],
    step: float,
    bounds: tuple[float, float],
) -> tuple[float, ...]:
    if len(actions) != len(powers):
        msg = f"expected {len(powers)} actions, got {len(actions)}"
        raise DimensionError(msg)
    return tuple(apply_action(p, a, step, bounds) for p, a in zip(powers, actions, strict=True))


def select_action(scores: Sequence[float], active: Sequence[bool]) -> PowerAction:
    """Pick the highest-scoring active slot of one zone's 4-score block."""
    best: PowerAction | None = None
    best_score = -math.inf
    for action in TIE_BREAK_ORDER:
        slot = SLOT_ORDER.index(action)
        if active[slot] and scores[slot] > best_score:
            best, best_score = action, scores[slot]
    return best if best is not None else PowerAction.NO_CHANGE


def actions_from_scores(
    scores: Sequence[float], controlled: Sequence[int], active: Sequence[bool]
) -> tuple[PowerAction, ...]:
    """Decode a 20-score output into per-zone actions; uncontrolled zones hold."""
    if len(scores) != 4 * NUM_ZONES:
        msg = f"expected {4 * NUM_ZONES} scores, got {len(scores)}"
        raise DimensionError(msg)
    actions = []
    for zone in range(NUM_ZONES):
        if zone in controlled:
            actions.append(select_action(scores[4 * zone : 4 * zone + 4], active))
        else:
            actions.append(PowerAction.NO_CHANGE)
    return tuple(actions)


@dataclass(frozen=True)
class Provenance:
    manager_id: str
    version: str | None
    snapshot_time: int


@dataclass(frozen=True)
class PowerUpdate:
    """Five new zone voltages plus where they came from.

    ``old_voltages`` carries the voltages the decision started from so the
    sanity check can bound the per-update change.
    """

    new_voltages: tuple[float, ...]
    old_voltages: tuple[float, ...]
    provenance: Provenance
    mode: str = "normal-production"
    flagged_zones: tuple[int, ...] = ()

    def to_json(self) -> dict[str, Any]:
        return {
            "schema": 1,
            "new_voltages": list(self.new_voltages),
            "old_voltages": list(self.old_voltages),
            "manager_id": self.provenance.manager_id,
            "version": self.provenance.version,
            "snapshot_time": self.provenance.snapshot_time,
            "mode": self.mode,
            "flagged_zones": list(self.flagged_zones),
        }

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> PowerUpdate:
        version = data["version"]
        return cls(
            new_voltages=tuple(float(v) for v in data["new_voltages"]),
            old_voltages=tuple(float(v) for v in data["old_voltages"]),
            provenance=Provenance(
                manager_id=str(data["manager_id"]),
                version=None if version is None else str(version),
                snapshot_time=int(data["snapshot_time"]),
            ),
            mode=str(data["mode"]),
            flagged_zones=tuple(int(z) for z in data["flagged_zones"]),
        )


@dataclass(frozen=True)
class SanityLimits:
    min_voltage: float = 1.0
    max_voltage: float = 1000.0
    max_delta: float = 50.0


@dataclass(frozen=True)
class SanityVerdict:
    accepted: bool
    rule: str | None = None
    zone: int | None = None


def sanity_check(update: PowerUpdate, limits: SanityLimits) -> SanityVerdict:
    """Accept *update* only if every voltage is finite, bounded and within the delta."""
    for zone, (new, old) in enumerate(
        zip(update.new_voltages, update.old_voltages, strict=True)
    ):
        if not (math.isfinite(new) and math.isfinite(old)):
            verdict = SanityVerdict(accepted=False, rule="non_finite", zone=zone)
        elif not limits.min_voltage <= new <= limits.max_voltage:
            verdict = SanityVerdict(accepted=False, rule="voltage_bound", zone=zone)
        elif abs(new - old) > limits.max_delta:
            verdict = SanityVerdict(accepted=False, rule="max_delta", zone=zone)
        else:
            continue
        logger.warning(
            "power update from %s rejected: %s (zone %d)",
            update.provenance.manager_id,
            verdict.rule,
            zone + 1,
        )
        return verdict
    return SanityVerdict(accepted=True)
