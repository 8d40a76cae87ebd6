"""Tests for furnace_control.lib.power."""

from __future__ import annotations

import math
from decimal import ROUND_CEILING, Decimal, localcontext
from fractions import Fraction

import numpy as np
import pytest

from furnace_control.lib.errors import DimensionError
from furnace_control.lib.power import (
    SLOT_ORDER,
    PowerAction,
    PowerUpdate,
    Provenance,
    SanityLimits,
    UndefinedRatioError,
    actions_from_scores,
    apply_action,
    apply_actions,
    convert_with_flags,
    new_voltage,
    power_to_voltage,
    sanity_check,
    select_action,
)

ALL_ACTIVE = (True, True, True, True)


def _reference(v_old: float, p_old: float, p_new: float) -> int:
    with localcontext() as ctx:
        ctx.prec = 80
        exact = Decimal(v_old) * (Decimal(p_new) / Decimal(p_old)).sqrt()
        return int(exact.to_integral_value(rounding=ROUND_CEILING))


# -- new_voltage --------------------------------------------------------------


def test_new_voltage_matches_high_precision_reference() -> None:
    rng = np.random.default_rng(1)
    v = rng.uniform(50, 500, 10_000)
    po = rng.uniform(50, 600, 10_000)
    pn = rng.uniform(50, 600, 10_000)
    for a, b, c in zip(v, po, pn, strict=True):
        assert new_voltage(float(a), float(b), float(c)) == _reference(float(a), float(b), float(c))


def test_new_voltage_is_the_exact_ceiling() -> None:
    rng = np.random.default_rng(2)
    for _ in range(1000):
        v, po, pn = (float(x) for x in rng.uniform(1, 600, 3))
        k = new_voltage(v, po, pn)
        squared = Fraction(v) ** 2 * Fraction(pn) / Fraction(po)
        assert (k - 1) ** 2 < squared <= k**2


def test_new_voltage_is_non_decreasing_in_new_power() -> None:
    rng = np.random.default_rng(3)
    for _ in range(200):
        v, po = float(rng.uniform(50, 500)), float(rng.uniform(50, 600))
        powers = np.sort(rng.uniform(0, 600, 50))
        voltages = [new_voltage(v, po, float(p)) for p in powers]
        assert voltages == sorted(voltages)


@pytest.mark.parametrize("v_old", [50, 123, 400, 500])
def test_identity_keeps_voltage(v_old: int) -> None:
    assert new_voltage(v_old, 321.5, 321.5) == v_old


def test_quadrupled_power_doubles_voltage() -> None:
    assert new_voltage(100, 100, 400) == 200


def test_perfect_square_is_not_rounded_up() -> None:
    assert new_voltage(300, 400, 100) == 150


def test_zero_to_positive_power_is_undefined() -> None:
    with pytest.raises(UndefinedRatioError) as info:
        new_voltage(300, 0, 50)
    assert info.value.zones == (0,)


def test_zero_to_zero_keeps_voltage() -> None:
    assert new_voltage(300, 0, 0) == 300


@pytest.mark.parametrize(
    ("v_old", "p_old", "p_new"),
    [(0, 100, 100), (-1, 100, 100), (100, -5, 100), (math.nan, 100, 100), (100, 100, math.inf)],
)
def test_invalid_inputs_raise(v_old: float, p_old: float, p_new: float) -> None:
    with pytest.raises(ValueError, match="voltage conversion"):
        new_voltage(v_old, p_old, p_new)


# -- vector conversion --------------------------------------------------------


def test_power_to_voltage_flags_every_zero_zone() -> None:
    with pytest.raises(UndefinedRatioError) as info:
        power_to_voltage([300, 300, 300], [0, 100, 0], [10, 100, 10])
    assert info.value.zones == (0, 2)
    assert "zone(s) 1, 3" in str(info.value)


def test_convert_with_flags_keeps_flagged_voltages() -> None:
    voltages, flagged = convert_with_flags([300, 200.2], [0, 100], [10, 100])
    assert voltages == (300, 201)
    assert flagged == (0,)


def test_convert_with_flags_rejects_length_mismatch() -> None:
    with pytest.raises(DimensionError, match="lengths differ"):
        convert_with_flags([1, 2], [1], [1, 2])


# -- actions ------------------------------------------------------------------


@pytest.mark.parametrize(
    ("action", "expected"),
    [
        (PowerAction.INCREASE, 105.0),
        (PowerAction.DECREASE, 95.0),
        (PowerAction.NO_CHANGE, 100.0),
        (PowerAction.DROP_TO_LOW, 10.0),
    ],
)
def test_apply_action(action: PowerAction, expected: float) -> None:
    assert apply_action(100.0, action, 5.0, (10.0, 600.0)) == expected


def test_apply_action_clamps_to_bounds() -> None:
    assert apply_action(598.0, PowerAction.INCREASE, 5.0, (10.0, 600.0)) == 600.0
    assert apply_action(12.0, PowerAction.DECREASE, 5.0, (10.0, 600.0)) == 10.0


def test_apply_actions_needs_one_action_per_zone() -> None:
    with pytest.raises(DimensionError):
        apply_actions([1.0, 2.0], [PowerAction.NO_CHANGE], 5.0, (0.0, 10.0))


def test_select_action_picks_highest_active_slot() -> None:
    scores = [0.1, 0.9, 0.3, 5.0]
    assert select_action(scores, (True, True, True, False)) is PowerAction.DECREASE
    assert select_action(scores, ALL_ACTIVE) is PowerAction.DROP_TO_LOW


def test_select_action_tie_prefers_decrease_then_no_change() -> None:
    assert select_action([1.0, 1.0, 1.0, 1.0], ALL_ACTIVE) is PowerAction.DECREASE
    assert select_action([1.0, 0.0, 1.0, 1.0], ALL_ACTIVE) is PowerAction.NO_CHANGE
    assert select_action([1.0, 0.0, 0.0, 1.0], ALL_ACTIVE) is PowerAction.INCREASE


def test_select_action_with_no_active_slot_holds() -> None:
    assert select_action([1, 2, 3, 4], (False,) * 4) is PowerAction.NO_CHANGE


def test_actions_from_scores_holds_uncontrolled_zones() -> None:
    scores = np.zeros(20)
    scores[4 * 2 + SLOT_ORDER.index(PowerAction.INCREASE)] = 1.0
    scores[0] = 9.0
    actions = actions_from_scores(scores, controlled=(2,), active=ALL_ACTIVE)
    assert actions[2] is PowerAction.INCREASE
    assert all(a is PowerAction.NO_CHANGE for i, a in enumerate(actions) if i != 2)


def test_actions_from_scores_rejects_wrong_width() -> None:
    with pytest.raises(DimensionError, match="expected 20 scores"):
        actions_from_scores([0.0] * 19, (0,), ALL_ACTIVE)


# -- sanity check -------------------------------------------------------------


def _update(new: tuple[float, ...], old: tuple[float, ...] = (300.0,) * 5) -> PowerUpdate:
    return PowerUpdate(new, old, Provenance("drl", "abc", 12))


def test_sanity_accepts_small_changes() -> None:
    assert sanity_check(_update((310.0,) * 5), SanityLimits()).accepted


@pytest.mark.parametrize(
    ("voltages", "rule", "zone"),
    [
        ((300.0, math.nan, 300.0, 300.0, 300.0), "non_finite", 1),
        ((300.0, 300.0, 300.0, 300.0, 0.5), "voltage_bound", 4),
        ((300.0, 300.0, 351.0, 300.0, 300.0), "max_delta", 2),
    ],
)
def test_sanity_rejects(voltages: tuple[float, ...], rule: str, zone: int) -> None:
    verdict = sanity_check(_update(voltages), SanityLimits())
    assert not verdict.accepted
    assert verdict.rule == rule
    assert verdict.zone == zone


def test_power_update_json_round_trip() -> None:
    update = PowerUpdate(
        (301.0, 302.0, 303.0, 304.0, 305.0),
        (300.0,) * 5,
        Provenance("hold", None, 7),
        flagged_zones=(3,),
    )
    assert PowerUpdate.from_json(update.to_json()) == update


def _fuzzed_voltage(rng: np.random.Generator, old: float, limits: SanityLimits) -> float:
    kind = int(rng.integers(9))
    up = math.inf if rng.random() < 0.5 else -math.inf
    match kind:
        case 0:
            return float(rng.uniform(limits.min_voltage, limits.max_voltage))
        case 1:
            return math.nan
        case 2:
            return up
        case 3:
            return math.nextafter(limits.min_voltage, -math.inf)
        case 4:
            return math.nextafter(limits.max_voltage, math.inf)
        case 5:
            return math.nextafter(old + limits.max_delta, up)
        case 6:
            return math.nextafter(old - limits.max_delta, up)
        case 7:
            return old + limits.max_delta * (1 if up > 0 else -1)
        case _:
            return old + float(rng.uniform(-limits.max_delta, limits.max_delta)) / 2


def _violates(new: float, old: float, limits: SanityLimits) -> bool:
    if not (math.isfinite(new) and math.isfinite(old)):
        return True
    if not limits.min_voltage <= new <= limits.max_voltage:
        return True
    return abs(Fraction(new) - Fraction(old)) > Fraction(limits.max_delta)


def test_sanity_check_never_passes_a_violation() -> None:
    rng = np.random.default_rng(11)
    for _ in range(5000):
        limits = SanityLimits(max_delta=float(rng.choice([10.0, 50.0, 123.25])))
        old = tuple(
            math.nan if rng.random() < 0.01 else float(rng.uniform(300, 700)) for _ in range(5)
        )
        new = tuple(_fuzzed_voltage(rng, o, limits) for o in old)
        violated = any(_violates(n, o, limits) for n, o in zip(new, old, strict=True))
        verdict = sanity_check(_update(new, old), limits)
        assert verdict.accepted is not violated
