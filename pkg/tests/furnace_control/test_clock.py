"""Tests for furnace_control.lib.clock."""

from __future__ import annotations

import pytest

from furnace_control.lib.clock import NS_PER_SECOND, VirtualClock, WallClock, to_second


def test_virtual_clock_moves_only_when_told() -> None:
    clock = VirtualClock()
    assert clock.now_ns() == 0
    clock.sleep(0.005)
    assert clock.now_ns() == 5_000_000
    clock.advance(1)
    assert clock.now_ns() == 5_000_000 + NS_PER_SECOND


def test_virtual_clock_never_goes_back() -> None:
    clock = VirtualClock(10)
    clock.set_ns(20)
    with pytest.raises(ValueError, match="backwards"):
        clock.set_ns(5)


def test_wall_clock_is_monotone_enough() -> None:
    clock = WallClock()
    first = clock.now_ns()
    clock.sleep(0)
    assert clock.now_ns() >= first


def test_to_second_floors() -> None:
    assert to_second(2 * NS_PER_SECOND - 1) == 1
    assert to_second(2 * NS_PER_SECOND) == 2
