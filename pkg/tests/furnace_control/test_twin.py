"""Tests for furnace_control.lib.twin."""

from __future__ import annotations

from dataclasses import replace
from typing import TYPE_CHECKING

import numpy as np
import pandas as pd
import pytest

from furnace_control.lib.errors import ConfigError
from furnace_control.lib.power import NUM_ZONES, PowerAction, new_voltage
from furnace_control.lib.twin import (
    CRITICAL_BAND,
    Direction,
    FurnaceTwin,
    Mode,
    SensorMode,
    TemperatureBand,
    TrajectoryAborted,
    TwinConfig,
    build_coil_layout,
    default_sensor_positions,
    export_trajectory_csv,
    feed_rod,
    hold,
    make_rod,
    zebra_init,
    zone_sensor_slice,
)

if TYPE_CHECKING:
    from pathlib import Path

SPAN = (70.0, 80.0)


def _all(action: PowerAction) -> tuple[PowerAction, ...]:
    return (action,) * NUM_ZONES


# -- geometry -----------------------------------------------------------------


def test_layout_has_21_coils_in_22_intervals() -> None:
    coils = build_coil_layout()
    assert len(coils) == 22
    assert len({c.number for c in coils}) == 21
    assert [len({c.number for c in coils if c.zone == z}) for z in range(5)] == [4, 4, 4, 4, 5]


def test_default_sensor_positions() -> None:
    forge, virtual = default_sensor_positions(build_coil_layout())
    assert len(forge) == 18
    assert len(virtual) == 15
    assert list(forge) == sorted(forge)
    zone3 = [c for c in build_coil_layout() if c.zone == 2]
    assert virtual[0] == zone3[0].start
    assert virtual[-1] == zone3[-1].end


def test_forge_sensors_sit_between_coils() -> None:
    coils = build_coil_layout()
    forge, _ = default_sensor_positions(coils)
    for position in forge:
        assert not any(c.start <= position < c.end for c in coils)


def test_zone_sensor_slice() -> None:
    assert zone_sensor_slice(0) == slice(0, 2)
    assert zone_sensor_slice(2) == slice(6, 10)
    assert zone_sensor_slice(4) == slice(14, 18)


# -- configuration validation -------------------------------------------------


def test_default_config_is_valid() -> None:
    config = TwinConfig()
    assert len(config.sensor_positions_forge) == 18
    assert config.furnace_start == 60.0


def test_zone3_band_is_fixed() -> None:
    bands = list(TwinConfig().zone_temp_bands)
    bands[2] = TemperatureBand(1100.0, 1200.0, 1300.0)
    with pytest.raises(ConfigError, match="zone 3 band"):
        TwinConfig(zone_temp_bands=tuple(bands))


def test_warmholding_needs_span() -> None:
    with pytest.raises(ConfigError, match="warmhold_span"):
        TwinConfig(mode=Mode.WARMHOLDING)


def test_initial_powers_inside_bounds() -> None:
    with pytest.raises(ConfigError, match="outside power_bounds"):
        TwinConfig(initial_powers=(700.0, 0.0, 0.0, 0.0, 0.0), power_bounds=(0.0, 600.0))


def test_unstable_cooling_rejected() -> None:
    with pytest.raises(ConfigError, match="cooling_rate"):
        TwinConfig(cooling_rate=1.5)


def test_virtual_positions_only_for_zone3() -> None:
    config = TwinConfig(sensor_mode=SensorMode.VIRTUAL)
    assert len(config.zone_positions(2)) == 15
    with pytest.raises(ConfigError, match="zone 3"):
        config.zone_positions(1)


def test_rod_outside_track_rejected() -> None:
    config = TwinConfig()
    rod = make_rod("r", config.furnace_end + 1.0, 5.0, config)
    with pytest.raises(ConfigError, match="outside the track"):
        FurnaceTwin(config).init([rod])


def test_overlapping_rods_rejected() -> None:
    config = TwinConfig()
    rods = [make_rod("a", 70.0, 5.0, config), make_rod("b", 68.0, 5.0, config)]
    with pytest.raises(ConfigError, match="overlap"):
        FurnaceTwin(config).init(rods)


# -- stepping -----------------------------------------------------------------


def test_step_does_not_mutate_input() -> None:
    config = TwinConfig()
    twin = FurnaceTwin(config)
    state = twin.init([feed_rod(config)])
    before = state.rods[0].segment_temps.copy()
    twin.step(state, _all(PowerAction.INCREASE))
    assert np.array_equal(state.rods[0].segment_temps, before)
    assert state.clock == 0


def test_step_is_deterministic() -> None:
    config = TwinConfig()
    twin = FurnaceTwin(config)
    rng = np.random.default_rng(3)
    for _ in range(200):
        start = twin.init([feed_rod(config, float(rng.uniform(25, 1200)))])
        actions = tuple(PowerAction(a) for a in rng.choice([a.value for a in PowerAction], 5))
        a_state, a_read = twin.step(start, actions)
        b_state, b_read = twin.step(start, actions)
        assert np.array_equal(a_read.temps, b_read.temps)
        assert a_state.zone_powers == b_state.zone_powers
        assert a_state.zone_voltages == b_state.zone_voltages


def test_cooling_fixed_point_at_ambient() -> None:
    config = TwinConfig(initial_powers=(0.0,) * 5, power_bounds=(0.0, 600.0))
    twin = FurnaceTwin(config)
    state = twin.init([feed_rod(config)])
    for _ in range(200):
        state, readout = twin.step(state)
        assert np.allclose(state.rods[0].segment_temps, config.ambient_temp)
    assert np.allclose(readout.temps, config.ambient_temp)


def test_hot_rod_cools_strictly_toward_ambient() -> None:
    config = TwinConfig(initial_powers=(0.0,) * 5, power_bounds=(0.0, 600.0))
    twin = FurnaceTwin(config)
    bar = feed_rod(config)
    rng = np.random.default_rng(9)
    for _ in range(200):
        temps = rng.uniform(config.ambient_temp + 1.0, 1300.0, bar.segment_temps.size)
        state = twin.init([replace(bar, segment_temps=temps)])
        distance = np.abs(temps - config.ambient_temp)
        for _ in range(20):
            state, _ = twin.step(state)
            current = np.abs(state.rods[0].segment_temps - config.ambient_temp)
            assert np.all(current < distance)
            distance = current


def test_sensor_at_segment_centre_reads_that_segment() -> None:
    rng = np.random.default_rng(10)
    base = TwinConfig()
    for _ in range(200):
        length = float(rng.uniform(1.0, 6.0))
        front = float(rng.uniform(65.0, base.furnace_end))
        rod = make_rod("r", front, length, base)
        temps = rng.uniform(25.0, 1300.0, rod.segment_temps.size)
        picked = rng.choice(temps.size, size=18, replace=False)
        centres = tuple(front - (i + 0.5) * base.segment_length for i in picked)
        config = TwinConfig(sensor_positions_forge=centres)
        twin = FurnaceTwin(config)
        state = twin.init([replace(rod, segment_temps=temps)])
        assert np.array_equal(twin.read(state).temps, temps[picked])


def test_zero_power_never_heats() -> None:
    config = TwinConfig(initial_powers=(0.0,) * 5, power_bounds=(0.0, 600.0))
    twin = FurnaceTwin(config)
    state = twin.init([feed_rod(config, 900.0)])
    initial = state.rods[0].segment_temps.copy()
    for _ in range(50):
        state, _ = twin.step(state)
    assert np.all(state.rods[0].segment_temps <= initial)


def test_powers_stay_clamped() -> None:
    config = TwinConfig()
    twin = FurnaceTwin(config)
    state = twin.init([feed_rod(config)])
    rng = np.random.default_rng(4)
    low, high = config.power_bounds
    for _ in range(300):
        choice = PowerAction.INCREASE if rng.random() < 0.7 else PowerAction.DECREASE
        state, _ = twin.step(state, _all(choice))
        assert all(low <= p <= high for p in state.zone_powers)


def test_voltage_follows_power_change() -> None:
    config = TwinConfig()
    twin = FurnaceTwin(config)
    state = twin.init([feed_rod(config)])
    state, _ = twin.step(state, _all(PowerAction.INCREASE))
    expected = new_voltage(config.initial_voltages[0], config.initial_powers[0], 305.0)
    assert state.zone_powers[0] == 305.0
    assert state.zone_voltages[0] == expected


def test_heating_is_monotone_in_power() -> None:
    rng = np.random.default_rng(5)
    for _ in range(200):
        low_power = rng.uniform(10, 300, 5)
        high_power = low_power + rng.uniform(0, 300, 5)
        temps = []
        for powers in (low_power, high_power):
            config = TwinConfig(initial_powers=tuple(float(p) for p in powers))
            twin = FurnaceTwin(config)
            state = twin.init([feed_rod(config, 500.0)])
            state, _ = twin.step(state)
            temps.append(state.rods[0].segment_temps)
        assert np.all(temps[1] >= temps[0])


def test_normal_production_moves_forward() -> None:
    config = TwinConfig()
    twin = FurnaceTwin(config)
    state = twin.init([make_rod("r", 70.0, 5.0, config)])
    state, _ = twin.step(state)
    assert state.rods[0].front_position == pytest.approx(70.0 + config.rod_velocity)


def test_warmholding_stays_inside_span() -> None:
    rng = np.random.default_rng(6)
    for _ in range(200):
        velocity = float(rng.uniform(0.01, 2.0))
        config = TwinConfig(mode=Mode.WARMHOLDING, warmhold_span=SPAN, rod_velocity=velocity)
        twin = FurnaceTwin(config)
        front = float(rng.uniform(*SPAN))
        state = twin.init([make_rod("r", front, 5.0, config)])
        for _ in range(20):
            state, _ = twin.step(state)
            assert SPAN[0] <= state.rods[0].front_position <= SPAN[1]


def test_warmholding_reverses_at_the_span_end() -> None:
    config = TwinConfig(mode=Mode.WARMHOLDING, warmhold_span=SPAN, rod_velocity=1.0)
    twin = FurnaceTwin(config)
    state = twin.init([make_rod("r", 79.5, 5.0, config)])
    state, _ = twin.step(state)
    assert state.rods[0].front_position == pytest.approx(79.5)
    assert state.rods[0].direction is Direction.BACKWARD


def test_zero_warmhold_velocity_parks_the_rod() -> None:
    config = TwinConfig(
        mode=Mode.WARMHOLDING, warmhold_span=SPAN, rod_velocity=0.5, warmhold_velocity=0.0
    )
    twin = FurnaceTwin(config)
    state = twin.init([make_rod("r", 75.0, 5.0, config)])
    for _ in range(10):
        state, _ = twin.step(state)
        assert state.rods[0].front_position == 75.0


def test_fed_bar_leaves_the_first_forge_sensor_at_ambient() -> None:
    config = TwinConfig()
    twin = FurnaceTwin(config)
    state = twin.init([feed_rod(config, 500.0)])
    first = config.sensor_positions_forge[0]
    steps = int(first / config.rod_velocity) + 100
    readings = []
    for _ in range(steps):
        state, readout = twin.step(state)
        readings.append(float(readout.temps[0]))
    assert readings[0] > config.ambient_temp
    assert readings[-1] == config.ambient_temp
    uncovered = readings.index(config.ambient_temp) + 1
    assert uncovered * config.rod_velocity == pytest.approx(first, abs=2 * config.rod_velocity)


def test_switch_mode_clamps_into_span() -> None:
    config = TwinConfig(warmhold_span=SPAN)
    twin = FurnaceTwin(config)
    state = twin.init([make_rod("r", 84.0, 5.0, config)])
    held = twin.switch_mode(state, Mode.WARMHOLDING)
    assert held.mode is Mode.WARMHOLDING
    assert held.rods[0].front_position == SPAN[1]
    backing = replace(held, rods=(replace(held.rods[0], direction=Direction.BACKWARD),))
    resumed = twin.switch_mode(backing, Mode.NORMAL_PRODUCTION)
    assert resumed.rods[0].direction is Direction.FORWARD


def test_disturbance_scales_heating_only_for_one_step() -> None:
    config = TwinConfig()
    twin = FurnaceTwin(config)
    state = twin.init([feed_rod(config, 500.0)])
    nominal, _ = twin.step(state)
    boosted, _ = twin.step(state, disturbance=(1.05,) * 5)
    assert np.all(boosted.rods[0].segment_temps >= nominal.rods[0].segment_temps)
    assert boosted.zone_powers == nominal.zone_powers


# -- zebra pattern ------------------------------------------------------------


def test_zebra_init_alternates() -> None:
    config = TwinConfig()
    rod = zebra_init(config, make_rod("r", 75.0, 2.0, config), 1150.0, 900.0, 0.5)
    temps = rod.segment_temps
    per_band = round(0.5 / config.segment_length)
    assert np.all(temps[:per_band] == 1150.0)
    assert np.all(temps[per_band : 2 * per_band] == 900.0)


def test_zebra_band_narrower_than_segment_rejected() -> None:
    config = TwinConfig()
    with pytest.raises(ConfigError, match="narrower"):
        zebra_init(config, make_rod("r", 75.0, 2.0, config), 1150.0, 900.0, 0.01)


def test_zebra_amplitude_under_uniform_power_follows_scalar_reference() -> None:
    rng = np.random.default_rng(7)
    gapless = build_coil_layout(gap=0.0)
    for _ in range(200):
        power = float(rng.uniform(10, 600))
        config = TwinConfig(
            coil_layout=gapless,
            mode=Mode.WARMHOLDING,
            warmhold_span=SPAN,
            initial_powers=(power,) * 5,
            rod_velocity=float(rng.uniform(0.01, 0.5)),
        )
        twin = FurnaceTwin(config)
        hot = float(rng.uniform(1000, 1300))
        cold = float(rng.uniform(30, hot))
        front = float(rng.uniform(*SPAN))
        rod = zebra_init(config, make_rod("r", front, 4.0, config), hot, cold, 0.5)
        state = twin.init([rod])
        amplitude = float(np.ptp(state.rods[0].segment_temps))
        hot_ref, cold_ref = hot, cold
        for _ in range(10):
            state, _ = twin.step(state)
            hot_ref += config.heating_gain * power * config.step_seconds
            cold_ref += config.heating_gain * power * config.step_seconds
            temps = state.rods[0].segment_temps
            assert temps.max() == pytest.approx(hot_ref, rel=1e-12)
            assert temps.min() == pytest.approx(cold_ref, rel=1e-12)
            current = float(np.ptp(temps))
            assert current <= amplitude + 1e-9
            amplitude = current


def test_zebra_amplitude_decays_like_newton_cooling_without_power() -> None:
    rng = np.random.default_rng(8)
    for _ in range(200):
        config = TwinConfig(
            mode=Mode.WARMHOLDING,
            warmhold_span=SPAN,
            initial_powers=(0.0,) * 5,
            power_bounds=(0.0, 600.0),
            rod_velocity=float(rng.uniform(0.01, 0.5)),
        )
        twin = FurnaceTwin(config)
        hot = float(rng.uniform(1000, 1300))
        cold = float(rng.uniform(30, hot))
        rod = zebra_init(config, make_rod("r", 75.0, 4.0, config), hot, cold, 0.5)
        state = twin.init([rod])
        reference = hot - cold
        for _ in range(10):
            state, _ = twin.step(state)
            reference *= 1 - config.cooling_rate * config.step_seconds
            current = float(np.ptp(state.rods[0].segment_temps))
            assert current == pytest.approx(reference, rel=1e-9, abs=1e-9)


def test_zebra_amplitude_grows_when_cold_bands_sit_in_coil_gaps() -> None:
    config = TwinConfig(mode=Mode.WARMHOLDING, warmhold_span=SPAN, initial_powers=(100.0,) * 5)
    twin = FurnaceTwin(config)
    rod = zebra_init(config, make_rod("r", 75.0, 4.0, config), 1200.0, 900.0, 0.5)
    state, _ = twin.step(twin.init([rod]))
    # hot bands gain 1 C under their coils while a cold band parked in a gap cools
    assert float(np.ptp(state.rods[0].segment_temps)) == pytest.approx(305.375)


# -- run and export -----------------------------------------------------------


def test_run_returns_one_entry_per_step() -> None:
    config = TwinConfig()
    twin = FurnaceTwin(config)
    trajectory = twin.run(twin.init([feed_rod(config)]), hold, 100)
    assert len(trajectory) == 100
    assert trajectory[-1][0].clock == 100


def test_run_rejects_zero_steps() -> None:
    config = TwinConfig()
    twin = FurnaceTwin(config)
    with pytest.raises(ConfigError, match="steps"):
        twin.run(twin.init([feed_rod(config)]), hold, 0)


def test_failing_controller_keeps_partial_trajectory() -> None:
    config = TwinConfig()
    twin = FurnaceTwin(config)
    calls = 0

    def flaky(_state: object, _readout: object) -> None:
        nonlocal calls
        calls += 1
        if calls == 4:
            msg = "controller lost"
            raise RuntimeError(msg)

    with pytest.raises(TrajectoryAborted) as info:
        twin.run(twin.init([feed_rod(config)]), flaky, 10)
    assert len(info.value.partial) == 3


def test_export_trajectory_csv(tmp_path: Path) -> None:
    config = TwinConfig()
    twin = FurnaceTwin(config)
    trajectory = twin.run(twin.init([feed_rod(config)]), hold, 5)
    path = tmp_path / "trajectory.csv"
    export_trajectory_csv(trajectory, path)
    frame = pd.read_csv(path)
    assert len(frame) == 5
    assert list(frame.columns[:3]) == ["step", "rod_front_m", "T_sensor_1"]
    assert "T_sensor_18" in frame.columns
    assert "P_z5" in frame.columns


def test_critical_band_constant() -> None:
    assert CRITICAL_BAND == (1140.0, 1275.0)
