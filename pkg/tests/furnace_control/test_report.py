"""Tests for furnace_control.lib.report."""

from __future__ import annotations

import math
from typing import TYPE_CHECKING

import pandas as pd
import pytest

from furnace_control.lib.report import (
    SCORES_FILE,
    SERIES_FILE,
    build_report,
    metrics_series,
    scores_frame,
    trace_series,
    write_report,
)
from furnace_control.lib.training import SAMPLE_EVERY, EpisodeMetrics, write_metrics_csv
from furnace_control.lib.twin import CRITICAL_BAND

if TYPE_CHECKING:
    from pathlib import Path

METRICS = [
    EpisodeMetrics(0, 1.5, 0.25, 0.001, 0.5, 10, (1150.0, 1160.5), (200.0, 205.0), 1.0),
    EpisodeMetrics(1, -2.0, 0.125, 0.002, 0.75, 10, (1150.0,), (200.0,), None),
]


def _trace() -> pd.DataFrame:
    return pd.DataFrame(
        {
            "step": [0, 1, 2],
            "temperature": [1100.0, 1150.0, 1200.0],
            "power": [150.0, 155.0, 155.0],
            "action": [2, 2, 1],
        }
    )


# -- series -------------------------------------------------------------------


def test_trace_series_adds_the_band() -> None:
    series = trace_series(_trace())
    assert list(series.columns) == ["step", "temperature", "power", "band_min", "band_max"]
    assert (series["band_min"] == CRITICAL_BAND[0]).all()
    assert (series["band_max"] == CRITICAL_BAND[1]).all()


def test_trace_series_custom_band() -> None:
    series = trace_series(_trace(), band=(1000.0, 1100.0))
    assert list(series["band_max"]) == [1100.0] * 3


def test_trace_series_errors() -> None:
    with pytest.raises(ValueError, match="missing column"):
        trace_series(_trace().drop(columns=["power"]))
    with pytest.raises(ValueError, match="no rows"):
        trace_series(_trace().head(0))


def test_metrics_series_is_long_form() -> None:
    series = metrics_series(METRICS)
    assert list(series["episode"]) == [0, 0, 1]
    assert list(series["step"]) == [0, SAMPLE_EVERY, 0]
    assert list(series["temperature"]) == [1150.0, 1160.5, 1150.0]
    assert list(series["power"]) == [200.0, 205.0, 200.0]
    assert set(series["band_min"]) == {CRITICAL_BAND[0]}


def test_metrics_series_needs_episodes() -> None:
    with pytest.raises(ValueError, match="no episodes"):
        metrics_series([])


def test_scores_frame() -> None:
    frame = scores_frame(METRICS)
    assert list(frame["score"]) == [1.5, -2.0]
    assert frame.loc[0, "epsilon"] == 1.0
    assert math.isnan(frame.loc[1, "epsilon"])


# -- files --------------------------------------------------------------------


def test_build_report_from_metrics(tmp_path: Path) -> None:
    path = tmp_path / "metrics.csv"
    write_metrics_csv(METRICS, path)
    frames = build_report(path)
    assert set(frames) == {SERIES_FILE, SCORES_FILE}
    assert len(frames[SERIES_FILE]) == 3
    assert list(frames[SCORES_FILE]["episode"]) == [0, 1]


def test_build_report_from_trace(tmp_path: Path) -> None:
    path = tmp_path / "trace.csv"
    _trace().to_csv(path, index=False)
    frames = build_report(path)
    assert list(frames) == [SERIES_FILE]
    assert list(frames[SERIES_FILE]["temperature"]) == [1100.0, 1150.0, 1200.0]


@pytest.mark.parametrize(
    ("content", "message"),
    [
        ("", "is empty"),
        ("step,temperature\n0,1100.0\n", "missing column"),
        ("step,temperature,power\n", "no rows"),
    ],
)
def test_build_report_rejects_bad_files(tmp_path: Path, content: str, message: str) -> None:
    path = tmp_path / "input.csv"
    path.write_text(content, encoding="utf-8")
    with pytest.raises(ValueError, match=message):
        build_report(path)


def test_write_report(tmp_path: Path) -> None:
    frames = {SERIES_FILE: trace_series(_trace())}
    (written,) = write_report(frames, tmp_path / "plots")
    assert written.name == SERIES_FILE
    restored = pd.read_csv(written)
    assert list(restored.columns) == ["step", "temperature", "power", "band_min", "band_max"]
