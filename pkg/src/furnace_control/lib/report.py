"""Plot-ready series from evaluation traces and training metrics.

Every series carries the zone-3 band as constant ``band_min``/``band_max``
columns so a temperature profile can be drawn against it without extra input.
"""

from __future__ import annotations

import logging
from typing import TYPE_CHECKING

import numpy as np
import pandas as pd

from furnace_control.lib.training import SAMPLE_EVERY, read_metrics_csv
from furnace_control.lib.twin import CRITICAL_BAND

if TYPE_CHECKING:
    from collections.abc import Sequence
    from pathlib import Path

    from furnace_control.lib.training import EpisodeMetrics

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ("step", "temperature", "power")
SERIES_FILE = "series.csv"
SCORES_FILE = "scores.csv"


def _with_band(frame: pd.DataFrame, band: tuple[float, float]) -> pd.DataFrame:
    frame = frame.copy()
    frame["band_min"] = np.full(len(frame), band[0])
    frame["band_max"] = np.full(len(frame), band[1])
    return frame


def trace_series(
    frame: pd.DataFrame, band: tuple[float, float] = CRITICAL_BAND
) -> pd.DataFrame:
    """(step, temperature, power, band_min, band_max) per traced step."""
    missing = [c for c in TRACE_COLUMNS if c not in frame.columns]
    if missing:
        msg = f"trace is missing column(s) {', '.join(missing)}"
        raise ValueError(msg)
    if frame.empty:
        msg = "trace has no rows"
        raise ValueError(msg)
    return _with_band(frame[list(TRACE_COLUMNS)], band)


def metrics_series(
    metrics: Sequence[EpisodeMetrics], band: tuple[float, float] = CRITICAL_BAND
) -> pd.DataFrame:
    """The sampled temperature and power of every episode in long form."""
    if not metrics:
        msg = "metrics hold no episodes"
        raise ValueError(msg)
    rows = [
        {"episode": m.episode, "step": i * SAMPLE_EVERY, "temperature": t, "power": p}
        for m in metrics
        for i, (t, p) in enumerate(zip(m.temperatures, m.powers, strict=True))
    ]
    frame = pd.DataFrame(rows, columns=["episode", "step", "temperature", "power"])
    return _with_band(frame, band)


def scores_frame(metrics: Sequence[EpisodeMetrics]) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "episode": [m.episode for m in metrics],
            "score": [m.score for m in metrics],
            "mean_loss": [m.mean_loss for m in metrics],
            "steps": [m.steps for m in metrics],
            "epsilon": [m.epsilon for m in metrics],
        }
    )


def build_report(
    path: Path, band: tuple[float, float] = CRITICAL_BAND
) -> dict[str, pd.DataFrame]:
    """Series files for *path*, an evaluation trace or a training metrics CSV."""
    try:
        frame = pd.read_csv(path)
    except pd.errors.EmptyDataError:
        msg = f"{path} is empty"
        raise ValueError(msg) from None
    if "temperatures" in frame.columns:
        metrics = read_metrics_csv(path)
        logger.info("%s: %d episode(s) of training metrics", path, len(metrics))
        return {SERIES_FILE: metrics_series(metrics, band), SCORES_FILE: scores_frame(metrics)}
    try:
        series = trace_series(frame, band)
    except ValueError as exc:
        msg = f"{path}: {exc}"
        raise ValueError(msg) from None
    logger.info("%s: %d traced step(s)", path, len(series))
    return {SERIES_FILE: series}


def write_report(frames: dict[str, pd.DataFrame], out_dir: Path) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, frame in frames.items():
        target = out_dir / name
        frame.to_csv(target, index=False)
        written.append(target)
    return written
