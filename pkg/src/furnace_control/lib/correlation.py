"""Pearson correlation of hyperparameters against job scores, and per-value mean tables."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any

import pandas as pd
from pandas.api.types import is_bool_dtype, is_numeric_dtype

from furnace_control.lib.grid import SCORE_COLUMNS
from furnace_control.lib.rewards import RewardFamily

if TYPE_CHECKING:
    from collections.abc import Sequence
    from pathlib import Path

logger = logging.getLogger(__name__)

MIN_JOBS = 3
SIGNIFICANCE = 0.15
COEFFICIENTS_FILE = "correlations.csv"

# Job descriptors that are not tuned hyperparameters.
_NOT_HYPERPARAMETERS = {
    "job",
    "status",
    "episodes_run",
    "algorithm",
    "reward",
    "scenario",
    "episode_steps",
    "warmup_steps",
    *SCORE_COLUMNS,
}


@dataclass(frozen=True)
class CorrelationReport:
    score: str
    coefficients: pd.DataFrame
    mean_tables: dict[str, pd.DataFrame] = field(default_factory=dict)
    threshold: float = SIGNIFICANCE

    @property
    def significant(self) -> list[str]:
        flagged = self.coefficients[self.coefficients["significant"]]
        return list(flagged["hyperparameter"])


def hyperparameter_columns(results: pd.DataFrame) -> list[str]:
    """Numeric and boolean columns that describe a job's hyperparameters."""
    return [
        name
        for name in results.columns
        if name not in _NOT_HYPERPARAMETERS
        and (is_bool_dtype(results[name]) or is_numeric_dtype(results[name]))
    ]


def pearson(x: pd.Series[Any], y: pd.Series[Any]) -> float:
    """Pearson r, or NaN when either side has no variance."""
    xs = x.astype(float)
    ys = y.astype(float)
    if xs.nunique(dropna=True) < 2 or ys.nunique(dropna=True) < 2:
        return math.nan
    return float(xs.corr(ys, method="pearson"))


def _family_label(value: str) -> str:
    return RewardFamily(value).name.capitalize()


def mean_table(results: pd.DataFrame, parameter: str, score: str) -> pd.DataFrame:
    """Mean score per parameter value, one column per reward family present."""
    if "reward" not in results.columns:
        return results.groupby(parameter)[score].mean().to_frame("mean_score")
    table = results.pivot_table(index=parameter, columns="reward", values=score, aggfunc="mean")
    order = [f.value for f in RewardFamily if f.value in table.columns]
    table = table[order]
    table.columns = [_family_label(c) for c in order]
    table.columns.name = None
    return table


def correlate(
    results: pd.DataFrame,
    score: str = "best_score",
    *,
    threshold: float = SIGNIFICANCE,
    tables: Sequence[str] | None = None,
) -> CorrelationReport:
    """Correlate every hyperparameter column with *score*.

    Boolean flags count as 0/1. Columns that never vary get ``r = NaN``
    (reported as n/a). Mean tables are built for *tables*, or for every
    hyperparameter that varies when *tables* is None.
    """
    if score not in results.columns:
        msg = f"results have no '{score}' column"
        raise ValueError(msg)
    if len(results) < MIN_JOBS:
        msg = f"correlation needs at least {MIN_JOBS} jobs (got {len(results)})"
        raise ValueError(msg)
    scores = results[score]
    rows = []
    for name in hyperparameter_columns(results):
        r = pearson(results[name], scores)
        rows.append(
            {
                "hyperparameter": name,
                "r": r,
                "significant": not math.isnan(r) and abs(r) > threshold,
            }
        )
    coefficients = pd.DataFrame(rows, columns=["hyperparameter", "r", "significant"])
    if tables is None:
        tables = [
            name
            for name in hyperparameter_columns(results)
            if results[name].nunique(dropna=True) > 1
        ]
    missing = [name for name in tables if name not in results.columns]
    if missing:
        msg = f"results have no column(s) {', '.join(missing)}"
        raise ValueError(msg)
    means = {name: mean_table(results, name, score) for name in tables}
    passed = int(coefficients["significant"].sum())
    logger.info("%d of %d hyperparameter(s) pass |r| > %s", passed, len(coefficients), threshold)
    return CorrelationReport(score, coefficients, means, threshold)


def format_r(r: float) -> str:
    return "n/a" if math.isnan(r) else f"{r:+.3f}"


def format_report(report: CorrelationReport) -> str:
    rows = [("Hyperparameter", "r", f"|r| > {report.threshold:g}")] + [
        (str(row.hyperparameter), format_r(float(row.r)), "yes" if row.significant else "")
        for row in report.coefficients.itertuples(index=False)
    ]
    widths = [max(len(row[i]) for row in rows) for i in range(3)]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths, strict=True)) for row in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    out = [line.rstrip() for line in lines]
    for name, table in report.mean_tables.items():
        out += ["", f"Mean {report.score} by {name}", table.to_string(float_format="%.4f")]
    return "\n".join(out) + "\n"


def write_report(report: CorrelationReport, out_dir: Path) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    written = [out_dir / COEFFICIENTS_FILE]
    frame = report.coefficients.copy()
    frame["r"] = [format_r(r) if math.isnan(r) else str(float(r)) for r in frame["r"]]
    frame.to_csv(written[0], index=False)
    for name, table in report.mean_tables.items():
        path = out_dir / f"means_{name}.csv"
        table.to_csv(path)
        written.append(path)
    return written
