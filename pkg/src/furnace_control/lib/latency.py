"""Per-stage processing-time instrumentation and the budget comparison report."""

from __future__ import annotations

import enum
import json
import threading
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from collections.abc import Callable, Iterator, Mapping
    from pathlib import Path


class Stage(enum.Enum):
    TELEMETRY_PARSER = "TelemetryParser"
    POWER_CONTROL = "PowerControl"
    DATA_MANAGER = "DataManager"


BUDGET_MS: dict[Stage, float] = {
    Stage.TELEMETRY_PARSER: 5.0,
    Stage.POWER_CONTROL: 1000.0,
    Stage.DATA_MANAGER: 1000.0,
}

# Means measured on the production deployment, reported for comparison only.
REFERENCE_MS: dict[Stage, float] = {
    Stage.TELEMETRY_PARSER: 4.622,
    Stage.POWER_CONTROL: 4.055,
    Stage.DATA_MANAGER: 9.922,
}

NETWORK_NOTE = (
    "Note: actual times are in-process processing times; network latency "
    "between the plant gateway and the services is not included."
)


class LatencyRecorder:
    """Collects duration samples per stage; safe to share between services.

    *timer* returns seconds; the default is the monotonic performance counter.
    """

    def __init__(self, timer: Callable[[], float] = time.perf_counter) -> None:
        self._timer = timer
        self._samples: dict[Stage, list[float]] = {stage: [] for stage in Stage}
        self._lock = threading.Lock()

    def record(self, stage: Stage, seconds: float) -> None:
        with self._lock:
            self._samples[stage].append(seconds)

    @contextmanager
    def measure(self, stage: Stage) -> Iterator[None]:
        start = self._timer()
        try:
            yield
        finally:
            self.record(stage, self._timer() - start)

    def samples(self, stage: Stage) -> list[float]:
        with self._lock:
            return list(self._samples[stage])


@dataclass(frozen=True)
class LatencyReport:
    stage: str
    samples: int
    mean_ms: float
    p99_ms: float
    max_ms: float
    budget_ms: float
    reference_ms: float
    verdict: str

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"


def build_report(
    stage: Stage, samples_s: list[float], budget_ms: float | None = None
) -> LatencyReport:
    budget = BUDGET_MS[stage] if budget_ms is None else budget_ms
    if samples_s:
        ms = np.asarray(samples_s, dtype=np.float64) * 1000.0
        mean, p99, peak = float(ms.mean()), float(np.percentile(ms, 99)), float(ms.max())
    else:
        mean = p99 = peak = 0.0
    return LatencyReport(
        stage=stage.value,
        samples=len(samples_s),
        mean_ms=mean,
        p99_ms=p99,
        max_ms=peak,
        budget_ms=budget,
        reference_ms=REFERENCE_MS[stage],
        verdict="pass" if mean <= budget else "fail",
    )


def build_reports(
    recorder: LatencyRecorder, budgets: Mapping[Stage, float] | None = None
) -> list[LatencyReport]:
    budgets = budgets or BUDGET_MS
    return [build_report(stage, recorder.samples(stage), budgets[stage]) for stage in Stage]


def format_table(reports: list[LatencyReport]) -> str:
    """Aligned comparison of expected and actual processing times."""
    header = ("Stage", "Budget ms", "Actual ms", "p99 ms", "Max ms", "Reference ms", "Verdict")
    rows = [header] + [
        (
            r.stage,
            f"{r.budget_ms:.3f}",
            f"{r.mean_ms:.3f}",
            f"{r.p99_ms:.3f}",
            f"{r.max_ms:.3f}",
            f"{r.reference_ms:.3f}",
            r.verdict,
        )
        for r in reports
    ]
    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths, strict=True)) for row in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(line.rstrip() for line in lines) + "\n\n" + NETWORK_NOTE + "\n"


def write_reports(reports: list[LatencyReport], path: Path) -> None:
    payload = {"reports": [asdict(r) for r in reports], "note": NETWORK_NOTE}
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
