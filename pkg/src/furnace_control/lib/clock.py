"""Wall and virtual clocks.

Services read time only through a clock so that tests and benchmark dry runs
can drive the whole pipeline on a deterministic virtual timeline.
"""

from __future__ import annotations

import threading
import time
from typing import Protocol

NS_PER_SECOND = 1_000_000_000


class Clock(Protocol):
    def now_ns(self) -> int: ...

    def sleep(self, seconds: float) -> None: ...


class WallClock:
    def now_ns(self) -> int:
        return time.time_ns()

    def sleep(self, seconds: float) -> None:
        if seconds > 0:
            time.sleep(seconds)


class VirtualClock:
    """A clock that only moves when told to; ``sleep`` advances it instantly."""

    def __init__(self, start_ns: int = 0) -> None:
        self._now = start_ns
        self._lock = threading.Lock()

    def now_ns(self) -> int:
        with self._lock:
            return self._now

    def sleep(self, seconds: float) -> None:
        self.advance(seconds)

    def advance(self, seconds: float) -> None:
        with self._lock:
            self._now += round(seconds * NS_PER_SECOND)

    def set_ns(self, value: int) -> None:
        with self._lock:
            if value < self._now:
                msg = f"virtual clock cannot move backwards ({value} < {self._now})"
                raise ValueError(msg)
            self._now = value


def to_second(timestamp_ns: int) -> int:
    return timestamp_ns // NS_PER_SECOND
