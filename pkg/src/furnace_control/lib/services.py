"""Common shape of the pipeline microservices.

A service consumes one or more bus topics serially. ``drain`` pumps whatever
is available without blocking (used by virtual-clock runs and tests);
``run`` loops until a stop event is set (used by live runs, one thread per
service).
"""

from __future__ import annotations

import logging
import threading
from typing import TYPE_CHECKING

from furnace_control.lib.errors import FurnaceError

if TYPE_CHECKING:
    from collections.abc import Sequence

    from furnace_control.lib.fabric import Bus, Message, Subscription
    from furnace_control.lib.latency import LatencyRecorder, Stage

logger = logging.getLogger(__name__)

_IDLE_WAIT = 0.005


class Service:
    name = "service"
    stage: Stage | None = None

    def __init__(
        self,
        bus: Bus,
        topics: Sequence[str],
        latency: LatencyRecorder | None = None,
    ) -> None:
        self.bus = bus
        self.latency = latency
        self.errors = 0
        self.subscriptions: list[Subscription] = [bus.subscribe(t) for t in topics]

    def handle(self, message: Message) -> None:
        raise NotImplementedError

    def dispatch(self, message: Message) -> None:
        try:
            if self.latency is not None and self.stage is not None:
                with self.latency.measure(self.stage):
                    self.handle(message)
            else:
                self.handle(message)
        except FurnaceError:
            self.errors += 1
            logger.exception("%s failed on %s offset %d", self.name, message.topic, message.offset)

    def drain(self, max_messages: int | None = None) -> int:
        """Handle everything currently available; return the number of messages."""
        handled = 0
        for sub in self.subscriptions:
            for message in sub.poll(max_messages):
                self.dispatch(message)
                handled += 1
        return handled

    def backlog(self) -> int:
        return sum(self.bus.lag(sub) for sub in self.subscriptions)

    def finish(self) -> None:
        """Hook run once after the last drain."""

    def run(self, stop: threading.Event) -> None:
        while not stop.is_set():
            if self.drain() == 0:
                stop.wait(_IDLE_WAIT)
        self.drain()
        self.finish()

    def start(self, stop: threading.Event) -> threading.Thread:
        thread = threading.Thread(target=self.run, args=(stop,), name=self.name, daemon=True)
        thread.start()
        return thread
