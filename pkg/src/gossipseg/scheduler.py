"""Deterministic discrete-event loop over integer ticks.

Events fire in (tick, insertion order); callbacks may schedule more events.
Single-threaded by design so identical inputs replay identically.
"""
from __future__ import annotations

import heapq
from typing import Callable

from .errors import SchedulingError


class Scheduler:
    def __init__(self) -> None:
        self._queue: list[tuple[int, int, Callable[[int], None]]] = []
        self._seq = 0
        self.now = 0

    def at(self, tick: int, fn: Callable[[int], None]) -> None:
        if tick < self.now:
            raise SchedulingError(f"cannot schedule at {tick}, clock is at {self.now}")
        heapq.heappush(self._queue, (tick, self._seq, fn))
        self._seq += 1

    def run_until(self, end_tick: int) -> None:
        """Run every event with tick <= end_tick; clock lands on end_tick."""
        while self._queue and self._queue[0][0] <= end_tick:
            tick, _, fn = heapq.heappop(self._queue)
            self.now = tick
            fn(tick)
        self.now = end_tick
