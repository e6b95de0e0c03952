"""Injectable clocks; tests and scenarios use the simulated one."""

from __future__ import annotations

import time


class Clock:
    def now_ms(self) -> int:
        raise NotImplementedError


class SystemClock(Clock):
    def now_ms(self) -> int:
        return int(time.time() * 1000)


class SimClock(Clock):
    """Deterministic clock that only moves when told to."""

    def __init__(self, start_ms: int = 0):
        self._now = start_ms

    def now_ms(self) -> int:
        return self._now

    def advance(self, delta_ms: int) -> int:
        if delta_ms < 0:
            raise ValueError("clock cannot move backwards")
        self._now += delta_ms
        return self._now

    def advance_to(self, t_ms: int) -> int:
        if t_ms < self._now:
            raise ValueError(f"clock cannot move backwards ({t_ms} < {self._now})")
        self._now = t_ms
        return self._now
