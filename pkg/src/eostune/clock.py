"""Injectable time sources.

The tuning loop never calls ``time`` directly; it goes through one of these
so that searches over simulated subsystems run in compressed virtual time
while the live lock subsystem uses the wall clock.
"""

import time


class WallClock:
    virtual = False

    def now(self) -> float:
        return time.monotonic()

    def sleep(self, seconds: float) -> None:
        if seconds > 0:
            time.sleep(seconds)


class VirtualClock:
    """Deterministic clock: ``sleep`` advances time instead of blocking."""

    virtual = True

    def __init__(self, start: float = 0.0):
        self._now = float(start)

    def now(self) -> float:
        return self._now

    def sleep(self, seconds: float) -> None:
        if seconds < 0:
            raise ValueError("cannot sleep a negative duration")
        self._now += seconds

    def advance_to(self, timestamp: float) -> None:
        """Jump forward to ``timestamp``; never moves backwards."""
        if timestamp > self._now:
            self._now = timestamp
