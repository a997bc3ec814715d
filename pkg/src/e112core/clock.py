"""Injectable time source.

All modules take a Clock rather than reading the wall clock, so tests and the
scenario harness can drive expiry, rate limits, and retry backoff
deterministically.
"""

from __future__ import annotations

import threading
import time


class Clock:
    def now(self) -> float:
        """Seconds since the Unix epoch."""
        raise NotImplementedError

    def sleep(self, seconds: float) -> None:
        raise NotImplementedError


class SystemClock(Clock):
    def now(self) -> float:
        return time.time()

    def sleep(self, seconds: float) -> None:
        time.sleep(seconds)


class ManualClock(Clock):
    """Test clock; sleep() advances time instead of blocking."""

    def __init__(self, start: float = 1_700_000_000.0):
        self._now = start
        self._lock = threading.Lock()

    def now(self) -> float:
        with self._lock:
            return self._now

    def sleep(self, seconds: float) -> None:
        self.advance(seconds)

    def advance(self, seconds: float) -> float:
        with self._lock:
            self._now += seconds
            return self._now
