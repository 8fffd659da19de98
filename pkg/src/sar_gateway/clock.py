"""Injectable time source shared by the gateway, backends and simulator.

Everything that reads or waits on time goes through a Clock instance so
tests can swap in a VirtualClock and drive latency deterministically.
"""
from __future__ import annotations

import threading
import time


class Clock:
    """Real monotonic clock."""

    def now(self) -> float:
        return time.monotonic()

    def sleep(self, seconds: float) -> None:
        if seconds > 0:
            time.sleep(seconds)


class VirtualClock(Clock):
    """Manually advanced clock.

    ``sleep`` blocks the calling thread until some other thread moves time
    past its deadline via ``advance``/``advance_to``.  ``wait_for_sleepers``
    lets a driving thread synchronize with workers before advancing, which
    keeps concurrent-latency measurements exact.

    ``max_real_wait`` bounds how long a sleeper will really block, so a test
    that forgets to advance fails loudly instead of hanging.
    """

    def __init__(self, start: float = 0.0, max_real_wait: float = 30.0):
        self._now = start
        self._max_real_wait = max_real_wait
        self._cond = threading.Condition()
        self._sleepers: list[float] = []  # pending wake deadlines

    def now(self) -> float:
        with self._cond:
            return self._now

    def sleep(self, seconds: float) -> None:
        if seconds <= 0:
            return
        with self._cond:
            deadline = self._now + seconds
            self._sleepers.append(deadline)
            self._cond.notify_all()
            started = time.monotonic()
            while self._now < deadline:
                remaining = self._max_real_wait - (time.monotonic() - started)
                if remaining <= 0 or not self._cond.wait(timeout=remaining):
                    self._sleepers.remove(deadline)
                    raise RuntimeError(
                        "virtual sleep exceeded max_real_wait "
                        f"({self._max_real_wait}s) with no advance"
                    )
            self._sleepers.remove(deadline)
            self._cond.notify_all()

    def advance(self, seconds: float) -> float:
        """Move time forward, waking any sleeper whose deadline has passed."""
        if seconds < 0:
            raise ValueError("time cannot move backwards")
        with self._cond:
            self._now += seconds
            self._cond.notify_all()
            return self._now

    def advance_to(self, t: float) -> float:
        with self._cond:
            if t > self._now:
                self._now = t
                self._cond.notify_all()
            return self._now

    # a sleeper whose deadline has passed is already released (its thread
    # just has not been scheduled yet), so only future deadlines count
    def _pending_locked(self) -> list[float]:
        return [d for d in self._sleepers if d > self._now]

    def advance_to_next(self) -> float:
        """Jump to the earliest pending sleeper deadline, if any."""
        with self._cond:
            pending = self._pending_locked()
            if pending:
                self._now = min(pending)
                self._cond.notify_all()
            return self._now

    def pending_sleepers(self) -> int:
        with self._cond:
            return len(self._pending_locked())

    def wait_for_sleepers(self, count: int, real_timeout: float = 10.0) -> None:
        """Block (in real time) until `count` threads sit in virtual sleep."""
        deadline = time.monotonic() + real_timeout
        with self._cond:
            while len(self._pending_locked()) < count:
                remaining = deadline - time.monotonic()
                if remaining <= 0 or not self._cond.wait(timeout=remaining):
                    raise TimeoutError(
                        f"only {len(self._pending_locked())} of {count} sleepers "
                        f"registered within {real_timeout}s"
                    )
