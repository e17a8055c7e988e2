"""Injectable clocks and timers.

Every time-driven behavior in the service (image pulls, startup steps,
probes, keepalives, metric sampling, pending-pod sweeps) is scheduled on a
Timeline. ``WallTimeline`` is the production default; ``FakeTimeline`` is a
discrete-event clock that lets tests compress hours of simulated time into
milliseconds.
"""

from __future__ import annotations

import heapq
import itertools
import logging
import threading
import time

logger = logging.getLogger(__name__)


class TimerHandle:
    """Cancelable reference to one scheduled callback."""

    __slots__ = ("when", "_seq", "_fn", "_args", "cancelled")

    def __init__(self, when, seq, fn, args):
        self.when = when
        self._seq = seq
        self._fn = fn
        self._args = args
        self.cancelled = False

    def cancel(self):
        self.cancelled = True

    def run(self):
        if not self.cancelled:
            self._fn(*self._args)

    def __lt__(self, other):
        return (self.when, self._seq) < (other.when, other._seq)


class PeriodicHandle:
    """Self-rescheduling timer. First fire is one interval from creation."""

    def __init__(self, timeline: "Timeline", interval: float, fn, args):
        if interval <= 0:
            raise ValueError("interval must be positive")
        self._timeline = timeline
        self.interval = interval
        self._fn = fn
        self._args = args
        self._cancelled = False
        self._handle: TimerHandle | None = None
        self._schedule()

    def _schedule(self):
        if not self._cancelled:
            self._handle = self._timeline.call_later(self.interval, self._fire)

    def _fire(self):
        if self._cancelled:
            return
        try:
            self._fn(*self._args)
        finally:
            self._schedule()

    def cancel(self):
        self._cancelled = True
        if self._handle is not None:
            self._handle.cancel()


class Timeline:
    """A clock plus a timer queue."""

    def __init__(self):
        self._heap: list[TimerHandle] = []
        self._lock = threading.RLock()
        self._seq = itertools.count()

    def now(self) -> float:
        raise NotImplementedError

    def sleep(self, seconds: float) -> None:
        raise NotImplementedError

    def call_at(self, when: float, fn, *args) -> TimerHandle:
        handle = TimerHandle(when, next(self._seq), fn, args)
        with self._lock:
            heapq.heappush(self._heap, handle)
            self._on_new_timer()
        return handle

    def call_later(self, delay: float, fn, *args) -> TimerHandle:
        return self.call_at(self.now() + max(delay, 0.0), fn, *args)

    def every(self, interval: float, fn, *args) -> PeriodicHandle:
        return PeriodicHandle(self, interval, fn, args)

    def _peek_due(self) -> TimerHandle | None:
        """Next non-cancelled timer, or None. Drops cancelled heads."""
        with self._lock:
            while self._heap:
                if self._heap[0].cancelled:
                    heapq.heappop(self._heap)
                    continue
                return self._heap[0]
            return None

    def _on_new_timer(self):
        pass

    def close(self):
        pass


class FakeTimeline(Timeline):
    """Discrete-event clock: time moves only via advance()/run_until().

    Timer callbacks run inline in the advancing thread, in due order, with
    ``now()`` set to each timer's due time. Callbacks must not call
    advance()/sleep() themselves, and callers must not hold locks that timer
    callbacks also take.
    """

    DEFAULT_START = 1_700_000_000.0

    def __init__(self, start: float = DEFAULT_START):
        super().__init__()
        self._now = float(start)
        self._advance_mutex = threading.Lock()
        self._advancing_thread: threading.Thread | None = None

    def now(self) -> float:
        return self._now

    def sleep(self, seconds: float) -> None:
        self.advance(seconds)

    def advance(self, seconds: float) -> None:
        if seconds < 0:
            raise ValueError("cannot advance backwards")
        if self._advancing_thread is threading.current_thread():
            raise RuntimeError("advance() re-entered from a timer callback")
        with self._advance_mutex:
            self._advancing_thread = threading.current_thread()
            try:
                target = self._now + seconds
                while True:
                    with self._lock:
                        head = self._peek_due()
                        if head is None or head.when > target:
                            break
                        heapq.heappop(self._heap)
                        self._now = max(self._now, head.when)
                    head.run()
                self._now = target
            finally:
                self._advancing_thread = None

    def run_until(self, predicate, timeout: float) -> bool:
        """Advance through scheduled timers until predicate() or timeout.

        Returns the final predicate value. Timeout is in simulated seconds.
        """
        deadline = self._now + timeout
        while True:
            if predicate():
                return True
            head = self._peek_due()
            if head is None or head.when > deadline:
                self.advance(max(0.0, deadline - self._now))
                return bool(predicate())
            self.advance(head.when - self._now)


class WallTimeline(Timeline):
    """Wall-clock timeline; timers fire on a background pump thread."""

    def __init__(self):
        super().__init__()
        self._cv = threading.Condition(self._lock)
        self._running = False
        self._thread: threading.Thread | None = None

    def now(self) -> float:
        return time.time()

    def sleep(self, seconds: float) -> None:
        time.sleep(seconds)

    def start(self):
        with self._lock:
            if self._running:
                return
            self._running = True
            self._thread = threading.Thread(
                target=self._pump, name="timeline-pump", daemon=True
            )
            self._thread.start()

    def close(self):
        with self._lock:
            self._running = False
            self._cv.notify_all()
        if self._thread is not None:
            self._thread.join(timeout=2.0)
            self._thread = None

    def _on_new_timer(self):
        if not self._running:
            # Lazy start keeps one-off scripts from having to call start().
            self._running = True
            self._thread = threading.Thread(
                target=self._pump, name="timeline-pump", daemon=True
            )
            self._thread.start()
        self._cv.notify_all()

    def _pump(self):
        while True:
            with self._cv:
                if not self._running:
                    return
                head = self._peek_due()
                if head is None:
                    self._cv.wait(timeout=0.5)
                    continue
                delay = head.when - self.now()
                if delay > 0:
                    self._cv.wait(timeout=min(delay, 0.5))
                    continue
                heapq.heappop(self._heap)
            try:
                head.run()
            except Exception:
                logger.exception("timer callback failed")
