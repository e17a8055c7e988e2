"""Structured pod lifecycle event log.

Events double as the observable record for ordering assertions (startup step
order, teardown order, scale reconciliation) and are mirrored to the standard
logger as structured lines.
"""

from __future__ import annotations

import logging
import threading
from collections import deque
from dataclasses import dataclass

logger = logging.getLogger("edgefed.events")


@dataclass(frozen=True)
class PodEvent:
    ts: float
    pod: str
    kind: str
    old_phase: str | None = None
    new_phase: str | None = None
    reason: str | None = None


class EventLog:
    def __init__(self, clock, capacity: int = 50000):
        self._clock = clock
        self._events: deque[PodEvent] = deque(maxlen=capacity)
        self._lock = threading.Lock()
        self._subscribers: list = []

    def emit(self, pod: str, kind: str, *, old_phase=None, new_phase=None, reason=None) -> PodEvent:
        event = PodEvent(
            ts=self._clock.now(),
            pod=pod,
            kind=kind,
            old_phase=old_phase,
            new_phase=new_phase,
            reason=reason,
        )
        with self._lock:
            self._events.append(event)
            subscribers = list(self._subscribers)
        logger.info(
            "pod-event ts=%.3f pod=%s kind=%s old=%s new=%s reason=%s",
            event.ts, pod, kind, old_phase, new_phase, reason,
        )
        for fn in subscribers:
            try:
                fn(event)
            except Exception:
                logger.exception("event subscriber failed")
        return event

    def phase(self, pod: str, old: str | None, new: str, reason: str | None = None) -> PodEvent:
        return self.emit(pod, "phase", old_phase=old, new_phase=new, reason=reason)

    def subscribe(self, fn) -> None:
        with self._lock:
            self._subscribers.append(fn)

    def events(self, pod: str | None = None, kind: str | None = None) -> list[PodEvent]:
        with self._lock:
            out = list(self._events)
        if pod is not None:
            out = [e for e in out if e.pod == pod]
        if kind is not None:
            out = [e for e in out if e.kind == kind]
        return out

    def clear(self) -> None:
        with self._lock:
            self._events.clear()
