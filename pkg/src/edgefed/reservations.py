"""Calendar-slot reservations over the testbed inventory.

A reservation is a half-open time window [start, end) in UTC seconds claiming
one edge node plus a set of devices on one testbed. The calendar invariant:
no two reservations with overlapping windows may share a device or a node.

Persistence is an append-only JSONL journal replayed at startup; mutations go
through a single writer lock.
"""

from __future__ import annotations

import json
import logging
import threading
import uuid
from dataclasses import dataclass

from .errors import ConflictError, ForbiddenError, InvalidWindowError, NotFoundError
from .inventory import Inventory

logger = logging.getLogger(__name__)

# Creation-time grace for "window in the future": allows start == now without
# racing the clock.
PAST_START_GRACE_S = 1.0


@dataclass(frozen=True)
class Window:
    start: float
    end: float

    def __post_init__(self):
        if not self.end > self.start:
            raise InvalidWindowError(f"end ({self.end}) must be after start ({self.start})")

    def overlaps(self, other: "Window") -> bool:
        return self.start < other.end and other.start < self.end

    def contains(self, t: float) -> bool:
        return self.start <= t < self.end


@dataclass(frozen=True)
class Reservation:
    reservation_id: str
    user_id: str
    testbed_id: str
    node_id: str
    device_ids: frozenset[str]
    window: Window

    def to_dict(self) -> dict:
        return {
            "reservation_id": self.reservation_id,
            "user_id": self.user_id,
            "testbed_id": self.testbed_id,
            "node_id": self.node_id,
            "device_ids": sorted(self.device_ids),
            "start": self.window.start,
            "end": self.window.end,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Reservation":
        return cls(
            reservation_id=doc["reservation_id"],
            user_id=doc["user_id"],
            testbed_id=doc["testbed_id"],
            node_id=doc["node_id"],
            device_ids=frozenset(doc["device_ids"]),
            window=Window(float(doc["start"]), float(doc["end"])),
        )


class ReservationBook:
    """Holds reservations and enforces the calendar invariant.

    All mutations serialize through one lock; a rejected create leaves the
    book and the journal untouched.
    """

    def __init__(self, inventory: Inventory, clock, journal_path=None):
        self._inventory = inventory
        self._clock = clock
        self._journal_path = journal_path
        self._lock = threading.RLock()
        self._reservations: dict[str, Reservation] = {}
        if journal_path is not None:
            self._replay_journal()

    # -- persistence ------------------------------------------------------

    def _replay_journal(self):
        try:
            fh = open(self._journal_path, "r", encoding="utf-8")
        except FileNotFoundError:
            return
        with fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                if rec["op"] == "create":
                    r = Reservation.from_dict(rec["reservation"])
                    self._reservations[r.reservation_id] = r
                elif rec["op"] == "cancel":
                    if self._reservations.pop(rec["reservation_id"], None) is None:
                        logger.warning("journal cancels unknown reservation %s", rec["reservation_id"])
        logger.info("journal replayed: %d live reservations", len(self._reservations))

    def _append_journal(self, rec: dict):
        if self._journal_path is None:
            return
        with open(self._journal_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
            fh.flush()

    # -- operations -------------------------------------------------------

    def create(self, user_id: str, testbed_id: str, node_id: str,
               device_ids, window: Window) -> Reservation:
        device_ids = frozenset(device_ids)
        if not device_ids:
            raise NotFoundError("device set must not be empty")
        with self._lock:
            now = self._clock.now()
            if window.start < now - PAST_START_GRACE_S:
                raise InvalidWindowError(
                    f"window starts in the past (start={window.start}, now={now:.0f})"
                )
            testbed = self._inventory.testbed(testbed_id)
            if node_id not in testbed.edge_nodes:
                raise NotFoundError(f"node {node_id!r} not in testbed {testbed_id!r}", node_id=node_id)
            unknown = device_ids - testbed.device_ids
            if unknown:
                raise NotFoundError(
                    f"unknown devices {sorted(unknown)} in testbed {testbed_id!r}",
                    device_ids=sorted(unknown),
                )
            blocking = self._find_conflict(node_id, device_ids, window)
            if blocking is not None:
                raise ConflictError(
                    f"window overlaps reservation {blocking.reservation_id} "
                    f"(node {blocking.node_id}, devices {sorted(blocking.device_ids)})",
                    blocking_reservation=blocking.to_dict(),
                )
            reservation = Reservation(
                reservation_id="r-" + uuid.uuid4().hex[:12],
                user_id=user_id,
                testbed_id=testbed_id,
                node_id=node_id,
                device_ids=device_ids,
                window=window,
            )
            self._reservations[reservation.reservation_id] = reservation
            self._append_journal({"op": "create", "ts": now, "reservation": reservation.to_dict()})
            return reservation

    def _find_conflict(self, node_id, device_ids, window) -> Reservation | None:
        for other in self._reservations.values():
            if not window.overlaps(other.window):
                continue
            if other.node_id == node_id or (other.device_ids & device_ids):
                return other
        return None

    def cancel(self, reservation_id: str, user_id: str, admin: bool = False) -> None:
        with self._lock:
            reservation = self._reservations.get(reservation_id)
            if reservation is None:
                raise NotFoundError(f"unknown reservation {reservation_id!r}")
            if reservation.user_id != user_id and not admin:
                raise ForbiddenError("reservation belongs to another user")
            del self._reservations[reservation_id]
            self._append_journal(
                {"op": "cancel", "ts": self._clock.now(), "reservation_id": reservation_id}
            )

    def get(self, reservation_id: str) -> Reservation:
        with self._lock:
            reservation = self._reservations.get(reservation_id)
            if reservation is None:
                raise NotFoundError(f"unknown reservation {reservation_id!r}")
            return reservation

    def active_for(self, user_id: str, now: float) -> Reservation | None:
        """The user's reservation whose window contains now, if any.

        If the user holds several concurrently-active windows (possible on
        disjoint nodes/devices), the earliest-start then lexicographically
        smallest id wins.
        """
        with self._lock:
            matches = [
                r for r in self._reservations.values()
                if r.user_id == user_id and r.window.contains(now)
            ]
        if not matches:
            return None
        matches.sort(key=lambda r: (r.window.start, r.reservation_id))
        return matches[0]

    def is_active(self, reservation_id: str, user_id: str, now: float) -> bool:
        reservation = self.get(reservation_id)
        return reservation.user_id == user_id and reservation.window.contains(now)

    def list(self, user_id: str | None = None, testbed_id: str | None = None) -> list[Reservation]:
        with self._lock:
            out = list(self._reservations.values())
        if user_id is not None:
            out = [r for r in out if r.user_id == user_id]
        if testbed_id is not None:
            out = [r for r in out if r.testbed_id == testbed_id]
        out.sort(key=lambda r: (r.window.start, r.reservation_id))
        return out

    def snapshot(self) -> list[Reservation]:
        with self._lock:
            return sorted(self._reservations.values(), key=lambda r: r.reservation_id)
