"""Deterministic port assignment over the index store.

Each live pod holds one entry keyed "<app>-<index>". Ports derive from the
index: remote_port = remote_base + index, web_port = web_base + index, both
from one shared range, so an index free for one app but port-owned by another
app's live entry is skipped. Allocation picks the lowest free index
(released indices are reused), reclaiming stale listeners on the way.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass

from .errors import PortsExhaustedError, ReclaimError, StoreUnavailableError, ValidationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class IndexStoreConfig:
    remote_base: int = 2200
    web_base: int = 6080
    max_index: int = 64

    def __post_init__(self):
        if self.max_index <= 0:
            raise ValidationError("max_index must be positive")
        lo, hi = sorted((self.remote_base, self.web_base))
        if lo + self.max_index > hi:
            raise ValidationError("remote and web port ranges overlap")


@dataclass(frozen=True)
class PortAssignment:
    index: int
    remote_port: int
    web_port: int


@dataclass(frozen=True)
class IndexEntry:
    key: str
    app: str
    index: int
    remote_port: int
    web_port: int
    session_id: str
    created_at: float

    def to_dict(self) -> dict:
        return {
            "key": self.key,
            "index": self.index,
            "remote_port": self.remote_port,
            "web_port": self.web_port,
            "session_id": self.session_id,
            "created_at": self.created_at,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "IndexEntry":
        key = doc["key"]
        app, _, _ = key.rpartition("-")
        return cls(
            key=key,
            app=app,
            index=int(doc["index"]),
            remote_port=int(doc["remote_port"]),
            web_port=int(doc["web_port"]),
            session_id=doc["session_id"],
            created_at=float(doc["created_at"]),
        )


def parse_index(key: str) -> int | None:
    _, _, tail = key.rpartition("-")
    try:
        return int(tail)
    except ValueError:
        return None


class PortAllocator:
    """Fig-style read/sort/pick/write allocation with reclaim.

    ``listeners`` is the managed-listener view (the tunnel gateway): it can
    say whether a port is held, whether the holder is managed, and close a
    managed listener. ``on_scale_signal(app, target_replicas)`` fires when a
    chosen index raises the app's replica watermark.
    """

    _CAS_RETRIES = 32

    def __init__(self, store, config: IndexStoreConfig | None = None, clock=None,
                 listeners=None, on_scale_signal=None):
        self.store = store
        self.config = config or IndexStoreConfig()
        self._clock = clock
        self._listeners = listeners
        self._on_scale_signal = on_scale_signal
        self._watermarks: dict[str, int] = {}
        self._lock = threading.RLock()

    # -- helpers ----------------------------------------------------------

    def _now(self) -> float:
        return self._clock.now() if self._clock is not None else 0.0

    def ports_for(self, index: int) -> PortAssignment:
        return PortAssignment(
            index=index,
            remote_port=self.config.remote_base + index,
            web_port=self.config.web_base + index,
        )

    def entries(self) -> list[IndexEntry]:
        out = []
        for key in self.store.keys(""):
            doc = self.store.get(key)
            if doc is not None:
                out.append(IndexEntry.from_dict(doc))
        out.sort(key=lambda e: e.index)
        return out

    def active_indices(self, app: str | None = None) -> list[int]:
        prefix = f"{app}-" if app is not None else ""
        indices = []
        for key in self.store.keys(prefix):
            idx = parse_index(key)
            if idx is not None:
                indices.append(idx)
        return sorted(indices)

    # -- operations -------------------------------------------------------

    def allocate(self, app: str, session_id: str) -> PortAssignment:
        for _ in range(self._CAS_RETRIES):
            with self._lock, self.store.guard():
                own = set(self.active_indices(app))
                everyone = set(self.active_indices(None))
                assignment = self._choose(app, own, everyone)
                entry = IndexEntry(
                    key=f"{app}-{assignment.index}",
                    app=app,
                    index=assignment.index,
                    remote_port=assignment.remote_port,
                    web_port=assignment.web_port,
                    session_id=session_id,
                    created_at=self._now(),
                )
                if not self.store.put_new(entry.key, entry.to_dict()):
                    continue  # lost a remote race; re-read and retry
                self._maybe_signal(app, assignment.index)
                return assignment
        raise StoreUnavailableError(f"allocation for {app!r} kept losing store races")

    def _choose(self, app: str, own: set[int], everyone: set[int]) -> PortAssignment:
        for index in range(self.config.max_index):
            if index in own:
                continue
            if index in everyone:
                # Derived port is owned by a live entry (another app sharing
                # the range): reclaim would answer False, so advance.
                continue
            assignment = self.ports_for(index)
            if not self.reclaim(assignment.remote_port):
                continue
            if not self.reclaim(assignment.web_port):
                continue
            return assignment
        raise PortsExhaustedError(
            f"all {self.config.max_index} indices live for {app!r}",
            app=app, max_index=self.config.max_index,
        )

    def release(self, key: str) -> None:
        entry = self.store.get(key)
        if entry is None:
            logger.info("release of unknown key %r is a no-op", key)
            return
        self.store.delete(key)

    def lookup(self, key: str | None = None, session_id: str | None = None) -> IndexEntry | None:
        if key is not None:
            doc = self.store.get(key)
            return IndexEntry.from_dict(doc) if doc is not None else None
        if session_id is not None:
            for entry in self.entries():
                if entry.session_id == session_id:
                    return entry
            return None
        raise ValidationError("lookup needs a key or a session_id")

    def reclaim(self, port: int) -> bool:
        """True when the port is usable after the call.

        False means a live store entry owns the port (the caller must advance
        past this index). A foreign listener that cannot be shut down raises
        ReclaimError.
        """
        for entry in self.entries():
            if port in (entry.remote_port, entry.web_port):
                return False
        if self._listeners is None:
            return True
        handle = self._listeners.lookup(port)
        if handle is not None:
            # Managed listener with no owning entry: a crashed pod left its
            # forwarder up. Take it over.
            logger.warning("reclaiming stale listener on port %d", port)
            self._listeners.close(port)
            return True
        if self._listeners.bound(port):
            raise ReclaimError(f"port {port} is held by an unmanaged listener", port=port)
        return True

    def _maybe_signal(self, app: str, index: int) -> None:
        target = index + 1
        if target <= self._watermarks.get(app, 0):
            return
        self._watermarks[app] = target
        if self._on_scale_signal is not None:
            try:
                self._on_scale_signal(app, target)
            except Exception:
                logger.exception("scale signal consumer failed")
