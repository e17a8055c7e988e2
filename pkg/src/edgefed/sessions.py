"""Experiment sessions: the bridge between reservations and pods.

A session is one live instance of an app owned by a user under a
reservation. Connecting inside the reservation window either reattaches to
an existing instance (same pod, count unchanged) or provisions a new one;
once the pod is Ready the session opens its web bridge and turns Live.
"""

from __future__ import annotations

import base64
import logging
import os
import re
import threading
import uuid
from dataclasses import dataclass

from .errors import (
    CapacityError,
    ForbiddenError,
    NotFoundError,
    ValidationError,
)

logger = logging.getLogger(__name__)

REQUESTED = "Requested"
PROVISIONING = "Provisioning"
LIVE = "Live"
CLOSED = "Closed"

UPLOAD_CAP_BYTES = 64 * 1024**2


@dataclass
class SessionDescriptor:
    session_id: str
    user_id: str
    reservation_id: str
    app: str
    created_at: float
    pod_name: str | None = None
    state: str = REQUESTED
    web_port: int | None = None

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "user_id": self.user_id,
            "reservation_id": self.reservation_id,
            "app": self.app,
            "pod_name": self.pod_name,
            "state": self.state,
            "web_port": self.web_port,
            "created_at": self.created_at,
        }


class SessionManager:
    def __init__(self, reservations, pod_manager, gateway, clock,
                 lock: threading.RLock | None = None):
        self.reservations = reservations
        self.pods = pod_manager
        self.gateway = gateway
        self.clock = clock
        self._lock = lock or threading.RLock()
        self._sessions: dict[str, SessionDescriptor] = {}
        pod_manager.add_listener(self)

    # -- pod listener hooks ---------------------------------------------------

    def on_pod_ready(self, record) -> None:
        with self._lock:
            session = self._sessions.get(record.owner_session)
            if session is None or session.state == CLOSED:
                return
            self._go_live(session, record)

    def on_pod_failed(self, record) -> None:
        with self._lock:
            session = self._sessions.get(record.owner_session)
            if session is None or session.state == CLOSED:
                return
            session.state = PROVISIONING
            session.web_port = None

    def on_pod_teardown(self, record) -> None:
        with self._lock:
            session = self._sessions.get(record.owner_session)
            if session is None:
                return
            if session.pod_name == record.name and session.state != CLOSED:
                session.web_port = None

    def _go_live(self, session: SessionDescriptor, record) -> None:
        try:
            self.gateway.open_web_bridge(
                session.session_id, record.ports.web_port, record.ports.remote_port
            )
        except Exception:
            logger.exception("web bridge open failed for %s", session.session_id)
            return
        session.pod_name = record.name
        session.web_port = record.ports.web_port
        session.state = LIVE

    # -- operations -------------------------------------------------------------

    def _gate(self, user_id: str, reservation_id: str):
        reservation = self.reservations.get(reservation_id)
        if reservation.user_id != user_id:
            raise ForbiddenError("reservation belongs to another user")
        now = self.clock.now()
        if not reservation.window.contains(now):
            hint = None
            if now < reservation.window.start:
                hint = reservation.window.start
            raise ForbiddenError(
                "outside the reservation window",
                window={"start": reservation.window.start, "end": reservation.window.end},
                next_window_start=hint,
            )
        return reservation

    def connect(self, user_id: str, reservation_id: str, app: str,
                instance: str = "new", wait_timeout_s: float = 30.0,
                wait: bool = True) -> SessionDescriptor:
        """Open a new instance or reattach to an existing one."""
        reservation = self._gate(user_id, reservation_id)
        with self._lock:
            if instance == "new":
                session = SessionDescriptor(
                    session_id="s-" + uuid.uuid4().hex[:12],
                    user_id=user_id,
                    reservation_id=reservation_id,
                    app=app,
                    created_at=self.clock.now(),
                )
                self._sessions[session.session_id] = session
            else:
                session = self._sessions.get(instance)
                if session is None:
                    raise NotFoundError(f"unknown session {instance!r}")
                if session.user_id != user_id:
                    raise ForbiddenError("session belongs to another user")
                if session.state == CLOSED:
                    raise NotFoundError(f"session {instance!r} is closed")
                if session.app != app:
                    raise ValidationError(
                        f"session {instance!r} runs app {session.app!r}, not {app!r}")
            session.state = PROVISIONING
            record = self.pods.connect_or_reuse(
                session.session_id, app,
                node_selector={"node": reservation.node_id},
            )
            session.pod_name = record.name
            if record.phase == "Ready":
                self._go_live(session, record)
        if wait and session.state != LIVE:
            record = self.pods.wait_ready(record.name, wait_timeout_s)
            with self._lock:
                if record is not None and record.phase == "Ready" and session.state != CLOSED:
                    self._go_live(session, record)
        return session

    def disconnect(self, user_id: str, session_id: str, admin: bool = False) -> None:
        with self._lock:
            session = self._sessions.get(session_id)
            if session is None:
                raise NotFoundError(f"unknown session {session_id!r}")
            if session.user_id != user_id and not admin:
                raise ForbiddenError("session belongs to another user")
            if session.state == CLOSED:
                return  # idempotent
            self.gateway.close_web_bridge(session_id)
            if self.pods.session_known(session_id):
                self.pods.terminate(session_id)
            session.state = CLOSED
            session.web_port = None

    def get(self, session_id: str) -> SessionDescriptor:
        with self._lock:
            session = self._sessions.get(session_id)
            if session is None:
                raise NotFoundError(f"unknown session {session_id!r}")
            return session

    def list_for(self, user_id: str, admin: bool = False,
                 include_closed: bool = False) -> list[SessionDescriptor]:
        with self._lock:
            out = [
                s for s in self._sessions.values()
                if (admin or s.user_id == user_id)
                and (include_closed or s.state != CLOSED)
            ]
        out.sort(key=lambda s: (s.created_at, s.session_id))
        return out

    def live_count(self) -> int:
        with self._lock:
            return sum(1 for s in self._sessions.values() if s.state != CLOSED)

    # -- file upload ---------------------------------------------------------------

    def upload(self, user_id: str, session_id: str, filename: str, data_b64: str,
               admin: bool = False) -> dict:
        """Write an uploaded file into the session pod's working directory."""
        session = self.get(session_id)
        if session.user_id != user_id and not admin:
            raise ForbiddenError("session belongs to another user")
        if session.state != LIVE or session.pod_name is None:
            raise CapacityError("session has no live pod to receive files")
        if not re.fullmatch(r"[\w][\w.\-]*", filename):
            raise ValidationError(f"unsafe filename {filename!r}")
        try:
            data = base64.b64decode(data_b64, validate=True)
        except Exception as exc:
            raise ValidationError(f"bad base64 payload: {exc}") from exc
        if len(data) > UPLOAD_CAP_BYTES:
            raise ValidationError(
                f"upload exceeds the {UPLOAD_CAP_BYTES // 1024**2} MiB cap")
        host = self.pods.cluster.host(session.pod_name)
        if host is None or host.runtime is None:
            raise CapacityError("pod processes are not running")
        path = os.path.join(host.runtime.workdir, filename)
        with open(path, "wb") as fh:
            fh.write(data)
        return {"path": path, "bytes": len(data)}
