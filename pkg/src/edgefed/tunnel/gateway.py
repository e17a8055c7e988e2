"""The session gateway: reverse tunnel registry, web bridges, keepalives.

Pods register tunnels by dialing the gateway's control port (or directly, in
the stub data plane). For each registration the gateway listens on the pod's
assigned remote-access port and relays every connection over a pod-initiated
data connection, so traffic always flows through the reverse path. Web
bridges do the same on the session's web-view port toward the pod's display
service.

Keepalive accounting runs on the injectable clock: application traffic counts
as liveness, otherwise a ping is sent and a pong awaited with a short
real-time grace. A registration expires after max_missed consecutive silent
intervals. An optional idle_timeout_s reproduces the legacy
drop-idle-sessions behavior that keepalives exist to prevent.
"""

from __future__ import annotations

import itertools
import json
import logging
import socket
import threading
from dataclasses import dataclass

from ..errors import PortInUseError, TunnelExpiredError, ValidationError
from . import frames
from .relay import SocketListener, StubListener, port_is_bound, splice

logger = logging.getLogger(__name__)

MODE_SOCKETS = "sockets"
MODE_STUB = "stub"


@dataclass(frozen=True)
class KeepalivePolicy:
    interval_s: float = 15.0
    max_missed: int = 3

    def __post_init__(self):
        if self.interval_s <= 0:
            raise ValidationError("keepalive interval must be positive")
        if self.max_missed < 1:
            raise ValidationError("max_missed must be >= 1")


class StubPeer:
    """Always-reachable control peer for the stub data plane."""

    def __init__(self):
        self.healthy = True

    def ping(self, wait_s: float) -> bool:
        return self.healthy

    def open_stream(self, service: str, timeout: float = 5.0):
        return None

    def kill(self):
        self.healthy = False

    def close(self):
        self.healthy = False


class WirePeer:
    """Gateway-side view of one pod's control connection."""

    def __init__(self, sock: socket.socket, broker: "StreamBroker"):
        self._sock = sock
        self._broker = broker
        self._send_lock = threading.Lock()
        self._pong_events: dict[int, threading.Event] = {}
        self._token = itertools.count()
        self._dead = False
        self.on_activity = None  # set by the registration

    def _send(self, ftype: int, payload: bytes = b"") -> bool:
        if self._dead:
            return False
        try:
            with self._send_lock:
                frames.write_frame(self._sock, ftype, payload)
            return True
        except OSError:
            self._dead = True
            return False

    def ping(self, wait_s: float) -> bool:
        token = next(self._token) & 0xFF
        event = threading.Event()
        self._pong_events[token] = event
        try:
            if not self._send(frames.FRAME_PING, bytes([token])):
                return False
            return event.wait(wait_s)
        finally:
            self._pong_events.pop(token, None)

    def handle_frame(self, ftype: int, payload: bytes) -> None:
        if ftype == frames.FRAME_PONG and payload:
            event = self._pong_events.get(payload[0])
            if event is not None:
                event.set()
        elif ftype == frames.FRAME_PING and payload:
            self._send(frames.FRAME_PONG, payload)
        if self.on_activity is not None:
            self.on_activity(0)

    def open_stream(self, service: str, timeout: float = 5.0):
        if self._dead:
            return None
        return self._broker.open(
            lambda sid: self._send(frames.FRAME_OPEN, frames.encode_open(sid, service)),
            timeout,
        )

    def close(self):
        self._dead = True
        try:
            self._sock.close()
        except OSError:
            pass


class _PendingStream:
    __slots__ = ("event", "sock")

    def __init__(self):
        self.event = threading.Event()
        self.sock = None


class StreamBroker:
    """Matches OPEN requests with pod-initiated data connections."""

    def __init__(self, host: str):
        self._pending: dict[int, _PendingStream] = {}
        self._lock = threading.Lock()
        self._ids = itertools.count(1)
        self._listener = SocketListener(host, 0, self._on_data_conn, name="tunnel-data")

    @property
    def data_port(self) -> int:
        return self._listener.port

    def open(self, send_open, timeout: float):
        stream_id = next(self._ids) & 0xFFFF
        slot = _PendingStream()
        with self._lock:
            self._pending[stream_id] = slot
        ok = send_open(stream_id)
        if not ok or not slot.event.wait(timeout):
            with self._lock:
                self._pending.pop(stream_id, None)
            return None if not slot.sock else slot.sock
        return slot.sock

    def _on_data_conn(self, conn: socket.socket):
        conn.settimeout(5.0)
        try:
            stream_id = frames.read_data_preamble(conn)
        except OSError:
            conn.close()
            return
        with self._lock:
            slot = self._pending.pop(stream_id, None) if stream_id is not None else None
        if slot is None:
            conn.close()
            return
        conn.settimeout(None)
        slot.sock = conn
        slot.event.set()

    def close(self):
        self._listener.close()


class TunnelRegistration:
    def __init__(self, pod_name: str, remote_port: int, target, peer, established_at: float):
        self.pod_name = pod_name
        self.remote_port = remote_port
        self.target = target
        self.peer = peer
        self.established_at = established_at
        self.last_keepalive_at = established_at
        self.last_activity_at = established_at
        self.missed = 0
        self.expired = False
        self.expire_reason: str | None = None
        self.bytes_relayed = 0
        self.listener = None
        self._activity_flag = False
        self._lock = threading.Lock()

    def touch(self, now: float, nbytes: int = 0) -> None:
        with self._lock:
            self.last_activity_at = max(self.last_activity_at, now)
            self.bytes_relayed += nbytes
            self._activity_flag = True

    def take_activity_flag(self) -> bool:
        with self._lock:
            flag = self._activity_flag
            self._activity_flag = False
            return flag

    def mark_alive(self, now: float) -> None:
        with self._lock:
            self.last_keepalive_at = max(self.last_keepalive_at, now)
            self.missed = 0


@dataclass
class WebBridge:
    session_id: str
    web_port: int
    remote_port: int
    listener: object = None


class TunnelGateway:
    def __init__(self, clock, policy: KeepalivePolicy | None = None, *,
                 mode: str = MODE_SOCKETS, host: str = "127.0.0.1",
                 keepalives_enabled: bool = True, idle_timeout_s: float | None = None,
                 pong_grace_s: float = 0.25, on_expired=None, metrics=None):
        if mode not in (MODE_SOCKETS, MODE_STUB):
            raise ValidationError(f"unknown gateway mode {mode!r}")
        self.clock = clock
        self.policy = policy or KeepalivePolicy()
        self.mode = mode
        self.host = host
        self.keepalives_enabled = keepalives_enabled
        self.idle_timeout_s = idle_timeout_s
        self.pong_grace_s = pong_grace_s
        self.on_expired = on_expired
        self.metrics = metrics
        self._lock = threading.RLock()
        self._registrations: dict[int, TunnelRegistration] = {}
        self._bridges: dict[str, WebBridge] = {}
        self._listeners: dict[int, object] = {}
        self._tickers: dict[int, object] = {}
        self._control_listener = None
        self._broker: StreamBroker | None = None
        self._started = False

    # -- lifecycle ----------------------------------------------------------

    def start(self):
        if self._started:
            return self
        self._started = True
        if self.mode == MODE_SOCKETS:
            self._broker = StreamBroker(self.host)
            self._control_listener = SocketListener(
                self.host, 0, self._on_control_conn, name="tunnel-control"
            )
        return self

    def stop(self):
        with self._lock:
            ports = list(self._registrations)
        for port in ports:
            self.unregister(port, reason="gateway-stop")
        if self._control_listener is not None:
            self._control_listener.close()
        if self._broker is not None:
            self._broker.close()
        self._started = False

    @property
    def control_endpoint(self) -> tuple[str, int]:
        if self._control_listener is None:
            raise ValidationError("gateway not started in sockets mode")
        return (self.host, self._control_listener.port)

    # -- control channel (sockets mode) --------------------------------------

    def _on_control_conn(self, conn: socket.socket):
        threading.Thread(target=self._control_session, args=(conn,), daemon=True,
                         name="tunnel-control-session").start()

    def _control_session(self, conn: socket.socket):
        conn.settimeout(5.0)
        try:
            frame = frames.read_frame(conn)
        except OSError:
            conn.close()
            return
        if frame is None or frame[0] != frames.FRAME_REGISTER:
            conn.close()
            return
        try:
            pod_name, remote_port, targets = frames.decode_register(frame[1])
        except Exception:
            try:
                frames.write_frame(conn, frames.FRAME_ERR, b"bad-register")
            except OSError:
                pass
            conn.close()
            return
        peer = WirePeer(conn, self._broker)
        try:
            registration = self.register_tunnel(
                pod_name, remote_port,
                target=("agent", targets.get("remote", 0)),
                peer=peer,
            )
        except PortInUseError as exc:
            try:
                frames.write_frame(conn, frames.FRAME_ERR, str(exc).encode()[:255])
            except OSError:
                pass
            conn.close()
            return
        reply = json.dumps({"data_port": self._broker.data_port}).encode()
        try:
            frames.write_frame(conn, frames.FRAME_OK, reply)
        except OSError:
            self.unregister(remote_port, reason="handshake-failed")
            conn.close()
            return
        conn.settimeout(None)
        # This thread becomes the peer's frame reader for the life of the
        # tunnel. EOF marks the peer dead; expiry is keepalive-driven.
        while True:
            try:
                frame = frames.read_frame(conn)
            except OSError:
                frame = None
            if frame is None:
                peer._dead = True
                return
            peer.handle_frame(*frame)

    # -- registration ---------------------------------------------------------

    def register_tunnel(self, pod_name: str, remote_port: int, target, peer=None) -> TunnelRegistration:
        if not self._started:
            self.start()
        now = self.clock.now()
        with self._lock:
            if remote_port in self._registrations:
                raise PortInUseError(f"remote port {remote_port} already registered",
                                     port=remote_port)
            registration = TunnelRegistration(pod_name, remote_port, target,
                                              peer or StubPeer(), now)
            self._registrations[remote_port] = registration
            listener = self._make_listener(remote_port, service="remote",
                                           registration=registration)
            registration.listener = listener
            self._listeners[remote_port] = listener
            self._tickers[remote_port] = self.clock.every(
                self.policy.interval_s, self._tick_port, remote_port
            )
        if isinstance(registration.peer, WirePeer):
            registration.peer.on_activity = lambda n: registration.touch(self.clock.now(), n)
        if self.metrics is not None:
            self.metrics.inc("tunnel_registrations_total", {"pod": pod_name})
        logger.info("tunnel registered pod=%s remote_port=%d", pod_name, remote_port)
        return registration

    def _make_listener(self, port: int, service: str, registration: TunnelRegistration):
        if self.mode == MODE_STUB:
            return StubListener(self.host, port)
        try:
            return SocketListener(
                self.host, port,
                lambda conn: self._on_public_conn(conn, registration, service),
                name=f"tunnel-{service}-{port}",
            )
        except OSError as exc:
            raise PortInUseError(f"cannot bind port {port}: {exc}", port=port) from exc

    def _on_public_conn(self, conn: socket.socket, registration: TunnelRegistration, service: str):
        if registration.expired:
            conn.close()
            return
        def connect_and_splice():
            stream = registration.peer.open_stream(service)
            if stream is None:
                conn.close()
                return
            registration.touch(self.clock.now())
            splice(conn, stream, on_activity=lambda n: registration.touch(self.clock.now(), n))
        threading.Thread(target=connect_and_splice, daemon=True).start()

    def unregister(self, remote_port: int, reason: str = "terminated") -> None:
        with self._lock:
            registration = self._registrations.pop(remote_port, None)
            if registration is None:
                return
            registration.expired = True
            registration.expire_reason = reason
            ticker = self._tickers.pop(remote_port, None)
            listener = self._listeners.pop(remote_port, None)
            bridge_sessions = [
                s for s, b in self._bridges.items() if b.remote_port == remote_port
            ]
        if ticker is not None:
            ticker.cancel()
        if listener is not None:
            listener.close()
        for session_id in bridge_sessions:
            self.close_web_bridge(session_id)
        registration.peer.close()
        logger.info("tunnel unregistered pod=%s remote_port=%d reason=%s",
                    registration.pod_name, remote_port, reason)

    def registration(self, remote_port: int) -> TunnelRegistration | None:
        with self._lock:
            return self._registrations.get(remote_port)

    def registrations(self) -> list[TunnelRegistration]:
        with self._lock:
            return [self._registrations[p] for p in sorted(self._registrations)]

    def alive(self, remote_port: int) -> bool:
        registration = self.registration(remote_port)
        return registration is not None and not registration.expired

    # -- keepalive ------------------------------------------------------------

    def _tick_port(self, remote_port: int):
        registration = self.registration(remote_port)
        if registration is not None:
            self.keepalive_tick(registration, self.clock.now())

    def keepalive_tick(self, registration: TunnelRegistration, now: float) -> str:
        if registration.expired:
            return "expired"
        if self.idle_timeout_s is not None:
            if now - registration.last_activity_at > self.idle_timeout_s:
                self._expire(registration, "idle-timeout")
                return "expired"
        if not self.keepalives_enabled:
            return "alive"
        if registration.take_activity_flag():
            # Traffic since the previous tick counts as liveness: no probe.
            registration.mark_alive(now)
            return "alive"
        if registration.peer.ping(self.pong_grace_s):
            registration.mark_alive(now)
            registration.touch(now)
            return "alive"
        registration.missed += 1
        if registration.missed >= self.policy.max_missed:
            self._expire(registration, "keepalive-missed")
            return "expired"
        return "alive"

    def _expire(self, registration: TunnelRegistration, reason: str):
        pod_name = registration.pod_name
        self.unregister(registration.remote_port, reason=reason)
        if self.metrics is not None:
            self.metrics.inc("tunnel_expired_total", {"pod": pod_name, "reason": reason})
        if self.on_expired is not None:
            try:
                self.on_expired(pod_name, reason)
            except Exception:
                logger.exception("tunnel expiry callback failed")

    # -- web bridges ------------------------------------------------------------

    def open_web_bridge(self, session_id: str, web_port: int, remote_port: int) -> WebBridge:
        with self._lock:
            existing = self._bridges.get(session_id)
            if existing is not None:
                if existing.web_port == web_port and not getattr(existing.listener, "closed", True):
                    return existing
                self._close_bridge_locked(session_id)
            registration = self._registrations.get(remote_port)
            if registration is None or registration.expired:
                raise TunnelExpiredError(
                    f"no live tunnel on remote port {remote_port}", port=remote_port
                )
            listener = self._make_listener(web_port, service="web", registration=registration)
            bridge = WebBridge(session_id=session_id, web_port=web_port,
                               remote_port=remote_port, listener=listener)
            self._bridges[session_id] = bridge
            self._listeners[web_port] = listener
            return bridge

    def close_web_bridge(self, session_id: str) -> None:
        with self._lock:
            self._close_bridge_locked(session_id)

    def _close_bridge_locked(self, session_id: str) -> None:
        bridge = self._bridges.pop(session_id, None)
        if bridge is None:
            return
        self._listeners.pop(bridge.web_port, None)
        if bridge.listener is not None:
            bridge.listener.close()

    def web_bridge(self, session_id: str) -> WebBridge | None:
        with self._lock:
            return self._bridges.get(session_id)

    # -- managed listener view (port reclaim) -----------------------------------

    def lookup(self, port: int):
        with self._lock:
            return self._listeners.get(port)

    def close(self, port: int) -> None:
        with self._lock:
            listener = self._listeners.pop(port, None)
            registered = port in self._registrations
        if listener is not None:
            listener.close()
        if registered:
            self.unregister(port, reason="reclaimed")

    def bound(self, port: int) -> bool:
        with self._lock:
            if port in self._listeners:
                return True
        if self.mode == MODE_SOCKETS:
            return port_is_bound(self.host, port)
        return False
