"""Pod-side tunnel agent.

Dials out to the gateway's control port, registers the pod's remote-access
port and local service targets, answers keepalive pings, and opens data
connections back to the gateway whenever it asks for a new stream.
"""

from __future__ import annotations

import json
import logging
import socket
import threading

from ..errors import PortInUseError, ServiceError
from . import frames
from .relay import splice

logger = logging.getLogger(__name__)


class TunnelAgent:
    def __init__(self, gateway_host: str, control_port: int, pod_name: str,
                 remote_port: int, targets: dict[str, int],
                 connect_timeout_s: float = 5.0):
        self.gateway_host = gateway_host
        self.control_port = control_port
        self.pod_name = pod_name
        self.remote_port = remote_port
        self.targets = dict(targets)
        self.connect_timeout_s = connect_timeout_s
        self._sock: socket.socket | None = None
        self._send_lock = threading.Lock()
        self._data_port: int | None = None
        self._thread: threading.Thread | None = None
        self.stopped = False

    def start(self) -> "TunnelAgent":
        sock = socket.create_connection(
            (self.gateway_host, self.control_port), timeout=self.connect_timeout_s
        )
        try:
            frames.write_frame(
                sock, frames.FRAME_REGISTER,
                frames.encode_register(self.pod_name, self.remote_port, self.targets),
            )
            reply = frames.read_frame(sock)
        except OSError as exc:
            sock.close()
            raise ServiceError(f"tunnel handshake failed: {exc}") from exc
        if reply is None:
            sock.close()
            raise ServiceError("gateway closed the control channel during handshake")
        ftype, payload = reply
        if ftype == frames.FRAME_ERR:
            sock.close()
            raise PortInUseError(payload.decode("utf-8", "replace"))
        if ftype != frames.FRAME_OK:
            sock.close()
            raise ServiceError(f"unexpected handshake reply type {ftype}")
        self._data_port = int(json.loads(payload.decode("utf-8"))["data_port"])
        sock.settimeout(None)
        self._sock = sock
        self._thread = threading.Thread(target=self._reader, daemon=True,
                                        name=f"tunnel-agent-{self.pod_name}")
        self._thread.start()
        return self

    def _send(self, ftype: int, payload: bytes = b"") -> None:
        if self._sock is None:
            return
        try:
            with self._send_lock:
                frames.write_frame(self._sock, ftype, payload)
        except OSError:
            pass

    def _reader(self):
        while not self.stopped:
            try:
                frame = frames.read_frame(self._sock)
            except OSError:
                frame = None
            if frame is None:
                return
            ftype, payload = frame
            if ftype == frames.FRAME_PING:
                self._send(frames.FRAME_PONG, payload)
            elif ftype == frames.FRAME_OPEN:
                stream_id, service = frames.decode_open(payload)
                threading.Thread(
                    target=self._open_stream, args=(stream_id, service), daemon=True
                ).start()

    def _open_stream(self, stream_id: int, service: str):
        target_port = self.targets.get(service)
        if not target_port:
            logger.warning("pod %s has no %r service", self.pod_name, service)
            return
        try:
            data = socket.create_connection(
                (self.gateway_host, self._data_port), timeout=self.connect_timeout_s
            )
        except OSError as exc:
            logger.warning("data dial failed for %s: %s", self.pod_name, exc)
            return
        try:
            data.sendall(frames.encode_data_preamble(stream_id))
            local = socket.create_connection(("127.0.0.1", target_port), timeout=self.connect_timeout_s)
        except OSError as exc:
            logger.warning("stream setup failed for %s: %s", self.pod_name, exc)
            data.close()
            return
        data.settimeout(None)
        splice(data, local)

    def stop(self):
        self.stopped = True
        if self._sock is not None:
            try:
                self._sock.close()
            except OSError:
                pass
        self._sock = None
