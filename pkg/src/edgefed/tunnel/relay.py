"""Socket plumbing shared by the gateway and the pod-side agent."""

from __future__ import annotations

import logging
import socket
import threading

logger = logging.getLogger(__name__)

CHUNK = 65536


def splice(a: socket.socket, b: socket.socket, on_activity=None) -> None:
    """Bidirectional byte pipe between two sockets.

    Runs two pump threads; each direction half-closes its peer on EOF and
    both sockets are fully closed once both directions finish. Returns
    immediately; the pumps are daemon threads.
    """
    done = {"count": 0}
    done_lock = threading.Lock()

    def pump(src: socket.socket, dst: socket.socket):
        try:
            while True:
                try:
                    chunk = src.recv(CHUNK)
                except OSError:
                    break
                if not chunk:
                    break
                if on_activity is not None:
                    on_activity(len(chunk))
                try:
                    dst.sendall(chunk)
                except OSError:
                    break
        finally:
            try:
                dst.shutdown(socket.SHUT_WR)
            except OSError:
                pass
            with done_lock:
                done["count"] += 1
                finished = done["count"] == 2
            if finished:
                for s in (a, b):
                    try:
                        s.close()
                    except OSError:
                        pass

    threading.Thread(target=pump, args=(a, b), daemon=True).start()
    threading.Thread(target=pump, args=(b, a), daemon=True).start()


class SocketListener:
    """TCP listener with an accept thread handing sockets to a callback."""

    def __init__(self, host: str, port: int, on_conn, name: str = "listener"):
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host, port))
        self._sock.listen(64)
        self._on_conn = on_conn
        self.host = host
        self.port = self._sock.getsockname()[1]
        self.closed = False
        self._thread = threading.Thread(target=self._accept_loop, daemon=True, name=name)
        self._thread.start()

    def _accept_loop(self):
        while True:
            try:
                conn, _ = self._sock.accept()
            except OSError:
                return
            try:
                self._on_conn(conn)
            except Exception:
                logger.exception("connection handler failed on port %d", self.port)
                try:
                    conn.close()
                except OSError:
                    pass

    def close(self):
        if self.closed:
            return
        self.closed = True
        # shutdown() wakes the blocked accept(); close() alone leaves the
        # accepting thread holding the port.
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        try:
            self._sock.close()
        except OSError:
            pass


class StubListener:
    """Bookkeeping-only listener for the stub data plane."""

    def __init__(self, host: str, port: int):
        self.host = host
        self.port = port
        self.closed = False

    def close(self):
        self.closed = True


def port_is_bound(host: str, port: int) -> bool:
    """True when something already listens on (host, port)."""
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    try:
        probe.bind((host, port))
    except OSError:
        return True
    finally:
        probe.close()
    return False
