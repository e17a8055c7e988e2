"""Per-pod process stubs.

A pod at desk scale is a pair of localhost services plus a desktop flag: an
echo service standing in for the remote shell (the tunnel's remote target)
and a display service answering a plain HTTP banner that identifies the pod
(the web bridge target). The stub variant keeps the same surface with no
sockets for high-volume lifecycle tests.

Both variants expose the probe surface (alive / display_ok) with injectable
failures, and a hang set used to exercise startup step timeouts.
"""

from __future__ import annotations

import socket
import tempfile
import threading

from .tunnel.relay import SocketListener

STEP_TUNNEL = "establish-reverse-tunnel"
STEP_DISPLAY = "start-display-server"
STEP_DESKTOP = "start-desktop"
STARTUP_STEPS = (STEP_TUNNEL, STEP_DISPLAY, STEP_DESKTOP)


class BasePodRuntime:
    def __init__(self, pod_name: str, banner_extra: dict | None = None):
        self.pod_name = pod_name
        self.banner_extra = dict(banner_extra or {})
        self.display_started = False
        self.desktop_started = False
        self.stopped = False
        self.tunnel_expired = False
        self.fail_liveness = False
        self.fail_readiness = False
        self.hang_steps: set[str] = set()
        self.workdir = tempfile.mkdtemp(prefix=f"pod-{pod_name}-")

    @property
    def echo_port(self) -> int:
        return 0

    @property
    def display_port(self) -> int:
        return 0

    def start_display(self):
        self.display_started = True

    def start_desktop(self):
        self.desktop_started = True

    def alive(self) -> bool:
        return not self.stopped and not self.fail_liveness

    def display_ok(self) -> bool:
        return self.display_started and not self.stopped and not self.fail_readiness

    def stop(self):
        self.stopped = True
        self.display_started = False
        self.desktop_started = False

    def banner(self) -> str:
        lines = [f"pod: {self.pod_name}", "desktop: stub session"]
        for key in sorted(self.banner_extra):
            lines.append(f"{key}: {self.banner_extra[key]}")
        return "\n".join(lines) + "\n"


class StubPodRuntime(BasePodRuntime):
    """No sockets; service ports are symbolic."""


class SocketPodRuntime(BasePodRuntime):
    """Real localhost listeners for the echo and display services."""

    def __init__(self, pod_name: str, banner_extra: dict | None = None, host: str = "127.0.0.1"):
        super().__init__(pod_name, banner_extra)
        self._host = host
        self._echo = SocketListener(host, 0, self._serve_echo, name=f"echo-{pod_name}")
        self._display = SocketListener(host, 0, self._serve_display, name=f"display-{pod_name}")
        self._display_gate = threading.Event()

    @property
    def echo_port(self) -> int:
        return self._echo.port

    @property
    def display_port(self) -> int:
        return self._display.port

    def start_display(self):
        super().start_display()
        self._display_gate.set()

    def _serve_echo(self, conn: socket.socket):
        def pump():
            try:
                while True:
                    chunk = conn.recv(65536)
                    if not chunk:
                        return
                    conn.sendall(chunk)
            except OSError:
                pass
            finally:
                try:
                    conn.close()
                except OSError:
                    pass
        threading.Thread(target=pump, daemon=True).start()

    def _serve_display(self, conn: socket.socket):
        def respond():
            try:
                # Connections queue in the backlog until the display step ran.
                self._display_gate.wait(timeout=10.0)
                conn.settimeout(5.0)
                try:
                    conn.recv(65536)
                except OSError:
                    pass
                body = self.banner().encode("utf-8")
                head = (
                    "HTTP/1.1 200 OK\r\n"
                    "Content-Type: text/plain; charset=utf-8\r\n"
                    f"Content-Length: {len(body)}\r\n"
                    "Connection: close\r\n\r\n"
                ).encode("ascii")
                conn.sendall(head + body)
            except OSError:
                pass
            finally:
                try:
                    conn.close()
                except OSError:
                    pass
        threading.Thread(target=respond, daemon=True).start()

    def alive(self) -> bool:
        return super().alive() and not self._echo.closed

    def stop(self):
        super().stop()
        self._display_gate.set()
        self._echo.close()
        self._display.close()


def make_runtime(mode: str, pod_name: str, banner_extra: dict | None = None) -> BasePodRuntime:
    if mode == "sockets":
        return SocketPodRuntime(pod_name, banner_extra)
    return StubPodRuntime(pod_name, banner_extra)
