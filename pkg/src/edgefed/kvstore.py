"""Index store backends.

The default backend is in-memory with a store-level mutual exclusion guard.
An optional TCP backend speaks the line protocol documented bit-exactly in
docs/PROTOCOLS.md, for multi-process runs:

    GET <prefix>       ->  OK <n> then n key lines
    VAL <key>          ->  OK <json> | ERR not-found
    SET <key> <json>   ->  OK | ERR exists
    DEL <key>          ->  OK

SET is create-only, which is what makes remote allocation safe without wire
locks: the allocator re-reads and retries when it loses the race.
"""

from __future__ import annotations

import contextlib
import json
import logging
import socket
import socketserver
import threading

from .errors import StoreUnavailableError

logger = logging.getLogger(__name__)


class MemoryIndexStore:
    def __init__(self):
        self._data: dict[str, dict] = {}
        self._lock = threading.RLock()

    def guard(self):
        """Store-level mutual exclusion for read-choose-write sequences."""
        return self._lock

    def keys(self, prefix: str = "") -> list[str]:
        with self._lock:
            return sorted(k for k in self._data if k.startswith(prefix))

    def get(self, key: str) -> dict | None:
        with self._lock:
            value = self._data.get(key)
            return dict(value) if value is not None else None

    def put_new(self, key: str, value: dict) -> bool:
        with self._lock:
            if key in self._data:
                return False
            self._data[key] = dict(value)
            return True

    def delete(self, key: str) -> None:
        with self._lock:
            self._data.pop(key, None)

    def __len__(self) -> int:
        with self._lock:
            return len(self._data)


class _StoreHandler(socketserver.StreamRequestHandler):
    def handle(self):
        store = self.server.store  # type: ignore[attr-defined]
        while True:
            line = self.rfile.readline()
            if not line:
                return
            try:
                text = line.decode("utf-8").rstrip("\n")
            except UnicodeDecodeError:
                self._send("ERR bad-request")
                continue
            self._dispatch(store, text)

    def _send(self, text: str):
        self.wfile.write((text + "\n").encode("utf-8"))
        self.wfile.flush()

    def _dispatch(self, store, text: str):
        verb, _, rest = text.partition(" ")
        if verb == "GET":
            keys = store.keys(rest)
            self._send(f"OK {len(keys)}")
            for key in keys:
                self._send(key)
        elif verb == "VAL":
            value = store.get(rest)
            if value is None:
                self._send("ERR not-found")
            else:
                self._send("OK " + json.dumps(value, sort_keys=True))
        elif verb == "SET":
            key, _, payload = rest.partition(" ")
            try:
                value = json.loads(payload)
            except json.JSONDecodeError:
                self._send("ERR bad-json")
                return
            if store.put_new(key, value):
                self._send("OK")
            else:
                self._send("ERR exists")
        elif verb == "DEL":
            store.delete(rest)
            self._send("OK")
        else:
            self._send("ERR bad-request")


class IndexStoreServer:
    """Serves a MemoryIndexStore over the line protocol."""

    def __init__(self, store: MemoryIndexStore | None = None,
                 host: str = "127.0.0.1", port: int = 0):
        self.store = store or MemoryIndexStore()
        self._server = socketserver.ThreadingTCPServer((host, port), _StoreHandler, bind_and_activate=True)
        self._server.daemon_threads = True
        self._server.store = self.store  # type: ignore[attr-defined]
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address[:2]

    def start(self):
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True,
                                        name="index-store-server")
        self._thread.start()

    def stop(self):
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=2.0)


class RemoteIndexStore:
    """Line-protocol client. One persistent connection, one request at a time."""

    def __init__(self, host: str, port: int, timeout_s: float = 5.0):
        self._addr = (host, port)
        self._timeout = timeout_s
        self._lock = threading.RLock()
        self._sock: socket.socket | None = None
        self._rfile = None

    def guard(self):
        # Atomicity over the wire comes from SET being create-only plus
        # allocator retries, not from holding a lock across requests.
        return contextlib.nullcontext()

    def _connect(self):
        if self._sock is not None:
            return
        try:
            self._sock = socket.create_connection(self._addr, timeout=self._timeout)
            self._rfile = self._sock.makefile("rb")
        except OSError as exc:
            self._sock = None
            raise StoreUnavailableError(f"cannot reach index store at {self._addr}: {exc}") from exc

    def _reset(self):
        if self._sock is not None:
            try:
                self._sock.close()
            except OSError:
                pass
        self._sock = None
        self._rfile = None

    def _request(self, line: str) -> str:
        with self._lock:
            self._connect()
            try:
                self._sock.sendall((line + "\n").encode("utf-8"))
                return self._readline()
            except OSError as exc:
                self._reset()
                raise StoreUnavailableError(f"index store request failed: {exc}") from exc

    def _readline(self) -> str:
        raw = self._rfile.readline()
        if not raw:
            self._reset()
            raise StoreUnavailableError("index store closed the connection")
        return raw.decode("utf-8").rstrip("\n")

    def keys(self, prefix: str = "") -> list[str]:
        with self._lock:
            reply = self._request("GET " + prefix)
            if not reply.startswith("OK "):
                raise StoreUnavailableError(f"unexpected GET reply {reply!r}")
            count = int(reply[3:])
            try:
                return [self._readline() for _ in range(count)]
            except OSError as exc:
                self._reset()
                raise StoreUnavailableError(f"index store read failed: {exc}") from exc

    def get(self, key: str) -> dict | None:
        reply = self._request("VAL " + key)
        if reply == "ERR not-found":
            return None
        if reply.startswith("OK "):
            return json.loads(reply[3:])
        raise StoreUnavailableError(f"unexpected VAL reply {reply!r}")

    def put_new(self, key: str, value: dict) -> bool:
        reply = self._request(f"SET {key} " + json.dumps(value, sort_keys=True))
        if reply == "OK":
            return True
        if reply == "ERR exists":
            return False
        raise StoreUnavailableError(f"unexpected SET reply {reply!r}")

    def delete(self, key: str) -> None:
        reply = self._request("DEL " + key)
        if reply != "OK":
            raise StoreUnavailableError(f"unexpected DEL reply {reply!r}")

    def close(self):
        with self._lock:
            self._reset()
