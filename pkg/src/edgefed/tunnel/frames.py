"""Control-channel framing.

Every control frame is a 2-byte header (type, length) followed by `length`
payload bytes; payloads are capped at 255 bytes. Keepalives are a 1-byte
ping/pong token. Stream opens carry a 2-byte stream id plus a service byte.
Data connections to the gateway's data port start with a 6-byte preamble:
the magic "EFD1" and the 2-byte stream id. Documented in docs/PROTOCOLS.md.
"""

from __future__ import annotations

import json
import socket
import struct

FRAME_PING = 0x01
FRAME_PONG = 0x02
FRAME_REGISTER = 0x03
FRAME_OPEN = 0x04
FRAME_CLOSE = 0x05
FRAME_OK = 0x06
FRAME_ERR = 0x07

SERVICE_REMOTE = 0x00
SERVICE_WEB = 0x01
SERVICE_NAMES = {SERVICE_REMOTE: "remote", SERVICE_WEB: "web"}
SERVICE_CODES = {v: k for k, v in SERVICE_NAMES.items()}

DATA_MAGIC = b"EFD1"
MAX_PAYLOAD = 255


class FrameError(Exception):
    pass


def recv_exact(sock: socket.socket, n: int) -> bytes | None:
    """n bytes or None on clean EOF; raises OSError on socket errors."""
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            return None
        buf += chunk
    return buf


def write_frame(sock: socket.socket, ftype: int, payload: bytes = b"") -> None:
    if len(payload) > MAX_PAYLOAD:
        raise FrameError(f"payload too long ({len(payload)} bytes)")
    sock.sendall(struct.pack("!BB", ftype, len(payload)) + payload)


def read_frame(sock: socket.socket) -> tuple[int, bytes] | None:
    header = recv_exact(sock, 2)
    if header is None:
        return None
    ftype, length = struct.unpack("!BB", header)
    payload = b""
    if length:
        payload = recv_exact(sock, length)
        if payload is None:
            return None
    return ftype, payload


def encode_register(pod_name: str, remote_port: int, targets: dict[str, int]) -> bytes:
    doc = {"pod": pod_name, "port": remote_port, "targets": targets}
    payload = json.dumps(doc, separators=(",", ":")).encode("utf-8")
    if len(payload) > MAX_PAYLOAD:
        raise FrameError("registration payload too long")
    return payload


def decode_register(payload: bytes) -> tuple[str, int, dict[str, int]]:
    doc = json.loads(payload.decode("utf-8"))
    return str(doc["pod"]), int(doc["port"]), {str(k): int(v) for k, v in doc["targets"].items()}


def encode_open(stream_id: int, service: str) -> bytes:
    return struct.pack("!HB", stream_id, SERVICE_CODES[service])


def decode_open(payload: bytes) -> tuple[int, str]:
    stream_id, code = struct.unpack("!HB", payload)
    return stream_id, SERVICE_NAMES[code]


def encode_data_preamble(stream_id: int) -> bytes:
    return DATA_MAGIC + struct.pack("!H", stream_id)


def read_data_preamble(sock: socket.socket) -> int | None:
    head = recv_exact(sock, 6)
    if head is None or head[:4] != DATA_MAGIC:
        return None
    return struct.unpack("!H", head[4:])[0]
