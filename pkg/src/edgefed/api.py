"""HTTP gateway: authentication, endpoint exposure, request routing.

JSON over HTTP/1.1 via the stdlib threading server. The endpoint table and
body schemas are the portal contract, documented in docs/API.md. Every
state-mutating endpoint requires a valid bearer token; GET /metrics is the
unauthenticated scrape surface.
"""

from __future__ import annotations

import json
import logging
import mimetypes
import os
import re
import threading
import urllib.parse
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .errors import (
    CapacityError,
    ConflictError,
    ForbiddenError,
    InvalidWindowError,
    NotFoundError,
    PortInUseError,
    PortsExhaustedError,
    ReclaimError,
    ServiceError,
    StoreUnavailableError,
    UnauthorizedError,
    ValidationError,
)
from .reservations import Window

logger = logging.getLogger(__name__)

STATUS_BY_CODE = {
    "unauthorized": 401,
    "forbidden": 403,
    "not-found": 404,
    "conflict": 409,
    "port-in-use": 409,
    "invalid": 400,
    "invalid-window": 400,
    "no-capacity": 503,
    "port-exhausted": 503,
    "reclaim-failed": 503,
    "store-unavailable": 503,
    "pod-not-ready": 409,
    "tunnel-expired": 409,
    "node-draining": 503,
    "internal": 500,
}

MAX_BODY_BYTES = 96 * 1024**2  # fits the 64 MiB upload cap with base64 overhead


class ApiServer:
    def __init__(self, core, authenticator, host: str = "127.0.0.1", port: int = 0,
                 portal_dir: str | None = None):
        self.core = core
        self.auth = authenticator
        self.portal_dir = portal_dir
        self.routes = [
            ("POST", re.compile(r"^/auth$"), self._post_auth, False),
            ("GET", re.compile(r"^/inventory$"), self._get_inventory, True),
            ("GET", re.compile(r"^/reservations$"), self._get_reservations, True),
            ("POST", re.compile(r"^/reservations$"), self._post_reservation, True),
            ("DELETE", re.compile(r"^/reservations/(?P<rid>[^/]+)$"), self._delete_reservation, True),
            ("POST", re.compile(r"^/sessions$"), self._post_session, True),
            ("GET", re.compile(r"^/sessions$"), self._get_sessions, True),
            ("DELETE", re.compile(r"^/sessions/(?P<sid>[^/]+)$"), self._delete_session, True),
            ("POST", re.compile(r"^/sessions/(?P<sid>[^/]+)/files$"), self._post_file, True),
            ("GET", re.compile(r"^/cluster$"), self._get_cluster, True),
            ("GET", re.compile(r"^/pods/(?P<name>[^/]+)$"), self._get_pod, True),
            ("GET", re.compile(r"^/metrics$"), self._get_metrics, False),
        ]
        server = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def log_message(self, fmt, *args):
                logger.debug("http %s", fmt % args)

            def do_GET(self):
                server.dispatch(self, "GET")

            def do_POST(self):
                server.dispatch(self, "POST")

            def do_DELETE(self):
                server.dispatch(self, "DELETE")

        self._httpd = ThreadingHTTPServer((host, port), Handler)
        self._httpd.daemon_threads = True
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self._httpd.server_address[:2]

    def start(self) -> "ApiServer":
        self._thread = threading.Thread(target=self._httpd.serve_forever,
                                        daemon=True, name="api-server")
        self._thread.start()
        return self

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=2.0)

    # -- dispatch -------------------------------------------------------------

    def dispatch(self, handler: BaseHTTPRequestHandler, method: str) -> None:
        parsed = urllib.parse.urlsplit(handler.path)
        path = parsed.path
        query = {k: v[0] for k, v in urllib.parse.parse_qs(parsed.query).items()}
        if method == "GET" and self.portal_dir and (path == "/" or path.startswith("/portal")):
            self._serve_static(handler, path)
            return
        for route_method, pattern, fn, needs_auth in self.routes:
            if route_method != method:
                continue
            match = pattern.match(path)
            if match is None:
                continue
            try:
                token = None
                if needs_auth:
                    token = self._bearer_token(handler)
                body = self._read_json(handler) if method in ("POST",) else None
                status, payload = fn(token=token, body=body or {}, query=query,
                                     **match.groupdict())
            except ServiceError as exc:
                status = STATUS_BY_CODE.get(exc.code, 500)
                payload = exc.to_dict()
            except Exception:
                logger.exception("handler failure on %s %s", method, path)
                status, payload = 500, {"error": "internal", "message": "handler failure"}
            self._send_json(handler, status, payload)
            return
        self._send_json(handler, 404, {"error": "not-found", "message": f"no route {path}"})

    def _bearer_token(self, handler):
        header = handler.headers.get("Authorization", "")
        token_str = header[7:] if header.startswith("Bearer ") else None
        return self.auth.validate(token_str)

    def _read_json(self, handler) -> dict | None:
        length = int(handler.headers.get("Content-Length") or 0)
        if length == 0:
            return None
        if length > MAX_BODY_BYTES:
            raise ValidationError("request body too large")
        raw = handler.rfile.read(length)
        try:
            doc = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ValidationError(f"bad JSON body: {exc}") from exc
        if not isinstance(doc, dict):
            raise ValidationError("JSON body must be an object")
        return doc

    def _send_json(self, handler, status: int, payload) -> None:
        if status == 204:
            body, ctype = b"", "application/json"
        elif isinstance(payload, (bytes, str)):
            body = payload.encode("utf-8") if isinstance(payload, str) else payload
            ctype = "text/plain; charset=utf-8"
        else:
            body = (json.dumps(payload, sort_keys=True) + "\n").encode("utf-8")
            ctype = "application/json"
        try:
            handler.send_response(status)
            handler.send_header("Content-Type", ctype)
            handler.send_header("Content-Length", str(len(body)))
            handler.end_headers()
            if handler.command != "HEAD":
                handler.wfile.write(body)
        except (BrokenPipeError, ConnectionResetError):
            pass

    def _serve_static(self, handler, path: str) -> None:
        rel = path[len("/portal"):] if path.startswith("/portal") else path
        rel = rel.lstrip("/") or "index.html"
        full = os.path.realpath(os.path.join(self.portal_dir, rel))
        if not full.startswith(os.path.realpath(self.portal_dir)) or not os.path.isfile(full):
            self._send_json(handler, 404, {"error": "not-found", "message": rel})
            return
        with open(full, "rb") as fh:
            body = fh.read()
        ctype = mimetypes.guess_type(full)[0] or "application/octet-stream"
        handler.send_response(200)
        handler.send_header("Content-Type", ctype)
        handler.send_header("Content-Length", str(len(body)))
        handler.end_headers()
        handler.wfile.write(body)

    # -- handlers ------------------------------------------------------------------

    def _post_auth(self, token, body, query):
        user_id = str(body.get("user_id", ""))
        password = str(body.get("password", ""))
        issued = self.auth.authenticate(user_id, password)
        return 200, issued.to_dict()

    def _get_inventory(self, token, body, query):
        return 200, self.core.inventory.tree(
            lab=query.get("lab"), testbed=query.get("testbed"))

    def _get_reservations(self, token, body, query):
        out = self.core.reservations.list(
            user_id=query.get("user"), testbed_id=query.get("testbed"))
        return 200, {"reservations": [r.to_dict() for r in out]}

    def _post_reservation(self, token, body, query):
        try:
            window = Window(float(body["start"]), float(body["end"]))
            testbed_id = str(body["testbed_id"])
            node_id = str(body["node_id"])
            device_ids = set(body["device_ids"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"bad reservation body: {exc}") from exc
        reservation = self.core.reservations.create(
            token.user_id, testbed_id, node_id, device_ids, window)
        return 201, reservation.to_dict()

    def _delete_reservation(self, token, body, query, rid):
        self.core.reservations.cancel(rid, token.user_id, admin=token.role == "admin")
        return 204, {}

    def _post_session(self, token, body, query):
        try:
            reservation_id = str(body["reservation_id"])
            app = str(body["app"])
        except KeyError as exc:
            raise ValidationError(f"missing field {exc}") from exc
        instance = str(body.get("instance", "new"))
        wait = bool(body.get("wait", True))
        session = self.core.sessions.connect(
            token.user_id, reservation_id, app, instance=instance,
            wait_timeout_s=self.core.config.connect_wait_timeout_s, wait=wait,
        )
        doc = session.to_dict()
        if session.state == "Live" or not wait:
            return 200, doc
        record = self.core.pods.get_optional(session.pod_name) if session.pod_name else None
        if record is not None and record.phase == "Pending":
            raise CapacityError(
                "no capacity for the session pod; retry after resources free up",
                session=doc, reason=record.pending_reason,
            )
        if record is not None and record.phase == "Failed":
            raise ServiceError(
                f"pod startup failed at {record.failed_step}", session=doc)
        return 200, doc

    def _get_sessions(self, token, body, query):
        sessions = self.core.sessions.list_for(
            token.user_id, admin=token.role == "admin",
            include_closed=query.get("all") == "true")
        return 200, {"sessions": [s.to_dict() for s in sessions]}

    def _delete_session(self, token, body, query, sid):
        self.core.sessions.disconnect(token.user_id, sid, admin=token.role == "admin")
        return 204, {}

    def _post_file(self, token, body, query, sid):
        try:
            name = str(body["name"])
            data = str(body["data_b64"])
        except KeyError as exc:
            raise ValidationError(f"missing field {exc}") from exc
        result = self.core.sessions.upload(
            token.user_id, sid, name, data, admin=token.role == "admin")
        return 200, result

    def _get_cluster(self, token, body, query):
        reports = self.core.cluster.report_all()
        if token.role == "admin":
            return 200, {
                "nodes": reports,
                "control_plane": {
                    "node_id": self.core.cluster.control_plane.node_id
                    if self.core.cluster.control_plane else None,
                },
                "desired_replicas": dict(self.core.cluster.desired_replicas),
            }
        pods = []
        for report in reports:
            for pod in report["pods"]:
                pods.append({"name": pod["name"], "phase": pod["phase"],
                             "ready": pod["ready"]})
        return 200, {"pods": sorted(pods, key=lambda p: p["name"])}

    def _get_pod(self, token, body, query, name):
        record = self.core.pods.get(name)
        doc = record.to_dict()
        if token.role != "admin":
            doc.pop("node_id", None)
        return 200, doc

    def _get_metrics(self, token, body, query):
        return 200, self.core.metrics.scrape()
