"""Pod lifecycle orchestration.

Drives each experiment pod through ordinal naming, scheduling, simulated
image pull, the startup plan (reverse tunnel, display server, desktop stub),
readiness/liveness probes, reuse on reconnect, and ordered teardown with
index release. Every timing element runs on the injectable clock.

Phases: Pending -> Binding -> Pulling -> Starting -> Ready, with Terminating
and Failed as exits. A probe-driven restart re-runs the startup plan in place
and preserves pod identity (app, index, name, external ports).
"""

from __future__ import annotations

import logging
import threading
import time
from dataclasses import dataclass, field

from .errors import (
    CapacityError,
    ConflictError,
    NodeDrainingError,
    NotFoundError,
    ServiceError,
)
from .portalloc import PortAssignment
from .runtime import STARTUP_STEPS, STEP_DESKTOP, STEP_DISPLAY, STEP_TUNNEL
from .scheduler import ResourceRequest
from .tunnel.agent import TunnelAgent
from .tunnel.gateway import StubPeer

logger = logging.getLogger(__name__)

PENDING = "Pending"
BINDING = "Binding"
PULLING = "Pulling"
STARTING = "Starting"
READY = "Ready"
TERMINATING = "Terminating"
FAILED = "Failed"

GIB = 1024**3
DEFAULT_REQUEST = ResourceRequest.make(500, 2 * GIB)


@dataclass(frozen=True)
class StartupPlan:
    steps: tuple[str, ...] = STARTUP_STEPS
    step_timeout_s: float = 30.0
    step_duration_s: float = 0.1


@dataclass(frozen=True)
class ProbeConfig:
    readiness_period_s: float = 5.0
    liveness_period_s: float = 10.0
    failure_threshold: int = 3

    def __post_init__(self):
        if self.readiness_period_s <= 0 or self.liveness_period_s <= 0:
            raise ServiceError("probe periods must be positive")
        if self.failure_threshold < 1:
            raise ServiceError("failure_threshold must be >= 1")


@dataclass
class PodRecord:
    name: str
    app: str
    index: int
    request: ResourceRequest
    ports: PortAssignment
    owner_session: str
    created_at: float
    phase: str = PENDING
    node_id: str | None = None
    ready_at: float | None = None
    ready_gate: bool = False
    pending_reason: str | None = None
    failed_step: str | None = None
    restarts: int = 0
    generation: int = 0
    liveness_failures: int = field(default=0, repr=False)
    readiness_failures: int = field(default=0, repr=False)
    step_index: int = field(default=-1, repr=False)
    step_done: bool = field(default=False, repr=False)

    @property
    def key(self) -> str:
        return self.name

    def live(self) -> bool:
        return self.phase not in (TERMINATING, FAILED)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "app": self.app,
            "index": self.index,
            "phase": self.phase,
            "ready": self.ready_gate,
            "node_id": self.node_id,
            "owner_session": self.owner_session,
            "ports": {
                "index": self.ports.index,
                "remote_port": self.ports.remote_port,
                "web_port": self.ports.web_port,
            },
            "request": {
                "cpu_millicores": self.request.cpu_millicores,
                "mem_bytes": self.request.mem_bytes,
            },
            "created_at": self.created_at,
            "ready_at": self.ready_at,
            "pending_reason": self.pending_reason,
            "failed_step": self.failed_step,
            "restarts": self.restarts,
        }


class PodManager:
    SWEEP_INTERVAL_S = 5.0

    def __init__(self, clock, scheduler_state, cluster, allocator, gateway, events,
                 metrics=None, plan: StartupPlan | None = None,
                 probes: ProbeConfig | None = None,
                 app_requests: dict[str, ResourceRequest] | None = None,
                 default_request: ResourceRequest = DEFAULT_REQUEST,
                 lock: threading.RLock | None = None):
        self.clock = clock
        self.scheduler = scheduler_state
        self.cluster = cluster
        self.allocator = allocator
        self.gateway = gateway
        self.events = events
        self.metrics = metrics
        self.plan = plan or StartupPlan()
        self.probes = probes or ProbeConfig()
        self.app_requests = dict(app_requests or {})
        self.default_request = default_request
        self._lock = lock or threading.RLock()
        self._cond = threading.Condition(self._lock)
        self._pods: dict[str, PodRecord] = {}
        self._by_session: dict[str, dict[str, str]] = {}
        self._sessions_seen: set[str] = set()
        self._terminated: set[str] = set()
        self._pending: set[str] = set()
        self._step_timers: dict[str, list] = {}
        self._probe_timers: dict[str, list] = {}
        self._listeners: list = []
        cluster.attach(self)
        gateway.on_expired = self._on_tunnel_expired
        self._sweep = clock.every(self.SWEEP_INTERVAL_S, self.kick)

    # -- introspection ------------------------------------------------------

    def add_listener(self, listener) -> None:
        self._listeners.append(listener)

    def _notify_listeners(self, hook: str, record: PodRecord) -> None:
        for listener in self._listeners:
            fn = getattr(listener, hook, None)
            if fn is None:
                continue
            try:
                fn(record)
            except Exception:
                logger.exception("pod listener %s failed", hook)

    def pods(self) -> list[PodRecord]:
        with self._lock:
            return [self._pods[k] for k in sorted(self._pods)]

    def pod_count(self) -> int:
        with self._lock:
            return len(self._pods)

    def get(self, name: str) -> PodRecord:
        with self._lock:
            record = self._pods.get(name)
            if record is None:
                raise NotFoundError(f"unknown pod {name!r}")
            return record

    def get_optional(self, name: str) -> PodRecord | None:
        with self._lock:
            return self._pods.get(name)

    def pods_for_app(self, app: str) -> list[PodRecord]:
        with self._lock:
            return sorted((r for r in self._pods.values() if r.app == app),
                          key=lambda r: r.index)

    def pod_for_session(self, session_id: str, app: str) -> PodRecord | None:
        with self._lock:
            name = self._by_session.get(session_id, {}).get(app)
            return self._pods.get(name) if name else None

    def session_known(self, session_id: str) -> bool:
        with self._lock:
            return session_id in self._sessions_seen

    # -- phase bookkeeping ----------------------------------------------------

    def _set_phase(self, record: PodRecord, new: str, reason: str | None = None) -> None:
        old = record.phase
        record.phase = new
        self.events.phase(record.name, old, new, reason)
        if self.metrics is not None:
            self.metrics.inc("pod_phase_transitions_total", {"to": new})
        self._cond.notify_all()

    def _request_for(self, app: str, request: ResourceRequest | None,
                     node_selector: dict | None) -> ResourceRequest:
        base = request or self.app_requests.get(app, self.default_request)
        if not node_selector:
            return base
        selector = dict(base.node_selector)
        selector.update(node_selector)
        return ResourceRequest.make(base.cpu_millicores, base.mem_bytes, selector)

    # -- provision / reuse ------------------------------------------------------

    def provision(self, session_id: str, app: str, request: ResourceRequest | None = None,
                  node_selector: dict | None = None) -> PodRecord:
        with self._lock:
            self._sessions_seen.add(session_id)
            self._terminated.discard(session_id)
            existing = self._by_session.get(session_id, {}).get(app)
            if existing is not None and self._pods[existing].live():
                raise ConflictError(
                    f"session {session_id} already owns live pod {existing}")
            request = self._request_for(app, request, node_selector)
            assignment = self.allocator.allocate(app, session_id)
            record = PodRecord(
                name=f"{app}-{assignment.index}",
                app=app,
                index=assignment.index,
                request=request,
                ports=assignment,
                owner_session=session_id,
                created_at=self.clock.now(),
            )
            self._pods[record.name] = record
            self._by_session.setdefault(session_id, {})[app] = record.name
            self.events.emit(record.name, "created", reason=session_id)
            self.events.phase(record.name, None, PENDING)
            self._try_bind(record)
            return record

    def connect_or_reuse(self, session_id: str, app: str,
                         request: ResourceRequest | None = None,
                         node_selector: dict | None = None) -> PodRecord:
        with self._lock:
            record = self.pod_for_session(session_id, app)
            if record is not None:
                if record.live():
                    self.events.emit(record.name, "reused", reason=session_id)
                    return record
                # A Failed leftover: clean it up, then provision fresh.
                self.teardown_pod(record.name, reason="replace-failed")
            return self.provision(session_id, app, request, node_selector)

    # -- scheduling ----------------------------------------------------------------

    def _try_bind(self, record: PodRecord) -> bool:
        try:
            decision = self.scheduler.bind(record.name, record.request)
        except CapacityError as exc:
            record.pending_reason = str(exc)
            self._pending.add(record.name)
            if self.metrics is not None:
                self.metrics.inc("scheduler_pending_total")
            return False
        record.pending_reason = None
        self._pending.discard(record.name)
        record.node_id = decision.node_id
        self._set_phase(record, BINDING, reason=f"score={decision.score:.4f}")
        if self.metrics is not None:
            delay_ms = (decision.decided_at - record.created_at) * 1000.0
            self.metrics.gauge("pod_scheduling_delay_ms", {"pod": record.name}, delay_ms)
        node = self.cluster.node(decision.node_id)
        try:
            delay = node.accept_bind(decision, record, self._on_pull_done)
        except NodeDrainingError as exc:
            self.scheduler.unbind(decision.node_id, record.request)
            record.node_id = None
            record.pending_reason = str(exc)
            self._pending.add(record.name)
            self._set_phase(record, PENDING, reason=str(exc))
            return False
        self._set_phase(record, PULLING, reason=f"pull_delay={delay:g}s")
        self.events.emit(record.name, "pull-start", reason=f"{delay:g}s")
        return True

    def kick(self) -> None:
        """One scheduling pass over Pending pods."""
        with self._lock:
            for name in sorted(self._pending):
                record = self._pods.get(name)
                if record is None or record.phase != PENDING:
                    self._pending.discard(name)
                    continue
                self._try_bind(record)

    # -- pull and startup ------------------------------------------------------------

    def _on_pull_done(self, record: PodRecord) -> None:
        with self._lock:
            if self._pods.get(record.name) is not record or record.phase != PULLING:
                return
            self.events.emit(record.name, "pull-done")
            node = self.cluster.node(record.node_id)
            node.start_processes(record, banner_extra={
                "app": record.app, "session": record.owner_session,
            })
            self._set_phase(record, STARTING)
            self._begin_step(record, 0)

    def _begin_step(self, record: PodRecord, i: int) -> None:
        step = self.plan.steps[i]
        record.step_index = i
        record.step_done = False
        gen = record.generation
        self.events.emit(record.name, "step-start", reason=step)
        host = self.cluster.host(record.name)
        timers = self._step_timers.setdefault(record.name, [])
        timers.append(self.clock.call_later(
            self.plan.step_timeout_s, self._on_step_timeout, record.name, i, gen))
        if host is None or host.runtime is None:
            self._fail(record, step, "pod processes are gone")
            return
        if step in host.runtime.hang_steps:
            return  # work never completes; the timeout owns this pod now
        try:
            self._run_step_work(record, host, step)
        except ServiceError as exc:
            self._fail(record, step, str(exc))
            return
        except OSError as exc:
            self._fail(record, step, f"io: {exc}")
            return
        timers.append(self.clock.call_later(
            self.plan.step_duration_s, self._on_step_done, record.name, i, gen))

    def _run_step_work(self, record: PodRecord, host, step: str) -> None:
        if step == STEP_TUNNEL:
            targets = {"remote": host.runtime.echo_port, "web": host.runtime.display_port}
            if self.gateway.mode == "sockets":
                ctrl_host, ctrl_port = self.gateway.control_endpoint
                host.agent = TunnelAgent(
                    ctrl_host, ctrl_port, record.name, record.ports.remote_port, targets
                ).start()
            else:
                self.gateway.register_tunnel(
                    record.name, record.ports.remote_port,
                    target=("127.0.0.1", targets["remote"]), peer=StubPeer(),
                )
            host.tunnel_expired = False
            self.events.emit(record.name, "tunnel-registered",
                             reason=str(record.ports.remote_port))
        elif step == STEP_DISPLAY:
            host.runtime.start_display()
        elif step == STEP_DESKTOP:
            host.runtime.start_desktop()
        else:
            raise ServiceError(f"unknown startup step {step!r}")

    def _on_step_done(self, name: str, i: int, gen: int) -> None:
        with self._lock:
            record = self._pods.get(name)
            if record is None or record.generation != gen:
                return
            if record.phase != STARTING or record.step_index != i or record.step_done:
                return
            record.step_done = True
            self.events.emit(name, "step-done", reason=self.plan.steps[i])
            if i + 1 < len(self.plan.steps):
                self._begin_step(record, i + 1)
            else:
                self._became_ready(record)

    def _on_step_timeout(self, name: str, i: int, gen: int) -> None:
        with self._lock:
            record = self._pods.get(name)
            if record is None or record.generation != gen:
                return
            if record.phase != STARTING or record.step_index != i or record.step_done:
                return
            self._fail(record, self.plan.steps[i], "timeout")

    def _became_ready(self, record: PodRecord) -> None:
        record.ready_gate = True
        record.liveness_failures = 0
        record.readiness_failures = 0
        if record.ready_at is None:
            record.ready_at = self.clock.now()
        self._cancel_step_timers(record.name)
        self._set_phase(record, READY)
        self._start_probes(record)
        self._notify_listeners("on_pod_ready", record)

    def _fail(self, record: PodRecord, step: str, reason: str) -> None:
        record.generation += 1
        self._cancel_step_timers(record.name)
        self._cancel_probes(record.name)
        record.failed_step = step
        record.ready_gate = False
        host = self.cluster.host(record.name)
        if host is not None:
            if host.agent is not None:
                host.agent.stop()
                host.agent = None
            if host.runtime is not None:
                host.runtime.stop()
        self.gateway.unregister(record.ports.remote_port, reason="pod-failed")
        if record.node_id is not None:
            self.scheduler.unbind(record.node_id, record.request)
            self.cluster.node(record.node_id).remove_pod(record.name)
            record.node_id = None
        self._set_phase(record, FAILED, reason=f"{step}: {reason}")
        if self.metrics is not None:
            self.metrics.inc("pod_failures_total", {"step": step})
        self._notify_listeners("on_pod_failed", record)
        self.kick()

    # -- probes -------------------------------------------------------------------

    def _start_probes(self, record: PodRecord) -> None:
        self._cancel_probes(record.name)
        gen = record.generation
        self._probe_timers[record.name] = [
            self.clock.every(self.probes.liveness_period_s,
                             self._probe_cb, record.name, "liveness", gen),
            self.clock.every(self.probes.readiness_period_s,
                             self._probe_cb, record.name, "readiness", gen),
        ]

    def _probe_cb(self, name: str, kind: str, gen: int) -> None:
        with self._lock:
            record = self._pods.get(name)
            if record is None or record.generation != gen:
                return
            self.probe_tick(record, kind)

    def probe_tick(self, record: PodRecord, kind: str) -> str | None:
        """One probe evaluation; returns the transition it caused, if any."""
        with self._lock:
            if record.phase not in (READY, STARTING):
                return None
            host = self.cluster.host(record.name)
            if host is None or host.runtime is None:
                ok = False
            elif kind == "liveness":
                ok = (host.runtime.alive()
                      and not host.tunnel_expired
                      and self.gateway.alive(record.ports.remote_port))
            else:
                ok = host.runtime.display_ok()
            if host is not None:
                host.record_probe(self.clock.now(), kind, ok)
            if kind == "liveness":
                if ok:
                    record.liveness_failures = 0
                    return None
                record.liveness_failures += 1
                if record.liveness_failures >= self.probes.failure_threshold:
                    self._restart(record, reason="liveness-threshold")
                    return "restarted"
                return None
            if ok:
                record.readiness_failures = 0
                if not record.ready_gate:
                    record.ready_gate = True
                    self.events.emit(record.name, "ready-again")
                    return "ready"
                return None
            record.readiness_failures += 1
            if record.readiness_failures >= self.probes.failure_threshold and record.ready_gate:
                record.ready_gate = False
                self.events.emit(record.name, "not-ready", reason="readiness-threshold")
                return "not-ready"
            return None

    def _restart(self, record: PodRecord, reason: str) -> None:
        """Re-run the startup plan on the same node with the same identity."""
        record.generation += 1
        record.restarts += 1
        record.liveness_failures = 0
        record.readiness_failures = 0
        record.ready_gate = False
        self._cancel_step_timers(record.name)
        self._cancel_probes(record.name)
        self.events.emit(record.name, "restart", reason=reason)
        if self.metrics is not None:
            self.metrics.inc("pod_restarts_total", {"pod": record.name})
        host = self.cluster.host(record.name)
        if host is not None and host.agent is not None:
            host.agent.stop()
            host.agent = None
        self.gateway.unregister(record.ports.remote_port, reason="restart")
        node = self.cluster.node(record.node_id)
        node.start_processes(record, banner_extra={
            "app": record.app, "session": record.owner_session,
        })
        self._set_phase(record, STARTING, reason=reason)
        self._begin_step(record, 0)

    def _on_tunnel_expired(self, pod_name: str, reason: str) -> None:
        with self._lock:
            record = self._pods.get(pod_name)
            if record is None:
                return
            self.events.emit(pod_name, "tunnel-expired", reason=reason)
            host = self.cluster.host(pod_name)
            if host is not None:
                host.tunnel_expired = True

    # -- teardown -----------------------------------------------------------------

    def terminate(self, session_id: str) -> None:
        with self._lock:
            if session_id not in self._sessions_seen:
                raise NotFoundError(f"unknown session {session_id!r}")
            names = sorted(self._by_session.get(session_id, {}).values())
            for name in names:
                self.teardown_pod(name, reason="session-terminated")
            self._terminated.add(session_id)

    def teardown_pod(self, name: str, reason: str = "terminated") -> None:
        """Ordered release: processes, tunnel, node allocation, index entry."""
        with self._lock:
            record = self._pods.get(name)
            if record is None:
                return
            record.generation += 1
            self._cancel_step_timers(name)
            self._cancel_probes(name)
            self._pending.discard(name)
            self._set_phase(record, TERMINATING, reason=reason)
            host = self.cluster.host(name)
            if host is not None and host.agent is not None:
                host.agent.stop()
                host.agent = None
            if host is not None and host.runtime is not None:
                host.runtime.stop()
            self.events.emit(name, "proc-stop")
            self.gateway.unregister(record.ports.remote_port, reason=reason)
            self.events.emit(name, "tunnel-close")
            if record.node_id is not None:
                self.scheduler.unbind(record.node_id, record.request)
                self.cluster.node(record.node_id).remove_pod(name)
                record.node_id = None
            self.events.emit(name, "alloc-release")
            self.allocator.release(record.key)
            self.events.emit(name, "index-release")
            self.events.emit(name, "ports-released")
            del self._pods[name]
            session_pods = self._by_session.get(record.owner_session)
            if session_pods is not None:
                session_pods.pop(record.app, None)
                if not session_pods:
                    del self._by_session[record.owner_session]
            self._cond.notify_all()
            self._notify_listeners("on_pod_teardown", record)
            self.kick()

    # -- timer bookkeeping -----------------------------------------------------------

    def _cancel_step_timers(self, name: str) -> None:
        for handle in self._step_timers.pop(name, []):
            handle.cancel()

    def _cancel_probes(self, name: str) -> None:
        for handle in self._probe_timers.pop(name, []):
            handle.cancel()

    # -- blocking helper (wall-clock callers) ------------------------------------------

    def wait_ready(self, name: str, timeout_s: float) -> PodRecord | None:
        deadline = time.monotonic() + timeout_s
        with self._cond:
            while True:
                record = self._pods.get(name)
                if record is None:
                    return None
                if record.phase in (READY, FAILED):
                    return record
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return record
                self._cond.wait(remaining)

    def close(self) -> None:
        self._sweep.cancel()
