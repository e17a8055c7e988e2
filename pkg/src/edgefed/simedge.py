"""Simulated edge cluster: node agents, pod processes, memory model.

Each worker node runs an agent context that accepts bindings, simulates the
image pull (with a per-node cache), hosts the pod's process stubs, and
answers status queries. Pod memory follows a linear ramp to the requested
plateau with seeded multiplicative noise:

    mem(t) = R * min(1, (t - t0) / T) * (1 + eps),  eps ~ U(-f, f)

The cluster also carries the replica bookkeeping: scale-up signals emitted by
the port allocator are recorded as desired replica counts, and apply_scale()
reconciles live ordinal pods toward a target through the pod manager.
"""

from __future__ import annotations

import logging
import random
import threading
import uuid
from dataclasses import dataclass, field

from .errors import NodeDrainingError, ValidationError
from .runtime import make_runtime
from .scheduler import BindDecision, NodeDescriptor

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScaleSignal:
    app: str
    target_replicas: int

    def __post_init__(self):
        if self.target_replicas < 0:
            raise ValidationError("target_replicas must be >= 0")


@dataclass
class MemRampModel:
    request_bytes: int
    ramp_duration_s: float
    start_time: float

    def fraction(self, t: float) -> float:
        if self.ramp_duration_s <= 0:
            return 1.0
        return min(1.0, max(0.0, (t - self.start_time) / self.ramp_duration_s))

    def value(self, t: float, eps: float = 0.0) -> float:
        return self.request_bytes * self.fraction(t) * (1.0 + eps)


@dataclass
class SimClusterSpec:
    workers: list[NodeDescriptor] = field(default_factory=list)
    control_plane: NodeDescriptor | None = None
    ramp_duration_s: float = 120.0
    noise_fraction: float = 0.02
    pull_delay_s: float = 2.0
    seed: int = 0
    data_plane: str = "sockets"

    def __post_init__(self):
        if not self.workers:
            raise ValidationError("cluster needs at least one worker")
        if not (0.0 <= self.noise_fraction < 0.1):
            raise ValidationError("noise_fraction must be in [0, 0.1)")


class PodHost:
    """Node-local state for one hosted pod."""

    def __init__(self, record, rng: random.Random):
        self.record = record
        self.rng = rng
        self.runtime = None
        self.ramp: MemRampModel | None = None
        self.agent = None
        self.tunnel_expired = False
        self.probe_history: list[tuple[float, str, bool]] = []

    def mem_bytes(self, now: float, noise_fraction: float) -> float:
        if self.ramp is None or self.runtime is None or self.runtime.stopped:
            return 0.0
        eps = self.rng.uniform(-noise_fraction, noise_fraction)
        return self.ramp.value(now, eps)

    def record_probe(self, ts: float, kind: str, ok: bool) -> None:
        self.probe_history.append((ts, kind, ok))
        if len(self.probe_history) > 50:
            del self.probe_history[:-50]


class SimNode:
    def __init__(self, descriptor: NodeDescriptor, clock, spec: SimClusterSpec):
        self.descriptor = descriptor
        self.clock = clock
        self.spec = spec
        self.image_cache: set[str] = set()
        self.draining = False
        self.pods: dict[str, PodHost] = {}
        self._lock = threading.RLock()
        self._last_snapshot_ts = 0.0

    @property
    def node_id(self) -> str:
        return self.descriptor.node_id

    def accept_bind(self, decision: BindDecision, record, on_pull_done) -> float:
        """Admit the pod and start the (cache-aware) image pull.

        Returns the pull delay used; on_pull_done(record) fires when the
        image is present. Raises NodeDrainingError when draining.
        """
        with self._lock:
            if self.draining:
                raise NodeDrainingError(f"node {self.node_id} is draining")
            if decision.node_id != self.node_id:
                raise ValidationError("bind decision targets another node")
            rng = random.Random(f"{self.spec.seed}:{record.name}")
            self.pods[record.name] = PodHost(record, rng)
            delay = 0.0 if record.app in self.image_cache else self.spec.pull_delay_s

        def finish():
            with self._lock:
                if record.name not in self.pods:
                    return  # torn down while pulling
                self.image_cache.add(record.app)
            on_pull_done(record)

        self.clock.call_later(delay, finish)
        return delay

    def start_processes(self, record, banner_extra: dict | None = None) -> PodHost:
        with self._lock:
            host = self.pods[record.name]
            if host.runtime is not None:
                host.runtime.stop()
            host.runtime = make_runtime(self.spec.data_plane, record.name, banner_extra)
            host.ramp = MemRampModel(
                request_bytes=record.request.mem_bytes,
                ramp_duration_s=self.spec.ramp_duration_s,
                start_time=self.clock.now(),
            )
            host.tunnel_expired = False
            return host

    def host(self, pod_name: str) -> PodHost | None:
        with self._lock:
            return self.pods.get(pod_name)

    def remove_pod(self, pod_name: str) -> None:
        with self._lock:
            host = self.pods.pop(pod_name, None)
        if host is not None and host.runtime is not None:
            host.runtime.stop()

    def drain(self, value: bool = True) -> None:
        self.draining = value

    def report_status(self) -> dict:
        with self._lock:
            now = self.clock.now()
            # Snapshot timestamps are strictly increasing even without
            # clock movement between calls.
            ts = max(now, self._last_snapshot_ts + 1e-6)
            self._last_snapshot_ts = ts
            pods = []
            for name in sorted(self.pods):
                host = self.pods[name]
                pods.append(
                    {
                        "name": name,
                        "phase": host.record.phase,
                        "ready": host.record.ready_gate,
                        "mem_bytes": host.mem_bytes(now, self.spec.noise_fraction),
                        "probe_history": list(host.probe_history),
                    }
                )
            return {
                "node_id": self.node_id,
                "ts": ts,
                "cpu_capacity_millicores": self.descriptor.cpu_capacity_millicores,
                "mem_capacity_bytes": self.descriptor.mem_capacity_bytes,
                "allocated_cpu_millicores": self.descriptor.allocated_cpu_millicores,
                "allocated_mem_bytes": self.descriptor.allocated_mem_bytes,
                "draining": self.draining,
                "pods": pods,
            }


class SimCluster:
    def __init__(self, spec: SimClusterSpec, clock, metrics=None):
        self.spec = spec
        self.clock = clock
        self.metrics = metrics
        self.nodes: dict[str, SimNode] = {
            n.node_id: SimNode(n, clock, spec) for n in spec.workers
        }
        self.control_plane = spec.control_plane
        self.desired_replicas: dict[str, int] = {}
        self._pod_manager = None
        self._lock = threading.RLock()

    def attach(self, pod_manager) -> None:
        self._pod_manager = pod_manager

    def node(self, node_id: str) -> SimNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise ValidationError(f"unknown node {node_id!r}") from None

    def host(self, pod_name: str) -> PodHost | None:
        for node in self.nodes.values():
            host = node.host(pod_name)
            if host is not None:
                return host
        return None

    def report_all(self) -> list[dict]:
        return [self.nodes[k].report_status() for k in sorted(self.nodes)]

    def sample_memory(self, registry) -> None:
        """One telemetry sample of measured memory for every hosted pod."""
        for node in self.nodes.values():
            status = node.report_status()
            for pod in status["pods"]:
                registry.gauge(
                    "pod_memory_bytes",
                    {"pod": pod["name"], "node": status["node_id"]},
                    pod["mem_bytes"],
                )

    # -- scale handling -----------------------------------------------------

    def handle_scale_signal(self, app: str, target_replicas: int) -> None:
        """Record a scale-up signal from the port allocator.

        In the session-driven path the pod carrying the new ordinal is
        already being provisioned, so the signal only moves the desired
        gauge; explicit apply_scale() performs reconciliation.
        """
        with self._lock:
            current = self.desired_replicas.get(app, 0)
            self.desired_replicas[app] = max(current, target_replicas)
        if self.metrics is not None:
            self.metrics.gauge("app_desired_replicas", {"app": app},
                               self.desired_replicas[app])
        logger.info("scale signal app=%s target=%d", app, target_replicas)

    def apply_scale(self, signal: ScaleSignal) -> list[tuple[str, str]]:
        """Reconcile live ordinal pods of an app toward the target count.

        Scale-down removes highest ordinals first; scale-up provisions at the
        lowest free ordinals, each replica running the full pipeline. Returns
        the ordered (action, pod_name) list.
        """
        if self._pod_manager is None:
            raise ValidationError("cluster is not attached to a pod manager")
        manager = self._pod_manager
        actions: list[tuple[str, str]] = []
        while True:
            live = manager.pods_for_app(signal.app)
            if len(live) <= signal.target_replicas:
                break
            victim = live[-1]  # highest ordinal
            manager.teardown_pod(victim.name)
            actions.append(("terminate", victim.name))
        while True:
            live = manager.pods_for_app(signal.app)
            if len(live) >= signal.target_replicas:
                break
            session_id = f"scale-{signal.app}-{uuid.uuid4().hex[:8]}"
            record = manager.provision(session_id, signal.app)
            actions.append(("provision", record.name))
        with self._lock:
            self.desired_replicas[signal.app] = signal.target_replicas
        if self.metrics is not None:
            self.metrics.gauge("app_desired_replicas", {"app": signal.app},
                               signal.target_replicas)
        return actions
