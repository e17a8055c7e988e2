"""Service composition and configuration.

One YAML config file describes the whole service (schema in docs/CONFIG.md);
environment variables override file values, which override defaults
(precedence: env > file > default). ``build_core`` wires the control plane
(clock, reservations, scheduler, cluster, allocator, gateway, pod manager,
sessions, telemetry); ``Service`` adds the HTTP gateway on top.
"""

from __future__ import annotations

import logging
import os
import threading
from dataclasses import dataclass, field

import yaml

from .auth import Authenticator, load_users
from .clock import FakeTimeline, Timeline, WallTimeline
from .errors import ValidationError
from .events import EventLog
from .inventory import Inventory
from .kvstore import MemoryIndexStore, RemoteIndexStore
from .lifecycle import GIB, PodManager, ProbeConfig, StartupPlan
from .portalloc import IndexStoreConfig, PortAllocator
from .reservations import ReservationBook
from .scheduler import ClusterState, NodeDescriptor, ResourceRequest
from .sessions import SessionManager
from .simedge import SimCluster, SimClusterSpec
from .telemetry import MetricsRegistry
from .tunnel.gateway import KeepalivePolicy, TunnelGateway

logger = logging.getLogger(__name__)

ENV_PREFIX = "EDGEFED"


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8080
    inventory_path: str | None = None
    users_path: str | None = None
    journal_path: str | None = None
    portal_dir: str | None = None

    auth_ttl_s: float = 8 * 3600.0
    auth_throttle_delay_s: float = 1.0

    remote_base: int = 2200
    web_base: int = 6080
    max_index: int = 64
    store_addr: str | None = None  # "host:port" for the line-protocol store

    keepalive_interval_s: float = 15.0
    keepalive_max_missed: int = 3
    keepalives_enabled: bool = True
    idle_timeout_s: float | None = None

    workers: list[dict] = field(default_factory=lambda: [
        {"node_id": "node-1"}, {"node_id": "node-2"}, {"node_id": "node-3"},
    ])
    control_plane: dict = field(default_factory=lambda: {"node_id": "cp-1"})
    worker_cpu_millicores: int = 4000
    worker_mem_bytes: int = 32 * GIB
    ramp_duration_s: float = 120.0
    noise_fraction: float = 0.02
    pull_delay_s: float = 2.0
    seed: int = 0
    data_plane: str = "sockets"

    step_timeout_s: float = 30.0
    step_duration_s: float = 0.1
    readiness_period_s: float = 5.0
    liveness_period_s: float = 10.0
    failure_threshold: int = 3

    retention_s: float = 3600.0
    sample_period_s: float = 1.0
    jitter_payload_bytes: int = 1250
    jitter_probe_on_start: bool = False
    jitter_probe_duration_s: float = 2.0
    jitter_probe_rate_bps: float = 10_000_000.0

    apps: dict[str, dict] = field(default_factory=lambda: {
        "gnuradio": {"cpu_millicores": 500, "mem_bytes": 2 * GIB},
    })
    connect_wait_timeout_s: float = 30.0

    @classmethod
    def load(cls, path: str | None = None, env: dict | None = None) -> "ServiceConfig":
        cfg = cls()
        file_values: dict = {}
        if path is not None:
            with open(path, "r", encoding="utf-8") as fh:
                file_values = yaml.safe_load(fh) or {}
        for key, value in file_values.items():
            if not hasattr(cfg, key):
                raise ValidationError(f"unknown config key {key!r}")
            setattr(cfg, key, value)
        env = os.environ if env is None else env
        for key in vars(cfg):
            env_key = f"{ENV_PREFIX}_{key.upper()}"
            if env_key not in env:
                continue
            raw = env[env_key]
            current = getattr(cfg, key)
            if isinstance(current, bool):
                setattr(cfg, key, raw.lower() in ("1", "true", "yes", "on"))
            elif isinstance(current, int) and not isinstance(current, bool):
                setattr(cfg, key, int(raw))
            elif isinstance(current, float):
                setattr(cfg, key, float(raw))
            elif isinstance(current, (list, dict)):
                setattr(cfg, key, yaml.safe_load(raw))
            else:
                setattr(cfg, key, raw)
        return cfg

    def node_descriptors(self) -> list[NodeDescriptor]:
        out = []
        for doc in self.workers:
            out.append(NodeDescriptor(
                node_id=str(doc["node_id"]),
                role="worker",
                cpu_capacity_millicores=int(doc.get("cpu_millicores", self.worker_cpu_millicores)),
                mem_capacity_bytes=int(doc.get("mem_bytes", self.worker_mem_bytes)),
                labels={str(k): str(v) for k, v in doc.get("labels", {}).items()},
            ))
        return out

    def control_plane_descriptor(self) -> NodeDescriptor:
        return NodeDescriptor(
            node_id=str(self.control_plane.get("node_id", "cp-1")),
            role="control-plane",
            cpu_capacity_millicores=int(self.control_plane.get("cpu_millicores", 4000)),
            mem_capacity_bytes=int(self.control_plane.get("mem_bytes", 16 * GIB)),
        )

    def app_requests(self) -> dict[str, ResourceRequest]:
        return {
            app: ResourceRequest.make(int(doc["cpu_millicores"]), int(doc["mem_bytes"]))
            for app, doc in self.apps.items()
        }


class Core:
    """The wired control plane, independent of HTTP."""

    def __init__(self, config: ServiceConfig, clock: Timeline, inventory: Inventory):
        self.config = config
        self.clock = clock
        self.inventory = inventory
        self.control_lock = threading.RLock()
        self.metrics = MetricsRegistry(clock, retention_s=config.retention_s)
        self.events = EventLog(clock)
        self.reservations = ReservationBook(inventory, clock, journal_path=config.journal_path)

        workers = config.node_descriptors()
        self.scheduler = ClusterState(workers, clock)
        spec = SimClusterSpec(
            workers=workers,
            control_plane=config.control_plane_descriptor(),
            ramp_duration_s=config.ramp_duration_s,
            noise_fraction=config.noise_fraction,
            pull_delay_s=config.pull_delay_s,
            seed=config.seed,
            data_plane=config.data_plane,
        )
        self.cluster = SimCluster(spec, clock, metrics=self.metrics)
        self.gateway = TunnelGateway(
            clock,
            KeepalivePolicy(config.keepalive_interval_s, config.keepalive_max_missed),
            mode=config.data_plane,
            host=config.host,
            keepalives_enabled=config.keepalives_enabled,
            idle_timeout_s=config.idle_timeout_s,
            metrics=self.metrics,
        ).start()
        if config.store_addr:
            host, _, port = config.store_addr.partition(":")
            self.store = RemoteIndexStore(host, int(port))
        else:
            self.store = MemoryIndexStore()
        self.allocator = PortAllocator(
            self.store,
            IndexStoreConfig(config.remote_base, config.web_base, config.max_index),
            clock,
            listeners=self.gateway,
            on_scale_signal=self.cluster.handle_scale_signal,
        )
        self.pods = PodManager(
            clock, self.scheduler, self.cluster, self.allocator, self.gateway,
            self.events, metrics=self.metrics,
            plan=StartupPlan(step_timeout_s=config.step_timeout_s,
                             step_duration_s=config.step_duration_s),
            probes=ProbeConfig(config.readiness_period_s, config.liveness_period_s,
                               config.failure_threshold),
            app_requests=config.app_requests(),
            lock=self.control_lock,
        )
        self.sessions = SessionManager(
            self.reservations, self.pods, self.gateway, clock, lock=self.control_lock
        )
        self._sampler = clock.every(config.sample_period_s, self._sample)
        if config.jitter_probe_on_start:
            threading.Thread(target=self._jitter_probe, daemon=True,
                             name="jitter-probe").start()

    def _sample(self):
        try:
            self.cluster.sample_memory(self.metrics)
        except Exception:
            logger.exception("memory sampling failed")

    def _jitter_probe(self):
        from .jitter import measure_loopback_jitter
        from .telemetry import record_jitter_report
        try:
            report = measure_loopback_jitter(
                self.config.jitter_probe_duration_s,
                self.config.jitter_probe_rate_bps,
                self.config.jitter_payload_bytes,
            )
            record_jitter_report(self.metrics, report)
        except Exception:
            logger.exception("startup jitter probe failed")

    def counters(self) -> dict:
        """Global resource counters (used by conservation checks)."""
        allocated = {
            n.node_id: (n.allocated_cpu_millicores, n.allocated_mem_bytes)
            for n in self.scheduler.nodes()
        }
        return {
            "index_entries": len(self.allocator.entries()),
            "pods": self.pods.pod_count(),
            "allocated": allocated,
            "live_sessions": self.sessions.live_count(),
            "tunnels": len(self.gateway.registrations()),
        }

    def close(self):
        self.pods.close()
        self._sampler.cancel()
        self.gateway.stop()
        if hasattr(self.store, "close"):
            self.store.close()
        self.clock.close()


def build_core(config: ServiceConfig | None = None, clock: Timeline | None = None,
               inventory: Inventory | None = None) -> Core:
    config = config or ServiceConfig()
    if clock is None:
        clock = WallTimeline()
        clock.start()
    if inventory is None:
        if config.inventory_path is None:
            raise ValidationError("config needs inventory_path (or pass an Inventory)")
        inventory = Inventory.from_yaml(config.inventory_path)
    return Core(config, clock, inventory)


def build_authenticator(config: ServiceConfig, clock: Timeline,
                        users: dict | None = None) -> Authenticator:
    if users is None:
        if config.users_path is None:
            raise ValidationError("config needs users_path (or pass users)")
        users = load_users(config.users_path)
    return Authenticator(users, clock, ttl_s=config.auth_ttl_s,
                         throttle_delay_s=config.auth_throttle_delay_s)
