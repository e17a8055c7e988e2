"""Worker node scheduling: filter on capacity and labels, rank, bind.

The default (and only built-in) ranking policy is least-allocated: the score
of a candidate node is the mean of its free cpu and memory fractions after a
hypothetical placement of the request. Ties break lexicographically by
node id, which makes scheduling fully deterministic.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field, replace

from .errors import CapacityError, ValidationError

ROLE_WORKER = "worker"
ROLE_CONTROL_PLANE = "control-plane"


@dataclass
class NodeDescriptor:
    node_id: str
    role: str = ROLE_WORKER
    cpu_capacity_millicores: int = 4000
    mem_capacity_bytes: int = 32 * 1024**3
    labels: dict[str, str] = field(default_factory=dict)
    allocated_cpu_millicores: int = 0
    allocated_mem_bytes: int = 0

    def __post_init__(self):
        if self.cpu_capacity_millicores <= 0 or self.mem_capacity_bytes <= 0:
            raise ValidationError(f"node {self.node_id!r} must have positive capacities")
        # Nodes are addressable through selectors by their own id.
        self.labels.setdefault("node", self.node_id)

    @property
    def free_cpu_millicores(self) -> int:
        return self.cpu_capacity_millicores - self.allocated_cpu_millicores

    @property
    def free_mem_bytes(self) -> int:
        return self.mem_capacity_bytes - self.allocated_mem_bytes


@dataclass(frozen=True)
class ResourceRequest:
    cpu_millicores: int
    mem_bytes: int
    node_selector: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if self.cpu_millicores <= 0 or self.mem_bytes <= 0:
            raise ValidationError("resource request values must be positive")

    @classmethod
    def make(cls, cpu_millicores: int, mem_bytes: int, node_selector: dict | None = None):
        selector = tuple(sorted((node_selector or {}).items()))
        return cls(cpu_millicores, mem_bytes, selector)

    @property
    def selector(self) -> dict[str, str]:
        return dict(self.node_selector)


@dataclass(frozen=True)
class BindDecision:
    pod_name: str
    node_id: str
    score: float
    decided_at: float


def filter_nodes(request: ResourceRequest, nodes: list[NodeDescriptor]) -> list[NodeDescriptor]:
    """Exactly the worker nodes that can host the request, input order kept."""
    selector = request.selector
    out = []
    for node in nodes:
        if node.role != ROLE_WORKER:
            continue
        if node.free_cpu_millicores < request.cpu_millicores:
            continue
        if node.free_mem_bytes < request.mem_bytes:
            continue
        if any(node.labels.get(k) != v for k, v in selector.items()):
            continue
        out.append(node)
    return out


def placement_score(request: ResourceRequest, node: NodeDescriptor) -> float:
    """Least-allocated score after hypothetical placement, in [0, 1]."""
    free_cpu = node.free_cpu_millicores - request.cpu_millicores
    free_mem = node.free_mem_bytes - request.mem_bytes
    return (free_cpu / node.cpu_capacity_millicores + free_mem / node.mem_capacity_bytes) / 2.0


def rank_nodes(request: ResourceRequest, candidates: list[NodeDescriptor]) -> list[tuple[str, float]]:
    scored = [(node.node_id, placement_score(request, node)) for node in candidates]
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return scored


def _infeasibility_reason(request: ResourceRequest, nodes: list[NodeDescriptor]) -> str:
    workers = [n for n in nodes if n.role == ROLE_WORKER]
    if not workers:
        return "no worker nodes"
    selector = request.selector
    counts = {"insufficient-cpu": 0, "insufficient-mem": 0, "selector-mismatch": 0}
    for node in workers:
        if any(node.labels.get(k) != v for k, v in selector.items()):
            counts["selector-mismatch"] += 1
        elif node.free_cpu_millicores < request.cpu_millicores:
            counts["insufficient-cpu"] += 1
        elif node.free_mem_bytes < request.mem_bytes:
            counts["insufficient-mem"] += 1
    parts = [f"{v} {k}" for k, v in counts.items() if v]
    return f"0/{len(workers)} nodes feasible: " + ", ".join(parts)


class ClusterState:
    """Authoritative node allocation ledger.

    One lock serializes all mutation; bind/unbind keep allocated <= capacity
    as an internal invariant. The ranking policy is pluggable: any callable
    (request, candidates) -> ordered (node_id, score) list; least-allocated
    is the default.
    """

    def __init__(self, nodes: list[NodeDescriptor], clock, policy=rank_nodes):
        self._clock = clock
        self._policy = policy
        self._lock = threading.RLock()
        self._nodes: dict[str, NodeDescriptor] = {}
        for node in nodes:
            if node.node_id in self._nodes:
                raise ValidationError(f"duplicate node id {node.node_id!r}")
            self._nodes[node.node_id] = node
        self._decisions: list[BindDecision] = []

    def nodes(self) -> list[NodeDescriptor]:
        with self._lock:
            return [self._nodes[k] for k in sorted(self._nodes)]

    def node(self, node_id: str) -> NodeDescriptor:
        with self._lock:
            return self._nodes[node_id]

    def bind(self, pod_name: str, request: ResourceRequest) -> BindDecision:
        """Pick the best feasible node and commit the allocation atomically.

        Raises CapacityError with a human-readable reason when nothing fits.
        """
        with self._lock:
            nodes = self.nodes()
            feasible = filter_nodes(request, nodes)
            if not feasible:
                raise CapacityError(_infeasibility_reason(request, nodes))
            node_id, score = self._policy(request, feasible)[0]
            node = self._nodes[node_id]
            node.allocated_cpu_millicores += request.cpu_millicores
            node.allocated_mem_bytes += request.mem_bytes
            assert node.allocated_cpu_millicores <= node.cpu_capacity_millicores
            assert node.allocated_mem_bytes <= node.mem_capacity_bytes
            decision = BindDecision(
                pod_name=pod_name, node_id=node_id, score=score, decided_at=self._clock.now()
            )
            self._decisions.append(decision)
            return decision

    def unbind(self, node_id: str, request: ResourceRequest) -> None:
        with self._lock:
            node = self._nodes[node_id]
            node.allocated_cpu_millicores -= request.cpu_millicores
            node.allocated_mem_bytes -= request.mem_bytes
            assert node.allocated_cpu_millicores >= 0
            assert node.allocated_mem_bytes >= 0

    def decisions(self) -> list[BindDecision]:
        with self._lock:
            return list(self._decisions)

    def snapshot(self) -> list[NodeDescriptor]:
        with self._lock:
            return [replace(n, labels=dict(n.labels)) for n in self.nodes()]
