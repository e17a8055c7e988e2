"""Packet interarrival jitter analysis.

Jitter of interval i is the absolute deviation of the observed interarrival
gap from the stream's nominal interval (payload_bytes * 8 / nominal_rate_bps),
reported in milliseconds. The percentile is nearest-rank (no interpolation).
Consecutive above-threshold intervals merge into one spike window.

An exponentially smoothed variant (1/16 gain, the classic RTP estimator) is
available as a secondary output via smoothed_jitter_ms().
"""

from __future__ import annotations

import math
import random
import socket
import struct
import threading
import time
from dataclasses import dataclass, field

from .errors import ValidationError


@dataclass(frozen=True)
class PacketTrace:
    arrivals: tuple[float, ...]
    nominal_rate_bps: float
    payload_bytes: int

    def __post_init__(self):
        if self.nominal_rate_bps <= 0:
            raise ValidationError("nominal_rate_bps must be positive")
        if self.payload_bytes <= 0:
            raise ValidationError("payload_bytes must be positive")
        for a, b in zip(self.arrivals, self.arrivals[1:]):
            if not b > a:
                raise ValidationError("arrival timestamps must be strictly increasing")

    @property
    def nominal_interval_s(self) -> float:
        return self.payload_bytes * 8.0 / self.nominal_rate_bps

    @classmethod
    def make(cls, arrivals, nominal_rate_bps, payload_bytes):
        return cls(tuple(float(t) for t in arrivals), float(nominal_rate_bps), int(payload_bytes))


@dataclass(frozen=True)
class JitterReport:
    per_interval_ms: tuple[float, ...]
    mean_ms: float
    p95_ms: float
    max_ms: float
    spike_threshold_ms: float
    spike_intervals: tuple[tuple[float, float], ...]
    loss_fraction: float | None = None
    lossy: bool = False

    def to_dict(self) -> dict:
        return {
            "intervals": len(self.per_interval_ms),
            "mean_ms": self.mean_ms,
            "p95_ms": self.p95_ms,
            "max_ms": self.max_ms,
            "spike_threshold_ms": self.spike_threshold_ms,
            "spike_windows": [list(w) for w in self.spike_intervals],
            "loss_fraction": self.loss_fraction,
            "lossy": self.lossy,
        }


def nearest_rank(sorted_values: list[float], percentile: float) -> float:
    """Nearest-rank percentile over an ascending-sorted non-empty list."""
    if not sorted_values:
        raise ValidationError("empty sample")
    rank = math.ceil(percentile / 100.0 * len(sorted_values))
    rank = min(max(rank, 1), len(sorted_values))
    return sorted_values[rank - 1]


def compute_jitter(trace: PacketTrace, spike_threshold_ms: float = 1.75) -> JitterReport:
    if len(trace.arrivals) < 2:
        raise ValidationError("jitter needs at least 2 arrivals")
    nominal_s = trace.nominal_interval_s
    arrivals = trace.arrivals
    per_interval = [
        abs((arrivals[i] - arrivals[i - 1]) - nominal_s) * 1000.0
        for i in range(1, len(arrivals))
    ]
    ordered = sorted(per_interval)
    spikes = []
    run_start = None
    for i, j in enumerate(per_interval):
        if j > spike_threshold_ms:
            if run_start is None:
                run_start = i
        elif run_start is not None:
            spikes.append((arrivals[run_start], arrivals[i]))
            run_start = None
    if run_start is not None:
        spikes.append((arrivals[run_start], arrivals[len(per_interval)]))
    return JitterReport(
        per_interval_ms=tuple(per_interval),
        mean_ms=sum(per_interval) / len(per_interval),
        p95_ms=nearest_rank(ordered, 95.0),
        max_ms=ordered[-1],
        spike_threshold_ms=spike_threshold_ms,
        spike_intervals=tuple(spikes),
    )


def smoothed_jitter_ms(trace: PacketTrace) -> float:
    """RTP-style 1/16-gain smoothed jitter estimate, in ms."""
    if len(trace.arrivals) < 2:
        raise ValidationError("jitter needs at least 2 arrivals")
    nominal_s = trace.nominal_interval_s
    estimate = 0.0
    for a, b in zip(trace.arrivals, trace.arrivals[1:]):
        deviation = abs((b - a) - nominal_s) * 1000.0
        estimate += (deviation - estimate) / 16.0
    return estimate


# -- trace import/export --------------------------------------------------

def load_trace_csv(path, nominal_rate_bps: float, payload_bytes: int) -> PacketTrace:
    """CSV import: one `seq,timestamp_us` line per packet (docs/PROTOCOLS.md)."""
    arrivals = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or line.startswith("seq"):
                continue
            _, _, stamp = line.partition(",")
            arrivals.append(int(stamp) / 1e6)
    return PacketTrace.make(arrivals, nominal_rate_bps, payload_bytes)


def dump_trace_csv(trace: PacketTrace, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("seq,timestamp_us\n")
        for seq, t in enumerate(trace.arrivals):
            fh.write(f"{seq},{round(t * 1e6)}\n")


# -- synthetic traces ------------------------------------------------------

@dataclass(frozen=True)
class SpikeSpec:
    at_s: float
    intervals: int = 3
    jitter_ms: float = 2.0


def build_profile_trace(
    duration_s: float = 40.0,
    rate_bps: float = 10_000_000.0,
    payload_bytes: int = 1250,
    base_jitter_ms: tuple[float, float] = (0.35, 0.85),
    spikes: tuple[SpikeSpec, ...] = (SpikeSpec(4.4), SpikeSpec(36.4)),
    seed: int = 7,
) -> PacketTrace:
    """Deterministic trace with a target jitter profile.

    Base intervals deviate from nominal by a uniform draw in base_jitter_ms
    with alternating sign (bounds drift); each SpikeSpec inserts a contiguous
    run of large positive deviations at roughly its at_s mark.
    """
    rng = random.Random(seed)
    nominal_s = payload_bytes * 8.0 / rate_bps
    count = int(duration_s / nominal_s)
    spike_indices: dict[int, float] = {}
    for spec in spikes:
        first = int(spec.at_s / nominal_s)
        for k in range(spec.intervals):
            spike_indices[first + k] = spec.jitter_ms
    arrivals = [0.0]
    sign = 1.0
    for i in range(count):
        if i in spike_indices:
            gap = nominal_s + spike_indices[i] / 1000.0
        else:
            deviation = rng.uniform(*base_jitter_ms) / 1000.0
            gap = nominal_s + sign * deviation
            sign = -sign
        if gap <= 0:
            raise ValidationError("base jitter too large for the nominal interval")
        arrivals.append(arrivals[-1] + gap)
    return PacketTrace.make(arrivals, rate_bps, payload_bytes)


def build_random_trace(rng: random.Random, max_packets: int = 200,
                       rate_bps: float = 10_000_000.0, payload_bytes: int = 1250) -> PacketTrace:
    """Arbitrary strictly-increasing trace for oracle-equivalence tests."""
    n = rng.randint(2, max_packets)
    t = rng.uniform(0, 10)
    arrivals = [t]
    for _ in range(n - 1):
        t += rng.uniform(1e-6, 0.01)
        arrivals.append(t)
    return PacketTrace.make(arrivals, rate_bps, payload_bytes)


# -- loopback measurement --------------------------------------------------

@dataclass
class _Capture:
    arrivals: list[float] = field(default_factory=list)
    seqs: list[int] = field(default_factory=list)


def measure_loopback_jitter(
    duration_s: float,
    rate_bps: float,
    payload_bytes: int = 1250,
    spike_threshold_ms: float = 1.75,
    loss_flag_fraction: float = 0.01,
) -> JitterReport:
    """Send a paced UDP stream over loopback and analyze the captured trace."""
    if rate_bps <= 0:
        raise ValidationError("rate_bps must be positive")
    if duration_s <= 0:
        raise ValidationError("duration_s must be positive")
    interval_s = payload_bytes * 8.0 / rate_bps
    total = max(int(duration_s / interval_s), 2)

    rx = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    rx.bind(("127.0.0.1", 0))
    rx.settimeout(2.0)
    addr = rx.getsockname()
    capture = _Capture()

    def _receiver():
        received = 0
        while received < total:
            try:
                data, _ = rx.recvfrom(65535)
            except socket.timeout:
                return
            capture.arrivals.append(time.perf_counter())
            capture.seqs.append(struct.unpack(">I", data[:4])[0])
            received += 1

    thread = threading.Thread(target=_receiver, daemon=True)
    thread.start()

    tx = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    body = bytes(max(payload_bytes - 4, 0))
    start = time.perf_counter()
    for seq in range(total):
        target = start + seq * interval_s
        while True:
            lag = target - time.perf_counter()
            if lag <= 0:
                break
            time.sleep(min(lag, 0.0005))
        tx.sendto(struct.pack(">I", seq) + body, addr)
    thread.join(timeout=duration_s + 3.0)
    tx.close()
    rx.close()

    if len(capture.arrivals) < 2:
        raise ValidationError("loopback capture produced fewer than 2 packets")
    loss = 1.0 - len(capture.arrivals) / total
    # Duplicate or reordered timestamps from coarse timers collapse to a
    # strictly increasing sequence before analysis.
    arrivals = []
    for t in capture.arrivals:
        if arrivals and t <= arrivals[-1]:
            t = arrivals[-1] + 1e-9
        arrivals.append(t)
    trace = PacketTrace.make(arrivals, rate_bps, payload_bytes)
    report = compute_jitter(trace, spike_threshold_ms)
    return JitterReport(
        per_interval_ms=report.per_interval_ms,
        mean_ms=report.mean_ms,
        p95_ms=report.p95_ms,
        max_ms=report.max_ms,
        spike_threshold_ms=report.spike_threshold_ms,
        spike_intervals=report.spike_intervals,
        loss_fraction=loss,
        lossy=loss > loss_flag_fraction,
    )
