"""Minimal metrics collection with a text scrape exposition.

Samples are kept per (name, labels) series in an in-memory ring bounded by a
retention window (default 1 hour). The scrape document renders the latest
value of every series, one per line:

    name{label="value",...} value timestamp_ms

Lines are ordered lexicographically; a series without labels renders without
braces. The grammar is documented in docs/PROTOCOLS.md.
"""

from __future__ import annotations

import threading
from collections import deque
from dataclasses import dataclass

from .errors import ValidationError


@dataclass(frozen=True)
class MetricSample:
    name: str
    labels: tuple[tuple[str, str], ...]
    value: float
    timestamp_ms: int

    @classmethod
    def make(cls, name: str, labels: dict[str, str] | None, value: float, timestamp_ms: int):
        return cls(name, tuple(sorted((labels or {}).items())), float(value), int(timestamp_ms))


def _render_series_key(name: str, labels: tuple[tuple[str, str], ...]) -> str:
    if not labels:
        return name
    inner = ",".join(f'{k}="{v}"' for k, v in labels)
    return f"{name}{{{inner}}}"


class MetricsRegistry:
    def __init__(self, clock, retention_s: float = 3600.0):
        self._clock = clock
        self.retention_s = retention_s
        self._lock = threading.RLock()
        self._series: dict[tuple[str, tuple], deque[MetricSample]] = {}

    def record(self, sample: MetricSample) -> None:
        key = (sample.name, sample.labels)
        with self._lock:
            series = self._series.get(key)
            if series is None:
                series = deque()
                self._series[key] = series
            if series and sample.timestamp_ms < series[-1].timestamp_ms:
                raise ValidationError(
                    f"timestamp regression on {_render_series_key(*key)}: "
                    f"{sample.timestamp_ms} < {series[-1].timestamp_ms}"
                )
            series.append(sample)
            self._trim(series)

    def _trim(self, series: deque[MetricSample]) -> None:
        horizon_ms = int((self._clock.now() - self.retention_s) * 1000)
        while series and series[0].timestamp_ms < horizon_ms:
            series.popleft()

    def gauge(self, name: str, labels: dict[str, str] | None, value: float) -> None:
        self.record(MetricSample.make(name, labels, value, int(self._clock.now() * 1000)))

    def inc(self, name: str, labels: dict[str, str] | None = None, by: float = 1.0) -> None:
        key = (name, tuple(sorted((labels or {}).items())))
        with self._lock:
            series = self._series.get(key)
            current = series[-1].value if series else 0.0
        self.gauge(name, labels, current + by)

    def series(self, name: str, labels: dict[str, str] | None = None) -> list[MetricSample]:
        key = (name, tuple(sorted((labels or {}).items())))
        with self._lock:
            series = self._series.get(key)
            if series is None:
                return []
            self._trim(series)
            return list(series)

    def query(self, name: str, label_filter: dict[str, str] | None = None) -> dict[tuple, list[MetricSample]]:
        """Series matching name and (subset) label filter, keyed by label tuple."""
        label_filter = label_filter or {}
        out: dict[tuple, list[MetricSample]] = {}
        with self._lock:
            for (series_name, labels), series in self._series.items():
                if series_name != name:
                    continue
                label_map = dict(labels)
                if any(label_map.get(k) != v for k, v in label_filter.items()):
                    continue
                self._trim(series)
                if series:
                    out[labels] = list(series)
        return out

    def latest(self) -> dict[str, tuple[float, int]]:
        """Latest (value, timestamp_ms) per rendered series key."""
        out: dict[str, tuple[float, int]] = {}
        with self._lock:
            for (name, labels), series in self._series.items():
                self._trim(series)
                if series:
                    out[_render_series_key(name, labels)] = (series[-1].value, series[-1].timestamp_ms)
        return out

    def scrape(self) -> str:
        latest = self.latest()
        lines = []
        for key in sorted(latest):
            value, ts = latest[key]
            lines.append(f"{key} {value:.10g} {ts}")
        return "\n".join(lines) + ("\n" if lines else "")


def record_jitter_report(registry: MetricsRegistry, report, source: str = "loopback") -> None:
    """Publish a jitter report's summary as gauges for the scrape surface."""
    base = {"source": source}
    registry.gauge("jitter_mean_ms", base, report.mean_ms)
    registry.gauge("jitter_p95_ms", base, report.p95_ms)
    registry.gauge("jitter_max_ms", base, report.max_ms)
    registry.gauge("jitter_spike_count", base, len(report.spike_intervals))
    for i, (start, end) in enumerate(report.spike_intervals):
        labels = {"source": source, "window": str(i)}
        registry.gauge("jitter_spike_window_start_s", labels, start)
        registry.gauge("jitter_spike_window_end_s", labels, end)
