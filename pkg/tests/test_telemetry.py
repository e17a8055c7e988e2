import re

import pytest

from edgefed.clock import FakeTimeline
from edgefed.errors import ValidationError
from edgefed.telemetry import MetricSample, MetricsRegistry


def parse_exposition(text):
    """Independent tiny parser for the scrape grammar (oracle)."""
    out = {}
    for line in text.splitlines():
        m = re.fullmatch(r'([a-zA-Z_][a-zA-Z0-9_]*)(\{[^}]*\})? (\S+) (\d+)', line)
        assert m, f"unparseable line: {line!r}"
        name, labels, value, ts = m.groups()
        key = name + (labels or "")
        out[key] = (float(value), int(ts))
    return out


@pytest.fixture
def registry():
    return MetricsRegistry(FakeTimeline(), retention_s=3600.0)


def test_record_then_query_returns_sample(registry):
    registry.gauge("pod_memory_bytes", {"pod": "gnuradio-0"}, 123.0)
    series = registry.series("pod_memory_bytes", {"pod": "gnuradio-0"})
    assert len(series) == 1 and series[0].value == 123.0


def test_timestamp_regression_rejected():
    clock = FakeTimeline(start=10.0)
    registry = MetricsRegistry(clock, retention_s=3600.0)
    registry.record(MetricSample.make("m", None, 1.0, 1000))
    registry.record(MetricSample.make("m", None, 2.0, 1000))  # equal is fine
    with pytest.raises(ValidationError):
        registry.record(MetricSample.make("m", None, 3.0, 999))


def test_retention_ring_drops_old_samples():
    clock = FakeTimeline(start=0.0)
    registry = MetricsRegistry(clock, retention_s=3600.0)
    for i in range(10000):
        registry.record(MetricSample.make("m", None, float(i), int(clock.now() * 1000)))
        clock.advance(1.0)
    series = registry.series("m")
    assert len(series) <= 3601
    assert series[-1].value == 9999.0
    assert [s.value for s in series] == sorted(s.value for s in series)


def test_label_isolation(registry):
    registry.gauge("m", {"pod": "a"}, 1.0)
    registry.gauge("m", {"pod": "b"}, 2.0)
    assert [s.value for s in registry.series("m", {"pod": "a"})] == [1.0]
    by_label = registry.query("m", {"pod": "b"})
    assert list(by_label.keys()) == [(("pod", "b"),)]


def test_empty_registry_scrapes_empty_document(registry):
    assert registry.scrape() == ""


def test_single_gauge_renders_one_line():
    clock = FakeTimeline(start=1000.0)
    registry = MetricsRegistry(clock)
    registry.gauge("pod_memory_bytes", {"pod": "gnuradio-0"}, 2147483648)
    registry.gauge("pod_memory_bytes", {"pod": "gnuradio-0"}, 2147483650)
    text = registry.scrape()
    assert text == 'pod_memory_bytes{pod="gnuradio-0"} 2147483650 1000000\n'


def test_scrape_roundtrip_equals_latest_sample_map():
    clock = FakeTimeline(start=500.0)
    registry = MetricsRegistry(clock)
    registry.gauge("b_metric", None, 7)
    registry.gauge("a_metric", {"pod": "x", "node": "n1"}, 0.25)
    clock.advance(1.0)
    registry.gauge("a_metric", {"pod": "x", "node": "n1"}, 0.5)
    text = registry.scrape()
    parsed = parse_exposition(text)
    expected = {k: v for k, v in registry.latest().items()}
    assert parsed == expected
    # Lines are lexicographically ordered and labels render sorted by key.
    lines = text.splitlines()
    assert lines == sorted(lines)
    assert 'a_metric{node="n1",pod="x"}' in lines[0]


def test_inc_accumulates(registry):
    registry.inc("restarts_total", {"pod": "p"})
    registry.inc("restarts_total", {"pod": "p"}, by=2)
    assert registry.series("restarts_total", {"pod": "p"})[-1].value == 3.0
