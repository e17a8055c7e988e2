import pytest

from edgefed.errors import ValidationError
from edgefed.lifecycle import READY
from edgefed.simedge import MemRampModel, ScaleSignal, SimClusterSpec
from edgefed.scheduler import NodeDescriptor

from conftest import make_core

GIB = 1024**3


def deploy_ready(core, session, app="gnuradio"):
    record = core.pods.provision(session, app)
    assert core.clock.run_until(lambda: record.phase == READY, 60.0)
    return record


def test_spec_validation():
    with pytest.raises(ValidationError):
        SimClusterSpec(workers=[])
    with pytest.raises(ValidationError):
        SimClusterSpec(workers=[NodeDescriptor("w")], noise_fraction=0.5)


def test_ramp_model_closed_form():
    ramp = MemRampModel(request_bytes=2 * GIB, ramp_duration_s=120.0, start_time=1000.0)
    assert ramp.value(1000.0) == 0.0
    assert ramp.value(1060.0) == pytest.approx(1 * GIB)
    assert ramp.value(1120.0) == pytest.approx(2 * GIB)
    assert ramp.value(1240.0) == pytest.approx(2 * GIB)  # plateau
    assert ramp.value(1060.0, eps=0.02) == pytest.approx(1 * GIB * 1.02)


def test_pod_memory_half_ramp_and_plateau_within_noise():
    core = make_core(noise_fraction=0.02, ramp_duration_s=120.0)
    record = deploy_ready(core, "s1")
    host = core.cluster.host(record.name)
    t0 = host.ramp.start_time
    R = record.request.mem_bytes

    core.clock.advance(t0 + 60.0 - core.clock.now())
    mid = host.mem_bytes(core.clock.now(), 0.02)
    assert abs(mid - R / 2) <= 0.02 * R

    core.clock.advance(180.0)  # well past 2T
    plateau = host.mem_bytes(core.clock.now(), 0.02)
    assert abs(plateau - R) <= 0.02 * R
    core.close()


def test_measured_series_tracks_closed_form_within_noise_band():
    core = make_core(noise_fraction=0.02, ramp_duration_s=120.0)
    record = deploy_ready(core, "s1")
    host = core.cluster.host(record.name)
    R = record.request.mem_bytes
    for _ in range(150):
        core.clock.advance(2.0)
        now = core.clock.now()
        measured = host.mem_bytes(now, core.cluster.spec.noise_fraction)
        ideal = host.ramp.value(now)
        assert abs(measured - ideal) <= core.cluster.spec.noise_fraction * R + 1e-6
    core.close()


def test_report_status_allocated_vs_measured_mid_ramp():
    core = make_core(workers=[{"node_id": "solo"}], ramp_duration_s=120.0)
    deploy_ready(core, "s1")
    deploy_ready(core, "s2")
    # Mid-ramp for both pods.
    core.clock.advance(30.0)
    status = core.cluster.node("solo").report_status()
    allocated = status["allocated_mem_bytes"]
    assert allocated == 2 * 2 * GIB  # scheduling view: sum of requests
    measured = sum(p["mem_bytes"] for p in status["pods"])
    assert 0 < measured <= allocated
    core.close()


def test_empty_node_reports_zero(clock):
    core = make_core(clock=clock)
    status = core.cluster.node("node-1").report_status()
    assert status["pods"] == []
    assert status["allocated_cpu_millicores"] == 0
    core.close()


def test_snapshot_timestamps_strictly_increase():
    core = make_core()
    node = core.cluster.node("node-1")
    stamps = [node.report_status()["ts"] for _ in range(5)]
    assert all(b > a for a, b in zip(stamps, stamps[1:]))
    core.close()


def test_memory_sampler_emits_series():
    core = make_core()
    record = deploy_ready(core, "s1")
    core.clock.advance(10.0)
    series = core.metrics.query("pod_memory_bytes", {"pod": record.name})
    assert series and all(len(s) >= 1 for s in series.values())
    core.close()


def test_scale_signal_updates_desired_gauge_without_reconcile():
    core = make_core()
    core.pods.provision("s1", "gnuradio")
    assert core.cluster.desired_replicas["gnuradio"] == 1
    assert core.pods.pod_count() == 1  # the signal did not double-provision
    core.close()


def test_apply_scale_up_down_up_ordinal_order():
    core = make_core(pull_delay_s=0.5, step_duration_s=0.05)
    actions = core.cluster.apply_scale(ScaleSignal("gnuradio", 5))
    assert actions == [("provision", f"gnuradio-{i}") for i in range(5)]
    core.clock.run_until(
        lambda: all(r.phase == READY for r in core.pods.pods_for_app("gnuradio")), 120.0)

    down = core.cluster.apply_scale(ScaleSignal("gnuradio", 3))
    assert down == [("terminate", "gnuradio-4"), ("terminate", "gnuradio-3")]
    assert [r.name for r in core.pods.pods_for_app("gnuradio")] == [
        "gnuradio-0", "gnuradio-1", "gnuradio-2"]

    up = core.cluster.apply_scale(ScaleSignal("gnuradio", 5))
    assert up == [("provision", "gnuradio-3"), ("provision", "gnuradio-4")]
    core.clock.run_until(
        lambda: all(r.phase == READY for r in core.pods.pods_for_app("gnuradio")), 120.0)
    # Re-created replicas re-established their tunnels.
    for name in ("gnuradio-3", "gnuradio-4"):
        regs = core.events.events(pod=name, kind="tunnel-registered")
        assert len(regs) == 2
    core.close()


def test_apply_scale_converges_within_pipeline_bound():
    # Bound: (pull + startup) * ceil(target / parallelism); provisioning is
    # sequential but pipelines overlap, so the serial bound is generous.
    core = make_core(pull_delay_s=0.5, step_duration_s=0.05, step_timeout_s=10.0)
    pipeline_s = 0.5 + 3 * 0.05
    core.cluster.apply_scale(ScaleSignal("gnuradio", 5))
    converged = core.clock.run_until(
        lambda: [r.phase for r in core.pods.pods_for_app("gnuradio")] == [READY] * 5,
        timeout=pipeline_s * 5,
    )
    assert converged
    core.close()


def test_apply_scale_partial_satisfaction_on_capacity_shortfall():
    core = make_core(workers=[{"node_id": "solo", "cpu_millicores": 1000,
                               "mem_bytes": 4 * GIB}])
    actions = core.cluster.apply_scale(ScaleSignal("gnuradio", 4))
    assert len(actions) == 4
    core.clock.advance(30.0)
    pods = core.pods.pods_for_app("gnuradio")
    ready_count = sum(1 for r in pods if r.phase == READY)
    pending = [r for r in pods if r.phase == "Pending"]
    assert ready_count == 2  # min(1000/500, 4 GiB/2 GiB) = 2
    assert len(pending) == 2 and all(r.pending_reason for r in pending)
    core.close()
