import random

import pytest

from edgefed.errors import NotFoundError, PortsExhaustedError
from edgefed.lifecycle import FAILED, PENDING, READY, STARTING
from edgefed.runtime import STEP_DISPLAY, STEP_TUNNEL

from conftest import make_core

GIB = 1024**3


def ready(core, record, timeout=60.0):
    assert core.clock.run_until(lambda: record.phase == READY, timeout), (
        f"{record.name} stuck in {record.phase} ({record.pending_reason})")
    return record


def test_first_provision_gets_ordinal_zero_and_reaches_ready():
    core = make_core()
    record = core.pods.provision("s1", "gnuradio")
    assert record.name == "gnuradio-0"
    assert record.phase in (PENDING, "Binding", "Pulling")
    ready(core, record)
    assert record.node_id is not None
    assert record.ready_at is not None
    delay = core.metrics.series("pod_scheduling_delay_ms", {"pod": record.name})
    assert delay and delay[-1].value >= 0.0
    core.close()


def test_five_sequential_provisions_use_ordinals_zero_through_four():
    core = make_core()
    names = [core.pods.provision(f"s{i}", "gnuradio").name for i in range(5)]
    assert names == [f"gnuradio-{i}" for i in range(5)]
    core.clock.run_until(lambda: all(r.phase == READY for r in core.pods.pods()), 120.0)
    core.close()


def test_startup_steps_run_strictly_in_order():
    core = make_core()
    record = core.pods.provision("s1", "gnuradio")
    ready(core, record)
    steps = [e.reason for e in core.events.events(pod="gnuradio-0", kind="step-start")]
    assert steps == ["establish-reverse-tunnel", "start-display-server", "start-desktop"]
    done = [e.reason for e in core.events.events(pod="gnuradio-0", kind="step-done")]
    assert done == steps
    core.close()


def test_image_cache_makes_second_pull_instant():
    core = make_core(workers=[{"node_id": "solo"}])
    first = core.pods.provision("s1", "gnuradio")
    ready(core, first)
    second = core.pods.provision("s2", "gnuradio")
    ready(core, second)
    pulls = [e.reason for e in core.events.events(kind="pull-start")]
    assert pulls == ["2s", "0s"]
    core.close()


def test_capacity_exhaustion_leaves_pod_pending_and_no_index_leak():
    # One worker, 2000m / 8 GiB; request 500m / 2 GiB. Capacity oracle:
    # min(floor(2000/500), floor(8/2)) = 4 pods.
    core = make_core(workers=[{"node_id": "solo", "cpu_millicores": 2000,
                               "mem_bytes": 8 * GIB}])
    capacity = min(2000 // 500, (8 * GIB) // (2 * GIB))
    for i in range(capacity):
        ready(core, core.pods.provision(f"s{i}", "gnuradio"))
    extra = core.pods.provision("s-extra", "gnuradio")
    core.clock.advance(10.0)
    assert extra.phase == PENDING
    assert "feasible" in extra.pending_reason
    assert len(core.allocator.entries()) == capacity + 1  # Pending pod holds its index
    core.pods.terminate("s-extra")
    assert len(core.allocator.entries()) == capacity
    assert core.allocator.lookup(session_id="s-extra") is None
    core.close()


def test_pending_pod_binds_within_one_pass_after_capacity_frees():
    core = make_core(workers=[{"node_id": "solo", "cpu_millicores": 500,
                               "mem_bytes": 2 * GIB}])
    first = core.pods.provision("s1", "gnuradio")
    second = core.pods.provision("s2", "gnuradio")
    ready(core, first)
    core.clock.advance(10.0)
    assert second.phase == PENDING
    core.pods.terminate("s1")  # teardown kicks the scheduler synchronously
    assert second.phase != PENDING
    ready(core, second)
    core.close()


def test_connect_or_reuse_returns_live_pod_without_new_provision():
    core = make_core()
    record = core.pods.provision("s1", "gnuradio")
    ready(core, record)
    count = core.pods.pod_count()
    again = core.pods.connect_or_reuse("s1", "gnuradio")
    assert again is record
    assert core.pods.pod_count() == count
    core.close()


def test_two_sessions_same_app_get_distinct_pods():
    core = make_core()
    a = core.pods.connect_or_reuse("s1", "gnuradio")
    b = core.pods.connect_or_reuse("s2", "gnuradio")
    assert a.name != b.name and a.index != b.index
    core.close()


def test_reconnect_after_failure_provisions_fresh_pod():
    core = make_core(step_timeout_s=5.0)
    record = core.pods.provision("s1", "gnuradio")
    core.clock.run_until(lambda: record.phase == STARTING, 30.0)
    host = core.cluster.host(record.name)
    host.runtime.hang_steps.add(STEP_DISPLAY)
    core.clock.run_until(lambda: record.phase == FAILED, 60.0)
    assert record.failed_step == STEP_DISPLAY

    fresh = core.pods.connect_or_reuse("s1", "gnuradio")
    assert fresh is not record
    assert fresh.index == record.index  # freed ordinal is reused
    ready(core, fresh)
    core.close()


def test_startup_timeout_fails_pod_and_names_step():
    core = make_core(step_timeout_s=5.0)
    record = core.pods.provision("s1", "gnuradio")
    core.clock.run_until(lambda: record.phase == STARTING, 30.0)
    core.cluster.host(record.name).runtime.hang_steps.add("start-desktop")
    core.clock.run_until(lambda: record.phase == FAILED, 60.0)
    assert record.failed_step == "start-desktop"
    started = [e.reason for e in core.events.events(pod=record.name, kind="step-start")]
    finished = [e.reason for e in core.events.events(pod=record.name, kind="step-done")]
    assert started[-1] == "start-desktop" and "start-desktop" not in finished
    core.close()


def test_terminate_releases_in_order_and_reuses_lowest_index():
    core = make_core()
    a = core.pods.provision("s1", "gnuradio")
    b = core.pods.provision("s2", "gnuradio")
    ready(core, a)
    ready(core, b)
    core.pods.terminate("s1")
    kinds = [e.kind for e in core.events.events(pod="gnuradio-0")
             if e.kind in ("proc-stop", "tunnel-close", "alloc-release", "index-release",
                           "ports-released")]
    assert kinds == ["proc-stop", "tunnel-close", "alloc-release", "index-release",
                     "ports-released"]
    third = core.pods.provision("s3", "gnuradio")
    assert third.index == 0
    core.close()


def test_terminate_unknown_session_not_found_but_repeat_is_noop():
    core = make_core()
    with pytest.raises(NotFoundError):
        core.pods.terminate("never-seen")
    core.pods.provision("s1", "gnuradio")
    core.pods.terminate("s1")
    core.pods.terminate("s1")  # second call: no-op success
    core.close()


def test_terminated_session_leaves_zero_store_entries():
    core = make_core()
    for i in range(3):
        core.pods.provision(f"s{i}", "gnuradio")
    core.clock.advance(30.0)
    core.pods.terminate("s1")
    for entry in core.allocator.entries():
        assert entry.session_id != "s1"
    core.close()


def test_probe_threshold_semantics_no_restart_below_threshold():
    core = make_core()
    record = ready(core, core.pods.provision("s1", "gnuradio"))
    host = core.cluster.host(record.name)
    host.runtime.fail_liveness = True
    assert core.pods.probe_tick(record, "liveness") is None
    assert core.pods.probe_tick(record, "liveness") is None
    assert record.liveness_failures == 2
    host.runtime.fail_liveness = False
    assert core.pods.probe_tick(record, "liveness") is None
    assert record.liveness_failures == 0
    assert record.restarts == 0
    core.close()


def test_three_consecutive_liveness_failures_restart_preserving_identity():
    core = make_core()
    record = ready(core, core.pods.provision("s1", "gnuradio"))
    identity = (record.app, record.index, record.name,
                record.ports.remote_port, record.ports.web_port)
    host = core.cluster.host(record.name)
    host.runtime.fail_liveness = True
    results = [core.pods.probe_tick(record, "liveness") for _ in range(3)]
    assert results == [None, None, "restarted"]
    assert record.phase == STARTING
    # The injected failure died with the old runtime; the restart completes.
    ready(core, record)
    assert (record.app, record.index, record.name,
            record.ports.remote_port, record.ports.web_port) == identity
    assert record.restarts == 1
    registrations = core.events.events(pod=record.name, kind="tunnel-registered")
    assert len(registrations) == 2  # restart re-established the tunnel
    core.close()


def test_readiness_failures_mark_not_ready_without_restart():
    core = make_core()
    record = ready(core, core.pods.provision("s1", "gnuradio"))
    host = core.cluster.host(record.name)
    host.runtime.fail_readiness = True
    transitions = [core.pods.probe_tick(record, "readiness") for _ in range(3)]
    assert transitions == [None, None, "not-ready"]
    assert record.phase == READY and not record.ready_gate
    assert record.restarts == 0
    host.runtime.fail_readiness = False
    assert core.pods.probe_tick(record, "readiness") == "ready"
    assert record.ready_gate
    core.close()


def test_tunnel_expiry_feeds_probe_failure_path_and_restart():
    core = make_core()
    record = ready(core, core.pods.provision("s1", "gnuradio"))
    registration = core.gateway.registration(record.ports.remote_port)
    registration.peer.kill()
    # Keepalives miss, the tunnel expires, liveness probes then restart the
    # pod and the restart registers a new tunnel.
    core.clock.run_until(
        lambda: record.restarts >= 1 and record.phase == READY, 600.0)
    assert core.gateway.alive(record.ports.remote_port)
    expiry_events = core.events.events(pod=record.name, kind="tunnel-expired")
    assert expiry_events
    core.close()


def test_draining_node_rejects_bind_and_pod_returns_to_pending():
    core = make_core(workers=[{"node_id": "solo"}])
    core.cluster.node("solo").drain(True)
    record = core.pods.provision("s1", "gnuradio")
    assert record.phase == PENDING
    assert "draining" in record.pending_reason
    core.cluster.node("solo").drain(False)
    core.clock.advance(6.0)  # periodic sweep rebinds
    ready(core, record)
    core.close()


def test_ports_exhausted_is_explicit_error():
    core = make_core(max_index=2)
    core.pods.provision("s1", "gnuradio")
    core.pods.provision("s2", "gnuradio")
    with pytest.raises(PortsExhaustedError):
        core.pods.provision("s3", "gnuradio")
    core.close()


def test_randomized_interleavings_hold_model_invariants():
    core = make_core(pull_delay_s=0.2, step_duration_s=0.02)
    rng = random.Random(2024)
    sessions = [f"u{i}" for i in range(12)]
    apps = ["gnuradio", "spectrum"]
    model = {}  # session -> {app: name}
    for _ in range(300):
        op = rng.random()
        session = rng.choice(sessions)
        app = rng.choice(apps)
        if op < 0.5:
            record = core.pods.connect_or_reuse(session, app)
            model.setdefault(session, {})[app] = record.name
        elif op < 0.8 and session in model:
            core.pods.terminate(session)
            model.pop(session, None)
        else:
            core.clock.advance(rng.uniform(0.1, 5.0))
        # (a) no two live pods share an index within an app
        for check_app in apps:
            indices = [r.index for r in core.pods.pods_for_app(check_app)]
            assert len(indices) == len(set(indices))
        # (b) every pod has exactly one owning session, matching the model
        for record in core.pods.pods():
            assert model.get(record.owner_session, {}).get(record.app) == record.name
        # (c) store entries correspond 1:1 to live pods
        entry_keys = {e.key for e in core.allocator.entries()}
        assert entry_keys == {r.name for r in core.pods.pods()}
    core.close()
