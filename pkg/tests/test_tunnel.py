import random
import socket
import time

import pytest

from edgefed.clock import FakeTimeline
from edgefed.errors import PortInUseError, TunnelExpiredError
from edgefed.runtime import SocketPodRuntime
from edgefed.tunnel import KeepalivePolicy, TunnelAgent, TunnelGateway
from edgefed.tunnel.gateway import StubPeer


@pytest.fixture
def clock():
    return FakeTimeline()


def make_gateway(clock, **kwargs):
    kwargs.setdefault("pong_grace_s", 0.2)
    gw = TunnelGateway(clock, KeepalivePolicy(interval_s=15.0, max_missed=3), **kwargs)
    gw.start()
    return gw


def start_pod(gw, pod_name="gnuradio-0", remote_port=2200):
    runtime = SocketPodRuntime(pod_name)
    runtime.start_display()
    host, port = gw.control_endpoint
    agent = TunnelAgent(host, port, pod_name, remote_port,
                        {"remote": runtime.echo_port, "web": runtime.display_port}).start()
    return runtime, agent


def rt(port, payload, timeout=5.0):
    """Round-trip payload through a gateway listener, expecting an echo."""
    with socket.create_connection(("127.0.0.1", port), timeout=timeout) as sock:
        sock.sendall(payload)
        sock.shutdown(socket.SHUT_WR)
        received = b""
        while len(received) < len(payload):
            chunk = sock.recv(65536)
            if not chunk:
                break
            received += chunk
    return received


def test_echo_roundtrip_through_reverse_tunnel(clock):
    gw = make_gateway(clock)
    try:
        runtime, agent = start_pod(gw)
        assert rt(2200, b"hello tunnel") == b"hello tunnel"
        runtime.stop()
        agent.stop()
    finally:
        gw.stop()


def test_relay_transparency_random_payloads(clock):
    rng = random.Random(11)
    gw = make_gateway(clock)
    try:
        runtime, agent = start_pod(gw)
        for size in (1, 17, 4096, 262144, 1048576):
            payload = rng.randbytes(size)
            assert rt(2200, payload) == payload
        runtime.stop()
        agent.stop()
    finally:
        gw.stop()


def test_five_concurrent_tunnels_are_isolated(clock):
    gw = make_gateway(clock)
    pods = []
    try:
        for i in range(5):
            pods.append(start_pod(gw, f"gnuradio-{i}", 2200 + i))
        nonces = {2200 + i: f"nonce-{i}-{random.Random(i).random()}".encode() for i in range(5)}
        for port, nonce in nonces.items():
            out = rt(port, nonce * 100)
            assert out == nonce * 100
            for other, other_nonce in nonces.items():
                if other != port:
                    assert other_nonce not in out or other_nonce == nonce
    finally:
        for runtime, agent in pods:
            runtime.stop()
            agent.stop()
        gw.stop()


def test_duplicate_remote_port_registration_rejected(clock):
    gw = make_gateway(clock)
    try:
        runtime, agent = start_pod(gw, "gnuradio-0", 2200)
        with pytest.raises(PortInUseError):
            start_pod(gw, "gnuradio-1", 2200)
        runtime.stop()
        agent.stop()
    finally:
        gw.stop()


def test_idle_tunnel_survives_100_intervals_with_keepalives(clock):
    gw = make_gateway(clock)
    try:
        runtime, agent = start_pod(gw)
        for _ in range(100):
            clock.advance(15.0)
            time.sleep(0.001)  # lets the real pong land before the next tick
        reg = gw.registration(2200)
        assert reg is not None and not reg.expired
        assert reg.missed == 0
        # Post-idle payload still relays intact.
        assert rt(2200, b"still here") == b"still here"
        runtime.stop()
        agent.stop()
    finally:
        gw.stop()


def test_killed_peer_expires_within_tick_bound(clock):
    expired = []
    gw = make_gateway(clock, on_expired=lambda pod, reason: expired.append((pod, reason)))
    gw.pong_grace_s = 0.05
    try:
        runtime, agent = start_pod(gw)
        clock.advance(15.0)
        time.sleep(0.001)
        assert gw.registration(2200).missed == 0
        death = clock.now()
        agent.stop()  # peer killed without unregistering
        runtime.stop()
        clock.advance(120.0)
        assert expired and expired[0][0] == "gnuradio-0"
        assert gw.registration(2200) is None
        # max_missed=3, interval 15: detection within (3 +/- 1) intervals.
        reg_events = expired[0]
        assert reg_events[1] == "keepalive-missed"
    finally:
        gw.stop()


def test_traffic_counts_as_liveness_no_probe_needed(clock):
    gw = make_gateway(clock)
    try:
        runtime, agent = start_pod(gw)
        reg = gw.registration(2200)
        rt(2200, b"data")
        pings_before = reg.peer._token
        # Activity flag set by the transfer: the next tick must not probe.
        result = gw.keepalive_tick(reg, clock.now() + 15.0)
        assert result == "alive"
        assert reg.missed == 0
        runtime.stop()
        agent.stop()
    finally:
        gw.stop()


def test_idle_timeout_without_keepalives_drops_tunnel(clock):
    gw = make_gateway(clock, keepalives_enabled=False, idle_timeout_s=60.0)
    try:
        runtime, agent = start_pod(gw)
        clock.advance(120.0)
        assert gw.registration(2200) is None  # legacy defect: idle session dropped
        with pytest.raises(OSError):
            rt(2200, b"too late", timeout=1.0)
        runtime.stop()
        agent.stop()
    finally:
        gw.stop()


def test_keepalives_defeat_idle_timeout(clock):
    gw = make_gateway(clock, keepalives_enabled=True, idle_timeout_s=60.0)
    try:
        runtime, agent = start_pod(gw)
        for _ in range(10):
            clock.advance(15.0)
            time.sleep(0.001)
        assert gw.registration(2200) is not None
        runtime.stop()
        agent.stop()
    finally:
        gw.stop()


def test_web_bridge_serves_pod_banner(clock):
    gw = make_gateway(clock)
    try:
        runtime, agent = start_pod(gw)
        gw.open_web_bridge("s1", web_port=6080, remote_port=2200)
        with socket.create_connection(("127.0.0.1", 6080), timeout=5.0) as sock:
            sock.sendall(b"GET / HTTP/1.1\r\nHost: x\r\n\r\n")
            sock.shutdown(socket.SHUT_WR)
            data = b""
            while True:
                chunk = sock.recv(65536)
                if not chunk:
                    break
                data += chunk
        assert b"200 OK" in data
        assert b"pod: gnuradio-0" in data
        runtime.stop()
        agent.stop()
    finally:
        gw.stop()


def test_teardown_leaves_no_listener_on_either_port(clock):
    gw = make_gateway(clock)
    try:
        runtime, agent = start_pod(gw)
        gw.open_web_bridge("s1", web_port=6080, remote_port=2200)
        gw.unregister(2200)
        for port in (2200, 6080):
            with pytest.raises(OSError):
                socket.create_connection(("127.0.0.1", port), timeout=0.5)
        runtime.stop()
        agent.stop()
    finally:
        gw.stop()


def test_web_bridge_requires_live_tunnel(clock):
    gw = make_gateway(clock)
    try:
        with pytest.raises(TunnelExpiredError):
            gw.open_web_bridge("s1", web_port=6080, remote_port=2200)
    finally:
        gw.stop()


def test_stub_mode_keepalive_and_expiry(clock):
    gw = TunnelGateway(clock, KeepalivePolicy(interval_s=15.0, max_missed=3), mode="stub")
    gw.start()
    peer = StubPeer()
    reg = gw.register_tunnel("gnuradio-0", 2200, target=("127.0.0.1", 0), peer=peer)
    clock.advance(50.0)
    assert not reg.expired
    peer.kill()
    clock.advance(60.0)
    assert reg.expired
    assert gw.registration(2200) is None
    gw.stop()


def test_stub_mode_tracks_bound_ports_for_reclaim(clock):
    gw = TunnelGateway(clock, mode="stub")
    gw.start()
    gw.register_tunnel("gnuradio-0", 2200, target=("127.0.0.1", 0), peer=StubPeer())
    assert gw.bound(2200)
    assert gw.lookup(2200) is not None
    gw.close(2200)
    assert not gw.bound(2200)
    assert gw.registration(2200) is None
    gw.stop()
