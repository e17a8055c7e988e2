import random

import pytest

from edgefed.clock import FakeTimeline
from edgefed.errors import ConflictError, ForbiddenError, InvalidWindowError, NotFoundError
from edgefed.reservations import Reservation, ReservationBook, Window


def _book(inventory, clock, journal=None):
    return ReservationBook(inventory, clock, journal_path=journal)


def _window(clock, offset_h, length_h=2):
    start = clock.now() + offset_h * 3600
    return Window(start, start + length_h * 3600)


def brute_force_no_overlap(reservations):
    """Independent pairwise interval-overlap oracle."""
    items = list(reservations)
    for i in range(len(items)):
        for j in range(i + 1, len(items)):
            a, b = items[i], items[j]
            if a.window.start < b.window.end and b.window.start < a.window.end:
                if a.node_id == b.node_id or (a.device_ids & b.device_ids):
                    return False
    return True


def test_create_on_empty_calendar(inventory, clock):
    book = _book(inventory, clock)
    r = book.create("u1", "sdr", "node-1", {"usrp-3", "usrp-5"}, _window(clock, 1))
    assert r.device_ids == frozenset({"usrp-3", "usrp-5"})
    assert book.get(r.reservation_id) == r


def test_overlapping_devices_conflict_names_blocker(inventory, clock):
    book = _book(inventory, clock)
    first = book.create("u1", "sdr", "node-1", {"usrp-3", "usrp-5"}, _window(clock, 1, 2))
    with pytest.raises(ConflictError) as excinfo:
        book.create("u2", "sdr", "node-2", {"usrp-5"}, _window(clock, 2, 2))
    assert excinfo.value.details["blocking_reservation"]["reservation_id"] == first.reservation_id


def test_node_overlap_conflicts_even_with_disjoint_devices(inventory, clock):
    book = _book(inventory, clock)
    book.create("u1", "sdr", "node-1", {"usrp-3"}, _window(clock, 1, 2))
    with pytest.raises(ConflictError):
        book.create("u2", "sdr", "node-1", {"usrp-7"}, _window(clock, 2, 2))


def test_disjoint_devices_overlapping_window_succeed(inventory, clock):
    book = _book(inventory, clock)
    book.create("u1", "sdr", "node-1", {"usrp-3", "usrp-5"}, _window(clock, 1, 2))
    r2 = book.create("u2", "sdr", "node-2", {"usrp-1"}, _window(clock, 2, 2))
    assert r2 is not None
    assert brute_force_no_overlap(book.snapshot())


def test_invalid_window_rejected(inventory, clock):
    book = _book(inventory, clock)
    t = clock.now() + 3600
    with pytest.raises(InvalidWindowError):
        book.create("u1", "sdr", "node-1", {"usrp-1"}, Window(t, t))
    with pytest.raises(InvalidWindowError):
        book.create("u1", "sdr", "node-1", {"usrp-1"}, _window(clock, -5))


def test_unknown_device_and_node_rejected(inventory, clock):
    book = _book(inventory, clock)
    with pytest.raises(NotFoundError):
        book.create("u1", "sdr", "node-1", {"usrp-99"}, _window(clock, 1))
    with pytest.raises(NotFoundError):
        book.create("u1", "sdr", "node-9", {"usrp-1"}, _window(clock, 1))


def test_rejected_create_leaves_calendar_unchanged(inventory, clock):
    book = _book(inventory, clock)
    book.create("u1", "sdr", "node-1", {"usrp-3"}, _window(clock, 1, 2))
    before = book.snapshot()
    with pytest.raises(ConflictError):
        book.create("u2", "sdr", "node-1", {"usrp-3"}, _window(clock, 1, 2))
    assert book.snapshot() == before


def test_cancel_frees_slot_for_rereservation(inventory, clock):
    book = _book(inventory, clock)
    window = _window(clock, 1)
    r = book.create("u1", "sdr", "node-1", {"usrp-1"}, window)
    book.cancel(r.reservation_id, "u1")
    again = book.create("u2", "sdr", "node-1", {"usrp-1"}, window)
    assert again.reservation_id != r.reservation_id


def test_cancel_foreign_reservation_forbidden_unless_admin(inventory, clock):
    book = _book(inventory, clock)
    r = book.create("u1", "sdr", "node-1", {"usrp-1"}, _window(clock, 1))
    with pytest.raises(ForbiddenError):
        book.cancel(r.reservation_id, "u2")
    book.cancel(r.reservation_id, "u2", admin=True)


def test_double_cancel_is_not_found(inventory, clock):
    book = _book(inventory, clock)
    r = book.create("u1", "sdr", "node-1", {"usrp-1"}, _window(clock, 1))
    book.cancel(r.reservation_id, "u1")
    with pytest.raises(NotFoundError):
        book.cancel(r.reservation_id, "u1")


def test_active_reservation_membership_and_boundary(inventory, clock):
    book = _book(inventory, clock)
    r = book.create("u1", "sdr", "node-1", {"usrp-1"}, _window(clock, 1, 2))
    assert book.active_for("u1", r.window.start) == r
    assert book.active_for("u1", r.window.start + 10) == r
    # Half-open: end is outside.
    assert book.active_for("u1", r.window.end) is None
    assert book.active_for("u2", r.window.start) is None


def test_active_reservation_picks_window_containing_now(inventory, clock):
    book = _book(inventory, clock)
    book.create("u1", "sdr", "node-1", {"usrp-1"}, _window(clock, 1, 2))
    second = book.create("u1", "sdr", "node-2", {"usrp-4"}, _window(clock, 5, 2))
    now = second.window.start + 60
    # Oracle: scan all reservations for membership.
    expected = [r for r in book.snapshot() if r.user_id == "u1" and r.window.contains(now)]
    assert expected == [second]
    assert book.active_for("u1", now) == second


def test_journal_replay_restores_live_reservations(inventory, clock, tmp_path):
    journal = tmp_path / "journal.jsonl"
    book = _book(inventory, clock, journal)
    keep = book.create("u1", "sdr", "node-1", {"usrp-1"}, _window(clock, 1))
    drop = book.create("u1", "sdr", "node-2", {"usrp-4"}, _window(clock, 1))
    book.cancel(drop.reservation_id, "u1")

    reopened = _book(inventory, clock, journal)
    assert [r.reservation_id for r in reopened.snapshot()] == [keep.reservation_id]


def test_random_create_cancel_keeps_calendar_invariant(inventory, clock):
    rng = random.Random(1234)
    book = _book(inventory, clock)
    devices = [f"usrp-{i}" for i in range(1, 9)]
    nodes = ["node-1", "node-2", "node-3"]
    live: list[Reservation] = []
    for _ in range(400):
        if live and rng.random() < 0.4:
            victim = live.pop(rng.randrange(len(live)))
            book.cancel(victim.reservation_id, victim.user_id)
        else:
            start = clock.now() + rng.randint(1, 100) * 1800
            window = Window(start, start + rng.randint(1, 6) * 1800)
            chosen = rng.sample(devices, rng.randint(1, 3))
            try:
                r = book.create(f"u{rng.randint(1, 4)}", "sdr", rng.choice(nodes), chosen, window)
                live.append(r)
            except ConflictError:
                pass
        assert brute_force_no_overlap(book.snapshot())
    assert {r.reservation_id for r in live} == {r.reservation_id for r in book.snapshot()}
