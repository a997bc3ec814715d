"""Event bus ordering, resume, and retention tests."""

from __future__ import annotations

import threading
import time

from e112core.events import EventBus, EventKind


class TestEventBus:
    def test_seq_strictly_increasing_per_user(self):
        bus = EventBus()
        seqs = [bus.emit("u1", EventKind.alert, {"n": i}) for i in range(5)]
        assert seqs == [1, 2, 3, 4, 5]
        assert bus.emit("u2", EventKind.alert, {}) == 1  # independent per user

    def test_read_since_replays_after_cursor(self):
        bus = EventBus()
        for i in range(5):
            bus.emit("u1", EventKind.case_status, {"n": i})
        tail = bus.read_since("u1", 3)
        assert [e["seq"] for e in tail] == [4, 5]

    def test_stale_cursor_replays_from_retention_start(self):
        bus = EventBus(retention=3)
        for i in range(10):
            bus.emit("u1", EventKind.alert, {"n": i})
        # Events 1..7 are gone; resuming from 2 replays from the earliest
        # retained event (at-least-once, never skipping past unseen events).
        assert bus.earliest_retained("u1") == 8
        assert [e["seq"] for e in bus.read_since("u1", 2)] == [8, 9, 10]

    def test_follow_blocks_until_event_or_deadline(self):
        bus = EventBus()
        got = []

        def reader():
            deadline = time.monotonic() + 2.0
            for event in bus.follow("u1", 0, deadline=deadline, max_events=1):
                got.append(event)

        t = threading.Thread(target=reader)
        t.start()
        time.sleep(0.05)
        bus.emit("u1", EventKind.chat_message, {"body": "hi"})
        t.join(timeout=2)
        assert not t.is_alive()
        assert [e["seq"] for e in got] == [1]

    def test_follow_deadline_returns_empty(self):
        bus = EventBus()
        out = list(bus.follow("u1", 0, deadline=time.monotonic() + 0.05))
        assert out == []

    def test_follow_yields_backlog_then_stops_at_max(self):
        bus = EventBus()
        for i in range(5):
            bus.emit("u1", EventKind.alert, {"n": i})
        out = list(bus.follow("u1", 1, deadline=time.monotonic() + 0.5, max_events=2))
        assert [e["seq"] for e in out] == [2, 3]
