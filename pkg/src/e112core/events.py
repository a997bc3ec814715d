"""Per-user ordered event streams with resume support.

Each user has an append-only log of {seq, kind, payload} events; seq is
strictly increasing per user. Readers resume from a seq cursor and get
at-least-once delivery: a cursor below the retention window replays from
the earliest retained event, never skipping ahead.
"""

from __future__ import annotations

import threading
from collections import deque
from enum import Enum
from typing import Any, Iterator

DEFAULT_RETENTION = 1000


class EventKind(str, Enum):
    alert = "alert"
    case_status = "case_status"
    chat_message = "chat_message"
    chat_redaction = "chat_redaction"
    group_opened = "group_opened"


class EventBus:
    def __init__(self, retention: int = DEFAULT_RETENTION):
        self.retention = retention
        self._cond = threading.Condition()
        self._logs: dict[str, deque[dict[str, Any]]] = {}
        self._next_seq: dict[str, int] = {}

    def emit(self, user_id: str, kind: EventKind | str, payload: dict[str, Any]) -> int:
        kind = EventKind(kind)
        with self._cond:
            seq = self._next_seq.get(user_id, 0) + 1
            self._next_seq[user_id] = seq
            log = self._logs.setdefault(user_id, deque())
            log.append({"seq": seq, "kind": kind.value, "payload": payload})
            while len(log) > self.retention:
                log.popleft()
            self._cond.notify_all()
            return seq

    def emit_many(self, user_ids, kind: EventKind | str, payload: dict[str, Any]) -> None:
        for uid in user_ids:
            self.emit(uid, kind, payload)

    def earliest_retained(self, user_id: str) -> int | None:
        with self._cond:
            log = self._logs.get(user_id)
            return log[0]["seq"] if log else None

    def read_since(self, user_id: str, after_seq: int, limit: int | None = None) -> list[dict[str, Any]]:
        """Non-blocking backlog read; clamps a too-old cursor to retention start."""
        with self._cond:
            log = self._logs.get(user_id, deque())
            out = [e for e in log if e["seq"] > after_seq]
        return out if limit is None else out[:limit]

    def follow(
        self,
        user_id: str,
        after_seq: int,
        deadline: float | None = None,
        max_events: int | None = None,
    ) -> Iterator[dict[str, Any]]:
        """Yield events after the cursor, blocking for new ones until deadline.

        deadline is a time.monotonic() value; None follows forever (caller
        stops by closing the generator).
        """
        import time

        cursor = after_seq
        sent = 0
        while True:
            with self._cond:
                while True:
                    log = self._logs.get(user_id, deque())
                    batch = [e for e in log if e["seq"] > cursor]
                    if batch:
                        break
                    timeout = None if deadline is None else deadline - time.monotonic()
                    if timeout is not None and timeout <= 0:
                        return
                    self._cond.wait(timeout)
            for event in batch:
                yield event
                cursor = event["seq"]
                sent += 1
                if max_events is not None and sent >= max_events:
                    return
