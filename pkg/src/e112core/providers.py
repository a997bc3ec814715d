"""Pluggable outbound integrations: SMS dispatch, push delivery, reverse geocoding.

Only this module may know about concrete vendors; the rest of the service
composes against these interfaces. Failures are expressed in the returned
result, never raised, so callers own the retry policy. The in-memory fakes
are deterministic and internally synchronized, with inspectable state for
tests and the scenario harness.
"""

from __future__ import annotations

import math
import random
import threading
from dataclasses import dataclass
from typing import Any, Protocol

from .geo import Coordinate


@dataclass(frozen=True)
class DispatchResult:
    accepted: bool
    reason: str | None = None

    @staticmethod
    def ok() -> "DispatchResult":
        return DispatchResult(True)

    @staticmethod
    def failed(reason: str) -> "DispatchResult":
        return DispatchResult(False, reason)


class SmsProvider(Protocol):
    def send(self, phone: str, text: str) -> DispatchResult: ...


class PushProvider(Protocol):
    def send(self, push_token: str, payload: dict[str, Any]) -> DispatchResult: ...


class ReverseGeocoder(Protocol):
    def describe(self, p: Coordinate) -> str: ...


class FakeSms:
    """Records every message in call order; a fault flag forces failures."""

    def __init__(self):
        self._lock = threading.Lock()
        self._outbox: list[dict[str, Any]] = []
        self._seq = 0
        self.fail_all = False

    def send(self, phone: str, text: str) -> DispatchResult:
        with self._lock:
            if self.fail_all:
                return DispatchResult.failed("injected")
            self._seq += 1
            self._outbox.append({"phone": phone, "text": text, "sent_seq": self._seq})
            return DispatchResult.ok()

    @property
    def outbox(self) -> list[dict[str, Any]]:
        with self._lock:
            return [dict(m) for m in self._outbox]

    def messages_for(self, phone: str) -> list[dict[str, Any]]:
        return [m for m in self.outbox if m["phone"] == phone]


class FakePush:
    """Per-token delivery queues plus a seeded drop-rate for retry testing.

    Tokens must be registered before delivery, mirroring how a real push
    carrier only accepts device-issued tokens.
    """

    def __init__(self, drop_rate: float = 0.0, seed: int = 0):
        self._lock = threading.Lock()
        self._queues: dict[str, list[dict[str, Any]]] = {}
        self._rng = random.Random(seed)
        self.drop_rate = drop_rate
        self._send_count = 0

    def register(self, push_token: str) -> None:
        with self._lock:
            self._queues.setdefault(push_token, [])

    def send(self, push_token: str, payload: dict[str, Any]) -> DispatchResult:
        with self._lock:
            self._send_count += 1
            if push_token not in self._queues:
                return DispatchResult.failed("unknown_token")
            if self.drop_rate > 0 and self._rng.random() < self.drop_rate:
                return DispatchResult.failed("dropped")
            self._queues[push_token].append(payload)
            return DispatchResult.ok()

    def queue_for(self, push_token: str) -> list[dict[str, Any]]:
        with self._lock:
            return list(self._queues.get(push_token, []))

    def all_queues(self) -> dict[str, list[dict[str, Any]]]:
        with self._lock:
            return {t: list(q) for t, q in self._queues.items()}

    @property
    def send_count(self) -> int:
        with self._lock:
            return self._send_count


class FakeGeocoder:
    """Pure grid-cell labeller; identical input always gives identical output."""

    def __init__(self, cell_deg: float = 0.1):
        self.cell_deg = cell_deg

    def describe(self, p: Coordinate) -> str:
        i = math.floor(p.lat / self.cell_deg)
        j = math.floor(p.lon / self.cell_deg)
        return f"sector {i}/{j}"


@dataclass
class ProviderSet:
    sms: SmsProvider
    push: PushProvider
    geocoder: ReverseGeocoder

    @staticmethod
    def fakes(push_drop_rate: float = 0.0, seed: int = 0) -> "ProviderSet":
        return ProviderSet(sms=FakeSms(), push=FakePush(push_drop_rate, seed),
                           geocoder=FakeGeocoder())
