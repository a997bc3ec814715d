"""Alert lifecycle and geo-targeted fan-out with an exactly-once ledger.

Activation is linearizable per alert: the status flip and one delivery
ledger row per recipient commit in a single atomic store group, with the
(alert_id, user_id) ledger key guaranteeing a user is never enqueued
twice for the same alert — including users picked up later by the
location-update hook. Push delivery itself is asynchronous and retried;
losing a push never loses the ledger row or the user's stream event.
"""

from __future__ import annotations

import queue
import threading
from typing import Any

from .clock import Clock
from .config import ServiceConfig
from .errors import AlreadyExpired, Conflict, Forbidden, NotFound
from .events import EventBus, EventKind
from .geo import Coordinate, GeoIndex, Geofence, geofence_contains
from .identity import Principal
from .model import (
    Alert,
    AlertSource,
    AlertStatus,
    Role,
    UserAccount,
    compose_alert_payload,
    from_canon,
    to_canon,
    transition,
    validate_alert,
    with_status,
)
from .providers import PushProvider
from .store import MemoryStore, WriteOp

_STOP = object()


class PushDispatcher:
    """Background worker that pushes payloads with bounded retries.

    Failures back off exponentially; the final attempt count lands on the
    delivery ledger row. drain() lets tests and the harness wait for the
    queue to settle.
    """

    def __init__(self, store: MemoryStore, push: PushProvider, clock: Clock,
                 config: ServiceConfig):
        self.store = store
        self.push = push
        self.clock = clock
        self.config = config
        self._queue: queue.Queue = queue.Queue()
        self._idle = threading.Condition()
        self._busy = 0
        self._worker = threading.Thread(target=self._run, name="push-dispatcher", daemon=True)
        self._worker.start()

    def enqueue(self, delivery_id: str, push_token: str, payload: dict[str, Any]) -> None:
        with self._idle:
            self._busy += 1
        self._queue.put((delivery_id, push_token, payload))

    def _run(self) -> None:
        while True:
            job = self._queue.get()
            if job is _STOP:
                return
            try:
                self._deliver(*job)
            finally:
                with self._idle:
                    self._busy -= 1
                    self._idle.notify_all()

    def _deliver(self, delivery_id: str, push_token: str, payload: dict[str, Any]) -> None:
        attempts = 0
        for attempt in range(1, self.config.push_max_attempts + 1):
            attempts = attempt
            result = self.push.send(push_token, payload)
            if result.accepted:
                break
            if attempt < self.config.push_max_attempts:
                self.clock.sleep(self.config.push_backoff_base_s * 2 ** (attempt - 1))
        while True:
            try:
                doc, version = self.store.get("delivery", delivery_id)
            except NotFound:
                return
            doc["attempt_count"] = attempts
            try:
                self.store.put("delivery", delivery_id, doc, version)
                return
            except Conflict:
                continue

    def drain(self) -> None:
        with self._idle:
            while self._busy:
                self._idle.wait()

    def close(self) -> None:
        self._queue.put(_STOP)
        self._worker.join(timeout=5)


class AlertingService:
    def __init__(self, store: MemoryStore, clock: Clock, index: GeoIndex,
                 events: EventBus, push: PushProvider, config: ServiceConfig):
        self.store = store
        self.clock = clock
        self.index = index
        self.events = events
        self.config = config
        self.dispatcher = PushDispatcher(store, push, clock, config)
        self._locks_guard = threading.Lock()
        self._alert_locks: dict[str, threading.Lock] = {}

    def _lock_for(self, alert_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._alert_locks.setdefault(alert_id, threading.Lock())

    @staticmethod
    def _require_operator(principal: Principal) -> None:
        if principal.role != Role.operator:
            raise Forbidden("operator role required")

    # -- lifecycle ---------------------------------------------------------

    def create_alert(self, principal: Principal, fields: dict[str, Any],
                     alert_id: str, now: float | None = None) -> Alert:
        self._require_operator(principal)
        now = self.clock.now() if now is None else now
        alert = validate_alert(
            id=alert_id,
            hazard=fields["hazard"],
            area=fields["area"],
            severity=fields["severity"],
            short_text=fields["short_text"],
            guidance_text=fields["guidance_text"],
            source=AlertSource(operator_id=principal.user_id,
                               authority=fields["authority"]),
            effective_from=fields["effective_from"],
            expires_at=fields["expires_at"],
            created_at=now,
        )
        self.store.put("alert", alert.id, to_canon(alert), 0)
        return alert

    def get_alert(self, alert_id: str) -> tuple[Alert, int]:
        try:
            doc, version = self.store.get("alert", alert_id)
        except NotFound:
            raise NotFound(f"no alert {alert_id}") from None
        return from_canon(doc), version

    def activate_alert(self, principal: Principal, alert_id: str) -> dict[str, Any]:
        self._require_operator(principal)
        with self._lock_for(alert_id):
            alert, version = self.get_alert(alert_id)
            transition("alert", alert.status, AlertStatus.active)
            now = self.clock.now()
            if now >= alert.expires_at:
                raise AlreadyExpired(f"alert {alert_id} expired before activation")
            active = with_status(alert, "active")

            recipients = self._recipients_in(alert.area)
            ops = [WriteOp("alert", alert_id, to_canon(active), version)]
            for user in recipients:
                ops.append(WriteOp("delivery", f"{alert_id}:{user.id}",
                                   self._delivery_doc(alert_id, user.id, now), 0))
            try:
                self.store.atomically(ops)
            except Conflict:
                # Lost a race with another writer; surface the lifecycle truth.
                current, _ = self.get_alert(alert_id)
                transition("alert", current.status, AlertStatus.active)
                raise

            payload = compose_alert_payload(active)
            for user in recipients:
                self.events.emit(user.id, EventKind.alert, payload)
                if user.push_token:
                    self.dispatcher.enqueue(f"{alert_id}:{user.id}", user.push_token, payload)
            # Operators watch every activation on their stream (dashboard
            # live map); that is monitoring, not delivery: no ledger row.
            recipient_ids = {user.id for user in recipients}
            for doc, _ in self.store.list("user", where={"role": "operator"}):
                if doc["id"] not in recipient_ids:
                    self.events.emit(doc["id"], EventKind.alert, payload)
            return {"recipient_count": len(recipients)}

    def cancel_alert(self, principal: Principal, alert_id: str) -> Alert:
        self._require_operator(principal)
        with self._lock_for(alert_id):
            alert, version = self.get_alert(alert_id)
            cancelled = with_status(alert, transition("alert", alert.status, AlertStatus.cancelled))
            self.store.put("alert", alert_id, to_canon(cancelled), version)
            return cancelled

    def expire_sweep(self, now: float | None = None) -> int:
        """Flip every active alert past its window to expired; returns how many."""
        now = self.clock.now() if now is None else now
        expired = 0
        for doc, version in self.store.list("alert", where={"status": "active"}):
            if doc["expires_at"] <= now:
                alert = from_canon(doc)
                try:
                    self.store.put("alert", alert.id,
                                   to_canon(with_status(alert, "expired")), version)
                    expired += 1
                except Conflict:
                    continue  # raced with cancel; next sweep settles it
        return expired

    # -- queries -------------------------------------------------------------

    def active_alerts_at(self, p: Coordinate, now: float | None = None) -> list[Alert]:
        now = self.clock.now() if now is None else now
        hits = []
        for doc, _ in self.store.list("alert", where={"status": "active"}):
            alert = from_canon(doc)
            if alert.effective_from <= now < alert.expires_at and \
                    geofence_contains(alert.area, p):
                hits.append(alert)
        hits.sort(key=lambda a: (-a.severity.rank, -a.effective_from, a.id))
        return hits

    # -- fan-out plumbing ------------------------------------------------------

    def _delivery_doc(self, alert_id: str, user_id: str, now: float) -> dict[str, Any]:
        return {
            "kind": "delivery", "id": f"{alert_id}:{user_id}",
            "alert_id": alert_id, "user_id": user_id,
            "enqueued_at": now, "channel": "push", "attempt_count": 0,
            "created_at": now,
        }

    def _recipients_in(self, area: Geofence) -> list[UserAccount]:
        users = []
        for uid in sorted(self.index.query(area)):
            try:
                doc, _ = self.store.get("user", uid)
            except NotFound:
                continue
            user = from_canon(doc)
            if user.verified and user.last_location is not None:
                users.append(user)
        return users

    def on_location_update(self, user: UserAccount, p: Coordinate) -> int:
        """Deliver active matching alerts to a user who just moved into range.

        The ledger row create is the idempotency gate: the row either
        exists (already delivered at activation or an earlier move) or is
        created exactly once here.
        """
        if not user.verified:
            return 0
        now = self.clock.now()
        delivered = 0
        for alert in self.active_alerts_at(p, now):
            key = f"{alert.id}:{user.id}"
            try:
                self.store.put("delivery", key, self._delivery_doc(alert.id, user.id, now), 0)
            except Conflict:
                continue
            payload = compose_alert_payload(alert)
            self.events.emit(user.id, EventKind.alert, payload)
            if user.push_token:
                self.dispatcher.enqueue(key, user.push_token, payload)
            delivered += 1
        return delivered

    def deliveries_for(self, alert_id: str) -> list[dict[str, Any]]:
        return [doc for doc, _ in self.store.list("delivery", where={"alert_id": alert_id})]

    def close(self) -> None:
        self.dispatcher.close()
