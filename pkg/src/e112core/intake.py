"""Citizen-originated cases: SOS requests, incident reports, and media.

Receipts are returned synchronously, before any operator looks at the
case; operator notification rides the event stream and is fully
decoupled. Media is content-addressed and readable only by its uploader
and operators.
"""

from __future__ import annotations

import uuid
from typing import Any

from .alerting import AlertingService
from .clock import Clock
from .config import ServiceConfig
from .errors import (
    Conflict,
    Forbidden,
    InvalidTransition,
    NotFound,
    TooLarge,
    Unauthenticated,
    UnknownMediaRef,
    ValidationError,
)
from .events import EventBus, EventKind
from .geo import Coordinate, GeoIndex
from .identity import IdentityService, Principal
from .model import (
    IncidentReport,
    MediaKind,
    MediaRef,
    ReportStatus,
    Role,
    SosRequest,
    SosStatus,
    UserAccount,
    from_canon,
    to_canon,
    transition,
    with_status,
)
from .store import MemoryStore


class IntakeService:
    def __init__(self, store: MemoryStore, clock: Clock, events: EventBus,
                 index: GeoIndex, identity: IdentityService,
                 alerting: AlertingService, config: ServiceConfig,
                 geocoder=None):
        self.store = store
        self.clock = clock
        self.events = events
        self.index = index
        self.identity = identity
        self.alerting = alerting
        self.config = config
        self.geocoder = geocoder

    def _describe(self, location: Coordinate) -> str | None:
        return self.geocoder.describe(location) if self.geocoder else None

    # -- helpers -----------------------------------------------------------

    def _verified_user(self, principal: Principal) -> UserAccount:
        user = self.identity.get_user(principal.user_id)
        if not user.verified:
            raise Unauthenticated("account not verified")
        return user

    def _operator_ids(self) -> list[str]:
        return [doc["id"] for doc, _ in self.store.list("user", where={"role": "operator"})]

    def record_location(self, user: UserAccount, p: Coordinate) -> UserAccount:
        """Latest-position bookkeeping: user record, geo index, and the
        deliver-on-entry hook for already-active alerts."""
        now = self.clock.now()
        while True:
            doc, version = self.store.get("user", user.id)
            current = from_canon(doc)
            updated = UserAccount(
                id=current.id, phone=current.phone, verified=current.verified,
                display_name=current.display_name, role=current.role,
                created_at=current.created_at, push_token=current.push_token,
                last_location=(p, now),
            )
            try:
                self.store.put("user", user.id, to_canon(updated), version)
                break
            except Conflict:
                continue
        self.index.upsert(user.id, p, now)
        self.alerting.on_location_update(updated, p)
        return updated

    # -- SOS -------------------------------------------------------------

    def submit_sos(self, principal: Principal, location: Coordinate,
                   note: str | None = None) -> dict[str, Any]:
        user = self._verified_user(principal)
        now = self.clock.now()
        sos = SosRequest(id=uuid.uuid4().hex, user_id=user.id, location=location,
                         created_at=now, status=SosStatus.open, note=note)
        self.store.put("sos", sos.id, to_canon(sos), 0)
        # The device knows best where the caller is right now.
        self.record_location(user, location)
        self.events.emit_many(self._operator_ids(), EventKind.case_status, {
            "case_kind": "sos", "case_id": sos.id, "status": "open",
            "user_id": user.id,
            "location": {"lat": location.lat, "lon": location.lon},
            "place": self._describe(location),
        })
        return {"id": sos.id, "created_at": now}

    # -- incident reports ---------------------------------------------------

    def submit_report(self, principal: Principal, location: Coordinate,
                      description: str, media: list[MediaRef]) -> dict[str, Any]:
        user = self._verified_user(principal)
        for ref in media:
            if not self.store.media_has(ref.hash):
                raise UnknownMediaRef(f"media {ref.hash} was never stored")
        if not description and not media:
            raise ValidationError("a report needs a description or media",
                                  violations=[{"code": "empty_report"}])
        now = self.clock.now()
        report = IncidentReport(
            id=uuid.uuid4().hex, reporter_id=user.id, location=location,
            description=description, media=tuple(media), created_at=now,
            status=ReportStatus.submitted,
        )
        self.store.put("report", report.id, to_canon(report), 0)
        self.events.emit_many(self._operator_ids(), EventKind.case_status, {
            "case_kind": "report", "case_id": report.id, "status": "submitted",
            "user_id": user.id,
            "location": {"lat": location.lat, "lon": location.lon},
            "place": self._describe(location),
        })
        return {"id": report.id, "created_at": now}

    def get_case(self, case_id: str) -> tuple[str, dict, int]:
        for kind in ("sos", "report"):
            try:
                doc, version = self.store.get(kind, case_id)
                return kind, doc, version
            except NotFound:
                continue
        raise NotFound(f"no case {case_id}")

    # -- operator workflow ---------------------------------------------------

    def set_status(self, principal: Principal, case_id: str, new_status: str) -> dict:
        if principal.role != Role.operator:
            raise Forbidden("operator role required")
        while True:
            kind, doc, version = self.get_case(case_id)
            entity = from_canon(doc)
            transition(kind, entity.status, new_status)
            updated = with_status(entity, new_status)
            try:
                self.store.put(kind, case_id, to_canon(updated), version)
                break
            except Conflict:
                continue
        reporter = updated.user_id if kind == "sos" else updated.reporter_id
        event = {"case_kind": kind, "case_id": case_id, "status": new_status,
                 "user_id": reporter}
        self.events.emit(reporter, EventKind.case_status, event)
        self.events.emit_many(self._operator_ids(), EventKind.case_status, event)
        return to_canon(updated)

    # -- media ---------------------------------------------------------------

    def store_media(self, principal: Principal, data: bytes, kind: str) -> MediaRef:
        user = self._verified_user(principal)
        if len(data) > self.config.media_max_bytes:
            raise TooLarge(
                f"media of {len(data)} bytes exceeds cap of {self.config.media_max_bytes}")
        media_kind = MediaKind(kind)
        digest = self.store.media_put(data)
        while True:
            try:
                doc, version = self.store.get("media_owner", digest)
            except NotFound:
                doc, version = {"kind": "media_owner", "id": digest,
                                "owners": [], "created_at": self.clock.now()}, 0
            if user.id in doc["owners"]:
                break
            doc["owners"] = sorted(set(doc["owners"]) | {user.id})
            try:
                self.store.put("media_owner", digest, doc, version)
                break
            except Conflict:
                continue
        return MediaRef(hash=digest, kind=media_kind)

    def fetch_media(self, principal: Principal, digest: str) -> bytes:
        if not self.store.media_has(digest):
            raise UnknownMediaRef(f"no media object {digest}")
        if principal.role != Role.operator:
            try:
                owners_doc, _ = self.store.get("media_owner", digest)
                owners = owners_doc["owners"]
            except NotFound:
                owners = []
            if principal.user_id not in owners:
                raise Forbidden("media readable by its uploader and operators only")
        return self.store.media_get(digest)
