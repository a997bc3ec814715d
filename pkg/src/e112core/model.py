"""Domain entities, their lifecycle machines, and the canonical wire form.

Every entity is an immutable value; status changes go through transition()
and produce new values. to_canon/from_canon define the canonical
JSON-compatible tree shared by the store, the HTTP gateway, and the
scenario harness; round-trips must be loss-free.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any

from .errors import IncompleteAlert, InvalidTransition, ValidationError
from .geo import Circle, Coordinate, Geofence, Polygon, geofence_bbox

SHORT_TEXT_LIMIT = 90       # carrier short-message budget, counted in code points
CHAT_BODY_LIMIT = 2_000     # code points
E164_MIN_DIGITS = 8
E164_MAX_DIGITS = 15


class Role(str, Enum):
    citizen = "citizen"
    operator = "operator"


class Hazard(str, Enum):
    wildfire = "wildfire"
    flood = "flood"
    earthquake = "earthquake"
    landslide = "landslide"
    storm = "storm"
    other = "other"


class Severity(str, Enum):
    advisory = "advisory"
    watch = "watch"
    warning = "warning"
    emergency = "emergency"

    @property
    def rank(self) -> int:
        return _SEVERITY_RANK[self]


_SEVERITY_RANK = {
    Severity.advisory: 0,
    Severity.watch: 1,
    Severity.warning: 2,
    Severity.emergency: 3,
}


class AlertStatus(str, Enum):
    draft = "draft"
    active = "active"
    cancelled = "cancelled"
    expired = "expired"


class SosStatus(str, Enum):
    open = "open"
    acknowledged = "acknowledged"
    responding = "responding"
    closed = "closed"


class ReportStatus(str, Enum):
    submitted = "submitted"
    acknowledged = "acknowledged"
    in_progress = "in_progress"
    resolved = "resolved"
    dismissed = "dismissed"


class GroupStatus(str, Enum):
    open = "open"
    closed = "closed"


class MessageState(str, Enum):
    visible = "visible"
    removed = "removed"


class MediaKind(str, Enum):
    image = "image"
    video = "video"
    audio = "audio"


class ZoneCategory(str, Enum):
    affected = "affected"
    safe = "safe"
    evacuation_point_area = "evacuation_point_area"
    guidance = "guidance"


# Dashboard color semantics; darker tones keep map overlays legible.
ZONE_COLORS = {
    ZoneCategory.affected: "#8b0000",
    ZoneCategory.safe: "#006400",
    ZoneCategory.evacuation_point_area: "#8b8000",
    ZoneCategory.guidance: "#00008b",
}


class ResourceKind(str, Enum):
    shelter = "shelter"
    hospital = "hospital"
    police = "police"
    protected_space = "protected_space"
    evacuation_point = "evacuation_point"


def is_e164(phone: str) -> bool:
    if not isinstance(phone, str) or not phone.startswith("+"):
        return False
    digits = phone[1:]
    if not digits.isdigit() or digits[0] == "0":
        return False
    return E164_MIN_DIGITS <= len(digits) <= E164_MAX_DIGITS


def codepoints(text: str) -> int:
    """Length in code points, not bytes; len() counts code points in Python."""
    return len(text)


@dataclass(frozen=True)
class UserAccount:
    id: str
    phone: str
    verified: bool
    display_name: str
    role: Role
    created_at: float
    push_token: str | None = None
    last_location: tuple[Coordinate, float] | None = None


@dataclass(frozen=True)
class AlertSource:
    operator_id: str
    authority: str


@dataclass(frozen=True)
class Alert:
    id: str
    hazard: Hazard
    area: Geofence
    severity: Severity
    short_text: str
    guidance_text: str
    source: AlertSource
    effective_from: float
    expires_at: float
    status: AlertStatus
    created_at: float


@dataclass(frozen=True)
class SosRequest:
    id: str
    user_id: str
    location: Coordinate
    created_at: float
    status: SosStatus
    note: str | None = None


@dataclass(frozen=True)
class MediaRef:
    hash: str
    kind: MediaKind


@dataclass(frozen=True)
class IncidentReport:
    id: str
    reporter_id: str
    location: Coordinate
    description: str
    media: tuple[MediaRef, ...]
    created_at: float
    status: ReportStatus


@dataclass(frozen=True)
class ChatGroup:
    id: str
    alert_id: str
    area: Geofence
    title: str
    status: GroupStatus
    created_by: str
    created_at: float
    muted_users: frozenset[str] = field(default_factory=frozenset)


@dataclass(frozen=True)
class ChatMessage:
    id: str
    group_id: str
    author_id: str
    body: str
    created_at: float
    state: MessageState
    seq: int


@dataclass(frozen=True)
class Zone:
    id: str
    alert_id: str
    polygon: Polygon
    category: ZoneCategory
    created_at: float

    @property
    def color(self) -> str:
        return ZONE_COLORS[self.category]


@dataclass(frozen=True)
class ResourcePoint:
    id: str
    kind: ResourceKind
    name: str
    location: Coordinate
    created_at: float


@dataclass(frozen=True)
class EvacuationRoute:
    id: str
    alert_id: str
    waypoints: tuple[Coordinate, ...]
    destination_resource_id: str
    created_at: float

    def __post_init__(self):
        if len(self.waypoints) < 2:
            raise ValidationError(
                "route needs at least 2 waypoints",
                violations=[{"code": "too_few_waypoints", "actual": len(self.waypoints)}],
            )


# ---------------------------------------------------------------------------
# Lifecycle machines. Each relation is a DAG: no valid sequence of
# transitions revisits a state.
# ---------------------------------------------------------------------------

TRANSITIONS: dict[str, set[tuple[str, str]]] = {
    "alert": {
        ("draft", "active"),
        ("active", "cancelled"),
        ("active", "expired"),
    },
    "sos": {
        ("open", "acknowledged"),
        ("acknowledged", "responding"),
        ("responding", "closed"),
        ("open", "closed"),
        ("acknowledged", "closed"),
    },
    "report": {
        ("submitted", "acknowledged"),
        ("acknowledged", "in_progress"),
        ("in_progress", "resolved"),
        ("submitted", "dismissed"),
        ("acknowledged", "dismissed"),
    },
    "chat_group": {
        ("open", "closed"),
    },
}

STATUS_ENUMS: dict[str, type[Enum]] = {
    "alert": AlertStatus,
    "sos": SosStatus,
    "report": ReportStatus,
    "chat_group": GroupStatus,
}


def transition(kind: str, current: str | Enum, requested: str | Enum) -> str:
    """Return the requested status iff (current, requested) is a listed edge."""
    if kind not in TRANSITIONS:
        raise KeyError(f"unknown entity kind {kind!r}")
    cur = current.value if isinstance(current, Enum) else current
    req = requested.value if isinstance(requested, Enum) else requested
    statuses = {s.value for s in STATUS_ENUMS[kind]}
    if cur not in statuses:
        raise KeyError(f"{cur!r} is not a {kind} status")
    if (cur, req) not in TRANSITIONS[kind]:
        raise InvalidTransition(kind, cur, req)
    return req


# ---------------------------------------------------------------------------
# Alert validation and notification payload
# ---------------------------------------------------------------------------

def validate_alert(
    *,
    id: str,
    hazard: str | Hazard,
    area: Geofence,
    severity: str | Severity,
    short_text: str,
    guidance_text: str,
    source: AlertSource,
    effective_from: float,
    expires_at: float,
    created_at: float,
    status: AlertStatus = AlertStatus.draft,
) -> Alert:
    """Check every alert invariant, reporting all violations together."""
    violations: list[dict[str, Any]] = []

    try:
        hazard = Hazard(hazard)
    except ValueError:
        violations.append({"code": "unknown_hazard", "value": str(hazard)})
    try:
        severity = Severity(severity)
    except ValueError:
        violations.append({"code": "unknown_severity", "value": str(severity)})

    if not isinstance(area, (Circle, Polygon)):
        violations.append({"code": "invalid_area"})

    n = codepoints(short_text) if isinstance(short_text, str) else -1
    if not isinstance(short_text, str) or n == 0:
        violations.append({"code": "empty_short_text"})
    elif n > SHORT_TEXT_LIMIT:
        violations.append({"code": "short_text_too_long", "actual_len": n,
                           "limit": SHORT_TEXT_LIMIT})

    if not isinstance(guidance_text, str) or not guidance_text.strip():
        violations.append({"code": "empty_guidance"})

    if not source.authority.strip():
        violations.append({"code": "empty_source"})

    if not (effective_from < expires_at):
        violations.append({"code": "window_inverted",
                           "effective_from": effective_from, "expires_at": expires_at})

    if violations:
        raise ValidationError("alert validation failed", violations=violations)

    return Alert(
        id=id, hazard=hazard, area=area, severity=severity,
        short_text=short_text, guidance_text=guidance_text, source=source,
        effective_from=effective_from, expires_at=expires_at,
        status=status, created_at=created_at,
    )


def compose_alert_payload(a: Alert) -> dict[str, Any]:
    """Notification payload for an active alert; a pure function of the value."""
    if a.status != AlertStatus.active:
        raise ValueError(f"payload composed only for active alerts, got {a.status.value}")
    missing = []
    if not a.hazard:
        missing.append("hazard")
    if a.area is None:
        missing.append("area")
    if not a.guidance_text.strip():
        missing.append("guidance_text")
    if not a.source.authority.strip():
        missing.append("source")
    if not a.short_text.strip():
        missing.append("short_text")
    if missing:
        raise IncompleteAlert(f"alert {a.id} missing: {', '.join(missing)}", missing=missing)
    bbox = geofence_bbox(a.area)
    return {
        "alert_id": a.id,
        "hazard": a.hazard.value,
        "severity": a.severity.value,
        "short_text": a.short_text,
        "source": a.source.authority,
        "window": {"effective_from": a.effective_from, "expires_at": a.expires_at},
        "area_bbox": {
            "lat_min": bbox.lat_min, "lat_max": bbox.lat_max,
            "lon_min": bbox.lon_min, "lon_max": bbox.lon_max,
        },
    }


# ---------------------------------------------------------------------------
# Canonical serialized form
# ---------------------------------------------------------------------------

def canonical_json(doc: Any) -> bytes:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def coordinate_to_canon(p: Coordinate) -> dict[str, float]:
    return {"lat": p.lat, "lon": p.lon}


def coordinate_from_canon(d: dict) -> Coordinate:
    return Coordinate(d["lat"], d["lon"])


def geofence_to_canon(g: Geofence) -> dict[str, Any]:
    if isinstance(g, Circle):
        return {"shape": "circle", "center": coordinate_to_canon(g.center),
                "radius_m": g.radius_m}
    return {"shape": "polygon", "ring": [coordinate_to_canon(v) for v in g.ring]}


def geofence_from_canon(d: dict) -> Geofence:
    if d["shape"] == "circle":
        return Circle(coordinate_from_canon(d["center"]), d["radius_m"])
    if d["shape"] == "polygon":
        return Polygon(tuple(coordinate_from_canon(v) for v in d["ring"]))
    raise ValidationError(f"unknown geofence shape {d.get('shape')!r}")


def to_canon(entity: Any) -> dict[str, Any]:
    if isinstance(entity, UserAccount):
        return {
            "kind": "user", "id": entity.id, "phone": entity.phone,
            "verified": entity.verified, "display_name": entity.display_name,
            "role": entity.role.value, "created_at": entity.created_at,
            "push_token": entity.push_token,
            "last_location": None if entity.last_location is None else {
                "coordinate": coordinate_to_canon(entity.last_location[0]),
                "timestamp": entity.last_location[1],
            },
        }
    if isinstance(entity, Alert):
        return {
            "kind": "alert", "id": entity.id, "hazard": entity.hazard.value,
            "area": geofence_to_canon(entity.area), "severity": entity.severity.value,
            "short_text": entity.short_text, "guidance_text": entity.guidance_text,
            "source": {"operator_id": entity.source.operator_id,
                       "authority": entity.source.authority},
            "effective_from": entity.effective_from, "expires_at": entity.expires_at,
            "status": entity.status.value, "created_at": entity.created_at,
        }
    if isinstance(entity, SosRequest):
        return {
            "kind": "sos", "id": entity.id, "user_id": entity.user_id,
            "location": coordinate_to_canon(entity.location),
            "created_at": entity.created_at, "status": entity.status.value,
            "note": entity.note,
        }
    if isinstance(entity, IncidentReport):
        return {
            "kind": "report", "id": entity.id, "reporter_id": entity.reporter_id,
            "location": coordinate_to_canon(entity.location),
            "description": entity.description,
            "media": [{"hash": m.hash, "media_kind": m.kind.value} for m in entity.media],
            "created_at": entity.created_at, "status": entity.status.value,
        }
    if isinstance(entity, ChatGroup):
        return {
            "kind": "chat_group", "id": entity.id, "alert_id": entity.alert_id,
            "area": geofence_to_canon(entity.area), "title": entity.title,
            "status": entity.status.value, "created_by": entity.created_by,
            "created_at": entity.created_at,
            "muted_users": sorted(entity.muted_users),
        }
    if isinstance(entity, ChatMessage):
        return {
            "kind": "chat_message", "id": entity.id, "group_id": entity.group_id,
            "author_id": entity.author_id, "body": entity.body,
            "created_at": entity.created_at, "state": entity.state.value,
            "seq": entity.seq,
        }
    if isinstance(entity, Zone):
        return {
            "kind": "zone", "id": entity.id, "alert_id": entity.alert_id,
            "polygon": geofence_to_canon(entity.polygon),
            "category": entity.category.value, "created_at": entity.created_at,
        }
    if isinstance(entity, ResourcePoint):
        return {
            "kind": "resource", "id": entity.id, "resource_kind": entity.kind.value,
            "name": entity.name, "location": coordinate_to_canon(entity.location),
            "created_at": entity.created_at,
        }
    if isinstance(entity, EvacuationRoute):
        return {
            "kind": "route", "id": entity.id, "alert_id": entity.alert_id,
            "waypoints": [coordinate_to_canon(w) for w in entity.waypoints],
            "destination_resource_id": entity.destination_resource_id,
            "created_at": entity.created_at,
        }
    raise TypeError(f"no canonical form for {type(entity).__name__}")


def from_canon(doc: dict[str, Any]) -> Any:
    kind = doc["kind"]
    if kind == "user":
        loc = doc["last_location"]
        return UserAccount(
            id=doc["id"], phone=doc["phone"], verified=doc["verified"],
            display_name=doc["display_name"], role=Role(doc["role"]),
            created_at=doc["created_at"], push_token=doc["push_token"],
            last_location=None if loc is None else
            (coordinate_from_canon(loc["coordinate"]), loc["timestamp"]),
        )
    if kind == "alert":
        return Alert(
            id=doc["id"], hazard=Hazard(doc["hazard"]),
            area=geofence_from_canon(doc["area"]), severity=Severity(doc["severity"]),
            short_text=doc["short_text"], guidance_text=doc["guidance_text"],
            source=AlertSource(doc["source"]["operator_id"], doc["source"]["authority"]),
            effective_from=doc["effective_from"], expires_at=doc["expires_at"],
            status=AlertStatus(doc["status"]), created_at=doc["created_at"],
        )
    if kind == "sos":
        return SosRequest(
            id=doc["id"], user_id=doc["user_id"],
            location=coordinate_from_canon(doc["location"]),
            created_at=doc["created_at"], status=SosStatus(doc["status"]),
            note=doc["note"],
        )
    if kind == "report":
        return IncidentReport(
            id=doc["id"], reporter_id=doc["reporter_id"],
            location=coordinate_from_canon(doc["location"]),
            description=doc["description"],
            media=tuple(MediaRef(m["hash"], MediaKind(m["media_kind"])) for m in doc["media"]),
            created_at=doc["created_at"], status=ReportStatus(doc["status"]),
        )
    if kind == "chat_group":
        return ChatGroup(
            id=doc["id"], alert_id=doc["alert_id"],
            area=geofence_from_canon(doc["area"]), title=doc["title"],
            status=GroupStatus(doc["status"]), created_by=doc["created_by"],
            created_at=doc["created_at"], muted_users=frozenset(doc["muted_users"]),
        )
    if kind == "chat_message":
        return ChatMessage(
            id=doc["id"], group_id=doc["group_id"], author_id=doc["author_id"],
            body=doc["body"], created_at=doc["created_at"],
            state=MessageState(doc["state"]), seq=doc["seq"],
        )
    if kind == "zone":
        return Zone(
            id=doc["id"], alert_id=doc["alert_id"],
            polygon=geofence_from_canon(doc["polygon"]),
            category=ZoneCategory(doc["category"]), created_at=doc["created_at"],
        )
    if kind == "resource":
        return ResourcePoint(
            id=doc["id"], kind=ResourceKind(doc["resource_kind"]), name=doc["name"],
            location=coordinate_from_canon(doc["location"]), created_at=doc["created_at"],
        )
    if kind == "route":
        return EvacuationRoute(
            id=doc["id"], alert_id=doc["alert_id"],
            waypoints=tuple(coordinate_from_canon(w) for w in doc["waypoints"]),
            destination_resource_id=doc["destination_resource_id"],
            created_at=doc["created_at"],
        )
    raise ValidationError(f"unknown entity kind {kind!r}")


def with_status(entity: Any, new_status: str):
    """Lifecycle step as a new value; the edge must already be validated."""
    enum_type = type(entity.status)
    return replace(entity, status=enum_type(new_status))
