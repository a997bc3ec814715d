"""Error taxonomy shared across the service.

Every error carries a stable machine-readable ``code`` that the HTTP gateway
maps onto a status and a uniform ``{code, message, details}`` body.
"""

from __future__ import annotations

from typing import Any


class ServiceError(Exception):
    """Base for all domain errors."""

    code = "error"

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details = details


class ValidationError(ServiceError):
    """One or more field-level violations, reported together."""

    code = "validation"

    def __init__(self, message: str, violations: list[dict[str, Any]] | None = None, **details: Any):
        super().__init__(message, violations=violations or [], **details)
        self.violations = violations or []


class InvalidCoordinate(ValidationError):
    code = "invalid_coordinate"


class InvalidGeofence(ValidationError):
    code = "invalid_geofence"


class StaleUpdate(ServiceError):
    code = "stale_update"


class InvalidTransition(ServiceError):
    code = "invalid_transition"

    def __init__(self, kind: str, current: str, requested: str):
        super().__init__(
            f"{kind}: no transition {current} -> {requested}",
            kind=kind, current=current, requested=requested,
        )
        self.current = current
        self.requested = requested


class IncompleteAlert(ServiceError):
    code = "incomplete_alert"


class Unauthenticated(ServiceError):
    code = "unauthenticated"


class Forbidden(ServiceError):
    code = "forbidden"


class NotFound(ServiceError):
    code = "not_found"


class Conflict(ServiceError):
    """Optimistic-version mismatch on a store write."""

    code = "conflict"


class InvalidPhone(ValidationError):
    code = "invalid_phone"


class RateLimited(ServiceError):
    code = "rate_limited"


class CodeMismatch(ServiceError):
    code = "code_mismatch"


class ChallengeExpired(ServiceError):
    code = "challenge_expired"


class AttemptsExhausted(ServiceError):
    code = "attempts_exhausted"


class AlreadyExpired(ServiceError):
    code = "already_expired"


class UnknownMediaRef(ServiceError):
    code = "unknown_media_ref"


class TooLarge(ServiceError):
    code = "too_large"


class UnknownAlert(NotFound):
    code = "unknown_alert"


class OutsideArea(ServiceError):
    code = "outside_area"


class GroupClosed(ServiceError):
    code = "group_closed"


class NotMember(ServiceError):
    code = "not_member"


class Muted(ServiceError):
    code = "muted"


class BodyInvalid(ValidationError):
    code = "body_invalid"


class UnknownTarget(NotFound):
    code = "unknown_target"


class SchemaError(ServiceError):
    """Scenario file does not match the documented schema."""

    code = "schema_error"

    def __init__(self, message: str, path: str = "$"):
        super().__init__(message, path=path)
        self.path = path


class DanglingReference(SchemaError):
    code = "dangling_reference"


class AssertionFailed(ServiceError):
    code = "assertion_failed"


class ServiceUnreachable(ServiceError):
    code = "service_unreachable"


class SimulatedCrash(RuntimeError):
    """Raised by fault-injected stores to model power loss mid-write."""
