"""The e112 HTTP+JSON API.

All endpoints live under /v1 with bearer session tokens and a uniform
error body {code, message, details}. GET /v1/stream is a long-lived
newline-delimited JSON response carrying the caller's ordered event feed;
clients resume with the seq of the last event they saw.

When fault injection is enabled (test builds), /test/* exposes provider
outboxes, the delivery ledger, clock control, and content fixtures so a
scenario harness can drive and inspect a running node.
"""

from __future__ import annotations

import json
import re
import threading
import time
import uuid
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any
from urllib.parse import parse_qs, urlparse

from .clock import ManualClock
from .errors import Forbidden, NotFound, ServiceError, Unauthenticated, ValidationError
from .geo import Coordinate
from .identity import Principal
from .model import MediaRef, MediaKind, Role, coordinate_from_canon, geofence_from_canon, to_canon
from .service import CoreService

MAX_JSON_BODY = 1 << 20  # plenty for any control-plane payload

# Status mapping: validation 422, auth 401, role/eligibility 403,
# missing things 404, state conflicts 409, plus a few specific cases.
ERROR_STATUS = {
    "validation": 422,
    "invalid_coordinate": 422,
    "invalid_geofence": 422,
    "invalid_phone": 422,
    "body_invalid": 422,
    "incomplete_alert": 422,
    "unauthenticated": 401,
    "code_mismatch": 401,
    "challenge_expired": 401,
    "attempts_exhausted": 401,
    "forbidden": 403,
    "muted": 403,
    "not_member": 403,
    "outside_area": 403,
    "not_found": 404,
    "unknown_alert": 404,
    "unknown_target": 404,
    "unknown_media_ref": 404,
    "invalid_transition": 409,
    "conflict": 409,
    "already_expired": 409,
    "group_closed": 409,
    "stale_update": 409,
    "rate_limited": 429,
    "too_large": 413,
}

# (method, path regex, access) -> handler name; access is one of
# "public", "any" (any authenticated user), "operator".
ROUTES: list[tuple[str, str, str, str]] = [
    ("POST", r"/v1/auth/register", "public", "auth_register"),
    ("POST", r"/v1/auth/verify", "public", "auth_verify"),
    ("POST", r"/v1/sos", "any", "submit_sos"),
    ("POST", r"/v1/reports", "any", "submit_report"),
    ("GET", r"/v1/reports/(?P<id>[^/]+)", "any", "get_report"),
    ("POST", r"/v1/media", "any", "upload_media"),
    ("GET", r"/v1/media/(?P<hash>[0-9a-f]{64})", "any", "fetch_media"),
    ("GET", r"/v1/alerts", "any", "alerts_at"),
    ("POST", r"/v1/alerts", "operator", "create_alert"),
    ("POST", r"/v1/alerts/(?P<id>[^/]+)/activate", "operator", "activate_alert"),
    ("POST", r"/v1/alerts/(?P<id>[^/]+)/cancel", "operator", "cancel_alert"),
    ("GET", r"/v1/resources", "any", "resources"),
    ("GET", r"/v1/zones", "any", "zones"),
    ("GET", r"/v1/routes", "any", "routes"),
    ("POST", r"/v1/groups", "operator", "open_group"),
    ("POST", r"/v1/groups/(?P<id>[^/]+)/join", "any", "join_group"),
    ("POST", r"/v1/groups/(?P<id>[^/]+)/messages", "any", "post_message"),
    ("GET", r"/v1/groups/(?P<id>[^/]+)/messages", "any", "group_messages"),
    ("POST", r"/v1/groups/(?P<id>[^/]+)/moderate", "operator", "moderate"),
    ("PATCH", r"/v1/cases/(?P<id>[^/]+)/status", "operator", "set_status"),
    ("GET", r"/v1/stream", "any", "stream"),
    ("GET", r"/v1/ops/summary", "operator", "ops_summary"),
]

TEST_ROUTES: list[tuple[str, str, str, str]] = [
    ("POST", r"/test/operators", "public", "t_provision_operator"),
    ("GET", r"/test/providers", "public", "t_providers"),
    ("POST", r"/test/providers/config", "public", "t_providers_config"),
    ("GET", r"/test/deliveries", "public", "t_deliveries"),
    ("POST", r"/test/clock/advance", "public", "t_clock_advance"),
    ("POST", r"/test/sweep", "public", "t_sweep"),
    ("POST", r"/test/resources", "public", "t_add_resource"),
    ("POST", r"/test/zones", "public", "t_add_zone"),
    ("POST", r"/test/routes", "public", "t_add_route"),
]


def _compile(routes):
    return [(method, re.compile(f"^{pattern}$"), access, name)
            for method, pattern, access, name in routes]


class _Http(Exception):
    """Short-circuit response for plumbing-level request errors."""

    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


class GatewayHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "e112"
    service: CoreService  # set on the subclass built per server

    # -- plumbing ------------------------------------------------------------

    def log_message(self, format, *args):  # noqa: A002 - stdlib signature
        pass

    def _routes(self):
        return self.server.routes  # type: ignore[attr-defined]

    def _dispatch(self, method: str) -> None:
        parsed = urlparse(self.path)
        query = {k: v[-1] for k, v in parse_qs(parsed.query).items()}
        self._body_consumed = False
        try:
            for route_method, pattern, access, name in self._routes():
                if route_method != method:
                    continue
                match = pattern.match(parsed.path)
                if not match:
                    continue
                principal = self._authenticate(access)
                handler = getattr(self, name)
                status, doc = handler(match, query, principal)
                if doc is not _STREAMED:
                    self._send_json(status, doc)
                return
            self._send_json(404, {"code": "not_found",
                                  "message": f"no route for {method} {parsed.path}",
                                  "details": {}})
        except _Http as e:
            self._send_json(e.status, {"code": e.code, "message": e.message, "details": {}})
        except ServiceError as e:
            status = ERROR_STATUS.get(e.code, 500)
            self._send_json(status, {"code": e.code, "message": e.message,
                                     "details": _safe_details(e.details)})
        except (BrokenPipeError, ConnectionResetError):
            self.close_connection = True
        except Exception as e:  # pragma: no cover - last-resort guard
            self._send_json(500, {"code": "internal", "message": str(e), "details": {}})

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")

    def do_PATCH(self):
        self._dispatch("PATCH")

    def do_OPTIONS(self):
        # CORS preflight for the separately-hosted operator dashboard.
        self.send_response(204)
        self._cors_headers()
        self.send_header("Content-Length", "0")
        self.end_headers()

    def _cors_headers(self) -> None:
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, PATCH, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Authorization, Content-Type")

    def _authenticate(self, access: str) -> Principal | None:
        if access == "public":
            return None
        header = self.headers.get("Authorization", "")
        token = header[7:] if header.startswith("Bearer ") else None
        principal = self.service.identity.authenticate(token)
        if access == "operator" and principal.role != Role.operator:
            raise Forbidden("operator role required")
        return principal

    def _read_body(self, cap: int = MAX_JSON_BODY) -> bytes:
        length = int(self.headers.get("Content-Length") or 0)
        if length > cap:
            raise _Http(413, "too_large", f"body of {length} bytes exceeds {cap}")
        self._body_consumed = True
        return self.rfile.read(length) if length else b""

    def _drain_request_body(self) -> None:
        # A keep-alive connection stays usable only if the request body was
        # fully consumed before the response; otherwise drop the connection.
        if getattr(self, "_body_consumed", True):
            return
        self._body_consumed = True
        length = int(self.headers.get("Content-Length") or 0)
        if length <= 0:
            return
        if length > MAX_JSON_BODY:
            self.close_connection = True
            return
        self.rfile.read(length)

    def _json_body(self) -> dict[str, Any]:
        raw = self._read_body()
        if not raw:
            return {}
        try:
            doc = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise _Http(400, "bad_request", f"body is not valid JSON: {e}") from None
        if not isinstance(doc, dict):
            raise _Http(400, "bad_request", "body must be a JSON object")
        return doc

    def _field(self, doc: dict, name: str) -> Any:
        if name not in doc:
            raise _Http(400, "bad_request", f"missing field {name!r}")
        return doc[name]

    def _coordinate(self, query_or_doc: dict) -> Coordinate:
        try:
            lat = float(self._field(query_or_doc, "lat"))
            lon = float(self._field(query_or_doc, "lon"))
        except (TypeError, ValueError):
            raise _Http(400, "bad_request", "lat and lon must be numbers") from None
        return Coordinate(lat, lon)

    def _send_json(self, status: int, doc: Any) -> None:
        self._drain_request_body()
        body = json.dumps(doc, separators=(",", ":")).encode("utf-8")
        self.send_response(status)
        self._cors_headers()
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_bytes(self, status: int, data: bytes,
                    content_type: str = "application/octet-stream") -> None:
        self._drain_request_body()
        self.send_response(status)
        self._cors_headers()
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _page_limit(self, query: dict, default: int = 50) -> int:
        cap = self.service.config.page_limit_max
        try:
            return max(0, min(int(query.get("limit", default)), cap))
        except ValueError:
            raise _Http(400, "bad_request", "limit must be an integer") from None

    # -- auth ------------------------------------------------------------

    def auth_register(self, match, query, principal):
        body = self._json_body()
        challenge_id = self.service.identity.begin_registration(self._field(body, "phone"))
        return 201, {"challenge_id": challenge_id}

    def auth_verify(self, match, query, principal):
        body = self._json_body()
        session = self.service.identity.complete_registration(
            self._field(body, "challenge_id"), self._field(body, "code"),
            self._field(body, "display_name"), body.get("push_token"))
        return 200, session

    # -- citizen surface ----------------------------------------------------

    def submit_sos(self, match, query, principal):
        body = self._json_body()
        receipt = self.service.intake.submit_sos(
            principal, self._coordinate(body), body.get("note"))
        return 201, receipt

    def submit_report(self, match, query, principal):
        body = self._json_body()
        media = [MediaRef(hash=self._field(m, "hash"), kind=MediaKind(self._field(m, "kind")))
                 for m in body.get("media", [])]
        receipt = self.service.intake.submit_report(
            principal, self._coordinate(body), body.get("description", ""), media)
        return 201, receipt

    def get_report(self, match, query, principal):
        kind, doc, _ = self.service.intake.get_case(match["id"])
        if kind != "report":
            raise NotFound(f"no report {match['id']}")
        if principal.role != Role.operator and doc["reporter_id"] != principal.user_id:
            raise Forbidden("reports are visible to their reporter and operators")
        return 200, doc

    def upload_media(self, match, query, principal):
        kind = query.get("kind", "image")
        if kind not in {k.value for k in MediaKind}:
            raise ValidationError(f"unknown media kind {kind!r}")
        data = self._read_body(cap=self.service.config.media_max_bytes + 1)
        ref = self.service.intake.store_media(principal, data, kind)
        return 201, {"hash": ref.hash, "kind": ref.kind.value}

    def fetch_media(self, match, query, principal):
        data = self.service.intake.fetch_media(principal, match["hash"])
        self._send_bytes(200, data)
        return 200, _STREAMED

    def alerts_at(self, match, query, principal):
        p = self._coordinate(query)
        return 200, {"alerts": self.service.alerts_at(principal, p)}

    def resources(self, match, query, principal):
        p = self._coordinate(query)
        k = self._page_limit({"limit": query.get("k", 5)})
        kind = query.get("kind")
        return 200, {"resources": self.service.resources_near(p, k, kind)}

    def zones(self, match, query, principal):
        rows = self.service.zones_for(query.get("alert_id", ""))
        return 200, {"zones": self._paged(rows, query)}

    def routes(self, match, query, principal):
        rows = self.service.routes_for(query.get("alert_id", ""))
        return 200, {"routes": self._paged(rows, query)}

    def _paged(self, rows: list, query: dict) -> list:
        try:
            offset = max(0, int(query.get("offset", 0)))
        except ValueError:
            raise _Http(400, "bad_request", "offset must be an integer") from None
        return rows[offset:offset + self._page_limit(query)]

    # -- alerts (operator) -----------------------------------------------------

    def create_alert(self, match, query, principal):
        body = self._json_body()
        fields = {
            "hazard": self._field(body, "hazard"),
            "severity": self._field(body, "severity"),
            "short_text": self._field(body, "short_text"),
            "guidance_text": self._field(body, "guidance_text"),
            "authority": self._field(body, "authority"),
            "effective_from": self._field(body, "effective_from"),
            "expires_at": self._field(body, "expires_at"),
            "area": geofence_from_canon(self._field(body, "area")),
        }
        alert = self.service.alerting.create_alert(principal, fields, uuid.uuid4().hex)
        return 201, to_canon(alert)

    def activate_alert(self, match, query, principal):
        summary = self.service.alerting.activate_alert(principal, match["id"])
        return 200, summary

    def cancel_alert(self, match, query, principal):
        alert = self.service.alerting.cancel_alert(principal, match["id"])
        return 200, to_canon(alert)

    # -- chat ------------------------------------------------------------------

    def open_group(self, match, query, principal):
        body = self._json_body()
        group = self.service.chat.open_group(
            principal, self._field(body, "alert_id"),
            geofence_from_canon(self._field(body, "area")),
            self._field(body, "title"), uuid.uuid4().hex)
        return 201, to_canon(group)

    def join_group(self, match, query, principal):
        return 200, self.service.chat.join_group(principal, match["id"])

    def post_message(self, match, query, principal):
        body = self._json_body()
        message = self.service.chat.post_message(
            principal, match["id"], self._field(body, "body"))
        return 201, to_canon(message)

    def group_messages(self, match, query, principal):
        try:
            since_seq = int(query.get("since_seq", 0))
        except ValueError:
            raise _Http(400, "bad_request", "since_seq must be an integer") from None
        messages = self.service.chat.history(
            principal, match["id"], since_seq, self._page_limit(query))
        return 200, {"messages": messages}

    def moderate(self, match, query, principal):
        body = self._json_body()
        result = self.service.chat.moderate(
            principal, match["id"], self._field(body, "action"),
            message_id=body.get("message_id"), user_id=body.get("user_id"))
        return 200, result

    # -- cases -------------------------------------------------------------------

    def set_status(self, match, query, principal):
        body = self._json_body()
        updated = self.service.intake.set_status(
            principal, match["id"], self._field(body, "status"))
        return 200, updated

    # -- operator dashboard --------------------------------------------------------

    def ops_summary(self, match, query, principal):
        return 200, self.service.ops_summary(principal)

    # -- event stream ----------------------------------------------------------------

    def stream(self, match, query, principal):
        token = query.get("resume_token", "")
        try:
            after_seq = max(0, int(token)) if token else 0
        except ValueError:
            after_seq = 0  # invalid token: full replay from earliest retained
        try:
            wait_ms = max(0, int(query.get("wait_ms", 30_000)))
        except ValueError:
            raise _Http(400, "bad_request", "wait_ms must be an integer") from None
        max_events = None
        if "max_events" in query:
            try:
                max_events = max(0, int(query["max_events"]))
            except ValueError:
                raise _Http(400, "bad_request", "max_events must be an integer") from None

        self._drain_request_body()
        self.send_response(200)
        self._cors_headers()
        self.send_header("Content-Type", "application/x-ndjson")
        self.send_header("Cache-Control", "no-store")
        self.send_header("Connection", "close")
        self.end_headers()
        self.close_connection = True
        deadline = time.monotonic() + wait_ms / 1000.0
        try:
            if max_events == 0:
                return 200, _STREAMED
            for event in self.service.events.follow(
                    principal.user_id, after_seq, deadline, max_events):
                line = json.dumps(event, separators=(",", ":")) + "\n"
                self.wfile.write(line.encode("utf-8"))
                self.wfile.flush()
        except (BrokenPipeError, ConnectionResetError):
            pass
        return 200, _STREAMED

    # -- test-only surfaces ------------------------------------------------------------

    def t_provision_operator(self, match, query, principal):
        body = self._json_body()
        account = self.service.identity.provision_operator(
            self._field(body, "phone"), body.get("display_name", "operator"))
        return 201, {"user_id": account.id, "phone": account.phone}

    def t_providers(self, match, query, principal):
        self.service.alerting.dispatcher.drain()
        sms = self.service.providers.sms
        push = self.service.providers.push
        return 200, {
            "sms_outbox": sms.outbox,
            "push_queues": push.all_queues(),
            "push_send_count": push.send_count,
        }

    def t_providers_config(self, match, query, principal):
        body = self._json_body()
        if "sms_fail_all" in body:
            self.service.providers.sms.fail_all = bool(body["sms_fail_all"])
        if "push_drop_rate" in body:
            self.service.providers.push.drop_rate = float(body["push_drop_rate"])
        return 200, {"ok": True}

    def t_deliveries(self, match, query, principal):
        alert_id = query.get("alert_id")
        if alert_id:
            rows = self.service.alerting.deliveries_for(alert_id)
        else:
            rows = [doc for doc, _ in self.service.store.list("delivery")]
        return 200, {"deliveries": rows}

    def t_clock_advance(self, match, query, principal):
        if not isinstance(self.service.clock, ManualClock):
            raise _Http(409, "conflict", "server is not running a manual clock")
        body = self._json_body()
        now = self.service.clock.advance(float(self._field(body, "seconds")))
        return 200, {"now": now}

    def t_sweep(self, match, query, principal):
        return 200, {"expired": self.service.alerting.expire_sweep()}

    def t_add_resource(self, match, query, principal):
        body = self._json_body()
        res = self.service.add_resource(
            self._field(body, "kind"), self._field(body, "name"),
            self._coordinate(body))
        return 201, to_canon(res)

    def t_add_zone(self, match, query, principal):
        body = self._json_body()
        zone = self.service.add_zone(
            body.get("alert_id", ""), self._field(body, "category"),
            geofence_from_canon({"shape": "polygon", "ring": self._field(body, "ring")}))
        return 201, to_canon(zone)

    def t_add_route(self, match, query, principal):
        body = self._json_body()
        route = self.service.add_route(
            body.get("alert_id", ""),
            [coordinate_from_canon(w) for w in self._field(body, "waypoints")],
            self._field(body, "destination_resource_id"))
        return 201, to_canon(route)


_STREAMED = object()


def _safe_details(details: dict[str, Any]) -> dict[str, Any]:
    try:
        json.dumps(details)
        return details
    except (TypeError, ValueError):
        return {k: repr(v) for k, v in details.items()}


class GatewayServer:
    """Owns the HTTP listener; one per CoreService instance."""

    def __init__(self, service: CoreService, host: str = "127.0.0.1",
                 port: int | None = None):
        self.service = service
        handler = type("BoundHandler", (GatewayHandler,), {"service": service})
        self.httpd = ThreadingHTTPServer(
            (host, service.config.port if port is None else port), handler)
        self.httpd.daemon_threads = True
        routes = list(ROUTES)
        if service.config.fault_injection:
            routes += TEST_ROUTES
        self.httpd.routes = _compile(routes)  # type: ignore[attr-defined]
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        host, port = self.httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "GatewayServer":
        self._thread = threading.Thread(target=self.httpd.serve_forever,
                                        name="gateway", daemon=True)
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        self.httpd.serve_forever()

    def stop(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread:
            self._thread.join(timeout=5)
        self.service.close()
