"""Composition root: wires store, providers, index, and domain services.

One CoreService instance is one running node. On startup it rebuilds the
location index from persisted accounts (the index itself is derived
state) and seeds operator accounts and static map content from config.
"""

from __future__ import annotations

import threading
import uuid
from typing import Any

from .alerting import AlertingService
from .chat import ChatService
from .clock import Clock, SystemClock
from .config import ServiceConfig
from .errors import Forbidden, NotFound
from .events import EventBus
from .geo import Coordinate, GeoIndex, geofence_contains, k_nearest
from .identity import IdentityService, Principal
from .intake import IntakeService
from .model import (
    EvacuationRoute,
    ResourceKind,
    ResourcePoint,
    Role,
    Zone,
    ZoneCategory,
    coordinate_from_canon,
    from_canon,
    geofence_from_canon,
    to_canon,
)
from .providers import ProviderSet
from .store import MemoryStore, open_store


class CoreService:
    def __init__(self, config: ServiceConfig | None = None,
                 store: MemoryStore | None = None,
                 clock: Clock | None = None,
                 providers: ProviderSet | None = None):
        self.config = config or ServiceConfig()
        self.clock = clock or SystemClock()
        self.store = store if store is not None else open_store(self.config.store)
        self.providers = providers or ProviderSet.fakes(
            push_drop_rate=self.config.push_drop_rate)
        self.index = GeoIndex(cell_deg=self.config.cell_deg)
        self.events = EventBus(retention=self.config.event_retention)
        self.identity = IdentityService(self.store, self.clock, self.providers, self.config)
        self.alerting = AlertingService(self.store, self.clock, self.index,
                                        self.events, self.providers.push, self.config)
        self.intake = IntakeService(self.store, self.clock, self.events, self.index,
                                    self.identity, self.alerting, self.config,
                                    geocoder=self.providers.geocoder)
        self.chat = ChatService(self.store, self.clock, self.events, self.index,
                                self.identity, self.config)
        self._sweeper: threading.Thread | None = None
        self._stop = threading.Event()
        self._rebuild_index()
        self._seed_from_config()

    # -- startup -----------------------------------------------------------

    def _rebuild_index(self) -> None:
        for doc, _ in self.store.list("user"):
            user = from_canon(doc)
            if user.last_location is not None:
                p, t = user.last_location
                self.index.upsert(user.id, p, t)
            if user.push_token and hasattr(self.providers.push, "register"):
                self.providers.push.register(user.push_token)

    def _seed_from_config(self) -> None:
        for op in self.config.operators:
            self.identity.provision_operator(op["phone"], op.get("display_name", "operator"))
        for res in self.config.resources:
            if not self.store.list("resource", where={"name": res["name"]}):
                self.add_resource(res["kind"], res["name"],
                                  Coordinate(res["lat"], res["lon"]))
        for zone in self.config.zones:
            self.add_zone(zone.get("alert_id", ""), zone["category"],
                          geofence_from_canon({"shape": "polygon", "ring": zone["ring"]}))
        for route in self.config.routes:
            self.add_route(route.get("alert_id", ""),
                           [coordinate_from_canon(w) for w in route["waypoints"]],
                           route["destination_resource_id"])

    # -- content authoring ---------------------------------------------------

    def add_resource(self, kind: str, name: str, location: Coordinate) -> ResourcePoint:
        res = ResourcePoint(id=uuid.uuid4().hex, kind=ResourceKind(kind), name=name,
                            location=location, created_at=self.clock.now())
        self.store.put("resource", res.id, to_canon(res), 0)
        return res

    def add_zone(self, alert_id: str, category: str, polygon) -> Zone:
        zone = Zone(id=uuid.uuid4().hex, alert_id=alert_id, polygon=polygon,
                    category=ZoneCategory(category), created_at=self.clock.now())
        self.store.put("zone", zone.id, to_canon(zone), 0)
        return zone

    def add_route(self, alert_id: str, waypoints: list[Coordinate],
                  destination_resource_id: str) -> EvacuationRoute:
        if not self.store.exists("resource", destination_resource_id):
            raise NotFound(f"no resource {destination_resource_id}")
        route = EvacuationRoute(id=uuid.uuid4().hex, alert_id=alert_id,
                                waypoints=tuple(waypoints),
                                destination_resource_id=destination_resource_id,
                                created_at=self.clock.now())
        self.store.put("route", route.id, to_canon(route), 0)
        return route

    # -- citizen queries -----------------------------------------------------

    def alerts_at(self, principal: Principal, p: Coordinate) -> list[dict[str, Any]]:
        """Active alerts at a point; doubles as the caller's location beacon."""
        user = self.identity.get_user(principal.user_id)
        if user.verified:
            user = self.intake.record_location(user, p)
        out = []
        for alert in self.alerting.active_alerts_at(p):
            doc = to_canon(alert)
            doc["chat_groups"] = [
                {"id": g.id, "title": g.title}
                for g in self.chat.groups_for_alert(alert.id)
                if geofence_contains(g.area, p)
            ]
            out.append(doc)
        return out

    def resources_near(self, p: Coordinate, k: int, kind: str | None = None) -> list[dict]:
        rows = [from_canon(doc) for doc, _ in self.store.list("resource")]
        if kind is not None:
            wanted = ResourceKind(kind)
            rows = [r for r in rows if r.kind == wanted]
        ranked = k_nearest([(r.id, r.location) for r in rows], p, k)
        by_id = {r.id: r for r in rows}
        return [to_canon(by_id[rid]) for rid in ranked]

    def zones_for(self, alert_id: str) -> list[dict]:
        rows = self.store.list("zone", where={"alert_id": alert_id})
        if alert_id:
            rows += self.store.list("zone", where={"alert_id": ""})
        return [doc for doc, _ in rows]

    def routes_for(self, alert_id: str) -> list[dict]:
        return [doc for doc, _ in self.store.list("route", where={"alert_id": alert_id})]

    # -- operator dashboard ----------------------------------------------------

    def ops_summary(self, principal: Principal) -> dict[str, Any]:
        if principal.role != Role.operator:
            raise Forbidden("operator role required")
        now = self.clock.now()

        def agg(s: MemoryStore) -> dict[str, Any]:
            reports_by_status = {}
            for doc, _ in s.list("report"):
                reports_by_status[doc["status"]] = reports_by_status.get(doc["status"], 0) + 1
            return {
                "open_sos": s.count("sos", {"status": "open"}),
                "reports_by_status": reports_by_status,
                "active_alerts": s.count("alert", {"status": "active"}),
                "open_groups": s.count("chat_group", {"status": "open"}),
                "deliveries_last_hour": len(s.list("delivery", created_from=now - 3600.0)),
            }

        return self.store.with_snapshot(agg)

    # -- background upkeep -------------------------------------------------------

    def start_background(self) -> None:
        if self._sweeper is not None:
            return

        def sweep_loop():
            while not self._stop.wait(self.config.expire_sweep_interval_s):
                self.alerting.expire_sweep()

        self._sweeper = threading.Thread(target=sweep_loop, name="expire-sweeper", daemon=True)
        self._sweeper.start()

    def close(self) -> None:
        self._stop.set()
        self.alerting.close()
        self.store.close()
