"""Geodesic math, geofences, and the subscriber location index.

Distances are great-circle (haversine) on a sphere of mean radius
6,371,000 m. Polygon containment is planar ray casting on (lat, lon);
rings that cross the antimeridian are rejected at validation, so the
planar treatment is sound for regional disaster footprints. Containment
is boundary-inclusive everywhere: over-alerting beats under-alerting.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

from .errors import InvalidCoordinate, InvalidGeofence, StaleUpdate

EARTH_RADIUS_M = 6_371_000.0
METERS_PER_DEG_LAT = math.pi * EARTH_RADIUS_M / 180.0
MAX_CIRCLE_RADIUS_M = 1_000_000.0
DEFAULT_CELL_DEG = 0.05

_EPS = 1e-12


@dataclass(frozen=True)
class Coordinate:
    lat: float
    lon: float

    def __post_init__(self):
        lat, lon = self.lat, self.lon
        if not (isinstance(lat, (int, float)) and isinstance(lon, (int, float))):
            raise InvalidCoordinate("coordinates must be numbers")
        if not (math.isfinite(lat) and math.isfinite(lon)):
            raise InvalidCoordinate("coordinates must be finite")
        if not -90.0 <= lat <= 90.0:
            raise InvalidCoordinate(f"latitude {lat} outside [-90, 90]")
        if not -180.0 <= lon <= 180.0:
            raise InvalidCoordinate(f"longitude {lon} outside [-180, 180]")


@dataclass(frozen=True)
class Circle:
    center: Coordinate
    radius_m: float

    def __post_init__(self):
        if not (isinstance(self.radius_m, (int, float)) and math.isfinite(self.radius_m)):
            raise InvalidGeofence("circle radius must be a finite number")
        if self.radius_m <= 0:
            raise InvalidGeofence("circle radius must be positive")
        if self.radius_m > MAX_CIRCLE_RADIUS_M:
            raise InvalidGeofence(f"circle radius {self.radius_m} exceeds {MAX_CIRCLE_RADIUS_M} m")


@dataclass(frozen=True)
class Polygon:
    """Simple ring, implicitly closed (last vertex connects back to first)."""

    ring: tuple[Coordinate, ...]

    def __post_init__(self):
        ring = tuple(self.ring)
        object.__setattr__(self, "ring", ring)
        if len(ring) < 3:
            raise InvalidGeofence("polygon ring needs at least 3 vertices")
        n = len(ring)
        for i in range(n):
            a, b = ring[i], ring[(i + 1) % n]
            if a == b:
                raise InvalidGeofence(f"consecutive duplicate vertex at index {i}")
            if abs(a.lon - b.lon) > 180.0:
                raise InvalidGeofence("polygon edge crosses the antimeridian")
        if _ring_self_intersects(ring):
            raise InvalidGeofence("polygon ring is self-intersecting")


Geofence = Circle | Polygon


def _orient(ax, ay, bx, by, cx, cy) -> float:
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def _on_segment(ax, ay, bx, by, px, py) -> bool:
    if abs(_orient(ax, ay, bx, by, px, py)) > _EPS:
        return False
    return min(ax, bx) - _EPS <= px <= max(ax, bx) + _EPS and \
        min(ay, by) - _EPS <= py <= max(ay, by) + _EPS


def _segments_intersect(p1, p2, p3, p4) -> bool:
    d1 = _orient(p3[0], p3[1], p4[0], p4[1], p1[0], p1[1])
    d2 = _orient(p3[0], p3[1], p4[0], p4[1], p2[0], p2[1])
    d3 = _orient(p1[0], p1[1], p2[0], p2[1], p3[0], p3[1])
    d4 = _orient(p1[0], p1[1], p2[0], p2[1], p4[0], p4[1])
    if ((d1 > 0 and d2 < 0) or (d1 < 0 and d2 > 0)) and \
       ((d3 > 0 and d4 < 0) or (d3 < 0 and d4 > 0)):
        return True
    for (a, b, p) in ((p3, p4, p1), (p3, p4, p2), (p1, p2, p3), (p1, p2, p4)):
        if _on_segment(a[0], a[1], b[0], b[1], p[0], p[1]):
            return True
    return False


def _ring_self_intersects(ring: tuple[Coordinate, ...]) -> bool:
    # O(n^2) segment-pair check; adjacent segments legitimately share a vertex.
    n = len(ring)
    segs = [((ring[i].lon, ring[i].lat), (ring[(i + 1) % n].lon, ring[(i + 1) % n].lat))
            for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            adjacent = (j == i + 1) or (i == 0 and j == n - 1)
            if adjacent:
                continue
            if _segments_intersect(segs[i][0], segs[i][1], segs[j][0], segs[j][1]):
                return True
    return False


def haversine_m(a: Coordinate, b: Coordinate) -> float:
    """Great-circle distance in meters between two coordinates."""
    phi1 = math.radians(a.lat)
    phi2 = math.radians(b.lat)
    dphi = math.radians(b.lat - a.lat)
    dlam = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.atan2(math.sqrt(h), math.sqrt(1.0 - h))


def _point_in_ring(ring: tuple[Coordinate, ...], p: Coordinate) -> bool:
    x, y = p.lon, p.lat
    n = len(ring)
    for i in range(n):
        a, b = ring[i], ring[(i + 1) % n]
        if _on_segment(a.lon, a.lat, b.lon, b.lat, x, y):
            return True
    inside = False
    for i in range(n):
        a, b = ring[i], ring[(i + 1) % n]
        y1, y2 = a.lat, b.lat
        if (y1 > y) != (y2 > y):
            xint = a.lon + (y - y1) * (b.lon - a.lon) / (y2 - y1)
            if x < xint:
                inside = not inside
    return inside


def geofence_contains(g: Geofence, p: Coordinate) -> bool:
    """Boundary-inclusive containment test."""
    if isinstance(g, Circle):
        return haversine_m(g.center, p) <= g.radius_m
    return _point_in_ring(g.ring, p)


@dataclass(frozen=True)
class BBox:
    """Latitude band plus one or two longitude spans (two when a circle wraps)."""

    lat_min: float
    lat_max: float
    lon_spans: tuple[tuple[float, float], ...]

    @property
    def lon_min(self) -> float:
        return min(lo for lo, _ in self.lon_spans)

    @property
    def lon_max(self) -> float:
        return max(hi for _, hi in self.lon_spans)


def _wrap_lon_spans(lo: float, hi: float) -> tuple[tuple[float, float], ...]:
    if hi - lo >= 360.0:
        return ((-180.0, 180.0),)
    spans = []
    if lo < -180.0:
        spans.append((lo + 360.0, 180.0))
        lo = -180.0
    if hi > 180.0:
        spans.append((-180.0, hi - 360.0))
        hi = 180.0
    spans.append((lo, hi))
    return tuple(spans)


def geofence_bbox(g: Geofence) -> BBox:
    """Smallest lat/lon box containing the geofence (exact for the cap, with slop absorbed by index padding)."""
    if isinstance(g, Polygon):
        lats = [v.lat for v in g.ring]
        lons = [v.lon for v in g.ring]
        return BBox(min(lats), max(lats), ((min(lons), max(lons)),))
    delta = g.radius_m / EARTH_RADIUS_M
    dlat = math.degrees(delta)
    lat_min = g.center.lat - dlat
    lat_max = g.center.lat + dlat
    if lat_max >= 90.0 or lat_min <= -90.0:
        # Cap reaches a pole: every longitude qualifies.
        return BBox(max(-90.0, lat_min), min(90.0, lat_max), ((-180.0, 180.0),))
    # Extreme longitudes occur where a meridian is tangent to the cap.
    sin_dlon = min(1.0, math.sin(delta) / math.cos(math.radians(g.center.lat)))
    dlon = math.degrees(math.asin(sin_dlon))
    return BBox(lat_min, lat_max, _wrap_lon_spans(g.center.lon - dlon, g.center.lon + dlon))


class _RWLock:
    """Many readers, one writer; writes serialize behind drained readers."""

    def __init__(self):
        self._cond = threading.Condition()
        self._readers = 0
        self._writing = False

    def acquire_read(self):
        with self._cond:
            while self._writing:
                self._cond.wait()
            self._readers += 1

    def release_read(self):
        with self._cond:
            self._readers -= 1
            if self._readers == 0:
                self._cond.notify_all()

    def acquire_write(self):
        with self._cond:
            while self._writing or self._readers:
                self._cond.wait()
            self._writing = True

    def release_write(self):
        with self._cond:
            self._writing = False
            self._cond.notify_all()


class GeoIndex:
    """Grid index over each subscriber's latest known position.

    Queries are exact: grid cells only prune candidates, every candidate is
    re-checked with geofence_contains, so results match brute force for any
    cell size.
    """

    def __init__(self, cell_deg: float = DEFAULT_CELL_DEG):
        if not (0 < cell_deg <= 90):
            raise ValueError(f"cell_deg must be in (0, 90], got {cell_deg}")
        self.cell_deg = float(cell_deg)
        self._cells: dict[tuple[int, int], set[str]] = {}
        self._positions: dict[str, tuple[Coordinate, float]] = {}
        self._lock = _RWLock()

    def _cell_of(self, p: Coordinate) -> tuple[int, int]:
        return (math.floor(p.lat / self.cell_deg), math.floor(p.lon / self.cell_deg))

    def __len__(self) -> int:
        self._lock.acquire_read()
        try:
            return len(self._positions)
        finally:
            self._lock.release_read()

    def position_of(self, subscriber_id: str) -> tuple[Coordinate, float] | None:
        self._lock.acquire_read()
        try:
            return self._positions.get(subscriber_id)
        finally:
            self._lock.release_read()

    def upsert(self, subscriber_id: str, p: Coordinate, t: float) -> None:
        """Record the latest position; out-of-order updates are rejected."""
        self._lock.acquire_write()
        try:
            prev = self._positions.get(subscriber_id)
            if prev is not None and t < prev[1]:
                raise StaleUpdate(
                    f"update at {t} older than stored {prev[1]} for {subscriber_id}")
            if prev is not None:
                old_cell = self._cell_of(prev[0])
                members = self._cells.get(old_cell)
                if members is not None:
                    members.discard(subscriber_id)
                    if not members:
                        del self._cells[old_cell]
            self._positions[subscriber_id] = (p, t)
            self._cells.setdefault(self._cell_of(p), set()).add(subscriber_id)
        finally:
            self._lock.release_write()

    def remove(self, subscriber_id: str) -> None:
        self._lock.acquire_write()
        try:
            prev = self._positions.pop(subscriber_id, None)
            if prev is not None:
                cell = self._cell_of(prev[0])
                members = self._cells.get(cell)
                if members is not None:
                    members.discard(subscriber_id)
                    if not members:
                        del self._cells[cell]
        finally:
            self._lock.release_write()

    def _candidate_cells(self, bbox: BBox) -> list[tuple[int, int]]:
        c = self.cell_deg
        # One cell of padding absorbs bbox float slop; correctness never
        # depends on the box, only completeness does.
        i_lo = math.floor(max(-90.0, bbox.lat_min) / c) - 1
        i_hi = math.floor(min(90.0, bbox.lat_max) / c) + 1
        j_ranges = []
        total_j = 0
        for lo, hi in bbox.lon_spans:
            j_lo = math.floor(lo / c) - 1
            j_hi = math.floor(hi / c) + 1
            j_ranges.append((j_lo, j_hi))
            total_j += j_hi - j_lo + 1
        n_enum = (i_hi - i_lo + 1) * total_j
        if n_enum > len(self._cells):
            # Sparser to scan occupied cells than to enumerate the box.
            return [
                (i, j) for (i, j) in self._cells
                if i_lo <= i <= i_hi and any(lo <= j <= hi for lo, hi in j_ranges)
            ]
        out = []
        for i in range(i_lo, i_hi + 1):
            for j_lo, j_hi in j_ranges:
                for j in range(j_lo, j_hi + 1):
                    if (i, j) in self._cells:
                        out.append((i, j))
        return out

    def query(self, g: Geofence) -> set[str]:
        """All subscriber ids whose latest position lies inside the geofence."""
        self._lock.acquire_read()
        try:
            result = set()
            for cell in self._candidate_cells(geofence_bbox(g)):
                for sid in self._cells.get(cell, ()):
                    if geofence_contains(g, self._positions[sid][0]):
                        result.add(sid)
            return result
        finally:
            self._lock.release_read()

    def query_brute_force(self, g: Geofence) -> set[str]:
        """Reference implementation: filter every stored position."""
        self._lock.acquire_read()
        try:
            return {sid for sid, (p, _) in self._positions.items() if geofence_contains(g, p)}
        finally:
            self._lock.release_read()


def k_nearest(resources: list[tuple[str, Coordinate]], p: Coordinate, k: int) -> list[str]:
    """Ids of the k closest resources, nearest first, ties by id."""
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    ranked = sorted(resources, key=lambda r: (haversine_m(r[1], p), r[0]))
    return [rid for rid, _ in ranked[:k]]
