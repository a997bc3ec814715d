/** Planar geometry mirrors of the server's geofence rules, plus canvas math.
 *
 * The server is the authority; these run client-side so an operator hears
 * about a bad shape before submitting, and so the map can hit-test pins.
 */

import type { Geofence, LatLon } from "./types";

export const EARTH_RADIUS_M = 6_371_000;
export const MAX_CIRCLE_RADIUS_M = 1_000_000;

export function haversineM(a: LatLon, b: LatLon): number {
  const rad = Math.PI / 180;
  const phi1 = a.lat * rad;
  const phi2 = b.lat * rad;
  const dPhi = (b.lat - a.lat) * rad;
  const dLam = (b.lon - a.lon) * rad;
  const h =
    Math.sin(dPhi / 2) ** 2 +
    Math.cos(phi1) * Math.cos(phi2) * Math.sin(dLam / 2) ** 2;
  return 2 * EARTH_RADIUS_M * Math.atan2(Math.sqrt(h), Math.sqrt(1 - h));
}

const EPS = 1e-12;

function orient(ax: number, ay: number, bx: number, by: number, cx: number, cy: number): number {
  return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax);
}

function onSegment(ax: number, ay: number, bx: number, by: number, px: number, py: number): boolean {
  if (Math.abs(orient(ax, ay, bx, by, px, py)) > EPS) return false;
  return (
    Math.min(ax, bx) - EPS <= px && px <= Math.max(ax, bx) + EPS &&
    Math.min(ay, by) - EPS <= py && py <= Math.max(ay, by) + EPS
  );
}

export function segmentsIntersect(p1: LatLon, p2: LatLon, p3: LatLon, p4: LatLon): boolean {
  const d1 = orient(p3.lon, p3.lat, p4.lon, p4.lat, p1.lon, p1.lat);
  const d2 = orient(p3.lon, p3.lat, p4.lon, p4.lat, p2.lon, p2.lat);
  const d3 = orient(p1.lon, p1.lat, p2.lon, p2.lat, p3.lon, p3.lat);
  const d4 = orient(p1.lon, p1.lat, p2.lon, p2.lat, p4.lon, p4.lat);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) &&
      ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) {
    return true;
  }
  return (
    onSegment(p3.lon, p3.lat, p4.lon, p4.lat, p1.lon, p1.lat) ||
    onSegment(p3.lon, p3.lat, p4.lon, p4.lat, p2.lon, p2.lat) ||
    onSegment(p1.lon, p1.lat, p2.lon, p2.lat, p3.lon, p3.lat) ||
    onSegment(p1.lon, p1.lat, p2.lon, p2.lat, p4.lon, p4.lat)
  );
}

export function ringSelfIntersects(ring: LatLon[]): boolean {
  const n = ring.length;
  for (let i = 0; i < n; i++) {
    for (let j = i + 1; j < n; j++) {
      const adjacent = j === i + 1 || (i === 0 && j === n - 1);
      if (adjacent) continue;
      if (segmentsIntersect(ring[i], ring[(i + 1) % n], ring[j], ring[(j + 1) % n])) {
        return true;
      }
    }
  }
  return false;
}

/** Boundary-inclusive point-in-polygon, identical rule to the server. */
export function pointInRing(ring: LatLon[], p: LatLon): boolean {
  const n = ring.length;
  for (let i = 0; i < n; i++) {
    const a = ring[i];
    const b = ring[(i + 1) % n];
    if (onSegment(a.lon, a.lat, b.lon, b.lat, p.lon, p.lat)) return true;
  }
  let inside = false;
  for (let i = 0; i < n; i++) {
    const a = ring[i];
    const b = ring[(i + 1) % n];
    if ((a.lat > p.lat) !== (b.lat > p.lat)) {
      const xint = a.lon + ((p.lat - a.lat) * (b.lon - a.lon)) / (b.lat - a.lat);
      if (p.lon < xint) inside = !inside;
    }
  }
  return inside;
}

export function geofenceContains(g: Geofence, p: LatLon): boolean {
  if (g.shape === "circle") return haversineM(g.center, p) <= g.radius_m;
  return pointInRing(g.ring, p);
}

/** Viewport mapping between lat/lon and canvas pixels (plate carrée). */
export interface Viewport {
  centerLat: number;
  centerLon: number;
  degPerPx: number;
  width: number;
  height: number;
}

export function toCanvas(vp: Viewport, p: LatLon): { x: number; y: number } {
  return {
    x: vp.width / 2 + (p.lon - vp.centerLon) / vp.degPerPx,
    y: vp.height / 2 - (p.lat - vp.centerLat) / vp.degPerPx,
  };
}

export function fromCanvas(vp: Viewport, x: number, y: number): LatLon {
  return {
    lat: vp.centerLat - (y - vp.height / 2) * vp.degPerPx,
    lon: vp.centerLon + (x - vp.width / 2) * vp.degPerPx,
  };
}

/** Grid step for the graticule: a round number near 80 px spacing. */
export function graticuleStepDeg(vp: Viewport): number {
  const target = vp.degPerPx * 80;
  const steps = [0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1, 2, 5, 10];
  for (const s of steps) if (s >= target) return s;
  return 20;
}
