/** Client-side mirror of the server's alert validation.
 *
 * Same rules, same codes; the server remains the authority and every
 * submission still round-trips through the API.
 */

import { MAX_CIRCLE_RADIUS_M, ringSelfIntersects } from "./geometry";
import type { Geofence, LatLon } from "./types";

export const SHORT_TEXT_LIMIT = 90;

/** Length in Unicode code points (surrogate pairs count once). */
export function codePoints(text: string): number {
  return Array.from(text).length;
}

/** Trim to at most `limit` code points; used to hard-stop the composer input. */
export function clampCodePoints(text: string, limit: number): string {
  const chars = Array.from(text);
  return chars.length <= limit ? text : chars.slice(0, limit).join("");
}

export interface Violation {
  code: string;
  detail?: string;
}

export function validateCircle(radiusM: number): Violation[] {
  const out: Violation[] = [];
  if (!Number.isFinite(radiusM) || radiusM <= 0) {
    out.push({ code: "invalid_radius", detail: "radius must be positive" });
  } else if (radiusM > MAX_CIRCLE_RADIUS_M) {
    out.push({ code: "invalid_radius", detail: `radius above ${MAX_CIRCLE_RADIUS_M} m` });
  }
  return out;
}

export function validateRing(ring: LatLon[]): Violation[] {
  const out: Violation[] = [];
  if (ring.length < 3) {
    out.push({ code: "too_few_vertices", detail: "a polygon needs at least 3 vertices" });
    return out;
  }
  for (let i = 0; i < ring.length; i++) {
    const a = ring[i];
    const b = ring[(i + 1) % ring.length];
    if (a.lat === b.lat && a.lon === b.lon) {
      out.push({ code: "duplicate_vertex", detail: `vertices ${i} and ${(i + 1) % ring.length} coincide` });
      return out;
    }
    if (Math.abs(a.lon - b.lon) > 180) {
      out.push({ code: "antimeridian_edge", detail: "edges may not cross the antimeridian" });
      return out;
    }
  }
  if (ringSelfIntersects(ring)) {
    out.push({ code: "self_intersecting", detail: "the outline crosses itself" });
  }
  return out;
}

export function validateArea(area: Geofence | null): Violation[] {
  if (area === null) return [{ code: "missing_area", detail: "draw a circle or polygon" }];
  return area.shape === "circle" ? validateCircle(area.radius_m) : validateRing(area.ring);
}

export interface AlertDraftFields {
  hazard: string;
  severity: string;
  short_text: string;
  guidance_text: string;
  authority: string;
  effective_from: number;
  expires_at: number;
  area: Geofence | null;
}

export function validateAlertDraft(draft: AlertDraftFields): Violation[] {
  const out: Violation[] = [];
  const n = codePoints(draft.short_text);
  if (n === 0) out.push({ code: "empty_short_text" });
  else if (n > SHORT_TEXT_LIMIT) {
    out.push({ code: "short_text_too_long", detail: `${n}/${SHORT_TEXT_LIMIT} characters` });
  }
  if (!draft.guidance_text.trim()) out.push({ code: "empty_guidance" });
  if (!draft.authority.trim()) out.push({ code: "empty_source" });
  if (!(draft.effective_from < draft.expires_at)) out.push({ code: "window_inverted" });
  out.push(...validateArea(draft.area));
  return out;
}

export function counterText(shortText: string): string {
  return `${Math.min(codePoints(shortText), SHORT_TEXT_LIMIT)}/${SHORT_TEXT_LIMIT}`;
}
