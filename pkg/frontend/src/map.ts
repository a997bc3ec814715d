/** Canvas map: graticule basemap, zone/alert overlays, case pins, and the
 * circle/polygon draw tool for the alert composer.
 *
 * The basemap is a plain grid so rendering needs no network and audits
 * stay deterministic; a tile layer would slot into drawBase().
 */

import { zoneColor, SOS_PIN, REPORT_PIN, ALERT_AREA } from "./colors";
import {
  fromCanvas,
  graticuleStepDeg,
  haversineM,
  toCanvas,
  type Viewport,
} from "./geometry";
import type { DashboardState } from "./state";
import { validateCircle, validateRing, type Violation } from "./validation";
import type { CaseItem, Geofence, LatLon } from "./types";

export type DrawMode = "idle" | "circle" | "polygon";

/** Composer draw tool as a plain state machine (canvas-free, testable). */
export class DrawTool {
  mode: DrawMode = "idle";
  circleCenter: LatLon | null = null;
  circleRadiusM = 0;
  ring: LatLon[] = [];

  start(mode: Exclude<DrawMode, "idle">): void {
    this.reset();
    this.mode = mode;
  }

  reset(): void {
    this.mode = "idle";
    this.circleCenter = null;
    this.circleRadiusM = 0;
    this.ring = [];
  }

  click(p: LatLon): void {
    if (this.mode === "circle") {
      if (this.circleCenter === null) this.circleCenter = p;
      else this.circleRadiusM = haversineM(this.circleCenter, p);
    } else if (this.mode === "polygon") {
      this.ring.push(p);
    }
  }

  hover(p: LatLon): void {
    if (this.mode === "circle" && this.circleCenter !== null && this.circleRadiusM === 0) {
      // Radius preview tracks the cursor until the second click pins it.
      this.circleRadiusM = -haversineM(this.circleCenter, p);
    }
  }

  /** The drawn shape, or null while incomplete. */
  shape(): Geofence | null {
    if (this.mode === "circle" && this.circleCenter && this.circleRadiusM > 0) {
      return { shape: "circle", center: this.circleCenter, radius_m: this.circleRadiusM };
    }
    if (this.mode === "polygon" && this.ring.length >= 3) {
      return { shape: "polygon", ring: [...this.ring] };
    }
    return null;
  }

  violations(): Violation[] {
    if (this.mode === "circle" && this.circleCenter && this.circleRadiusM > 0) {
      return validateCircle(this.circleRadiusM);
    }
    if (this.mode === "polygon" && this.ring.length >= 3) {
      return validateRing(this.ring);
    }
    return [];
  }
}

export class MapView {
  vp: Viewport;

  constructor(private canvas: HTMLCanvasElement, center: LatLon = { lat: 38.0, lon: 23.7 }) {
    this.vp = {
      centerLat: center.lat,
      centerLon: center.lon,
      degPerPx: 0.0008,
      width: canvas.width,
      height: canvas.height,
    };
  }

  pointAt(x: number, y: number): LatLon {
    return fromCanvas(this.vp, x, y);
  }

  /** Nearest pin within 12 px of the cursor, for the case panel. */
  hitTest(state: DashboardState, x: number, y: number): CaseItem | null {
    let best: CaseItem | null = null;
    let bestD = 12;
    for (const item of state.cases.values()) {
      if (!item.location) continue;
      const pt = toCanvas(this.vp, item.location);
      const d = Math.hypot(pt.x - x, pt.y - y);
      if (d < bestD) {
        best = item;
        bestD = d;
      }
    }
    return best;
  }

  render(state: DashboardState, tool: DrawTool): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    this.vp.width = this.canvas.width;
    this.vp.height = this.canvas.height;
    this.drawBase(ctx);
    this.drawZones(ctx, state);
    this.drawAlertAreas(ctx, state);
    this.drawPins(ctx, state);
    this.drawTool(ctx, tool);
  }

  private drawBase(ctx: CanvasRenderingContext2D): void {
    const { width, height } = this.vp;
    ctx.fillStyle = "#10151c";
    ctx.fillRect(0, 0, width, height);
    const step = graticuleStepDeg(this.vp);
    ctx.strokeStyle = "#243040";
    ctx.lineWidth = 1;
    ctx.beginPath();
    const topLeft = fromCanvas(this.vp, 0, 0);
    const bottomRight = fromCanvas(this.vp, width, height);
    for (let lon = Math.floor(topLeft.lon / step) * step; lon <= bottomRight.lon; lon += step) {
      const { x } = toCanvas(this.vp, { lat: this.vp.centerLat, lon });
      ctx.moveTo(x, 0);
      ctx.lineTo(x, height);
    }
    for (let lat = Math.floor(bottomRight.lat / step) * step; lat <= topLeft.lat; lat += step) {
      const { y } = toCanvas(this.vp, { lat, lon: this.vp.centerLon });
      ctx.moveTo(0, y);
      ctx.lineTo(width, y);
    }
    ctx.stroke();
  }

  private tracePolygon(ctx: CanvasRenderingContext2D, ring: LatLon[]): void {
    ctx.beginPath();
    ring.forEach((v, i) => {
      const pt = toCanvas(this.vp, v);
      if (i === 0) ctx.moveTo(pt.x, pt.y);
      else ctx.lineTo(pt.x, pt.y);
    });
    ctx.closePath();
  }

  private drawZones(ctx: CanvasRenderingContext2D, state: DashboardState): void {
    for (const zone of state.zones) {
      const color = zoneColor(zone.category);
      this.tracePolygon(ctx, zone.polygon.ring);
      ctx.fillStyle = color + "55";
      ctx.fill();
      ctx.strokeStyle = color;
      ctx.lineWidth = 2;
      ctx.stroke();
    }
  }

  private drawAlertAreas(ctx: CanvasRenderingContext2D, state: DashboardState): void {
    for (const area of state.alertAreas.values()) {
      const box = area.bbox;
      const a = toCanvas(this.vp, { lat: box.lat_max, lon: box.lon_min });
      const b = toCanvas(this.vp, { lat: box.lat_min, lon: box.lon_max });
      ctx.strokeStyle = ALERT_AREA;
      ctx.setLineDash([6, 4]);
      ctx.lineWidth = 2;
      ctx.strokeRect(a.x, a.y, b.x - a.x, b.y - a.y);
      ctx.setLineDash([]);
    }
  }

  private drawPins(ctx: CanvasRenderingContext2D, state: DashboardState): void {
    for (const item of state.cases.values()) {
      if (!item.location) continue;
      const pt = toCanvas(this.vp, item.location);
      const terminal = ["closed", "resolved", "dismissed"].includes(item.status);
      ctx.beginPath();
      ctx.arc(pt.x, pt.y, 6, 0, Math.PI * 2);
      ctx.fillStyle = terminal ? "#555f6d" : item.kind === "sos" ? SOS_PIN : REPORT_PIN;
      ctx.fill();
      ctx.strokeStyle = "#e7ecf2";
      ctx.lineWidth = 1.5;
      ctx.stroke();
    }
  }

  private drawTool(ctx: CanvasRenderingContext2D, tool: DrawTool): void {
    ctx.strokeStyle = "#d94f4f";
    ctx.lineWidth = 2;
    if (tool.mode === "circle" && tool.circleCenter) {
      const center = toCanvas(this.vp, tool.circleCenter);
      const radiusM = Math.abs(tool.circleRadiusM);
      if (radiusM > 0) {
        const degLat = (radiusM / 6371000) * (180 / Math.PI);
        const rPx = degLat / this.vp.degPerPx;
        ctx.beginPath();
        ctx.arc(center.x, center.y, rPx, 0, Math.PI * 2);
        ctx.stroke();
      }
      ctx.fillStyle = "#d94f4f";
      ctx.fillRect(center.x - 2, center.y - 2, 4, 4);
    }
    if (tool.mode === "polygon" && tool.ring.length > 0) {
      this.tracePolygon(ctx, tool.ring);
      ctx.stroke();
    }
  }
}
