/** Wire types for the /v1 API, matching the server's canonical forms. */

export interface LatLon {
  lat: number;
  lon: number;
}

export type Geofence =
  | { shape: "circle"; center: LatLon; radius_m: number }
  | { shape: "polygon"; ring: LatLon[] };

export type Severity = "advisory" | "watch" | "warning" | "emergency";
export type Hazard = "wildfire" | "flood" | "earthquake" | "landslide" | "storm" | "other";

export interface AlertDoc {
  id: string;
  hazard: Hazard;
  area: Geofence;
  severity: Severity;
  short_text: string;
  guidance_text: string;
  source: { operator_id: string; authority: string };
  effective_from: number;
  expires_at: number;
  status: "draft" | "active" | "cancelled" | "expired";
  created_at: number;
}

export type SosStatus = "open" | "acknowledged" | "responding" | "closed";
export type ReportStatus = "submitted" | "acknowledged" | "in_progress" | "resolved" | "dismissed";

export interface CaseItem {
  kind: "sos" | "report";
  id: string;
  status: string;
  user_id: string;
  location?: LatLon;
  updated_seq: number;
}

export interface ZoneDoc {
  id: string;
  alert_id: string;
  polygon: { shape: "polygon"; ring: LatLon[] };
  category: "affected" | "safe" | "evacuation_point_area" | "guidance";
  created_at: number;
}

export interface ChatMessageView {
  id: string;
  seq: number;
  author_id: string;
  body: string;
  state: "visible" | "removed";
  created_at: number;
}

export interface OpsSummary {
  open_sos: number;
  reports_by_status: Record<string, number>;
  active_alerts: number;
  open_groups: number;
  deliveries_last_hour: number;
}

export interface StreamEvent {
  seq: number;
  kind: "alert" | "case_status" | "chat_message" | "chat_redaction" | "group_opened";
  payload: Record<string, unknown>;
}
