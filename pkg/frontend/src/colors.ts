/** Map color semantics: darker tones keep overlays legible under stress. */

export const ZONE_COLORS: Record<string, string> = {
  affected: "#8b0000",
  safe: "#006400",
  evacuation_point_area: "#8b8000",
  guidance: "#00008b",
};

export const SOS_PIN = "#8b0000";
export const REPORT_PIN = "#b45309";
export const ALERT_AREA = "#8b0000";

export function zoneColor(category: string): string {
  return ZONE_COLORS[category] ?? "#444444";
}
