/** Typed client for the /v1 API. Every state change round-trips here. */

import type { AlertDoc, Geofence, OpsSummary, ZoneDoc } from "./types";

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
    public details: Record<string, unknown> = {},
  ) {
    super(message);
  }
}

type FetchLike = typeof fetch;

export class DashboardApi {
  token: string | null = null;

  constructor(
    public base: string,
    private fetchImpl: FetchLike = fetch.bind(globalThis),
  ) {}

  private async call<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = {};
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    let payload: string | undefined;
    if (body !== undefined) {
      headers["Content-Type"] = "application/json";
      payload = JSON.stringify(body);
    }
    const response = await this.fetchImpl(this.base + path, { method, headers, body: payload });
    const text = await response.text();
    const doc = text ? JSON.parse(text) : {};
    if (!response.ok) {
      throw new ApiError(response.status, doc.code ?? "error", doc.message ?? text, doc.details ?? {});
    }
    return doc as T;
  }

  // -- session ------------------------------------------------------------

  beginLogin(phone: string): Promise<{ challenge_id: string }> {
    return this.call("POST", "/v1/auth/register", { phone });
  }

  async completeLogin(challengeId: string, code: string, displayName: string): Promise<string> {
    const session = await this.call<{ token: string; role: string }>(
      "POST", "/v1/auth/verify",
      { challenge_id: challengeId, code, display_name: displayName });
    this.token = session.token;
    return session.role;
  }

  // -- alerts ---------------------------------------------------------------

  createAlert(fields: {
    hazard: string; severity: string; short_text: string; guidance_text: string;
    authority: string; effective_from: number; expires_at: number; area: Geofence;
  }): Promise<AlertDoc> {
    return this.call("POST", "/v1/alerts", fields);
  }

  activateAlert(alertId: string): Promise<{ recipient_count: number }> {
    return this.call("POST", `/v1/alerts/${alertId}/activate`);
  }

  cancelAlert(alertId: string): Promise<AlertDoc> {
    return this.call("POST", `/v1/alerts/${alertId}/cancel`);
  }

  // -- situational data -------------------------------------------------------

  opsSummary(): Promise<OpsSummary> {
    return this.call("GET", "/v1/ops/summary");
  }

  zones(alertId: string): Promise<{ zones: ZoneDoc[] }> {
    return this.call("GET", `/v1/zones?alert_id=${encodeURIComponent(alertId)}`);
  }

  // -- cases -------------------------------------------------------------------

  setCaseStatus(caseId: string, status: string): Promise<Record<string, unknown>> {
    return this.call("PATCH", `/v1/cases/${caseId}/status`, { status });
  }

  // -- chat ----------------------------------------------------------------------

  openGroup(alertId: string, title: string, area: Geofence): Promise<{ id: string }> {
    return this.call("POST", "/v1/groups", { alert_id: alertId, title, area });
  }

  groupMessages(groupId: string, sinceSeq = 0): Promise<{ messages: import("./types").ChatMessageView[] }> {
    return this.call("GET", `/v1/groups/${groupId}/messages?since_seq=${sinceSeq}&limit=100`);
  }

  moderate(groupId: string, action: string, target: { message_id?: string; user_id?: string } = {}): Promise<unknown> {
    return this.call("POST", `/v1/groups/${groupId}/moderate`, { action, ...target });
  }
}
