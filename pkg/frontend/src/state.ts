/** Single dashboard store: every stream event and API response lands here,
 * and the UI re-renders from this state alone. No business logic beyond
 * mirroring what the server already decided. */

import type { AlertDoc, CaseItem, ChatMessageView, OpsSummary, StreamEvent, ZoneDoc } from "./types";

export const REDACTED_BODY = "[removed by moderator]";

export interface GroupView {
  id: string;
  alert_id: string;
  title: string;
  messages: ChatMessageView[];
}

export interface DashboardState {
  summary: OpsSummary | null;
  alerts: Map<string, AlertDoc>;
  alertAreas: Map<string, { bbox: Record<string, number>; severity: string; short_text: string }>;
  cases: Map<string, CaseItem>;
  zones: ZoneDoc[];
  groups: Map<string, GroupView>;
  selectedCase: string | null;
  selectedGroup: string | null;
}

export function initialState(): DashboardState {
  return {
    summary: null,
    alerts: new Map(),
    alertAreas: new Map(),
    cases: new Map(),
    zones: [],
    groups: new Map(),
    selectedCase: null,
    selectedGroup: null,
  };
}

type Listener = (state: DashboardState) => void;

export class Store {
  readonly state = initialState();
  private listeners: Listener[] = [];

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private notify(): void {
    for (const listener of this.listeners) listener(this.state);
  }

  setSummary(summary: OpsSummary): void {
    this.state.summary = summary;
    this.notify();
  }

  setZones(zones: ZoneDoc[]): void {
    this.state.zones = zones;
    this.notify();
  }

  rememberAlert(alert: AlertDoc): void {
    this.state.alerts.set(alert.id, alert);
    this.notify();
  }

  setGroupMessages(groupId: string, messages: ChatMessageView[]): void {
    const group = this.state.groups.get(groupId);
    if (!group) return;
    const known = new Map(group.messages.map((m) => [m.seq, m]));
    for (const m of messages) known.set(m.seq, m);
    group.messages = [...known.values()].sort((a, b) => a.seq - b.seq);
    this.notify();
  }

  selectCase(caseId: string | null): void {
    this.state.selectedCase = caseId;
    this.notify();
  }

  selectGroup(groupId: string | null): void {
    this.state.selectedGroup = groupId;
    this.notify();
  }

  /** Apply one stream event; the event kinds mirror the server enum. */
  apply(event: StreamEvent): void {
    const p = event.payload as Record<string, any>;
    switch (event.kind) {
      case "alert": {
        this.state.alertAreas.set(String(p.alert_id), {
          bbox: p.area_bbox as Record<string, number>,
          severity: String(p.severity),
          short_text: String(p.short_text),
        });
        break;
      }
      case "case_status": {
        const id = String(p.case_id);
        const existing = this.state.cases.get(id);
        this.state.cases.set(id, {
          kind: (p.case_kind === "sos" ? "sos" : "report"),
          id,
          status: String(p.status),
          user_id: String(p.user_id ?? existing?.user_id ?? ""),
          location: (p.location as CaseItem["location"]) ?? existing?.location,
          updated_seq: event.seq,
        });
        break;
      }
      case "group_opened": {
        const id = String(p.group_id);
        if (!this.state.groups.has(id)) {
          this.state.groups.set(id, {
            id,
            alert_id: String(p.alert_id),
            title: String(p.title ?? id),
            messages: [],
          });
        }
        break;
      }
      case "chat_message": {
        const group = this.state.groups.get(String(p.group_id));
        if (!group) break;
        if (group.messages.some((m) => m.seq === Number(p.seq))) break;
        group.messages.push({
          id: String(p.message_id),
          seq: Number(p.seq),
          author_id: String(p.author_id),
          body: String(p.body),
          state: "visible",
          created_at: 0,
        });
        group.messages.sort((a, b) => a.seq - b.seq);
        break;
      }
      case "chat_redaction": {
        const group = this.state.groups.get(String(p.group_id));
        if (!group) break;
        for (const message of group.messages) {
          if (message.seq === Number(p.seq)) {
            message.state = "removed";
            message.body = REDACTED_BODY;
          }
        }
        break;
      }
    }
    this.notify();
  }

  /** Queue rows: open work first, then by recency. */
  caseQueue(): CaseItem[] {
    const terminal = new Set(["closed", "resolved", "dismissed"]);
    return [...this.state.cases.values()].sort((a, b) => {
      const at = terminal.has(a.status) ? 1 : 0;
      const bt = terminal.has(b.status) ? 1 : 0;
      if (at !== bt) return at - bt;
      return b.updated_seq - a.updated_seq;
    });
  }
}
