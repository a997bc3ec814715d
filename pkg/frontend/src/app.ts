/** Dashboard bootstrap: login, stream consumption, and panel wiring. */

import { DashboardApi, ApiError } from "./api";
import { readDraft, wireShortTextInput, type ComposerElements } from "./composer";
import { isTerminal, validNextStatuses } from "./lifecycle";
import { DrawTool, MapView } from "./map";
import { REDACTED_BODY, Store } from "./state";
import { EventStream } from "./stream";
import { validateAlertDraft } from "./validation";

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

const api = new DashboardApi(
  (window as unknown as { E112_API?: string }).E112_API ?? "http://127.0.0.1:8112");
const store = new Store();
const tool = new DrawTool();
let map: MapView | null = null;
let stream: EventStream | null = null;
let lastAlertId: string | null = null;

function setStatus(text: string, isError = false): void {
  const el = $("status-line");
  el.textContent = text;
  el.classList.toggle("error", isError);
}

async function guarded(work: () => Promise<void>): Promise<void> {
  try {
    await work();
  } catch (e) {
    if (e instanceof ApiError) setStatus(`${e.code}: ${e.message}`, true);
    else setStatus(String(e), true);
  }
}

// -- login ------------------------------------------------------------------

function wireLogin(): void {
  const phone = $<HTMLInputElement>("login-phone");
  const code = $<HTMLInputElement>("login-code");
  let challengeId = "";

  $("login-send").addEventListener("click", () => guarded(async () => {
    challengeId = (await api.beginLogin(phone.value)).challenge_id;
    setStatus("Code sent over SMS; enter it to sign in.");
    $("login-step2").hidden = false;
  }));

  $("login-verify").addEventListener("click", () => guarded(async () => {
    const role = await api.completeLogin(challengeId, code.value, "Operator");
    if (role !== "operator") {
      setStatus("This console is for operator accounts.", true);
      api.token = null;
      return;
    }
    $("login-panel").hidden = true;
    $("console").hidden = false;
    startConsole();
  }));
}

// -- console ----------------------------------------------------------------

function startConsole(): void {
  const canvas = $<HTMLCanvasElement>("map");
  map = new MapView(canvas);
  canvas.addEventListener("click", (ev) => {
    const rect = canvas.getBoundingClientRect();
    const x = ev.clientX - rect.left;
    const y = ev.clientY - rect.top;
    if (tool.mode !== "idle") {
      tool.click(map!.pointAt(x, y));
      renderComposerValidation();
    } else {
      const hit = map!.hitTest(store.state, x, y);
      store.selectCase(hit ? hit.id : null);
    }
    map!.render(store.state, tool);
  });
  canvas.addEventListener("mousemove", (ev) => {
    if (tool.mode !== "circle") return;
    const rect = canvas.getBoundingClientRect();
    tool.hover(map!.pointAt(ev.clientX - rect.left, ev.clientY - rect.top));
    map!.render(store.state, tool);
  });

  store.subscribe(() => {
    map?.render(store.state, tool);
    renderSummary();
    renderQueue();
    renderGroups();
    renderCasePanel();
  });

  stream = new EventStream(api.base, api.token ?? "", (event) => {
    store.apply(event);
    if (event.kind === "alert") {
      void refreshZones(String((event.payload as Record<string, unknown>).alert_id));
    }
    if (event.kind === "chat_message" || event.kind === "chat_redaction") {
      // History fetch keeps the panel exact even if an event raced us.
      const gid = String((event.payload as Record<string, unknown>).group_id);
      if (store.state.selectedGroup === gid) void refreshGroup(gid);
    }
  });
  void stream.run();

  wireComposer();
  void refreshSummary();
  window.setInterval(() => void refreshSummary(), 10_000);
  map.render(store.state, tool);
}

async function refreshSummary(): Promise<void> {
  try {
    store.setSummary(await api.opsSummary());
  } catch {
    /* transient; next poll retries */
  }
}

async function refreshZones(alertId: string): Promise<void> {
  try {
    store.setZones((await api.zones(alertId)).zones);
  } catch {
    /* zones are optional content */
  }
}

async function refreshGroup(groupId: string): Promise<void> {
  const page = await api.groupMessages(groupId);
  store.setGroupMessages(groupId, page.messages);
}

function renderSummary(): void {
  const s = store.state.summary;
  if (!s) return;
  $("stat-sos").textContent = String(s.open_sos);
  $("stat-alerts").textContent = String(s.active_alerts);
  $("stat-groups").textContent = String(s.open_groups);
  $("stat-deliveries").textContent = String(s.deliveries_last_hour);
  const reports = Object.entries(s.reports_by_status)
    .map(([status, n]) => `${status} ${n}`).join(", ") || "none";
  $("stat-reports").textContent = reports;
}

// -- composer ----------------------------------------------------------------

function composerElements(): ComposerElements {
  return {
    hazard: $<HTMLSelectElement>("cmp-hazard"),
    severity: $<HTMLSelectElement>("cmp-severity"),
    shortText: $<HTMLInputElement>("cmp-short"),
    guidance: $<HTMLTextAreaElement>("cmp-guidance"),
    authority: $<HTMLInputElement>("cmp-authority"),
    durationHours: $<HTMLInputElement>("cmp-duration"),
  };
}

function renderComposerValidation(): void {
  const draft = readDraft(composerElements(), tool.shape(), Date.now() / 1000);
  const problems = [...validateAlertDraft(draft), ...tool.violations()];
  const list = $("cmp-problems");
  list.replaceChildren(...problems.map((violation) => {
    const li = document.createElement("li");
    li.textContent = violation.detail ? `${violation.code}: ${violation.detail}` : violation.code;
    return li;
  }));
  $<HTMLButtonElement>("cmp-create").disabled = problems.length > 0;
}

function wireComposer(): void {
  wireShortTextInput($<HTMLInputElement>("cmp-short"), $("cmp-counter"));
  $("draw-circle").addEventListener("click", () => {
    tool.start("circle");
    setStatus("Circle: click the center, then click the rim.");
  });
  $("draw-polygon").addEventListener("click", () => {
    tool.start("polygon");
    setStatus("Polygon: click each vertex; it closes automatically.");
  });
  $("draw-clear").addEventListener("click", () => {
    tool.reset();
    renderComposerValidation();
    map?.render(store.state, tool);
  });
  for (const id of ["cmp-short", "cmp-guidance", "cmp-authority", "cmp-duration"]) {
    $(id).addEventListener("input", renderComposerValidation);
  }

  $("cmp-create").addEventListener("click", () => guarded(async () => {
    const draft = readDraft(composerElements(), tool.shape(), Date.now() / 1000);
    const problems = [...validateAlertDraft(draft), ...tool.violations()];
    if (problems.length > 0 || draft.area === null) {
      setStatus("Fix the listed problems first.", true);
      return;
    }
    const alert = await api.createAlert({ ...draft, area: draft.area });
    lastAlertId = alert.id;
    store.rememberAlert(alert);
    $<HTMLButtonElement>("cmp-activate").disabled = false;
    setStatus(`Draft ${alert.id.slice(0, 8)} saved; review and activate.`);
  }));

  $("cmp-activate").addEventListener("click", () => guarded(async () => {
    if (!lastAlertId) return;
    if (!window.confirm("Activate this alert and notify everyone in the area?")) return;
    const summary = await api.activateAlert(lastAlertId);
    setStatus(`Alert activated: delivered to ${summary.recipient_count} recipients.`);
    $<HTMLButtonElement>("cmp-activate").disabled = true;
    tool.reset();
    void refreshSummary();
  }));

  renderComposerValidation();
}

// -- case queue -----------------------------------------------------------------

function renderQueue(): void {
  const rows = store.caseQueue();
  const tbody = $("queue-body");
  tbody.replaceChildren(...rows.map((item) => {
    const tr = document.createElement("tr");
    if (item.id === store.state.selectedCase) tr.classList.add("selected");

    const kind = document.createElement("td");
    kind.textContent = item.kind.toUpperCase();
    const id = document.createElement("td");
    id.textContent = item.id.slice(0, 8);
    const status = document.createElement("td");
    status.textContent = item.status;
    if (isTerminal(item.kind, item.status)) status.classList.add("muted");

    const actions = document.createElement("td");
    // Only lifecycle-legal next steps get buttons.
    for (const next of validNextStatuses(item.kind, item.status)) {
      const button = document.createElement("button");
      button.textContent = next.replace("_", " ");
      button.addEventListener("click", () => guarded(async () => {
        await api.setCaseStatus(item.id, next);
        void refreshSummary();
      }));
      actions.appendChild(button);
    }
    tr.append(kind, id, status, actions);
    tr.addEventListener("click", () => store.selectCase(item.id));
    return tr;
  }));
}

function renderCasePanel(): void {
  const panel = $("case-panel");
  const selected = store.state.selectedCase
    ? store.state.cases.get(store.state.selectedCase) : null;
  if (!selected) {
    panel.hidden = true;
    return;
  }
  panel.hidden = false;
  $("case-title").textContent = `${selected.kind.toUpperCase()} ${selected.id.slice(0, 8)}`;
  $("case-status").textContent = selected.status;
  $("case-location").textContent = selected.location
    ? `${selected.location.lat.toFixed(5)}, ${selected.location.lon.toFixed(5)}`
    : "unknown";
}

// -- chat moderation ----------------------------------------------------------------

function renderGroups(): void {
  const select = $<HTMLSelectElement>("group-select");
  const current = store.state.selectedGroup;
  select.replaceChildren(...[...store.state.groups.values()].map((group) => {
    const option = document.createElement("option");
    option.value = group.id;
    option.textContent = group.title;
    option.selected = group.id === current;
    return option;
  }));
  const group = current ? store.state.groups.get(current) : null;
  const log = $("chat-log");
  if (!group) {
    log.replaceChildren();
    return;
  }
  log.replaceChildren(...group.messages.map((message) => {
    const row = document.createElement("div");
    row.className = message.state === "removed" ? "msg removed" : "msg";
    const body = document.createElement("span");
    body.textContent = message.state === "removed" ? REDACTED_BODY : message.body;
    row.append(`#${message.seq} `, body);
    if (message.state === "visible") {
      const remove = document.createElement("button");
      remove.textContent = "remove";
      remove.addEventListener("click", () => guarded(async () => {
        await api.moderate(group.id, "remove_message", { message_id: message.id });
        await refreshGroup(group.id);
      }));
      const mute = document.createElement("button");
      mute.textContent = "mute author";
      mute.addEventListener("click", () => guarded(async () => {
        await api.moderate(group.id, "mute_user", { user_id: message.author_id });
        setStatus("Author muted for future posts.");
      }));
      row.append(" ", remove, " ", mute);
    }
    return row;
  }));
}

function wireChat(): void {
  $<HTMLSelectElement>("group-select").addEventListener("change", (ev) => {
    const id = (ev.target as HTMLSelectElement).value;
    store.selectGroup(id || null);
    if (id) void guarded(() => refreshGroup(id));
  });
  $("group-close").addEventListener("click", () => guarded(async () => {
    const id = store.state.selectedGroup;
    if (!id) return;
    if (!window.confirm("Close this group permanently?")) return;
    await api.moderate(id, "close_group");
    setStatus("Group closed.");
  }));
}

// -- boot ------------------------------------------------------------------------

document.addEventListener("DOMContentLoaded", () => {
  wireLogin();
  wireChat();
});
