/** Cross-stack integration: the dashboard client against a live service.
 *
 * Spawns the Python node with fault injection (for the SMS outbox) and a
 * manual clock, then drives the same code paths the console uses:
 * operator login, alert composition/activation, stream consumption, and
 * chat moderation.
 */

import { spawn, type ChildProcess } from "node:child_process";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { DashboardApi } from "../src/api";
import { EventStream } from "../src/stream";
import { Store } from "../src/state";
import type { StreamEvent } from "../src/types";

let proc: ChildProcess | null = null;
let base = "";

async function readListenUrl(child: ChildProcess): Promise<string> {
  return new Promise((resolve, reject) => {
    const timer = setTimeout(() => reject(new Error("server did not start")), 20_000);
    child.stdout!.on("data", (chunk: Buffer) => {
      const match = /http:\/\/[\d.]+:\d+/.exec(chunk.toString());
      if (match) {
        clearTimeout(timer);
        resolve(match[0]);
      }
    });
    child.on("exit", () => reject(new Error("server exited early")));
  });
}

beforeAll(async () => {
  proc = spawn("python3", ["-m", "e112core.cli", "--port", "0",
                           "--fault-injection", "--manual-clock"],
               { cwd: "..", stdio: ["ignore", "pipe", "pipe"] });
  base = await readListenUrl(proc);
});

afterAll(() => {
  proc?.kill();
});

async function operatorLogin(api: DashboardApi, phone: string): Promise<void> {
  await fetch(`${base}/test/operators`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify({ phone, display_name: "Dispatch" }),
  });
  const { challenge_id } = await api.beginLogin(phone);
  const providers = await (await fetch(`${base}/test/providers`)).json();
  const text = providers.sms_outbox.filter((m: { phone: string }) => m.phone === phone).at(-1).text;
  const code = /\d{6}/.exec(text)![0];
  const role = await api.completeLogin(challenge_id, code, "Dispatch");
  expect(role).toBe("operator");
}

describe("dashboard against a live service", () => {
  it("logs in, composes, activates, and sees the stream", async () => {
    const api = new DashboardApi(base);
    await operatorLogin(api, "+306900000077");

    const summary0 = await api.opsSummary();
    expect(summary0.active_alerts).toBe(0);

    const alert = await api.createAlert({
      hazard: "flood", severity: "warning",
      short_text: "x".repeat(90),
      guidance_text: "Move uphill.", authority: "CP",
      effective_from: 1_700_000_000, expires_at: 1_700_100_000,
      area: { shape: "circle", center: { lat: 38, lon: 23.7 }, radius_m: 50_000 },
    });
    expect(alert.status).toBe("draft");

    await expect(api.createAlert({
      hazard: "flood", severity: "warning",
      short_text: "x".repeat(91),
      guidance_text: "g", authority: "CP",
      effective_from: 1_700_000_000, expires_at: 1_700_100_000,
      area: { shape: "circle", center: { lat: 38, lon: 23.7 }, radius_m: 50_000 },
    })).rejects.toMatchObject({ status: 422 });

    const { recipient_count } = await api.activateAlert(alert.id);
    expect(recipient_count).toBe(0);
    expect((await api.opsSummary()).active_alerts).toBe(1);

    // The operator's own stream carries the activation for the live map.
    const store = new Store();
    const events: StreamEvent[] = [];
    const stream = new EventStream(base, api.token!, (event) => {
      events.push(event);
      store.apply(event);
    }, { waitMs: 0 });
    await stream.consumeOnce();
    const alertEvents = events.filter((e) => e.kind === "alert");
    expect(alertEvents).toHaveLength(1);
    expect(store.state.alertAreas.has(alert.id)).toBe(true);
  }, 30_000);

  it("moderates a group end to end", async () => {
    const api = new DashboardApi(base);
    await operatorLogin(api, "+306900000078");

    const alert = await api.createAlert({
      hazard: "storm", severity: "watch", short_text: "storm inbound",
      guidance_text: "Stay indoors.", authority: "CP",
      effective_from: 1_700_000_000, expires_at: 1_700_100_000,
      area: { shape: "circle", center: { lat: 40, lon: 22 }, radius_m: 20_000 },
    });
    await api.activateAlert(alert.id);
    const group = await api.openGroup(alert.id, "Storm chat", {
      shape: "circle", center: { lat: 40, lon: 22 }, radius_m: 20_000,
    });

    // A citizen joins from inside the area and posts something removable.
    const citizen = new DashboardApi(base);
    const { challenge_id } = await citizen.beginLogin("+306911112222");
    const providers = await (await fetch(`${base}/test/providers`)).json();
    const text = providers.sms_outbox
      .filter((m: { phone: string }) => m.phone === "+306911112222").at(-1).text;
    await citizen.completeLogin(challenge_id, /\d{6}/.exec(text)![0], "Resident");
    await fetch(`${base}/v1/alerts?lat=40&lon=22`,
                { headers: { Authorization: `Bearer ${citizen.token}` } });
    await fetch(`${base}/v1/groups/${group.id}/join`, {
      method: "POST", headers: { Authorization: `Bearer ${citizen.token}` },
    });
    const posted = await (await fetch(`${base}/v1/groups/${group.id}/messages`, {
      method: "POST",
      headers: { Authorization: `Bearer ${citizen.token}`, "Content-Type": "application/json" },
      body: JSON.stringify({ body: "scam link here" }),
    })).json();

    await api.moderate(group.id, "remove_message", { message_id: posted.id });
    const history = await api.groupMessages(group.id);
    expect(history.messages[0].state).toBe("removed");
    expect(history.messages[0].body).not.toContain("scam");

    await api.moderate(group.id, "close_group");
    const joinAgain = await fetch(`${base}/v1/groups/${group.id}/join`, {
      method: "POST", headers: { Authorization: `Bearer ${citizen.token}` },
    });
    expect(joinAgain.status).toBe(409);
  }, 30_000);
});
