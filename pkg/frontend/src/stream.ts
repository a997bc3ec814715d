/** Event stream consumer: newline-delimited JSON with resume tokens.
 *
 * The server replays events after the resume cursor at-least-once; the
 * client's job is to remember the last seq it saw, deduplicate, and
 * reconnect with that cursor. One consumer per session, per the
 * dashboard's single-store design.
 */

import type { StreamEvent } from "./types";

/** Reassembles complete lines from arbitrary chunk boundaries. */
export class LineBuffer {
  private pending = "";

  feed(chunk: string): string[] {
    this.pending += chunk;
    const parts = this.pending.split("\n");
    this.pending = parts.pop() ?? "";
    return parts.filter((line) => line.trim().length > 0);
  }

  flush(): string[] {
    const rest = this.pending.trim();
    this.pending = "";
    return rest ? [rest] : [];
  }
}

export interface StreamOptions {
  waitMs?: number;
  reconnectDelayMs?: number;
  fetchImpl?: typeof fetch;
}

export class EventStream {
  lastSeq = 0;
  private stopped = false;
  private readonly waitMs: number;
  private readonly reconnectDelayMs: number;
  private readonly fetchImpl: typeof fetch;

  constructor(
    private base: string,
    private token: string,
    private onEvent: (event: StreamEvent) => void,
    options: StreamOptions = {},
  ) {
    this.waitMs = options.waitMs ?? 25_000;
    this.reconnectDelayMs = options.reconnectDelayMs ?? 500;
    this.fetchImpl = options.fetchImpl ?? fetch.bind(globalThis);
  }

  streamUrl(): string {
    const resume = this.lastSeq > 0 ? `&resume_token=${this.lastSeq}` : "";
    return `${this.base}/v1/stream?wait_ms=${this.waitMs}${resume}`;
  }

  /** Apply one parsed event; duplicates below the cursor are dropped. */
  accept(event: StreamEvent): boolean {
    if (event.seq <= this.lastSeq) return false;
    this.lastSeq = event.seq;
    this.onEvent(event);
    return true;
  }

  stop(): void {
    this.stopped = true;
  }

  /** Consume until stop(); each response end triggers a resumed reconnect. */
  async run(): Promise<void> {
    while (!this.stopped) {
      try {
        await this.consumeOnce();
      } catch {
        if (this.stopped) return;
        await new Promise((r) => setTimeout(r, this.reconnectDelayMs));
      }
    }
  }

  async consumeOnce(): Promise<number> {
    const response = await this.fetchImpl(this.streamUrl(), {
      headers: { Authorization: `Bearer ${this.token}` },
    });
    if (!response.ok || !response.body) {
      throw new Error(`stream request failed: ${response.status}`);
    }
    const reader = response.body.getReader();
    const decoder = new TextDecoder();
    const lines = new LineBuffer();
    let accepted = 0;
    for (;;) {
      const { done, value } = await reader.read();
      const chunk = value ? decoder.decode(value, { stream: !done }) : "";
      const complete = done ? [...lines.feed(chunk), ...lines.flush()] : lines.feed(chunk);
      for (const line of complete) {
        const event = JSON.parse(line) as StreamEvent;
        if (this.accept(event)) accepted += 1;
      }
      if (done || this.stopped) return accepted;
    }
  }
}
