// Resumable consumer of the per-session SSE event feed.
//
// The service delivers events at-least-once (its own contract), so this
// layer is responsible for exactly-once presentation: it tracks the highest
// seq it has forwarded and drops anything at or below it. Reconnects ask the
// service for `?from=lastSeq+1`, but dedupe doesn't rely on the server
// honouring that — a restarted service replaying the whole log is fine.

import type { EventRecord } from "./types";

export type FeedStatus = "connecting" | "live" | "stale" | "ended" | "closed";

// Minimal shape of EventSource that tests can fake.
export interface FeedSource {
  onmessage: ((ev: { data: string }) => void) | null;
  addEventListener(type: string, handler: (ev: unknown) => void): void;
  close(): void;
}

export type SourceFactory = (url: string) => FeedSource;
export type Scheduler = (fn: () => void, delayMs: number) => void;

export interface FeedOptions {
  onEvent: (record: EventRecord) => void;
  onStatus?: (status: FeedStatus) => void;
  retryMs?: number;
  schedule?: Scheduler; // injectable for tests
}

export class EventFeed {
  lastSeq = 0;
  status: FeedStatus = "connecting";
  duplicatesDropped = 0;

  private source: FeedSource | null = null;
  private closed = false;
  private readonly schedule: Scheduler;
  private readonly retryMs: number;

  constructor(
    private readonly baseUrl: string,
    private readonly sessionId: string,
    private readonly factory: SourceFactory,
    private readonly opts: FeedOptions,
  ) {
    this.schedule = opts.schedule ?? ((fn, ms) => setTimeout(fn, ms));
    this.retryMs = opts.retryMs ?? 1000;
  }

  start(): void {
    this.connect();
  }

  close(): void {
    this.closed = true;
    this.source?.close();
    this.setStatus("closed");
  }

  private url(): string {
    const base = this.baseUrl.replace(/\/$/, "");
    return `${base}/sessions/${this.sessionId}/events?from=${this.lastSeq + 1}&wait=true`;
  }

  private setStatus(status: FeedStatus): void {
    if (this.status === status) return;
    this.status = status;
    this.opts.onStatus?.(status);
  }

  private connect(): void {
    if (this.closed) return;
    const source = this.factory(this.url());
    this.source = source;

    source.onmessage = (ev) => {
      let record: EventRecord;
      try {
        record = JSON.parse(ev.data) as EventRecord;
      } catch {
        return; // not an event payload; ignore
      }
      if (typeof record.global_seq !== "number") return;
      if (record.global_seq <= this.lastSeq) {
        this.duplicatesDropped += 1;
        return;
      }
      this.lastSeq = record.global_seq;
      this.setStatus("live");
      this.opts.onEvent(record);
    };

    // the service sends `event: end` once the session's stream is closed and
    // fully delivered; after that there is nothing to resume
    source.addEventListener("end", () => {
      if (this.closed) return;
      this.closed = true;
      source.close();
      this.setStatus("ended");
    });

    source.addEventListener("error", () => {
      if (this.closed) return;
      source.close();
      this.setStatus("stale");
      this.schedule(() => this.connect(), this.retryMs);
    });
  }
}
