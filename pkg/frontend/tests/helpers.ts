// Test doubles shared across the console suite: a scriptable event source,
// a deterministic reconnect scheduler, and a fake gated service that replays
// a recorded session but withholds post-gate events until feedback is posted
// (mirroring how the real engine parks at a gate).

import type { EventRecord, FeedbackBody } from "../src/types";
import type { FeedSource, SourceFactory } from "../src/feed";

export class FakeSource implements FeedSource {
  onmessage: ((ev: { data: string }) => void) | null = null;
  closed = false;
  private listeners = new Map<string, Array<(ev: unknown) => void>>();

  constructor(public readonly url: string) {}

  addEventListener(type: string, handler: (ev: unknown) => void): void {
    const list = this.listeners.get(type) ?? [];
    list.push(handler);
    this.listeners.set(type, list);
  }

  close(): void {
    this.closed = true;
  }

  emit(record: EventRecord): void {
    this.onmessage?.({ data: JSON.stringify(record) });
  }

  emitMany(records: EventRecord[]): void {
    for (const r of records) this.emit(r);
  }

  fire(type: string): void {
    for (const handler of this.listeners.get(type) ?? []) handler({});
  }
}

/** Extract the ?from= cursor a feed asked for when (re)connecting. */
export function fromQuery(url: string): number {
  const m = /[?&]from=(\d+)/.exec(url);
  return m ? Number(m[1]) : 1;
}

export function trackSources(): { factory: SourceFactory; sources: FakeSource[] } {
  const sources: FakeSource[] = [];
  const factory: SourceFactory = (url) => {
    const s = new FakeSource(url);
    sources.push(s);
    return s;
  };
  return { factory, sources };
}

/** Reconnect scheduler the test flushes by hand instead of waiting on timers. */
export function manualScheduler(): { schedule: (fn: () => void, ms: number) => void; flush: () => void } {
  const queue: Array<() => void> = [];
  return {
    schedule: (fn) => {
      queue.push(fn);
    },
    flush: () => {
      while (queue.length) queue.shift()!();
    },
  };
}

/**
 * Replays a recorded session the way the live service would around human
 * gates: everything before the first human_feedback message is available
 * immediately; each postFeedback() releases the log through the next gate
 * decision (or to the end). The console under test must drive the run to
 * completion purely by submitting feedback, exactly as against the real API.
 */
export class FakeGatedService {
  posts: FeedbackBody[] = [];
  sources: FakeSource[] = [];
  /** When set, the next connection replays every released event from seq 1,
   * the way a restarted service that lost its SSE cursor would. */
  replayFromStartOnNextConnect = false;
  private releasedUpTo: number; // index into records, exclusive
  private readonly splits: number[];
  private cursor = 0; // next record index to emit on the current source
  private current: FakeSource | null = null;

  constructor(private readonly records: EventRecord[]) {
    this.splits = records
      .map((r, i) => (r.kind === "message" && r.payload.kind === "human_feedback" ? i : -1))
      .filter((i) => i >= 0);
    this.releasedUpTo = this.splits.length ? this.splits[0] : records.length;
  }

  factory: SourceFactory = (url) => {
    const src = new FakeSource(url);
    this.sources.push(src);
    this.current = src;
    if (this.replayFromStartOnNextConnect) {
      this.replayFromStartOnNextConnect = false;
      this.cursor = 0;
    } else {
      const from = fromQuery(url);
      this.cursor = this.records.findIndex((r) => r.global_seq >= from);
      if (this.cursor < 0) this.cursor = this.records.length;
    }
    return src;
  };

  /** Push every released-but-unsent event to the open source. */
  flush(): void {
    if (!this.current) return;
    while (this.cursor < this.releasedUpTo) {
      this.current.emit(this.records[this.cursor]);
      this.cursor += 1;
    }
    if (this.cursor >= this.records.length) this.current.fire("end");
  }

  postFeedback(_sessionId: string, feedback: FeedbackBody): Promise<unknown> {
    this.posts.push(feedback);
    const next = this.splits.find((i) => i >= this.releasedUpTo + 1);
    this.releasedUpTo = next ?? this.records.length;
    this.flush();
    return Promise.resolve({ status: "accepted" });
  }
}
