// Gate controls: enabled by awaiting_human events from the feed, disabled
// the moment a decision is submitted, re-enabled only by the next gate.
// Submission is idempotent client-side — a double click can't produce two
// feedback events — and a 409 from the service (someone else resolved the
// gate first) is reported, not retried.

import { ApiError } from "./api";
import type { EventRecord, FeedbackBody } from "./types";
import type { GateKind } from "./state";

export type GateState = "idle" | "open" | "submitting" | "resolved";

export interface FeedbackPoster {
  postFeedback(sessionId: string, feedback: FeedbackBody): Promise<unknown>;
}

export class GateController {
  state: GateState = "idle";
  gateKind: GateKind | null = null;
  message = "";

  // bumped every time a gate opens; a submit() continuation only applies its
  // outcome if no newer gate appeared while the POST was in flight (a reject
  // can trigger a replan whose own gate arrives before the 202 settles)
  private generation = 0;

  constructor(
    private readonly api: FeedbackPoster,
    private readonly sessionId: string,
    private readonly onChange?: () => void,
  ) {}

  get enabled(): boolean {
    return this.state === "open";
  }

  /** Feed every event through here; status transitions drive the controls. */
  observe(record: EventRecord): void {
    if (record.kind !== "status") return;
    const to = record.payload.to;
    if (to === "awaiting_human") {
      const reason = String(record.payload.reason ?? "");
      this.gateKind = reason.startsWith("pre_tool_registration")
        ? "pre_tool_registration"
        : "post_plan";
      this.generation += 1;
      this.state = "open";
      this.message = "";
      this.notify();
    } else if (this.state === "open") {
      // gate resolved by someone else (another client, a CLI approval)
      this.state = "idle";
      this.gateKind = null;
      this.notify();
    }
  }

  async submit(directive: "approve" | "reject", author: string, body = ""): Promise<boolean> {
    if (this.state !== "open") return false; // idempotence: already submitted or no gate
    const generation = this.generation;
    this.state = "submitting";
    this.notify();
    try {
      await this.api.postFeedback(this.sessionId, { author, directive, body });
      if (this.generation === generation) {
        this.state = "resolved";
        this.message = `${directive} submitted`;
        this.notify();
      }
      return true;
    } catch (err) {
      if (this.generation !== generation) return false; // a newer gate owns the controls
      if (err instanceof ApiError && err.status === 409) {
        this.state = "resolved";
        this.message = "gate already resolved";
      } else {
        this.state = "open"; // transient failure: allow retry
        this.message = err instanceof Error ? err.message : String(err);
      }
      this.notify();
      return false;
    }
  }

  private notify(): void {
    this.onChange?.();
  }
}
