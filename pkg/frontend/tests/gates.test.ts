// Gate controls: driven purely by status events, one POST per decision,
// a 409 means someone else resolved the gate first.

import { describe, expect, it } from "vitest";

import { ApiError } from "../src/api";
import { GateController, type FeedbackPoster } from "../src/gates";
import type { EventRecord, FeedbackBody } from "../src/types";

function statusEvent(seq: number, to: string, reason = ""): EventRecord {
  return {
    global_seq: seq,
    session_id: "s-0001",
    kind: "status",
    payload: { from: "planning", to, reason },
  };
}

const GATE_OPEN = statusEvent(5, "awaiting_human", "post_plan gate");

class RecordingPoster implements FeedbackPoster {
  calls: FeedbackBody[] = [];
  respond: () => Promise<unknown> = () => Promise.resolve({ status: "accepted" });

  postFeedback(_id: string, feedback: FeedbackBody): Promise<unknown> {
    this.calls.push(feedback);
    return this.respond();
  }
}

describe("GateController", () => {
  it("is disabled until a gate opens", () => {
    const gate = new GateController(new RecordingPoster(), "s-0001");
    expect(gate.enabled).toBe(false);

    gate.observe(GATE_OPEN);
    expect(gate.enabled).toBe(true);
    expect(gate.gateKind).toBe("post_plan");
  });

  it("classifies the tool-registration gate from its reason", () => {
    const gate = new GateController(new RecordingPoster(), "s-0001");
    gate.observe(statusEvent(9, "awaiting_human", "pre_tool_registration gate"));
    expect(gate.gateKind).toBe("pre_tool_registration");
  });

  it("submits exactly one POST and disables itself", async () => {
    const poster = new RecordingPoster();
    const gate = new GateController(poster, "s-0001");
    gate.observe(GATE_OPEN);

    const ok = await gate.submit("approve", "console");
    expect(ok).toBe(true);
    expect(poster.calls).toEqual([{ author: "console", directive: "approve", body: "" }]);
    expect(gate.enabled).toBe(false);
    expect(gate.state).toBe("resolved");
    expect(gate.message).toBe("approve submitted");
  });

  it("ignores a second click while the first POST is in flight", async () => {
    const poster = new RecordingPoster();
    let release!: () => void;
    poster.respond = () => new Promise((resolve) => (release = () => resolve({})));
    const gate = new GateController(poster, "s-0001");
    gate.observe(GATE_OPEN);

    const first = gate.submit("approve", "console");
    const second = gate.submit("approve", "console"); // double click
    release();

    expect(await first).toBe(true);
    expect(await second).toBe(false);
    expect(poster.calls).toHaveLength(1);
  });

  it("refuses to submit after the gate is resolved, until the next gate", async () => {
    const poster = new RecordingPoster();
    const gate = new GateController(poster, "s-0001");
    gate.observe(GATE_OPEN);
    await gate.submit("reject", "console", "redo");

    expect(await gate.submit("approve", "console")).toBe(false);
    expect(poster.calls).toHaveLength(1);

    gate.observe(statusEvent(12, "awaiting_human", "post_plan gate"));
    expect(gate.enabled).toBe(true);
    expect(await gate.submit("approve", "console")).toBe(true);
    expect(poster.calls).toHaveLength(2);
  });

  it("reports a 409 as gate-already-resolved without retrying", async () => {
    const poster = new RecordingPoster();
    poster.respond = () => Promise.reject(new ApiError(409, "state", "no gate is awaiting feedback"));
    const gate = new GateController(poster, "s-0001");
    gate.observe(GATE_OPEN);

    expect(await gate.submit("approve", "console")).toBe(false);
    expect(gate.state).toBe("resolved");
    expect(gate.message).toBe("gate already resolved");
    expect(poster.calls).toHaveLength(1);
  });

  it("re-enables after a transient failure so the user can retry", async () => {
    const poster = new RecordingPoster();
    poster.respond = () => Promise.reject(new ApiError(503, "unavailable", "try again"));
    const gate = new GateController(poster, "s-0001");
    gate.observe(GATE_OPEN);

    expect(await gate.submit("approve", "console")).toBe(false);
    expect(gate.state).toBe("open");
    expect(gate.message).toBe("try again");

    poster.respond = () => Promise.resolve({});
    expect(await gate.submit("approve", "console")).toBe(true);
    expect(poster.calls).toHaveLength(2);
  });

  it("stands down when another client resolves the gate", () => {
    const gate = new GateController(new RecordingPoster(), "s-0001");
    gate.observe(GATE_OPEN);
    gate.observe(statusEvent(7, "executing", "human approved plan"));

    expect(gate.enabled).toBe(false);
    expect(gate.state).toBe("idle");
    expect(gate.gateKind).toBeNull();
  });

  it("lets a gate that opened mid-flight win over the stale submit continuation", async () => {
    // reject -> replan: the new gate's awaiting_human can arrive over the
    // feed before the 202 for the rejection settles
    const poster = new RecordingPoster();
    const gate = new GateController(poster, "s-0001");
    gate.observe(GATE_OPEN);

    poster.respond = () => {
      gate.observe(statusEvent(12, "awaiting_human", "post_plan gate")); // replan's gate
      return Promise.resolve({});
    };

    expect(await gate.submit("reject", "console", "split this up")).toBe(true);
    expect(gate.state).toBe("open"); // new gate stays actionable
    expect(gate.enabled).toBe(true);
  });

  it("notifies its listener on every transition", async () => {
    const poster = new RecordingPoster();
    const states: string[] = [];
    const gate = new GateController(poster, "s-0001", () => states.push(gate.state));
    gate.observe(GATE_OPEN);
    await gate.submit("approve", "console");

    expect(states).toEqual(["open", "submitting", "resolved"]);
  });
});
