// Fold of the event stream into what the session page renders. Everything
// here is derived from event records; there is no other source of truth.
// Applying is idempotent per seq, so the fold itself guarantees no event is
// shown twice even if the feed layer were bypassed.

import type { EventRecord, PlanStepRecord } from "./types";

export interface StepView {
  id: string;
  description: string;
  status: string;
  resultRef: number | null;
}

export interface TimelineRow {
  seq: number;
  label: string; // event kind, or message:<kind> for agent messages
  detail: string;
  stepRef: string | null;
}

export type GateKind = "post_plan" | "pre_tool_registration";

export interface GateView {
  kind: GateKind;
  openedSeq: number;
}

export interface ConsoleSession {
  id: string;
  goal: string;
  status: string;
  failureReason: string | null;
  steps: StepView[];
  pathwayVersion: number;
  templateOrigin: string | null;
  pendingGate: GateView | null;
  iterationCount: number;
  finalAnswer: string | null;
  abstained: boolean;
  timeline: TimelineRow[];
  lastSeq: number;
}

export function emptySession(id: string): ConsoleSession {
  return {
    id,
    goal: "",
    status: "planning",
    failureReason: null,
    steps: [],
    pathwayVersion: 0,
    templateOrigin: null,
    pendingGate: null,
    iterationCount: 0,
    finalAnswer: null,
    abstained: false,
    timeline: [],
    lastSeq: 0,
  };
}

function asString(value: unknown, fallback = ""): string {
  return typeof value === "string" ? value : fallback;
}

function rowDetail(record: EventRecord): string {
  const p = record.payload;
  switch (record.kind) {
    case "session_created":
      return asString(p.goal);
    case "status":
      return `${asString(p.from)} -> ${asString(p.to)}${p.reason ? ` (${asString(p.reason)})` : ""}`;
    case "pathway":
      return `version ${p.version}, ${(p.steps as unknown[]).length} step(s)`;
    case "step_status":
      return `step ${asString(p.step_id)} -> ${asString(p.to)}`;
    case "sandbox_run": {
      const out = asString(p.stdout).trim();
      return out ? out.slice(0, 120) : `exit ${p.exit_status}`;
    }
    case "message": {
      const inner = (p.payload ?? {}) as Record<string, unknown>;
      if (p.kind === "human_feedback") {
        return `${asString(inner.author)}: ${asString(inner.directive)}${inner.body ? ` — ${asString(inner.body)}` : ""}`;
      }
      if (p.kind === "final_answer") {
        return asString(inner.answer).slice(0, 160);
      }
      return `${asString(p.from_role)} -> ${asString(p.to_role)}`;
    }
    case "capability_gap":
      return asString(p.description);
    case "snapshot":
      return `library ${p.library_size}, tools ${p.registry_size}`;
    default:
      return "";
  }
}

function gateFromReason(reason: string): GateKind {
  return reason.startsWith("pre_tool_registration") ? "pre_tool_registration" : "post_plan";
}

/** Apply one event. Returns true when the event advanced the fold, false
 * when it was a duplicate (seq already applied) and was ignored. */
export function applyEvent(state: ConsoleSession, record: EventRecord): boolean {
  if (record.global_seq <= state.lastSeq) return false;
  state.lastSeq = record.global_seq;

  const p = record.payload;
  switch (record.kind) {
    case "session_created":
      state.goal = asString(p.goal);
      break;
    case "status": {
      state.status = asString(p.to);
      if (state.status === "failed") state.failureReason = asString(p.reason, "") || null;
      if (state.status === "awaiting_human") {
        state.pendingGate = {
          kind: gateFromReason(asString(p.reason)),
          openedSeq: record.global_seq,
        };
      } else {
        state.pendingGate = null;
      }
      break;
    }
    case "pathway": {
      const steps = (p.steps as PlanStepRecord[]) ?? [];
      state.steps = steps.map((s) => ({
        id: s.id,
        description: s.description,
        status: s.status,
        resultRef: s.result_ref ?? null,
      }));
      state.pathwayVersion = Number(p.version ?? 0);
      state.templateOrigin = (p.template_origin as string | null) ?? null;
      break;
    }
    case "step_status": {
      const step = state.steps.find((s) => s.id === p.step_id);
      if (step) {
        step.status = asString(p.to, step.status);
        if (p.result_ref !== undefined && p.result_ref !== null) {
          step.resultRef = Number(p.result_ref);
        }
      }
      break;
    }
    case "iteration":
      state.iterationCount = Number(p.count ?? state.iterationCount);
      break;
    case "message": {
      // the manager's final answer travels as an agent message
      if (p.kind === "final_answer") {
        const inner = (p.payload ?? {}) as Record<string, unknown>;
        state.finalAnswer = asString(inner.answer);
        state.abstained = Boolean(inner.abstained);
      }
      break;
    }
    default:
      break; // exchange/tool_*/usage/snapshot rows are timeline-only
  }

  state.timeline.push({
    seq: record.global_seq,
    label: record.kind === "message" ? `message:${asString(p.kind)}` : record.kind,
    detail: rowDetail(record),
    stepRef:
      record.kind === "message"
        ? ((p.step_ref as string | null) ?? null)
        : ((p.step_id as string | undefined) ?? null),
  });
  return true;
}

export function foldEvents(id: string, records: EventRecord[]): ConsoleSession {
  const state = emptySession(id);
  for (const record of records) applyEvent(state, record);
  return state;
}

/** Rows whose message kind matches, e.g. every human_feedback entry. */
export function messageRows(state: ConsoleSession, kind: string): TimelineRow[] {
  return state.timeline.filter((row) => row.label === `message:${kind}`);
}
