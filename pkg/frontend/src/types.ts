// Shapes of the records the service emits. These mirror the engine's event
// store and HTTP payloads; the console never fabricates state outside them.

export interface EventRecord {
  global_seq: number;
  session_id: string;
  kind: string;
  payload: Record<string, unknown>;
  wall_time?: number;
}

export interface PlanStepRecord {
  id: string;
  description: string;
  depends_on: string[];
  status: string; // pending | running | done | rejected
  result_ref?: number | null;
}

export interface SessionSummary {
  session_id: string;
  status: string;
  goal: string;
}

export interface ToolRecord {
  id: string;
  name: string;
  category: string;
  description: string;
  status: string; // draft | validated | deprecated
  provenance: string;
  created_in_session: string | null;
  input_schema: Record<string, string>;
  output_schema: Record<string, string>;
}

export interface TemplateRecord {
  id: string;
  title: string;
  tags: string[];
  pathway_skeleton: string[];
  provenance_session: string;
  success_metric: number;
  usage_count: number;
}

export interface FeedbackBody {
  author: string;
  directive: "approve" | "reject" | "comment";
  body?: string;
  target_step?: string | null;
}
