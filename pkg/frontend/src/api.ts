// Thin typed client over the service HTTP API. The fetch implementation is
// injectable so tests can run without a server. Every non-2xx response is
// surfaced as an ApiError carrying the service's error envelope.

import type { FeedbackBody, SessionSummary, TemplateRecord, ToolRecord } from "./types";

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export interface ResponseLike {
  ok: boolean;
  status: number;
  json(): Promise<unknown>;
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<ResponseLike>;

const JSON_HEADERS = { "content-type": "application/json" };

export function createApi(baseUrl: string, fetchFn?: FetchLike) {
  const doFetch: FetchLike = fetchFn ?? ((url, init) => fetch(url, init));
  const base = baseUrl.replace(/\/$/, "");

  async function request<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await doFetch(base + path, init);
    if (!res.ok) {
      let code = "error";
      let message = `HTTP ${res.status}`;
      try {
        const body = (await res.json()) as { code?: string; message?: string };
        if (body && typeof body === "object") {
          code = body.code ?? code;
          message = body.message ?? message;
        }
      } catch {
        // non-JSON error body; keep the generic message
      }
      throw new ApiError(res.status, code, message);
    }
    return (await res.json()) as T;
  }

  const post = (path: string, body: unknown): Promise<unknown> =>
    request(path, { method: "POST", headers: JSON_HEADERS, body: JSON.stringify(body) });

  return {
    listSessions: () => request<{ sessions: SessionSummary[] }>("/sessions"),
    getSession: (id: string) => request<Record<string, unknown>>(`/sessions/${id}`),
    createSession: (goal: string) =>
      post("/sessions", { goal }) as Promise<{ session_id: string; status: string }>,
    postFeedback: (id: string, feedback: FeedbackBody) =>
      post(`/sessions/${id}/feedback`, feedback) as Promise<{ seq: number; status: string }>,
    listTools: () => request<{ tools: ToolRecord[] }>("/tools"),
    getTool: (id: string) => request<ToolRecord>(`/tools/${id}`),
    validateTool: (id: string) => post(`/tools/${id}/validate`, {}),
    listTemplates: () => request<{ templates: TemplateRecord[] }>("/templates"),
    startBench: (dataset: string, budget: number, seed: number) =>
      post("/bench/runs", { dataset, budget, seed }) as Promise<{ run_id: string }>,
    getBenchRun: (runId: string) => request<Record<string, unknown>>(`/bench/runs/${runId}`),
  };
}

export type Api = ReturnType<typeof createApi>;
