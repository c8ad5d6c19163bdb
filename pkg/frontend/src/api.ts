/** Typed client for the /api/v1 service. The UI never mutates run state
 * except through the choice and follow-up endpoints. */

export interface RunSummary {
  id: string;
  mode: "auto" | "guided";
  query: string;
  knowledge: string | null;
  state: "pending" | "awaiting_choice" | "executing" | "done" | "failed";
  error: { code: string; message: string } | null;
  base_run_id: string | null;
  n_steps: number;
  outstanding_choice: ChoiceRequest | null;
  has_result: boolean;
}

export interface StepEvent {
  stage: string;
  payload: Record<string, unknown>;
  timestamp: number;
}

export interface ChoiceOption {
  id: string;
  label: string;
  detail: Record<string, unknown>;
}

export interface ChoiceRequest {
  run_id: string;
  choice_kind: "source" | "link" | "confirm_table";
  seq: number;
  multi: boolean;
  options: ChoiceOption[];
}

export interface ResultTable {
  columns: { name: string; type: string }[];
  rows: (string | number | null)[][];
  provenance: Record<string, unknown>;
}

declare global {
  // Tests point the client at the spawned fixture-backed service.
  var __BIOQUERY_API__: string | undefined;
}

function base(): string {
  return globalThis.__BIOQUERY_API__ ?? "/api/v1";
}

async function request<T>(path: string, init?: RequestInit): Promise<T> {
  const resp = await fetch(`${base()}${path}`, {
    headers: { "Content-Type": "application/json" },
    ...init,
  });
  if (!resp.ok) {
    let detail = `${resp.status}`;
    try {
      const body = await resp.json();
      detail = typeof body.detail === "string" ? body.detail : JSON.stringify(body.detail);
    } catch {
      /* keep the status code */
    }
    throw new Error(detail);
  }
  return resp.json() as Promise<T>;
}

export function getExamples(): Promise<{ examples: string[] }> {
  return request("/examples");
}

export function createRun(
  query: string,
  mode: "auto" | "guided",
  knowledge?: string,
): Promise<RunSummary> {
  return request("/runs", {
    method: "POST",
    body: JSON.stringify({ query, mode, knowledge: knowledge || null }),
  });
}

export function getRun(id: string): Promise<RunSummary> {
  return request(`/runs/${id}`);
}

export function getSteps(id: string): Promise<{ steps: StepEvent[] }> {
  return request(`/runs/${id}/steps`);
}

export function getChoice(id: string): Promise<{ choice: ChoiceRequest | null }> {
  return request(`/runs/${id}/choice`);
}

export function submitChoice(id: string, optionIds: string[]): Promise<RunSummary> {
  return request(`/runs/${id}/choice`, {
    method: "POST",
    body: JSON.stringify({ option_ids: optionIds }),
  });
}

export function submitFollowup(id: string, followup: string): Promise<RunSummary> {
  return request(`/runs/${id}/followup`, {
    method: "POST",
    body: JSON.stringify({ followup }),
  });
}

export function getResult(id: string): Promise<ResultTable> {
  return request(`/runs/${id}/result`);
}
