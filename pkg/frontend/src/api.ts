// Thin fetch client over the conduct service. The base path is
// configurable so the dashboard can be served from /ui next to the API.

import type {
  ApiError,
  CohortOutcomeBody,
  PathwaysResponse,
  SessionResponse,
  SimulateResponse,
} from "./types.js";

export class ApiRequestError extends Error {
  constructor(public readonly error: ApiError, public readonly status: number) {
    super(error.message);
  }
}

export class ApiClient {
  constructor(private readonly base: string = "") {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await fetch(this.base + path, {
      method,
      headers: body === undefined ? {} : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!response.ok) {
      let error: ApiError;
      try {
        error = (await response.json()) as ApiError;
      } catch {
        error = { code: "HttpError", message: `HTTP ${response.status}`, details: {} };
      }
      throw new ApiRequestError(error, response.status);
    }
    return (await response.json()) as T;
  }

  validateDesign(design: unknown): Promise<{ valid: boolean; config: unknown }> {
    return this.request("POST", "/designs/validate", design);
  }

  createSession(design: unknown): Promise<SessionResponse> {
    return this.request("POST", "/sessions", design);
  }

  getSession(id: string): Promise<SessionResponse> {
    return this.request("GET", `/sessions/${id}`);
  }

  postOutcome(
    id: string,
    outcome: CohortOutcomeBody | Record<string, unknown>[] | Record<string, unknown>,
    override = false,
  ): Promise<SessionResponse> {
    return this.request("POST", `/sessions/${id}/outcomes`, { outcome, override });
  }

  pathways(id: string, depth: number): Promise<PathwaysResponse> {
    return this.request("GET", `/sessions/${id}/pathways?depth=${depth}`);
  }

  simulate(design: unknown, scenario: unknown): Promise<SimulateResponse> {
    return this.request("POST", "/designs/simulate", { design, scenario });
  }

  audit(id: string): Promise<string> {
    return fetch(`${this.base}/sessions/${id}/audit`).then((r) => r.text());
  }
}
