/** Thin typed client over the planning service. All statistics come from the
 * server; this module only moves JSON. The fetch implementation is
 * injectable so contract tests can replay recorded responses. */

import type {
  ApiErrorBody,
  BatchEntry,
  CreateSessionRequest,
  Recommendation,
  SessionView,
  WhatIfRequest,
  WhatIfResponse,
} from "./types.js";

export class ApiError extends Error {
  readonly code: string;
  readonly field: string | null;
  readonly status: number;

  constructor(status: number, body: ApiErrorBody) {
    super(body.message);
    this.status = status;
    this.code = body.code;
    this.field = body.field ?? null;
  }
}

export type FetchLike = (
  url: string,
  init?: { method?: string; headers?: Record<string, string>; body?: string },
) => Promise<{ status: number; json(): Promise<unknown> }>;

export class ApsClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = fetch as unknown as FetchLike,
    private readonly token?: string,
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = { "content-type": "application/json" };
    if (this.token) headers.authorization = `Bearer ${this.token}`;
    const res = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const payload = (await res.json()) as unknown;
    if (res.status >= 400) {
      throw new ApiError(res.status, payload as ApiErrorBody);
    }
    return payload as T;
  }

  createSession(req: CreateSessionRequest): Promise<SessionView> {
    return this.request("POST", "/sessions", req);
  }

  getSession(id: string): Promise<SessionView> {
    return this.request("GET", `/sessions/${id}`);
  }

  recordBatch(id: string, counts: BatchEntry[]): Promise<SessionView> {
    return this.request("POST", `/sessions/${id}/batches`, { counts });
  }

  getRecommendation(id: string, b: number): Promise<Recommendation> {
    return this.request("GET", `/sessions/${id}/recommendation?b=${b}`);
  }

  whatIf(id: string, req: WhatIfRequest): Promise<WhatIfResponse> {
    return this.request("POST", `/sessions/${id}/whatif`, req);
  }
}
