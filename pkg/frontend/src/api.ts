/** Thin client for the session HTTP API. All shapes in types.ts. */

import {
  ApiErrorBody,
  TranscriptDoc,
  TurnView,
  asTranscript,
  asTurnView,
} from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** A non-2xx answer from the service, with its stable machine code. */
export class ApiError extends Error {
  constructor(
    public readonly code: string,
    message: string,
    public readonly status: number,
  ) {
    super(message);
  }
}

async function bodyOf(res: Response): Promise<unknown> {
  try {
    return await res.json();
  } catch {
    return null;
  }
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request(method: string, path: string, body?: unknown): Promise<unknown> {
    const res = await this.fetchFn(this.baseUrl + path, {
      method,
      headers: body === undefined ? undefined : { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const data = await bodyOf(res);
    if (!res.ok) {
      const err = (data ?? {}) as Partial<ApiErrorBody>;
      throw new ApiError(
        err.code ?? "internal",
        err.message ?? `unexpected status ${res.status}`,
        res.status,
      );
    }
    return data;
  }

  async createSession(session: {
    trajectory: unknown;
    scene: unknown;
    profile: unknown;
  }): Promise<string> {
    const data = (await this.request("POST", "/sessions", session)) as { id?: unknown };
    if (typeof data?.id !== "string") {
      throw new ApiError("internal", "create-session answer had no id", 500);
    }
    return data.id;
  }

  async postTurn(
    sessionId: string,
    instruction: string,
    context: "original" | "current",
  ): Promise<TurnView> {
    const data = await this.request(
      "POST",
      `/sessions/${encodeURIComponent(sessionId)}/turns`,
      { instruction, context },
    );
    return asTurnView(data);
  }

  async transcript(sessionId: string): Promise<TranscriptDoc> {
    const data = await this.request("GET", `/sessions/${encodeURIComponent(sessionId)}`);
    return asTranscript(data);
  }

  async view(sessionId: string, turnIndex: number): Promise<TurnView> {
    const data = await this.request(
      "GET",
      `/sessions/${encodeURIComponent(sessionId)}/turns/${turnIndex}/view`,
    );
    return asTurnView(data);
  }

  async explain(sessionId: string, turnIndex: number): Promise<string> {
    const data = (await this.request(
      "POST",
      `/sessions/${encodeURIComponent(sessionId)}/turns/${turnIndex}/explain`,
    )) as { explanation?: unknown };
    return typeof data?.explanation === "string" ? data.explanation : "";
  }
}
