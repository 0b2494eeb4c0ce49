/**
 * Typed client for the declutter session service.
 *
 * Thin fetch wrappers only: every method maps one endpoint, parses the
 * JSON, and converts non-2xx responses into ApiError so callers can
 * branch on status (404 stale session, 503 backend down) without
 * touching response plumbing.
 */

import type {
  Category,
  CleanResponse,
  OverrideAck,
  SessionView,
  SuggestionResponse,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
    this.name = "ApiError";
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function raiseForStatus(response: Response): Promise<Response> {
  if (response.ok) {
    return response;
  }
  let detail = response.statusText;
  try {
    const body = (await response.json()) as { detail?: string };
    if (typeof body.detail === "string") {
      detail = body.detail;
    }
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ApiError(response.status, detail);
}

export class ViewfinderApi {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  async createSession(image: Blob, filename = "photo.png"): Promise<SessionView> {
    const form = new FormData();
    form.append("image", image, filename);
    const response = await this.fetchFn(`${this.baseUrl}/v1/sessions`, {
      method: "POST",
      body: form,
    });
    return (await raiseForStatus(response)).json();
  }

  async getSession(sessionId: string): Promise<SessionView> {
    const response = await this.fetchFn(`${this.baseUrl}/v1/sessions/${sessionId}`);
    return (await raiseForStatus(response)).json();
  }

  async postOverride(
    sessionId: string,
    index: number,
    category: Category,
  ): Promise<OverrideAck> {
    const response = await this.fetchFn(
      `${this.baseUrl}/v1/sessions/${sessionId}/overrides`,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ index, category }),
      },
    );
    return (await raiseForStatus(response)).json();
  }

  async clean(sessionId: string): Promise<CleanResponse> {
    const response = await this.fetchFn(`${this.baseUrl}/v1/sessions/${sessionId}/clean`, {
      method: "POST",
    });
    return (await raiseForStatus(response)).json();
  }

  async suggestions(sessionId: string, index: number): Promise<SuggestionResponse> {
    const response = await this.fetchFn(
      `${this.baseUrl}/v1/sessions/${sessionId}/elements/${index}/suggestions`,
    );
    return (await raiseForStatus(response)).json();
  }

  /** Fetch an image blob (preview or confidence map) as raw bytes. */
  async fetchBytes(url: string): Promise<Uint8Array> {
    const absolute = url.startsWith("http") ? url : `${this.baseUrl}${url}`;
    const response = await raiseForStatus(await this.fetchFn(absolute));
    return new Uint8Array(await response.arrayBuffer());
  }
}
