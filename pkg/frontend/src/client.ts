/** Thin HTTP client for the world service.
 *
 * Every method resolves with the parsed JSON payload or rejects with an
 * ApiError carrying the server's status and error message. The fetch
 * implementation is injectable so tests can run without a network.
 */

import type {
  Action,
  ActionResponse,
  BufferView,
  ServiceInfo,
  SessionClosed,
  SessionCreated,
  SessionRequest,
} from "./types.js";

export class ApiError extends Error {
  override readonly name = "ApiError";

  constructor(
    readonly status: number,
    message: string,
    readonly field: string | null = null,
  ) {
    super(message);
  }
}

/** The slice of the client the session controller depends on. */
export interface SessionApi {
  createSession(request?: SessionRequest): Promise<SessionCreated>;
  sendAction(sessionId: string, action: Action): Promise<ActionResponse>;
  buffer(sessionId: string): Promise<BufferView>;
  closeSession(sessionId: string): Promise<SessionClosed>;
}

export class WorldClient implements SessionApi {
  private readonly base: string;
  private readonly fetchFn: typeof fetch | undefined;

  constructor(baseUrl: string, fetchFn?: typeof fetch) {
    this.base = baseUrl.replace(/\/+$/, "");
    this.fetchFn = fetchFn;
  }

  info(): Promise<ServiceInfo> {
    return this.request("GET", "/info");
  }

  createSession(request: SessionRequest = {}): Promise<SessionCreated> {
    return this.request("POST", "/session", request);
  }

  sendAction(sessionId: string, action: Action): Promise<ActionResponse> {
    return this.request("POST", `/session/${sessionId}/action`, action);
  }

  buffer(sessionId: string): Promise<BufferView> {
    return this.request("GET", `/session/${sessionId}/buffer`);
  }

  closeSession(sessionId: string): Promise<SessionClosed> {
    return this.request("DELETE", `/session/${sessionId}`);
  }

  /** WebSocket endpoint for a session, derived from the HTTP base URL. */
  streamUrl(sessionId: string): string {
    const ws = this.base.replace(/^http/, "ws");
    return `${ws}/session/${sessionId}/stream`;
  }

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<T> {
    const fetchFn = this.fetchFn ?? globalThis.fetch;
    if (fetchFn === undefined) {
      throw new ApiError(0, "no fetch implementation available");
    }
    let response: Response;
    try {
      response = await fetchFn(this.base + path, {
        method,
        headers: body === undefined ? {} : { "content-type": "application/json" },
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      const reason = err instanceof Error ? err.message : String(err);
      throw new ApiError(0, `cannot reach ${this.base}: ${reason}`);
    }
    let payload: unknown = null;
    try {
      payload = await response.json();
    } catch {
      payload = null;
    }
    if (!response.ok) {
      const detail = (payload ?? {}) as { error?: string; field?: string | null };
      throw new ApiError(
        response.status,
        detail.error ?? `${method} ${path} failed with status ${response.status}`,
        detail.field ?? null,
      );
    }
    return payload as T;
  }
}
