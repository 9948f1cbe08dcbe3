/** Action transports: one request in flight, one response per request.
 *
 * The controller guarantees it never calls send() while a previous send is
 * unresolved, so the WebSocket transport can pair each outgoing action with
 * the next incoming message.
 */

import { ApiError } from "./client.js";
import type { SessionApi } from "./client.js";
import type { Action, ActionResponse, ErrorPayload } from "./types.js";

export interface ActionTransport {
  send(action: Action): Promise<ActionResponse>;
  close(): void;
}

export class HttpTransport implements ActionTransport {
  constructor(
    private readonly api: SessionApi,
    private readonly sessionId: string,
  ) {}

  send(action: Action): Promise<ActionResponse> {
    return this.api.sendAction(this.sessionId, action);
  }

  close(): void {}
}

export interface WebSocketLike {
  send(data: string): void;
  close(): void;
  addEventListener(type: "open", listener: () => void): void;
  addEventListener(type: "message", listener: (event: { data: unknown }) => void): void;
  addEventListener(type: "close", listener: (event: { code: number }) => void): void;
  addEventListener(type: "error", listener: () => void): void;
}

export type WebSocketFactory = (url: string) => WebSocketLike;

function isErrorPayload(payload: unknown): payload is ErrorPayload {
  return (
    typeof payload === "object" &&
    payload !== null &&
    (payload as { schema?: unknown }).schema === "worldlab.service.error.v1"
  );
}

export class WsTransport implements ActionTransport {
  private pending: {
    resolve: (response: ActionResponse) => void;
    reject: (err: Error) => void;
  } | null = null;
  private closed = false;

  private constructor(private readonly socket: WebSocketLike) {}

  static open(url: string, factory: WebSocketFactory): Promise<WsTransport> {
    return new Promise((resolve, reject) => {
      let socket: WebSocketLike;
      try {
        socket = factory(url);
      } catch (err) {
        const reason = err instanceof Error ? err.message : String(err);
        reject(new ApiError(0, `cannot open ${url}: ${reason}`));
        return;
      }
      const transport = new WsTransport(socket);
      socket.addEventListener("open", () => resolve(transport));
      socket.addEventListener("message", (event) => {
        transport.onMessage(String(event.data));
      });
      socket.addEventListener("close", (event) => {
        transport.onClose(event.code);
        reject(new ApiError(0, `connection to ${url} closed`));
      });
      socket.addEventListener("error", () => {
        reject(new ApiError(0, `cannot open ${url}`));
      });
    });
  }

  send(action: Action): Promise<ActionResponse> {
    if (this.closed) {
      return Promise.reject(new ApiError(0, "stream is closed"));
    }
    if (this.pending !== null) {
      return Promise.reject(new ApiError(0, "a request is already in flight"));
    }
    return new Promise((resolve, reject) => {
      this.pending = { resolve, reject };
      this.socket.send(JSON.stringify(action));
    });
  }

  close(): void {
    this.closed = true;
    this.socket.close();
  }

  private onMessage(data: string): void {
    const waiter = this.pending;
    if (waiter === null) {
      return;
    }
    this.pending = null;
    let payload: unknown;
    try {
      payload = JSON.parse(data);
    } catch {
      waiter.reject(new ApiError(0, "malformed stream message"));
      return;
    }
    if (isErrorPayload(payload)) {
      waiter.reject(new ApiError(payload.status, payload.error, payload.field));
      return;
    }
    waiter.resolve(payload as ActionResponse);
  }

  private onClose(code: number): void {
    this.closed = true;
    const waiter = this.pending;
    this.pending = null;
    if (waiter !== null) {
      const status = code === 4404 ? 404 : 0;
      waiter.reject(new ApiError(status, `stream closed with code ${code}`));
    }
  }
}
