/** Drives one session: a fixed action tick, a single in-flight request,
 * and an append-only response log.
 *
 * Held keys repeat at the tick rate (default 5 actions per second). A tick
 * that fires while a request is awaiting its response queues exactly one
 * follow-up send instead of issuing a second request, and a busy (409)
 * reply is absorbed the same way, so the server never sees concurrent
 * requests for the session and responses are appended in order.
 */

import { isIdle, KeyTracker } from "./actions.js";
import { ApiError } from "./client.js";
import type { SessionApi } from "./client.js";
import { HttpTransport } from "./transport.js";
import type { ActionTransport } from "./transport.js";
import type { Action, SessionRequest } from "./types.js";
import { projectView } from "./view.js";
import type { LogEntry, UiSessionView } from "./view.js";

export type TransportFactory = (
  sessionId: string,
) => ActionTransport | Promise<ActionTransport>;

export interface ControllerOptions {
  /** Milliseconds between action ticks; 200 gives five actions a second. */
  tickMs?: number;
  /** Send idle actions when no key is held (off by default). */
  autoTick?: boolean;
  /** Refresh the buffer strip after every acknowledged action (default on). */
  refreshBuffer?: boolean;
  onChange?: (view: UiSessionView) => void;
}

export class SessionController {
  readonly log: LogEntry[] = [];

  private timer: ReturnType<typeof setInterval> | null = null;
  private inFlight = false;
  private queued = false;
  private sessionId: string | null = null;
  private transport: ActionTransport | null = null;
  private stale = false;
  private lastRequest: SessionRequest = {};
  private makeTransport: TransportFactory;

  constructor(
    private readonly api: SessionApi,
    readonly keys: KeyTracker,
    private readonly options: ControllerOptions = {},
    transportFactory?: TransportFactory,
  ) {
    this.makeTransport =
      transportFactory ?? ((id) => new HttpTransport(this.api, id));
  }

  view(): UiSessionView {
    return projectView(this.log);
  }

  get busy(): boolean {
    return this.inFlight;
  }

  /** Create the server session and prime the log; false on failure. */
  async open(request: SessionRequest = {}): Promise<boolean> {
    this.lastRequest = request;
    this.inFlight = true;
    try {
      const created = await this.api.createSession(request);
      this.transport = await this.makeTransport(created.id);
      this.sessionId = created.id;
      this.stale = false;
      this.push({ kind: "session", payload: created });
      if (this.options.refreshBuffer !== false) {
        const buffer = await this.api.buffer(created.id);
        this.push({ kind: "buffer", payload: buffer });
      }
      return true;
    } catch (err) {
      this.pushError(err);
      return false;
    } finally {
      this.inFlight = false;
      this.queued = false;
    }
  }

  /** Drop the stale session state and open a fresh session. */
  async reconnect(): Promise<boolean> {
    this.transport?.close();
    this.transport = null;
    this.sessionId = null;
    return this.open(this.lastRequest);
  }

  start(): void {
    if (this.timer !== null) {
      return;
    }
    this.timer = setInterval(() => this.tick(), this.options.tickMs ?? 200);
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }

  /** One action tick: compose held keys and send, or queue when busy. */
  tick(): void {
    if (this.sessionId === null || this.stale) {
      return;
    }
    if (this.inFlight) {
      this.queued = true;
      return;
    }
    const action = this.keys.compose();
    if (isIdle(action) && this.options.autoTick !== true) {
      return;
    }
    void this.dispatch(action);
  }

  /** Send one explicit action, for scripted drivers; respects in-flight.
   * Resolves true when the action was acknowledged and logged.
   */
  async send(action: Action): Promise<boolean> {
    if (this.inFlight) {
      this.queued = true;
      return false;
    }
    const before = this.log.length;
    await this.dispatch(action);
    return this.log.length > before && this.log[before]?.kind === "action";
  }

  async close(): Promise<void> {
    this.stop();
    this.transport?.close();
    this.transport = null;
    const id = this.sessionId;
    this.sessionId = null;
    if (id !== null) {
      try {
        await this.api.closeSession(id);
      } catch {
        return;
      }
    }
  }

  private async dispatch(action: Action): Promise<void> {
    if (this.inFlight || this.transport === null || this.sessionId === null) {
      return;
    }
    this.inFlight = true;
    try {
      const response = await this.transport.send(action);
      this.push({ kind: "action", sent: action, payload: response });
      if (this.options.refreshBuffer !== false) {
        const buffer = await this.api.buffer(this.sessionId);
        this.push({ kind: "buffer", payload: buffer });
      }
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        // The server is still generating; the next tick retries, so a busy
        // reply is absorbed without an error entry.
      } else {
        this.pushError(err);
      }
    } finally {
      this.inFlight = false;
      if (this.queued) {
        this.queued = false;
        const next = this.keys.compose();
        if ((!isIdle(next) || this.options.autoTick === true) && !this.stale) {
          void this.dispatch(next);
        }
      }
    }
  }

  private push(entry: LogEntry): void {
    this.log.push(entry);
    this.options.onChange?.(this.view());
  }

  private pushError(err: unknown): void {
    const status = err instanceof ApiError ? err.status : null;
    const message = err instanceof Error ? err.message : String(err);
    if (status === 404) {
      this.stale = true;
    }
    this.push({ kind: "error", message, status });
  }
}
