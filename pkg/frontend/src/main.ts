/** Entry point: connect to a world service and drive one session.
 *
 * connect() creates a side-by-side session by default, starts the action
 * tick, and wires keyboard input. It resolves even when the server is
 * unreachable; the returned view then carries the error banner and no
 * session, and reconnect() can try again.
 */

import { KeyTracker, isBoundKey } from "./actions.js";
import { WorldClient } from "./client.js";
import { SessionController } from "./controller.js";
import type { TransportFactory } from "./controller.js";
import { render } from "./dom.js";
import { WsTransport } from "./transport.js";
import type { WebSocketFactory } from "./transport.js";
import type { SessionRequest } from "./types.js";
import type { UiSessionView } from "./view.js";

interface KeyEventTarget {
  addEventListener(type: string, listener: (event: KeyboardEvent) => void): void;
  removeEventListener(type: string, listener: (event: KeyboardEvent) => void): void;
}

export interface ConnectOptions {
  /** Element to render into; omit to drive the view programmatically. */
  root?: HTMLElement;
  /** Where to listen for keys; defaults to window when present. */
  keyboardTarget?: KeyEventTarget;
  fetchFn?: typeof fetch;
  /** Use the WebSocket stream for actions instead of HTTP posts. */
  webSocket?: boolean | WebSocketFactory;
  mode?: string;
  seed?: number;
  scenario?: string;
  initLength?: number;
  tickMs?: number;
  autoTick?: boolean;
  refreshBuffer?: boolean;
  onChange?: (view: UiSessionView) => void;
}

export interface PlayUi {
  controller: SessionController;
  view(): UiSessionView;
  reconnect(): Promise<boolean>;
  dispose(): Promise<void>;
}

function sessionRequest(options: ConnectOptions): SessionRequest {
  const request: SessionRequest = { mode: options.mode ?? "side_by_side" };
  if (options.seed !== undefined) request.seed = options.seed;
  if (options.scenario !== undefined) request.scenario = options.scenario;
  if (options.initLength !== undefined) request.init_length = options.initLength;
  return request;
}

export async function connect(
  serverUrl: string,
  options: ConnectOptions = {},
): Promise<PlayUi> {
  const client = new WorldClient(serverUrl, options.fetchFn);
  const keys = new KeyTracker();

  const repaint = (view: UiSessionView): void => {
    if (options.root !== undefined) {
      render(view, options.root);
    }
    options.onChange?.(view);
  };

  let transportFactory: TransportFactory | undefined;
  if (options.webSocket !== undefined && options.webSocket !== false) {
    const factory: WebSocketFactory =
      options.webSocket === true
        ? (url) => new WebSocket(url)
        : options.webSocket;
    transportFactory = (id) => WsTransport.open(client.streamUrl(id), factory);
  }

  const controller = new SessionController(
    client,
    keys,
    {
      tickMs: options.tickMs,
      autoTick: options.autoTick,
      refreshBuffer: options.refreshBuffer,
      onChange: repaint,
    },
    transportFactory,
  );

  const onKeyDown = (event: KeyboardEvent): void => {
    if (event.repeat) {
      if (isBoundKey(event.key)) event.preventDefault();
      return;
    }
    if (keys.keyDown(event.key)) {
      event.preventDefault();
    }
  };
  const onKeyUp = (event: KeyboardEvent): void => {
    keys.keyUp(event.key);
  };

  const keyboard =
    options.keyboardTarget ??
    (typeof window === "undefined" ? undefined : (window as KeyEventTarget));
  keyboard?.addEventListener("keydown", onKeyDown);
  keyboard?.addEventListener("keyup", onKeyUp);

  const onClick = (event: Event): void => {
    const target = event.target;
    if (target instanceof Element && target.closest(".reconnect") !== null) {
      void controller.reconnect();
    }
  };
  options.root?.addEventListener("click", onClick);

  await controller.open(sessionRequest(options));
  controller.start();
  repaint(controller.view());

  return {
    controller,
    view: () => controller.view(),
    reconnect: () => controller.reconnect(),
    dispose: async () => {
      keyboard?.removeEventListener("keydown", onKeyDown);
      keyboard?.removeEventListener("keyup", onKeyUp);
      options.root?.removeEventListener("click", onClick);
      keys.clear();
      await controller.close();
    },
  };
}

export { KeyTracker, isBoundKey, isIdle, normalizeKey, IDLE_ACTION } from "./actions.js";
export { ApiError, WorldClient } from "./client.js";
export { SessionController } from "./controller.js";
export { render, renderHtml } from "./dom.js";
export { HttpTransport, WsTransport } from "./transport.js";
export { emptyView, projectView } from "./view.js";
export type { ControllerOptions } from "./controller.js";
export type { ActionTransport, WebSocketFactory } from "./transport.js";
export type * from "./types.js";
export type { DriftPoint, LogEntry, UiSessionView } from "./view.js";
