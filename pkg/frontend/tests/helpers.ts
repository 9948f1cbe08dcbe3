/** Shared payload factories and fakes for the UI tests. */

import type {
  Action,
  ActionResponse,
  BufferView,
  SessionCreated,
} from "../src/types.js";
import type { SessionApi } from "../src/client.js";
import { ApiError } from "../src/client.js";

export function makeCreated(overrides: Partial<SessionCreated> = {}): SessionCreated {
  return {
    schema: "worldlab.service.session_created.v1",
    id: "abc123",
    mode: "side_by_side",
    variant: "vrag",
    poseSource: "ground_truth",
    seed: 7,
    scenario: "random",
    frameIndex: 39,
    state: [4.5, 4.5, 0.5, 90.0],
    initFrame: "aW5pdA==",
    ...overrides,
  };
}

export function makeResponse(step: number, overrides: Partial<ActionResponse> = {}): ActionResponse {
  return {
    schema: "worldlab.service.action_response.v1",
    frameIndex: 39 + step,
    framePng: `ZnJhbWUt${step}`,
    state: [4.5 + step, 4.5, 0.5, 90.0],
    predictedState: null,
    retrieval: [
      { frameIndex: 3, distance: 0.25 },
      { frameIndex: 7, distance: 0.5 },
    ],
    ssimVsOracle: 0.9,
    ...overrides,
  };
}

export function makeBuffer(indices: number[]): BufferView {
  return {
    schema: "worldlab.service.buffer_view.v1",
    id: "abc123",
    entries: indices.map((frameIndex) => ({
      frameIndex,
      state: [1.0 * frameIndex, 2.0, 0.5, 0.0],
      thumbPng: `dGh1bWIt${frameIndex}`,
    })),
  };
}

export interface FakeApiOptions {
  /** Milliseconds each sendAction takes to resolve (virtual time). */
  latencyMs?: number;
  /** Reply 409 to these sendAction call numbers (1-based). */
  busyOn?: Set<number>;
}

/** In-memory SessionApi: records calls, resolves canned payloads. */
export class FakeApi implements SessionApi {
  actions: Action[] = [];
  trace: string[] = [];
  sendCalls = 0;
  maxConcurrent = 0;
  /** Reject every action with 404 while set, as after a server restart. */
  lost = false;

  private concurrent = 0;
  private step = 0;
  private readonly latencyMs: number;
  private readonly busyOn: Set<number>;

  constructor(options: FakeApiOptions = {}) {
    this.latencyMs = options.latencyMs ?? 0;
    this.busyOn = options.busyOn ?? new Set();
  }

  createSession(request = {}): Promise<SessionCreated> {
    this.trace.push("create");
    void request;
    return Promise.resolve(makeCreated());
  }

  sendAction(_sessionId: string, action: Action): Promise<ActionResponse> {
    this.sendCalls += 1;
    const seq = this.sendCalls;
    this.concurrent += 1;
    this.maxConcurrent = Math.max(this.maxConcurrent, this.concurrent);
    const work = (): Promise<ActionResponse> => {
      this.concurrent -= 1;
      if (this.lost) {
        return Promise.reject(new ApiError(404, "unknown session"));
      }
      if (this.busyOn.has(seq)) {
        return Promise.reject(new ApiError(409, "session is generating; retry"));
      }
      this.actions.push(action);
      this.trace.push("action");
      this.step += 1;
      return Promise.resolve(makeResponse(this.step));
    };
    if (this.latencyMs === 0) {
      return work();
    }
    return new Promise((resolve, reject) => {
      setTimeout(() => work().then(resolve, reject), this.latencyMs);
    });
  }

  buffer(): Promise<BufferView> {
    this.trace.push("buffer");
    return Promise.resolve(makeBuffer([0, 3, 7, 11]));
  }

  closeSession(sessionId: string): Promise<{ schema: string; id: string; closed: boolean }> {
    this.trace.push("close");
    return Promise.resolve({
      schema: "worldlab.service.session_closed.v1",
      id: sessionId,
      closed: true,
    });
  }
}
