/** Pure projection from the session's response log to renderable UI state.
 *
 * The controller appends one entry per acknowledged server response and
 * nothing else, so the view is a replayable function of the log: feeding
 * the same entries through projectView always yields the same view, and
 * the rendered frame always belongs to the most recent acknowledged
 * response rather than to whatever request happens to be in flight.
 */

import type {
  Action,
  ActionResponse,
  BufferEntry,
  BufferView,
  RetrievalHit,
  SessionCreated,
} from "./types.js";

export type LogEntry =
  | { kind: "session"; payload: SessionCreated }
  | { kind: "action"; sent: Action; payload: ActionResponse }
  | { kind: "buffer"; payload: BufferView }
  | { kind: "error"; message: string; status: number | null };

export interface DriftPoint {
  step: number;
  frameIndex: number;
  ssim: number | null;
}

export interface ActionRecord {
  step: number;
  action: Action;
}

export interface UiSessionView {
  connected: boolean;
  sessionId: string | null;
  mode: string | null;
  variant: string | null;
  poseSource: string | null;
  scenario: string | null;
  seed: number | null;
  frameIndex: number | null;
  modelFrame: string | null;
  oracleFrame: string | null;
  trueState: number[] | null;
  predictedState: number[] | null;
  retrieval: RetrievalHit[];
  retrievedHighlights: ReadonlySet<number>;
  buffer: BufferEntry[];
  ssimLatest: number | null;
  drift: DriftPoint[];
  actionHistory: ActionRecord[];
  error: string | null;
  stale: boolean;
}

export function emptyView(): UiSessionView {
  return {
    connected: false,
    sessionId: null,
    mode: null,
    variant: null,
    poseSource: null,
    scenario: null,
    seed: null,
    frameIndex: null,
    modelFrame: null,
    oracleFrame: null,
    trueState: null,
    predictedState: null,
    retrieval: [],
    retrievedHighlights: new Set(),
    buffer: [],
    ssimLatest: null,
    drift: [],
    actionHistory: [],
    error: null,
    stale: false,
  };
}

export function projectView(log: readonly LogEntry[]): UiSessionView {
  const view = emptyView();
  let steps = 0;
  for (const entry of log) {
    switch (entry.kind) {
      case "session": {
        const created = entry.payload;
        const fresh = emptyView();
        Object.assign(view, fresh, {
          connected: true,
          sessionId: created.id,
          mode: created.mode,
          variant: created.variant,
          poseSource: created.poseSource,
          scenario: created.scenario,
          seed: created.seed,
          frameIndex: created.frameIndex,
          modelFrame: created.initFrame,
          trueState: created.state,
        });
        steps = 0;
        break;
      }
      case "action": {
        const response = entry.payload;
        steps += 1;
        view.frameIndex = response.frameIndex;
        view.modelFrame = response.framePng;
        view.oracleFrame = response.oracleFramePng ?? null;
        view.trueState = response.state;
        view.predictedState = response.predictedState;
        view.retrieval = response.retrieval;
        view.retrievedHighlights = new Set(
          response.retrieval.map((hit) => hit.frameIndex),
        );
        view.ssimLatest = response.ssimVsOracle;
        view.drift.push({
          step: steps,
          frameIndex: response.frameIndex,
          ssim: response.ssimVsOracle,
        });
        view.actionHistory.push({ step: steps, action: entry.sent });
        view.error = null;
        break;
      }
      case "buffer": {
        view.buffer = entry.payload.entries;
        break;
      }
      case "error": {
        view.error = entry.message;
        if (entry.status === 404) {
          view.stale = true;
        }
        break;
      }
    }
  }
  return view;
}
