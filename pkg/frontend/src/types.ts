/** Wire types for the world service HTTP and WebSocket API. */

export interface Action {
  move: number;
  strafe: number;
  turn: number;
  jump: number;
}

export interface RetrievalHit {
  frameIndex: number;
  distance: number;
}

export interface SessionCreated {
  schema: string;
  id: string;
  mode: string;
  variant: string;
  poseSource: string;
  seed: number;
  scenario: string;
  frameIndex: number;
  state: number[];
  initFrame: string;
}

export interface ActionResponse {
  schema: string;
  frameIndex: number;
  framePng: string;
  state: number[];
  predictedState: number[] | null;
  retrieval: RetrievalHit[];
  ssimVsOracle: number | null;
  oracleFramePng?: string;
}

export interface BufferEntry {
  frameIndex: number;
  state: number[];
  thumbPng: string;
}

export interface BufferView {
  schema: string;
  id: string;
  entries: BufferEntry[];
}

export interface ServiceInfo {
  schema: string;
  variant: string;
  poseSource: string;
  modes: string[];
  scenarios: string[];
  window: number;
  retrieved: number;
  sessions: number;
}

export interface SessionClosed {
  schema: string;
  id: string;
  closed: boolean;
}

export interface ErrorPayload {
  schema: string;
  status: number;
  error: string;
  field: string | null;
}

export interface SessionRequest {
  mode?: string;
  seed?: number;
  scenario?: string;
  init_length?: number;
}
