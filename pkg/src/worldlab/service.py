"""HTTP and WebSocket serving of interactive generation sessions.

One process serves one checkpoint. Clients create sessions (each with its
own map, rng, and retrieval state), then push one action at a time and
receive the generated frame as a base64 PNG together with the pose, the
retrieval trace, and, in side_by_side mode, the ground-truth render at
the true state plus the SSIM between the two. Every response body names
its JSON schema; the schema documents ship in ``worldlab/schemas``.

Concurrency: sessions are independent and may run in parallel; within a
session requests are serialized by a non-blocking lock, so a second
action racing a running generation gets a 409 instead of queueing.
"""

import base64
import dataclasses
import io
import os
import threading
import uuid
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .eval_harness import rollout_config_from_train, ssim
from .gridworld import (
    SCENARIO_PATTERNS,
    Action,
    GlobalState,
    generate_map,
    render,
    rollout_random,
    rollout_scenario,
    step,
)
from .latent_codec import decode
from .memory_retrieval import segment_lengths
from .rollout_engine import close_session, generate_next, init_session
from .trainer.pose import load_pose
from .world_model import load_checkpoint

SERVICE_MODES = ("model", "oracle", "side_by_side")
SCHEMA_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "schemas")


def load_schema(name):
    """Read one of the shipped response schemas by name (without .json)."""
    import json

    path = os.path.join(SCHEMA_DIR, f"{name}.json")
    if not os.path.exists(path):
        raise ConfigError(f"unknown schema {name!r}")
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def frame_to_png(frame):
    """(H, W, 3) uint8 -> base64 PNG string."""
    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(np.asarray(frame, dtype=np.uint8)).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def png_to_frame(payload):
    """base64 PNG string -> (H, W, 3) uint8; the client-side inverse."""
    from PIL import Image

    blob = base64.b64decode(payload)
    with Image.open(io.BytesIO(blob)) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8)


class RequestError(Exception):
    """Maps straight to an error.v1 payload."""

    def __init__(self, status, message, fieldname=None):
        super().__init__(message)
        self.status = status
        self.fieldname = fieldname

    def payload(self):
        return {
            "schema": "worldlab.service.error.v1",
            "status": self.status,
            "error": str(self),
            "field": self.fieldname,
        }


def _parse_action(payload):
    if not isinstance(payload, dict):
        raise RequestError(400, "action body must be a JSON object", None)
    known = {"move", "strafe", "turn", "jump"}
    for key in payload:
        if key not in known:
            raise RequestError(400, f"unknown action field {key!r}", key)
    values = {}
    for key in known:
        raw = payload.get(key, 0)
        if isinstance(raw, bool) or not isinstance(raw, int):
            raise RequestError(400, f"{key} must be an integer", key)
        limit = (0, 1) if key == "jump" else (-1, 1)
        if not limit[0] <= raw <= limit[1]:
            raise RequestError(
                400, f"{key} must be in [{limit[0]}, {limit[1]}], got {raw}", key
            )
        values[key] = raw
    return Action(**values)


@dataclass
class SessionRecord:
    """One live session: generation state plus its serialization lock."""

    id: str
    mode: str
    seed: int
    scenario: str
    tile_map: object
    session: object = None  # SessionState for model-backed modes
    state: object = None  # GlobalState, oracle mode only
    frame_count: int = 0  # oracle mode only
    lock: threading.Lock = field(default_factory=threading.Lock)
    ssim_history: list = field(default_factory=list)


class WorldService:
    """Checkpoint, defaults, and the session registry behind the app."""

    def __init__(self, params, model, train_config, pose_source="ground_truth", pose_params=None):
        if pose_source == "predicted" and pose_params is None:
            raise ConfigError("pose_source 'predicted' needs a pose checkpoint")
        self.params = params
        self.model = model
        self.train_config = train_config
        self.pose_source = pose_source
        self.pose_params = pose_params
        self.variant = train_config["variant"]
        self.base_config = rollout_config_from_train(train_config, pose_source=pose_source)
        self.sessions = {}
        self.registry_lock = threading.Lock()

    def default_prime(self):
        if self.variant == "history":
            return int(
                sum(
                    segment_lengths(
                        self.base_config.heuristic_segments,
                        self.base_config.heuristic_base,
                        self.base_config.heuristic_growth,
                    )
                )
            )
        return self.base_config.window

    def create_session(self, payload):
        if not isinstance(payload, dict):
            raise RequestError(400, "session body must be a JSON object", None)
        known = {"variant", "mode", "seed", "scenario", "init_length"}
        for key in payload:
            if key not in known:
                raise RequestError(400, f"unknown session field {key!r}", key)
        variant = payload.get("variant", self.variant)
        if variant != self.variant:
            raise RequestError(
                400,
                f"variant must match the loaded checkpoint ({self.variant!r}), got {variant!r}",
                "variant",
            )
        mode = payload.get("mode", "model")
        if mode not in SERVICE_MODES:
            raise RequestError(400, f"mode must be one of {SERVICE_MODES}, got {mode!r}", "mode")
        seed = payload.get("seed", 0)
        if isinstance(seed, bool) or not isinstance(seed, int):
            raise RequestError(400, "seed must be an integer", "seed")
        scenario = payload.get("scenario", "random")
        if scenario != "random" and scenario not in SCENARIO_PATTERNS:
            names = ["random"] + sorted(SCENARIO_PATTERNS)
            raise RequestError(400, f"scenario must be one of {names}, got {scenario!r}", "scenario")
        prime = payload.get("init_length", 0)
        if isinstance(prime, bool) or not isinstance(prime, int) or prime < 0:
            raise RequestError(400, "init_length must be a non-negative integer", "init_length")
        prime = prime or self.default_prime()

        tile_map = generate_map(seed)
        if scenario == "random":
            priming = rollout_random(tile_map, seed=seed, length=prime)
        else:
            priming = rollout_scenario(tile_map, scenario, prime)
        record = SessionRecord(
            id=uuid.uuid4().hex[:12],
            mode=mode,
            seed=seed,
            scenario=scenario,
            tile_map=tile_map,
        )
        if mode == "oracle":
            record.state = priming.state_at(prime - 1)
            record.frame_count = prime
        else:
            try:
                record.session = init_session(
                    self.params,
                    self.model,
                    dataclasses.replace(self.base_config, seed=seed),
                    priming,
                    prime=prime,
                    pose_params=self.pose_params,
                )
            except ConfigError as err:
                raise RequestError(400, str(err), "init_length") from err
        with self.registry_lock:
            self.sessions[record.id] = record
        return record, priming.frames[prime - 1], priming.states[prime - 1]

    def get(self, session_id):
        with self.registry_lock:
            record = self.sessions.get(session_id)
        if record is None:
            raise RequestError(404, f"unknown session {session_id!r}", None)
        return record

    def drop(self, session_id):
        with self.registry_lock:
            record = self.sessions.pop(session_id, None)
        if record is None:
            raise RequestError(404, f"unknown session {session_id!r}", None)
        if record.session is not None:
            close_session(record.session)
        return record

    def apply_action(self, record, payload):
        """Run one action under the session lock; returns the response dict."""
        action = _parse_action(payload)
        if not record.lock.acquire(blocking=False):
            raise RequestError(409, f"session {record.id} is generating; retry", None)
        try:
            return self._generate(record, action)
        finally:
            record.lock.release()

    def _generate(self, record, action):
        if record.mode == "oracle":
            record.state = step(record.state, action, record.tile_map)
            frame = render(record.tile_map, record.state)
            response = {
                "schema": "worldlab.service.action_response.v1",
                "frameIndex": record.frame_count,
                "framePng": frame_to_png(frame),
                "state": [float(v) for v in record.state.as_array()],
                "predictedState": None,
                "retrieval": [],
                "ssimVsOracle": 1.0,
            }
            record.frame_count += 1
            record.ssim_history.append(1.0)
            return response

        frame, trace = generate_next(record.session, action)
        response = {
            "schema": "worldlab.service.action_response.v1",
            "frameIndex": trace.frame_index,
            "framePng": frame_to_png(frame),
            "state": [float(v) for v in trace.true_state],
            "predictedState": list(trace.state) if self.pose_source == "predicted" else None,
            "retrieval": [
                {"frameIndex": int(i), "distance": float(d)}
                for i, d in zip(trace.retrieved, trace.distances)
            ],
            "ssimVsOracle": None,
        }
        if record.mode == "side_by_side":
            truth = render(record.tile_map, GlobalState.from_array(np.asarray(trace.true_state)))
            response["oracleFramePng"] = frame_to_png(truth)
            response["ssimVsOracle"] = ssim(frame, truth)
        record.ssim_history.append(response["ssimVsOracle"])
        return response

    def buffer_view(self, record):
        entries = []
        if record.mode != "oracle":
            session = record.session
            if session.buffer is not None:
                rows = [(e.frame_index, e.latent, e.state) for e in session.buffer.entries]
            else:
                rows = list(
                    zip(session.context_indices, session.context_latents, session.context_states)
                )
            for index, latent, state in rows:
                frame = decode(latent[None], patch=self.model.patch)[0]
                entries.append(
                    {
                        "frameIndex": int(index),
                        "state": [float(v) for v in state],
                        "thumbPng": frame_to_png(frame),
                    }
                )
        return {
            "schema": "worldlab.service.buffer_view.v1",
            "id": record.id,
            "entries": entries,
        }

    def info(self):
        with self.registry_lock:
            count = len(self.sessions)
        return {
            "schema": "worldlab.service.service_info.v1",
            "variant": self.variant,
            "poseSource": self.pose_source,
            "modes": list(SERVICE_MODES),
            "scenarios": ["random"] + sorted(SCENARIO_PATTERNS),
            "window": self.base_config.window,
            "retrieved": self.base_config.retrieved,
            "sessions": count,
        }


def create_app(
    checkpoint=None,
    *,
    params=None,
    model=None,
    train_config=None,
    pose_source="ground_truth",
    pose_checkpoint=None,
    pose_params=None,
):
    """Build the FastAPI app around one checkpoint.

    Pass either a .wmc path or in-memory (params, model, train_config).
    ``pose_source='predicted'`` additionally needs a pose predictor, as a
    path or as loaded parameters.
    """
    from fastapi import Body, FastAPI, WebSocket, WebSocketDisconnect
    from fastapi.middleware.cors import CORSMiddleware
    from fastapi.responses import JSONResponse
    from starlette.concurrency import run_in_threadpool

    if checkpoint is not None:
        if not os.path.exists(checkpoint):
            raise ConfigError(f"missing checkpoint: {checkpoint}")
        params, model, metadata = load_checkpoint(checkpoint)
        train_config = metadata.get("train_config")
        if train_config is None:
            raise ConfigError(f"checkpoint {checkpoint} has no train_config metadata")
    if params is None or model is None or train_config is None:
        raise ConfigError("create_app needs a checkpoint path or params+model+train_config")
    if pose_checkpoint is not None:
        if not os.path.exists(pose_checkpoint):
            raise ConfigError(f"missing pose checkpoint: {pose_checkpoint}")
        pose_params, _ = load_pose(pose_checkpoint)

    service = WorldService(
        params, model, train_config, pose_source=pose_source, pose_params=pose_params
    )
    app = FastAPI(title="worldlab", docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    app.state.service = service

    def _error(exc):
        return JSONResponse(status_code=exc.status, content=exc.payload())

    @app.get("/info")
    def info():
        return service.info()

    @app.post("/session")
    def create_session(payload: dict | None = Body(default=None)):
        try:
            record, init_frame, init_state = service.create_session(payload or {})
        except RequestError as exc:
            return _error(exc)
        primed = record.frame_count if record.mode == "oracle" else record.session.frame_count
        return {
            "schema": "worldlab.service.session_created.v1",
            "id": record.id,
            "mode": record.mode,
            "variant": service.variant,
            "poseSource": service.pose_source,
            "seed": record.seed,
            "scenario": record.scenario,
            "frameIndex": primed - 1,
            "state": [float(v) for v in init_state],
            "initFrame": frame_to_png(init_frame),
        }

    @app.post("/session/{session_id}/action")
    def post_action(session_id: str, payload: dict | None = Body(default=None)):
        try:
            record = service.get(session_id)
            return service.apply_action(record, payload or {})
        except RequestError as exc:
            return _error(exc)

    @app.get("/session/{session_id}/buffer")
    def get_buffer(session_id: str):
        try:
            record = service.get(session_id)
        except RequestError as exc:
            return _error(exc)
        return service.buffer_view(record)

    @app.delete("/session/{session_id}")
    def delete_session(session_id: str):
        try:
            record = service.drop(session_id)
        except RequestError as exc:
            return _error(exc)
        return {
            "schema": "worldlab.service.session_closed.v1",
            "id": record.id,
            "closed": True,
        }

    @app.websocket("/session/{session_id}/stream")
    async def stream(websocket: WebSocket, session_id: str):
        await websocket.accept()
        try:
            while True:
                payload = await websocket.receive_json()
                try:
                    record = service.get(session_id)
                    response = await run_in_threadpool(service.apply_action, record, payload)
                except RequestError as exc:
                    await websocket.send_json(exc.payload())
                    if exc.status == 404:
                        await websocket.close(code=4404)
                        return
                    continue
                await websocket.send_json(response)
        except WebSocketDisconnect:
            return

    return app
