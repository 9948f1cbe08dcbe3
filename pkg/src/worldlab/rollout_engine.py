"""Autoregressive frame generation from a trained world model.

A session holds the sliding context of clean latents, the kinematic pose
integrator, the retrieval buffer, and (for the infini variant) per-block
compressive memory. Each generated frame runs the full reverse diffusion
chain on one new slot while context frames sit at a fixed low noise level.

Determinism contract: a session owns one rng seeded from its config and
consumes it per frame in a fixed order: heuristic retrieval draws (history
variant only), one noise draw for retrieved slots (when t_retrieved > 0),
the initial latent draw, then one draw per reverse step with t > 1. Equal
configs, checkpoints, and action streams reproduce sessions bit for bit.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .context_extension import YarnParams
from .diffusion_core import ddpm_step, make_schedule, noisify
from .errors import ConfigError, StateError
from .gridworld import Action, Trajectory, generate_map, step
from .latent_codec import decode, encode
from .memory_retrieval import (
    BufferEntry,
    MemoryBuffer,
    retrieve_heuristic,
    retrieve_vrag,
    segment_lengths,
    state_distances,
)
from .trainer.pose import predict_deltas
from .trainer.batches import states_relative_to
from .world_model import (
    ModelConfig,
    embed_condition,
    forward,
    fresh_memory,
    infini_ingest,
    init_params,
)

ROLLOUT_VARIANTS = ("df", "vrag", "history", "yarn", "infini")
POSE_SOURCES = ("ground_truth", "predicted")


@dataclass(frozen=True)
class RolloutConfig:
    """Generation-time knobs; the schedule must match training.

    ``init_length`` and ``horizon`` are defaults for how many real frames
    seed a session and how many frames to generate; zero leaves the choice
    to the caller. ``pose_source`` picks which pose track conditions the
    model: the exact kinematic integrator, or the learned pose predictor
    running on generated frames.
    """

    variant: str = "df"
    window: int = 20
    retrieved: int = 0
    diffusion_steps: int = 50
    beta_start: float = 1e-4
    beta_end: float = 0.02
    t_context: int = 0
    t_retrieved: int = 2
    temporal_offset: int = 100
    retrieval_weights: tuple = (10.0, 10.0, 10.0, 3.0)
    buffer_capacity: int = 124
    heuristic_segments: int = 5
    heuristic_base: int = 2
    heuristic_growth: float = 2.0
    yarn_stretch: float = 4.0
    pose_source: str = "ground_truth"
    init_length: int = 0
    horizon: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.variant not in ROLLOUT_VARIANTS:
            raise ConfigError(f"variant must be one of {ROLLOUT_VARIANTS}, got {self.variant!r}")
        if self.pose_source not in POSE_SOURCES:
            raise ConfigError(
                f"pose_source must be one of {POSE_SOURCES}, got {self.pose_source!r}"
            )
        if self.window < 2:
            raise ConfigError(f"window must be >= 2, got {self.window}")
        if self.diffusion_steps < 1:
            raise ConfigError(f"diffusion_steps must be >= 1, got {self.diffusion_steps}")
        if not 0 < self.beta_start < self.beta_end < 1:
            raise ConfigError(
                f"betas must satisfy 0 < start < end < 1, got ({self.beta_start}, {self.beta_end})"
            )
        if not 0 <= self.t_context <= self.diffusion_steps:
            raise ConfigError(f"t_context must lie in [0, {self.diffusion_steps}], got {self.t_context}")
        low_band = math.ceil(self.diffusion_steps / 5)
        if not 0 <= self.t_retrieved <= low_band:
            raise ConfigError(
                f"t_retrieved must lie in [0, {low_band}] (a fifth of the schedule), "
                f"got {self.t_retrieved}"
            )
        if self.init_length < 0:
            raise ConfigError(f"init_length must be >= 0, got {self.init_length}")
        if self.horizon < 0:
            raise ConfigError(f"horizon must be >= 0, got {self.horizon}")
        object.__setattr__(self, "retrieval_weights", tuple(float(w) for w in self.retrieval_weights))
        if len(self.retrieval_weights) != 4:
            raise ConfigError(f"retrieval_weights needs 4 entries, got {len(self.retrieval_weights)}")
        if self.variant in ("vrag", "history"):
            if not 1 <= self.retrieved < self.window - 1:
                raise ConfigError(
                    f"{self.variant} needs 1 <= retrieved < window - 1, got "
                    f"retrieved={self.retrieved} window={self.window}"
                )
            if self.temporal_offset < self.retrieved:
                raise ConfigError(
                    f"temporal_offset {self.temporal_offset} must be >= retrieved {self.retrieved}"
                )
            if self.buffer_capacity < self.retrieved:
                raise ConfigError(
                    f"buffer_capacity {self.buffer_capacity} must be >= retrieved {self.retrieved}"
                )
        elif self.retrieved != 0:
            raise ConfigError(f"retrieved slots only apply to vrag and history, not {self.variant}")
        if self.variant == "history" and self.retrieved % self.heuristic_segments != 0:
            raise ConfigError(
                f"retrieved {self.retrieved} must divide evenly into {self.heuristic_segments} segments"
            )
        if self.variant == "yarn" and self.yarn_stretch <= 1.0:
            raise ConfigError(f"yarn_stretch must exceed 1, got {self.yarn_stretch}")

    def to_dict(self):
        out = dataclasses.asdict(self)
        out["retrieval_weights"] = list(self.retrieval_weights)
        return out

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError(f"rollout config must be a mapping, got {type(data).__name__}")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown rollout config fields: {', '.join(unknown)}")
        kwargs = dict(data)
        if "retrieval_weights" in kwargs:
            kwargs["retrieval_weights"] = tuple(kwargs["retrieval_weights"])
        return cls(**kwargs)


@dataclass(frozen=True)
class GenerationTrace:
    """What one generated frame was conditioned on.

    ``state`` is the pose track in use (kinematic or predicted);
    ``true_state`` is always the kinematic integrator. ``retrieved`` and
    ``distances`` record which buffer entries filled the retrieval slots
    and their weighted state distance from the query.
    """

    frame_index: int
    state: tuple
    true_state: tuple
    retrieved: tuple
    distances: tuple

    def to_dict(self):
        return {
            "frame_index": self.frame_index,
            "state": list(self.state),
            "true_state": list(self.true_state),
            "retrieved": list(self.retrieved),
            "distances": list(self.distances),
        }


@dataclass
class SessionState:
    """Mutable generation state; build with init_session."""

    params: dict
    model: object
    config: RolloutConfig
    schedule: object
    tile_map: object
    rng: np.random.Generator
    state: object  # GlobalState of the newest frame
    origin_state: np.ndarray  # raw state of session frame 0 (infini anchor)
    context_latents: list
    context_actions: list
    context_states: list
    context_indices: list
    buffer: MemoryBuffer | None
    memory: list | None
    frame_count: int
    yarn: YarnParams | None
    map_seed: int
    traces: list = field(default_factory=list)
    pose_params: dict | None = None
    predicted_state: np.ndarray | None = None
    last_frame: np.ndarray | None = None
    closed: bool = False

    def context_capacity(self):
        return self.config.window - self.config.retrieved - 1


def _validate_against_model(config, model):
    if config.variant == "infini":
        if config.window != model.window:
            raise ConfigError(
                f"infini rollouts need window == model.window, got {config.window} vs {model.window}"
            )
    elif config.variant == "yarn":
        limit = int(math.floor(config.yarn_stretch * model.window))
        if config.window > limit:
            raise ConfigError(
                f"yarn window {config.window} exceeds stretch * model window = {limit}"
            )
    elif config.window > model.window:
        raise ConfigError(
            f"{config.variant} rollouts need window <= model.window, got {config.window} vs {model.window}"
        )


def init_session(params, model, config, trajectory, prime=None, pose_params=None):
    """Start a session from a real trajectory prefix.

    The first ``prime`` frames seed the context (last slots), the retrieval
    buffer (all of them), and for infini the compressive memory (everything
    that no longer fits the local window, folded in stride-sized slides).
    ``prime`` defaults to the config's init_length when set, else to one
    full window.
    """
    _validate_against_model(config, model)
    if config.pose_source == "predicted" and pose_params is None:
        raise ConfigError("pose_source 'predicted' needs pose predictor parameters")
    if prime is None:
        prime = config.init_length or min(config.window, len(trajectory) - 1)
    if not 1 <= prime <= len(trajectory):
        raise ConfigError(
            f"prime must lie in [1, {len(trajectory)}], got {prime}"
        )
    if config.variant == "history":
        span = int(
            sum(
                segment_lengths(
                    config.heuristic_segments, config.heuristic_base, config.heuristic_growth
                )
            )
        )
        if prime < span:
            raise ConfigError(
                f"history rollouts need prime >= {span} frames of real history, got {prime}"
            )
    latents = encode(trajectory.frames[:prime], patch=model.patch)
    actions = np.zeros((prime, 4), dtype=np.int64)
    actions[1:] = trajectory.actions[: prime - 1]
    states = trajectory.states[:prime].astype(np.float32)

    session = SessionState(
        params=params,
        model=model,
        config=config,
        schedule=make_schedule(config.diffusion_steps, config.beta_start, config.beta_end),
        tile_map=generate_map(trajectory.map_seed),
        rng=np.random.default_rng(config.seed),
        state=trajectory.state_at(prime - 1),
        origin_state=states[0].copy(),
        context_latents=[],
        context_actions=[],
        context_states=[],
        context_indices=[],
        buffer=None,
        memory=None,
        frame_count=prime,
        yarn=None,
        map_seed=trajectory.map_seed,
    )
    if config.variant == "yarn":
        session.yarn = YarnParams(
            dim=model.head_dim,
            stretch=config.yarn_stretch,
            context=float(model.window),
            base=model.rope_base,
        )
    if config.variant in ("vrag", "history"):
        session.buffer = MemoryBuffer(config.buffer_capacity)
        for i in range(prime):
            session.buffer.push(BufferEntry(latents[i], states[i], i))
    if config.variant == "infini":
        tokens = (32 // model.patch) * (32 // model.patch)
        session.memory = fresh_memory(model, tokens)
    if config.pose_source == "predicted":
        session.pose_params = pose_params
        session.predicted_state = states[prime - 1].copy()
        session.last_frame = trajectory.frames[prime - 1].copy()

    keep = prime if config.variant == "infini" else min(prime, session.context_capacity())
    for i in range(prime - keep, prime):
        session.context_latents.append(latents[i])
        session.context_actions.append(actions[i])
        session.context_states.append(states[i])
        session.context_indices.append(i)
    if config.variant == "infini":
        _ingest_overflow(session)
    return session


def _ingest_overflow(session):
    """Fold context frames into memory until a new frame fits the window.

    Each fold replays one training-shaped slide (the oldest ``window``
    context frames) and absorbs its first ``window // 2`` frames.
    """
    model = session.model
    stride = model.window // 2
    while len(session.context_latents) + 1 > model.window:
        count = model.window
        latents = np.stack(session.context_latents[:count])
        actions = np.stack(session.context_actions[:count])
        states = np.stack(session.context_states[:count])
        positions = np.asarray(session.context_indices[:count], dtype=np.int64)
        timesteps = np.full(count, session.config.t_context, dtype=np.int64)
        conditions = embed_condition(
            session.params,
            model,
            actions[None],
            states_relative_to(states, session.origin_state)[None],
            timesteps[None],
        )
        session.memory = infini_ingest(
            session.params,
            model,
            latents[None],
            timesteps[None],
            conditions,
            positions,
            session.memory,
            count=stride,
        )
        del session.context_latents[:stride]
        del session.context_actions[:stride]
        del session.context_states[:stride]
        del session.context_indices[:stride]


def _assemble(session, new_action_row, new_state_raw):
    """Conditioning arrays for one generation call, new slot last.

    Returns (latents without the new slot filled, actions, states, null
    mask, state mask, positions, base timesteps, retrieved frame indices).
    """
    config = session.config
    ctx_latents = list(session.context_latents)
    ctx_actions = list(session.context_actions)
    ctx_states = list(session.context_states)

    retrieved_entries = []
    if config.variant in ("vrag", "history"):
        if config.variant == "vrag":
            retrieved_entries = retrieve_vrag(
                session.buffer,
                new_state_raw,
                np.asarray(config.retrieval_weights),
                l_h=config.retrieved,
            )
        else:
            per_segment = config.retrieved // config.heuristic_segments
            retrieved_entries = retrieve_heuristic(
                session.buffer,
                session.rng,
                n_segments=config.heuristic_segments,
                l_1=config.heuristic_base,
                alpha=config.heuristic_growth,
                k=per_segment,
            )

    l_h = len(retrieved_entries)
    n_ctx = len(ctx_latents)
    total = l_h + n_ctx + 1

    latents = np.zeros((total,) + ctx_latents[0].shape, dtype=np.float32)
    actions = np.zeros((total, 4), dtype=np.int64)
    states = np.zeros((total, 4), dtype=np.float32)
    null_mask = np.zeros(total, dtype=bool)
    timesteps = np.zeros(total, dtype=np.int64)

    for i, entry in enumerate(retrieved_entries):
        latents[i] = entry.latent
        states[i] = entry.state
        null_mask[i] = True
        timesteps[i] = config.t_retrieved
    if l_h and config.t_retrieved > 0:
        noise = session.rng.standard_normal(latents[:l_h].shape).astype(np.float32)
        latents[:l_h] = noisify(latents[:l_h], config.t_retrieved, noise, session.schedule)

    for i in range(n_ctx):
        latents[l_h + i] = ctx_latents[i]
        actions[l_h + i] = ctx_actions[i]
        states[l_h + i] = ctx_states[i]
        timesteps[l_h + i] = config.t_context
    actions[-1] = new_action_row
    states[-1] = new_state_raw

    if config.variant == "infini":
        positions = np.asarray(
            session.context_indices + [session.frame_count], dtype=np.int64
        )
        anchor = session.origin_state
    else:
        positions = np.empty(total, dtype=np.int64)
        positions[:l_h] = np.arange(l_h) - config.temporal_offset
        positions[l_h:] = np.arange(n_ctx + 1)
        anchor = states[l_h]
    states = states_relative_to(states, anchor)

    state_mask = None
    if config.variant == "history":
        state_mask = np.ones(total, dtype=np.float32)
        state_mask[:l_h] = 0.0
    retrieved_indices = tuple(int(e.frame_index) for e in retrieved_entries)
    distances = ()
    if l_h:
        raw = np.stack([e.state for e in retrieved_entries])
        distances = tuple(
            float(d)
            for d in state_distances(raw, new_state_raw, np.asarray(config.retrieval_weights))
        )
    return (
        latents,
        actions,
        states,
        null_mask,
        state_mask,
        positions,
        timesteps,
        retrieved_indices,
        distances,
    )


def generate_next(session, action, denoiser=None):
    """Generate the next frame for one action; returns (frame, trace).

    ``denoiser``, when given, replaces the network: it is called as
    ``denoiser(z_t, t)`` on the new slot and must return its noise estimate.
    The rng draw sequence is identical either way, so an oracle rollout and
    a model rollout stay step-for-step comparable.
    """
    if session.closed:
        raise StateError("session is closed")
    config = session.config
    model = session.model
    new_state = step(session.state, action, session.tile_map)
    true_state_raw = new_state.as_array()
    if config.pose_source == "predicted":
        deltas = predict_deltas(
            session.pose_params,
            session.last_frame[None],
            action.as_array()[None].astype(np.float32),
        )[0]
        prev = session.predicted_state
        new_state_raw = np.array(
            [
                prev[0] + deltas[0],
                prev[1] + deltas[1],
                prev[2] + deltas[2],
                (prev[3] + deltas[3]) % 360.0,
            ],
            dtype=np.float32,
        )
        session.predicted_state = new_state_raw
    else:
        new_state_raw = true_state_raw

    if config.variant == "infini":
        _ingest_overflow(session)
    (
        latents,
        actions,
        states,
        null_mask,
        state_mask,
        positions,
        timesteps,
        retrieved_indices,
        distances,
    ) = _assemble(session, action.as_array().astype(np.int64), new_state_raw)

    mode = {"yarn": "yarn", "infini": "infini"}.get(config.variant, "vanilla")
    z = session.rng.standard_normal(latents.shape[1:]).astype(np.float32)
    for t in range(config.diffusion_steps, 0, -1):
        if denoiser is not None:
            eps_new = np.asarray(denoiser(z, t), dtype=np.float32)
        else:
            latents[-1] = z
            timesteps[-1] = t
            conditions = embed_condition(
                session.params,
                model,
                actions[None],
                states[None],
                timesteps[None],
                null_mask=null_mask[None],
                state_mask=None if state_mask is None else state_mask[None],
            )
            eps_hat = forward(
                session.params,
                model,
                latents[None],
                timesteps[None],
                conditions,
                positions,
                mode=mode,
                yarn=session.yarn,
                memory=session.memory,
            )
            eps_new = eps_hat.data[0, -1]
        z = ddpm_step(z, eps_new, t, session.schedule, session.rng)

    frame = decode(z[None], patch=model.patch)[0]
    trace = GenerationTrace(
        frame_index=session.frame_count,
        state=tuple(float(v) for v in new_state_raw),
        true_state=tuple(float(v) for v in true_state_raw),
        retrieved=retrieved_indices,
        distances=distances,
    )

    session.context_latents.append(z)
    session.context_actions.append(np.asarray(action.as_array(), dtype=np.int64))
    session.context_states.append(new_state_raw)
    session.context_indices.append(session.frame_count)
    capacity = session.context_capacity()
    if config.variant != "infini":
        while len(session.context_latents) > capacity:
            session.context_latents.pop(0)
            session.context_actions.pop(0)
            session.context_states.pop(0)
            session.context_indices.pop(0)
    if session.buffer is not None:
        session.buffer.push(BufferEntry(z.copy(), new_state_raw.copy(), session.frame_count))
    if config.pose_source == "predicted":
        session.last_frame = frame.copy()
    session.state = new_state
    session.frame_count += 1
    session.traces.append(trace)
    return frame, trace


def close_session(session):
    """Mark a session finished; later generate_next calls raise StateError."""
    session.closed = True


@dataclass(frozen=True)
class RolloutResult:
    """A primed-then-generated video with its conditioning record.

    ``states`` follows the pose track the model was conditioned on;
    ``true_states`` is always the kinematic integrator, so the two differ
    only under pose_source 'predicted' and their gap measures pose drift.
    """

    frames: np.ndarray  # (N, 32, 32, 3) uint8; [0, prime) are real
    actions: np.ndarray  # (N, 4) int8, Trajectory convention
    states: np.ndarray  # (N, 4) float32, pose track in use
    true_states: np.ndarray  # (N, 4) float32 from the kinematic integrator
    traces: tuple
    prime: int
    map_seed: int
    variant: str
    pose_source: str

    def to_trajectory(self, extra_meta=None):
        meta = {
            "generated": True,
            "prime": self.prime,
            "variant": self.variant,
            "pose_source": self.pose_source,
        }
        meta.update(extra_meta or {})
        return Trajectory(
            frames=self.frames,
            actions=self.actions,
            states=self.states,
            map_seed=self.map_seed,
            meta=meta,
        )


def _normalize_actions(actions):
    rows = np.asarray(
        [a.as_array() if isinstance(a, Action) else np.asarray(a) for a in actions],
        dtype=np.int8,
    )
    if rows.ndim != 2 or rows.shape[1] != 4:
        raise ConfigError(f"actions must be (N, 4) rows, got shape {rows.shape}")
    if np.any(np.abs(rows[:, :3]) > 1) or np.any((rows[:, 3] != 0) & (rows[:, 3] != 1)):
        raise ConfigError("action components must be in {-1, 0, 1} (jump in {0, 1})")
    return rows


def rollout(
    params,
    model,
    config,
    trajectory,
    length=None,
    prime=None,
    actions=None,
    denoiser_factory=None,
    pose_params=None,
):
    """Generate frames from a real prefix, then an action stream.

    Without ``actions`` the trajectory's own actions are replayed (so
    generated frames compare one-to-one against the real ones). With an
    explicit action list the rollout runs ``len(actions)`` steps past the
    prefix instead. ``denoiser_factory(frame_index)`` may supply a
    per-frame denoiser override (None entries fall back to the network).
    """
    session = init_session(params, model, config, trajectory, prime=prime, pose_params=pose_params)
    prime = session.frame_count
    if actions is not None:
        rows = _normalize_actions(actions)
        length = prime + len(rows)
        all_actions = np.zeros((length, 4), dtype=np.int8)
        all_actions[: prime - 1] = trajectory.actions[: prime - 1]
        all_actions[prime - 1 : prime - 1 + len(rows)] = rows
    else:
        if length is None:
            length = (prime + config.horizon) if config.horizon else len(trajectory)
        if length > len(trajectory):
            raise ConfigError(
                f"cannot roll {length} frames from a {len(trajectory)}-frame trajectory"
            )
        all_actions = trajectory.actions[:length].copy()
    if length <= prime:
        raise ConfigError(f"length {length} must exceed the primed prefix {prime}")

    frames = np.empty((length, 32, 32, 3), dtype=np.uint8)
    states = np.empty((length, 4), dtype=np.float32)
    true_states = np.empty((length, 4), dtype=np.float32)
    frames[:prime] = trajectory.frames[:prime]
    states[:prime] = trajectory.states[:prime]
    true_states[:prime] = trajectory.states[:prime]
    for i in range(prime, length):
        action = Action.from_array(all_actions[i - 1])
        denoiser = denoiser_factory(i) if denoiser_factory is not None else None
        frame, trace = generate_next(session, action, denoiser=denoiser)
        frames[i] = frame
        states[i] = np.asarray(trace.state, dtype=np.float32)
        true_states[i] = np.asarray(trace.true_state, dtype=np.float32)
    return RolloutResult(
        frames=frames,
        actions=all_actions,
        states=states,
        true_states=true_states,
        traces=tuple(session.traces),
        prime=prime,
        map_seed=trajectory.map_seed,
        variant=config.variant,
        pose_source=config.pose_source,
    )


def make_oracle_denoiser(z0, schedule):
    """A denoiser that knows the target latent: its noise estimate is the
    one implied by (z_t, z0), so the reverse chain lands exactly on z0."""
    z0 = np.asarray(z0, dtype=np.float32)

    def denoiser(z_t, t):
        abar = schedule.alpha_bar(t)
        return (z_t - np.float32(math.sqrt(abar)) * z0) / np.float32(math.sqrt(1.0 - abar))

    return denoiser


def oracle_rollout(config, trajectory, length=None, prime=None, patch=4):
    """Ground-truth replay through the generation machinery (no network).

    Each frame's denoiser targets the encoded real frame, so the output
    video must match the trajectory frames exactly up to codec rounding.
    Useful as an end-to-end check of the rollout plumbing and as the
    reference arm of side-by-side serving.
    """
    target_latents = encode(trajectory.frames, patch=patch)
    schedule = make_schedule(config.diffusion_steps, config.beta_start, config.beta_end)

    def factory(i):
        return make_oracle_denoiser(target_latents[i], schedule)

    model = ModelConfig(
        hidden=8, heads=1, depth=1, embed_dim=4, window=1024, patch=patch, mlp_ratio=1
    )
    params = init_params(model, np.random.default_rng(0))
    return rollout(
        params, model, config, trajectory, length=length, prime=prime, denoiser_factory=factory
    )
