"""Per-variant assembly of training windows.

Each sample is a contiguous run of frames from one trajectory, optionally
prefixed with retrieved history slots. Assembly is pure given the chosen
trajectory, start index, and (for history retrieval) an rng; timestep and
noise draws happen in the training loop so the rng consumption order stays
in one place.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..diffusion_core import sample_timesteps
from ..errors import ConfigError
from ..latent_codec import encode, normalize_states
from ..memory_retrieval import (
    BufferEntry,
    MemoryBuffer,
    build_context,
    retrieve_heuristic,
    retrieve_vrag,
    segment_lengths,
)


@dataclass(frozen=True)
class Sample:
    """One training window before noising.

    States are normalized relative to the first frame of the current
    window, so retrieved slots carry their offset from where the camera is
    now. ``state_mask`` is None except for the history variant, which hides
    state conditioning on retrieved slots.
    """

    latents: np.ndarray  # (L, C, gh, gw) float32, clean
    actions: np.ndarray  # (L, 4) int
    action_null: np.ndarray  # (L,) bool
    states: np.ndarray  # (L, 4) float32, normalized
    positions: np.ndarray  # (L,) int64
    loss_mask: np.ndarray  # (L,) float32
    state_mask: np.ndarray | None


def states_relative_to(states, anchor):
    """Normalize raw states against an explicit anchor row."""
    stacked = np.concatenate([np.asarray(anchor, dtype=np.float32)[None], states], axis=0)
    return normalize_states(stacked)[1:]


def min_start(config):
    """Smallest valid window start for this variant.

    Starts begin at 1 so every frame has a preceding action. Retrieval
    variants additionally need enough prefix frames to fill the buffer.
    """
    if config.variant == "vrag":
        return max(1, config.retrieved)
    if config.variant == "history":
        lengths = segment_lengths(
            config.heuristic_segments, config.heuristic_base, config.heuristic_growth
        )
        return max(1, int(sum(lengths)))
    return 1


def min_trajectory_length(config):
    return min_start(config) + config.sequence_length()


def window_arrays(traj, start, length, patch):
    """Slice frames [start, start+length) with their preceding actions."""
    frames = traj.frames[start : start + length]
    latents = encode(frames, patch=patch)
    actions = traj.actions[start - 1 : start + length - 1].astype(np.int64)
    states = traj.states[start : start + length]
    return latents, actions, states


def fill_buffer(traj, start, capacity, patch):
    """Buffer of the last ``capacity`` frames before ``start``."""
    lo = max(0, start - capacity)
    latents = encode(traj.frames[lo:start], patch=patch)
    buffer = MemoryBuffer(capacity)
    for j in range(lo, start):
        buffer.push(BufferEntry(latents[j - lo], traj.states[j], j))
    return buffer


def assemble(config, traj, start, rng):
    """Build one Sample for the configured variant.

    Consumes rng only for the history variant (segment draws inside
    retrieve_heuristic).
    """
    patch = config.model.patch
    length = config.sequence_length()
    if start < min_start(config) or start + length > len(traj):
        raise ConfigError(
            f"window [{start}, {start + length}) invalid for a {len(traj)}-frame trajectory"
        )

    if config.variant in ("df", "yarn", "infini"):
        latents, actions, states = window_arrays(traj, start, length, patch)
        loss_mask = np.ones(length, dtype=np.float32)
        if config.variant == "infini":
            stride = config.window // 2
            loss_mask[: config.window - stride] = 0.0
        return Sample(
            latents=latents,
            actions=actions,
            action_null=np.zeros(length, dtype=bool),
            states=normalize_states(states),
            positions=np.arange(length, dtype=np.int64),
            loss_mask=loss_mask,
            state_mask=None,
        )

    current = config.current_length()
    latents, actions, states = window_arrays(traj, start, current, patch)
    buffer = fill_buffer(traj, start, config.buffer_capacity, patch)
    if config.variant == "vrag":
        query = traj.states[start + current - 1]
        entries = retrieve_vrag(
            buffer, query, np.asarray(config.retrieval_weights), l_h=config.retrieved
        )
    else:
        per_segment = config.retrieved // config.heuristic_segments
        entries = retrieve_heuristic(
            buffer,
            rng,
            n_segments=config.heuristic_segments,
            l_1=config.heuristic_base,
            alpha=config.heuristic_growth,
            k=per_segment,
        )
    if len(entries) != config.retrieved:
        raise ConfigError(
            f"retrieval returned {len(entries)} slots, expected {config.retrieved}"
        )
    context = build_context(
        entries, latents, actions, states, delta_t=config.temporal_offset
    )
    state_mask = None
    if config.variant == "history":
        state_mask = context.loss_mask.copy()
    return Sample(
        latents=context.latents,
        actions=context.actions.astype(np.int64),
        action_null=context.action_null,
        states=states_relative_to(context.states, states[0]),
        positions=context.positions,
        loss_mask=context.loss_mask,
        state_mask=state_mask,
    )


@dataclass(frozen=True)
class Batch:
    """Stacked samples plus per-frame diffusion timesteps."""

    latents: np.ndarray  # (B, L, C, gh, gw) float32, clean
    actions: np.ndarray  # (B, L, 4)
    action_null: np.ndarray  # (B, L) bool
    states: np.ndarray  # (B, L, 4) float32
    positions: np.ndarray  # (L,) int64, shared across the batch
    loss_mask: np.ndarray  # (B, L) float32
    state_mask: np.ndarray | None  # (B, L) float32
    timesteps: np.ndarray  # (B, L) int64


def sample_batch(config, trajectories, rng, schedule):
    """Draw one batch.

    Per element, in order: trajectory index, window start, heuristic
    segment draws (history only), then timesteps (retrieved slots first in
    low-noise mode unless configured independent, then the current window).
    """
    samples = []
    timesteps = []
    length = config.sequence_length()
    for _ in range(config.batch_size):
        traj = trajectories[int(rng.integers(len(trajectories)))]
        lo = min_start(config)
        hi = len(traj) - length
        start = int(rng.integers(lo, hi + 1))
        samples.append(assemble(config, traj, start, rng))
        if config.retrieved > 0:
            mode = "retrieved_low" if config.retrieved_noise == "low" else "independent"
            t_ret = sample_timesteps(config.retrieved, mode, rng, schedule)
            t_cur = sample_timesteps(
                length - config.retrieved, config.context_noise, rng, schedule
            )
            timesteps.append(np.concatenate([t_ret, t_cur]))
        else:
            timesteps.append(sample_timesteps(length, config.context_noise, rng, schedule))

    state_mask = None
    if config.variant == "history":
        state_mask = np.stack([s.state_mask for s in samples])
    return Batch(
        latents=np.stack([s.latents for s in samples]),
        actions=np.stack([s.actions for s in samples]),
        action_null=np.stack([s.action_null for s in samples]),
        states=np.stack([s.states for s in samples]),
        positions=samples[0].positions,
        loss_mask=np.stack([s.loss_mask for s in samples]),
        state_mask=state_mask,
        timesteps=np.stack([t.astype(np.int64) for t in timesteps]),
    )
