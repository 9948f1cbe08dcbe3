"""History buffer and retrieval: state-keyed similarity retrieval, the
exponential-segment heuristic baseline, and extended-context assembly.

The distance core is exposed as standalone functions on arrays so the
trainer can rank ground-truth prefixes without building buffer objects.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, OrderingError, RetrievalError, ShapeError

DEFAULT_WEIGHTS = np.array([10.0, 10.0, 10.0, 3.0])
DEFAULT_CAPACITY = 124
DEFAULT_TEMPORAL_OFFSET = 100


@dataclass(frozen=True)
class BufferEntry:
    """One stored frame: latent, raw (unnormalized) state, global index."""

    latent: np.ndarray  # (C, gh, gw) float32
    state: np.ndarray  # (4,) float32, raw [x, y, z, yaw]
    frame_index: int


class MemoryBuffer:
    """Fixed-capacity history of generated frames, oldest evicted first.

    Single-writer: the generation loop pushes; retrieval only reads.
    """

    def __init__(self, capacity=DEFAULT_CAPACITY):
        if capacity < 1:
            raise ConfigError(f"buffer capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._entries = []

    def __len__(self):
        return len(self._entries)

    @property
    def entries(self):
        return list(self._entries)

    def push(self, entry):
        if self._entries and entry.frame_index <= self._entries[-1].frame_index:
            raise OrderingError(
                f"frame index {entry.frame_index} not after last stored {self._entries[-1].frame_index}"
            )
        self._entries.append(entry)
        if len(self._entries) > self.capacity:
            del self._entries[0]
        return self

    def states_array(self):
        return np.stack([e.state for e in self._entries]).astype(np.float32)

    def latents_array(self):
        return np.stack([e.latent for e in self._entries])

    def frame_indices(self):
        return np.array([e.frame_index for e in self._entries], dtype=np.int64)


def state_distances(states, query, weights=DEFAULT_WEIGHTS):
    """Weighted Euclidean distance between stored states and a query state,
    with yaw compared as the wrapped angular difference (degrees) before
    weighting. states (N, 4), query (4,) -> (N,) float64.
    """
    states = np.asarray(states, dtype=np.float64)
    query = np.asarray(query, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if states.ndim != 2 or states.shape[1] != 4:
        raise ShapeError(f"states must be (N, 4), got {states.shape}")
    if query.shape != (4,):
        raise ShapeError(f"query must be (4,), got {query.shape}")
    if weights.shape != (4,) or weights.min() < 0 or weights.max() <= 0:
        raise ConfigError(f"weights must be 4 non-negative values with one positive, got {weights}")
    pos = (states[:, :3] - query[:3]) * weights[:3]
    yaw = np.abs(states[:, 3] - query[3]) % 360.0
    yaw = np.minimum(yaw, 360.0 - yaw) * weights[3]
    return np.sqrt((pos * pos).sum(axis=1) + yaw * yaw)


def rank_by_distance(distances, frame_indices):
    """Selection order: ascending distance, ties broken toward larger
    frame index (recency). Returns indices into the input arrays.
    """
    distances = np.asarray(distances)
    frame_indices = np.asarray(frame_indices)
    return np.lexsort((-frame_indices, distances))


def retrieve_vrag(buffer, query_state, weights=DEFAULT_WEIGHTS, l_h=10):
    """The L_h most similar stored entries, sorted by frame index.

    An underfull buffer pads by repeating the oldest selected entry at the
    front so the context length stays fixed.
    """
    if l_h < 1:
        raise ConfigError(f"retrieval count must be >= 1, got {l_h}")
    if len(buffer) == 0:
        raise RetrievalError("cannot retrieve from an empty buffer")
    entries = buffer.entries
    query = np.asarray(query_state, dtype=np.float64)
    dist = state_distances(buffer.states_array(), query, weights)
    order = rank_by_distance(dist, buffer.frame_indices())
    chosen = [entries[i] for i in order[:l_h]]
    chosen.sort(key=lambda e: e.frame_index)
    if len(chosen) < l_h:
        chosen = [chosen[0]] * (l_h - len(chosen)) + chosen
    return chosen


def segment_lengths(n_segments=5, l_1=2, alpha=2, orientation="newest_first"):
    """Exponential segment lengths, returned newest segment first.

    orientation "newest_first" reads l_1 as the newest (shortest) segment;
    "oldest_first" reads l_1 as the oldest segment with ratio alpha applied
    toward the present. Both keep sampling density highest for recent frames.
    """
    if n_segments < 1 or l_1 < 1:
        raise ConfigError(f"need n_segments >= 1 and l_1 >= 1, got {n_segments}, {l_1}")
    if orientation == "newest_first":
        lengths = [l_1 * alpha ** j for j in range(n_segments)]
    elif orientation == "oldest_first":
        lengths = [l_1 * alpha ** j for j in reversed(range(n_segments))]
    else:
        raise ConfigError(f"unknown orientation {orientation!r}")
    lengths = [int(round(v)) for v in lengths]
    if min(lengths) < 1:
        raise ConfigError(f"segment lengths must all be >= 1, got {lengths}")
    return lengths


def retrieve_heuristic(buffer, rng, n_segments=5, l_1=2, alpha=2, k=2, orientation="newest_first"):
    """Exponential-segment sampling over the newest part of the buffer.

    The covered suffix is split into segments (short segments nearest the
    present), k entries are drawn uniformly without replacement from each,
    and the result is returned oldest-to-newest. k may be one count for all
    segments or a per-segment sequence (newest segment first).
    """
    lengths = segment_lengths(n_segments, l_1, alpha, orientation)
    needed = sum(lengths)
    if len(buffer) < needed:
        raise RetrievalError(f"heuristic retrieval needs at least {needed} entries, buffer has {len(buffer)}")
    counts = [int(k)] * n_segments if np.isscalar(k) else [int(v) for v in k]
    if len(counts) != n_segments:
        raise ConfigError(f"per-segment counts must have length {n_segments}, got {len(counts)}")
    entries = buffer.entries
    picked = []
    hi = len(entries)
    for seg_len, count in zip(lengths, counts):
        lo = hi - seg_len
        if not (1 <= count <= seg_len):
            raise ConfigError(f"cannot draw {count} entries from a segment of {seg_len}")
        offsets = rng.choice(seg_len, size=count, replace=False)
        picked.extend(entries[lo + int(o)] for o in offsets)
        hi = lo
    picked.sort(key=lambda e: e.frame_index)
    return picked


@dataclass(frozen=True)
class ExtendedContext:
    """Conditioning sequence [retrieved block, current window].

    Retrieved slots carry null actions (flagged, embedding substitutes a
    learned vector), zero loss mask, and temporal positions offset to sit
    before the window.
    """

    latents: np.ndarray  # (L, C, gh, gw) float32
    actions: np.ndarray  # (L, 4) int8, zeros on retrieved slots
    action_null: np.ndarray  # (L,) bool, True on retrieved slots
    states: np.ndarray  # (L, 4) float32, raw
    loss_mask: np.ndarray  # (L,) float32
    positions: np.ndarray  # (L,) int64
    retrieved_count: int
    noise_mode: str = "train"

    def __len__(self):
        return self.latents.shape[0]


def build_context(retrieved, latents, actions, states, delta_t=DEFAULT_TEMPORAL_OFFSET, noise_mode="train"):
    """Assemble the extended context from retrieved entries and the current
    window arrays (latents (L_c, C, gh, gw), actions (L_c, 4),
    states (L_c, 4)).
    """
    latents = np.asarray(latents, dtype=np.float32)
    actions = np.asarray(actions)
    states = np.asarray(states, dtype=np.float32)
    l_c = latents.shape[0]
    if actions.shape[0] != l_c or states.shape[0] != l_c:
        raise ShapeError(
            f"window arrays disagree on length: latents {l_c}, actions {actions.shape[0]}, states {states.shape[0]}"
        )
    if states.ndim != 2 or states.shape[1] != 4:
        raise ShapeError(f"states must be (L, 4), got {states.shape}")
    l_h = len(retrieved)
    if l_h > 0 and delta_t < l_h:
        raise ConfigError(f"temporal offset {delta_t} must be >= retrieved count {l_h}")
    for i, entry in enumerate(retrieved):
        if entry.latent.shape != latents.shape[1:]:
            raise ShapeError(f"retrieved latent {i} shape {entry.latent.shape} != window {latents.shape[1:]}")

    total = l_h + l_c
    out_latents = np.empty((total,) + latents.shape[1:], dtype=np.float32)
    out_actions = np.zeros((total, actions.shape[1]), dtype=np.int8)
    out_states = np.empty((total, 4), dtype=np.float32)
    for i, entry in enumerate(retrieved):
        out_latents[i] = entry.latent
        out_states[i] = entry.state
    out_latents[l_h:] = latents
    out_actions[l_h:] = actions
    out_states[l_h:] = states

    positions = np.empty(total, dtype=np.int64)
    positions[:l_h] = np.arange(l_h) - delta_t
    positions[l_h:] = np.arange(l_c)

    action_null = np.zeros(total, dtype=bool)
    action_null[:l_h] = True
    loss_mask = np.zeros(total, dtype=np.float32)
    loss_mask[l_h:] = 1.0

    return ExtendedContext(
        latents=out_latents,
        actions=out_actions,
        action_null=action_null,
        states=out_states,
        loss_mask=loss_mask,
        positions=positions,
        retrieved_count=l_h,
        noise_mode=noise_mode,
    )
