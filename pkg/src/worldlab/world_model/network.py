"""The denoising network: condition embedding, modulation, attention, forward.

Layout conventions
------------------
Latents enter as (L, C, gh, gw) or batched (B, L, C, gh, gw) with
C = 3*patch*patch channels per token and an (gh, gw) token grid per frame.
Inside the trunk every frame is a row of gh*gw tokens of width `hidden`.
Each block applies, in order: spatial attention within each frame, causal
temporal attention across frames at each grid location, and a feed-forward
layer. All three sub-layers share the block's single modulation projection
(scale and shift computed from the per-frame condition vector) and add their
output back to the residual stream.

Temporal attention is causal in slot order: slot i never reads slots > i.
Retrieved-frame slots therefore go first in the window with their offset
positions; position values affect rotary angles only, never the mask.
"""

import math

import numpy as np

from ..context_extension import (
    empty_memory,
    infini_combine,
    infini_drive,
    infini_retrieve,
    infini_update,
    local_window_attention,
    yarn_frequencies,
)
from ..errors import ConfigError, DomainError, ShapeError
from ..numerics import as_tensor, gelu, layer_norm, masked_fill, narrow, softmax
from ..numerics import embedding_lookup
from .params import ACTION_COMPONENTS
from .rope import rope_angles, rope_apply, spatial_rope_apply

MODES = ("vanilla", "yarn", "infini")


def sinusoidal_features(timesteps, dim, dtype=np.float32):
    """Classic sin/cos position features of integer timesteps, as constants."""
    if dim % 2 != 0:
        raise ConfigError(f"sinusoidal feature dim must be even, got {dim}")
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half, dtype=np.float64) / half)
    angles = np.asarray(timesteps, dtype=np.float64)[..., None] * freqs
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=-1).astype(dtype)


def embed_condition(params, config, actions, states, timesteps, null_mask=None, state_mask=None):
    """Per-frame condition vectors from (action, state, timestep).

    `actions` holds integer rows (move, strafe, turn, jump); frames flagged
    in `null_mask` use the learned null vector instead of their action
    embedding, making the output independent of the action values there.
    `state_mask` zeroes the state term per frame (retrieved slots of the
    heuristic-history variant carry no state signal). Both masks accept
    bools or floats in {0, 1}.
    """
    actions = np.asarray(actions)
    states = np.asarray(states)
    timesteps = np.asarray(timesteps)
    if actions.shape[-1] != len(ACTION_COMPONENTS):
        raise ShapeError(f"actions must have {len(ACTION_COMPONENTS)} components, got {actions.shape}")
    if states.shape[-1] != 4:
        raise ShapeError(f"states must have 4 components, got {states.shape}")
    if actions.shape[:-1] != timesteps.shape or states.shape[:-1] != timesteps.shape:
        raise ShapeError(
            f"frame counts disagree: actions {actions.shape}, states {states.shape}, "
            f"timesteps {timesteps.shape}"
        )
    if not np.issubdtype(actions.dtype, np.integer):
        raise DomainError(f"actions must be integers, got {actions.dtype}")
    if actions.min(initial=0) < -1 or actions.max(initial=0) > 1:
        raise DomainError("action components must lie in {-1, 0, 1}")
    if actions[..., 3].min(initial=0) < 0:
        raise DomainError("jump component must lie in {0, 1}")
    if np.asarray(timesteps).min(initial=0) < 0:
        raise DomainError("timesteps must be non-negative")

    dtype = params["cond.state.w"].data.dtype
    feats = sinusoidal_features(timesteps, config.embed_dim, dtype)
    hid = gelu(as_tensor(feats) @ params["cond.time.w1"] + params["cond.time.b1"])
    e = hid @ params["cond.time.w2"] + params["cond.time.b2"]

    idx = actions.astype(np.int64) + 1
    action_term = embedding_lookup(params["cond.action.move"], idx[..., 0])
    for c, component in enumerate(ACTION_COMPONENTS[1:], start=1):
        action_term = action_term + embedding_lookup(params[f"cond.action.{component}"], idx[..., c])
    if null_mask is not None:
        null_mask = np.asarray(null_mask)
        if null_mask.shape != timesteps.shape:
            raise ShapeError(f"null_mask shape {null_mask.shape} != frame shape {timesteps.shape}")
        m = null_mask.astype(dtype)[..., None]
        action_term = action_term * (1.0 - m) + params["cond.action.null"] * m
    e = e + action_term

    if config.condition_on_state:
        state_term = as_tensor(states.astype(dtype)) @ params["cond.state.w"] + params["cond.state.b"]
        if state_mask is not None:
            state_mask = np.asarray(state_mask)
            if state_mask.shape != timesteps.shape:
                raise ShapeError(
                    f"state_mask shape {state_mask.shape} != frame shape {timesteps.shape}"
                )
            state_term = state_term * state_mask.astype(dtype)[..., None]
        e = e + state_term
    return e


def adaln(h, e, w_gamma, b_gamma, w_beta, b_beta):
    """Condition-modulated normalization: gamma(e) * LayerNorm(h) + beta(e).

    `h` is (..., L, S, hidden); `e` is (..., L, embed_dim); the scale and
    shift broadcast over each frame's tokens.
    """
    h = as_tensor(h)
    e = as_tensor(e)
    if h.shape[:-2] != e.shape[:-1]:
        raise ShapeError(f"feature frames {h.shape} incompatible with conditions {e.shape}")
    gamma = e @ w_gamma + b_gamma
    beta = e @ w_beta + b_beta
    gamma = gamma.reshape(*gamma.shape[:-1], 1, gamma.shape[-1])
    beta = beta.reshape(*beta.shape[:-1], 1, beta.shape[-1])
    return gamma * layer_norm(h) + beta


def _split_heads(x, heads):
    # (..., L, S, hidden) -> (..., L, S, heads, head_dim)
    return x.reshape(*x.shape[:-1], heads, x.shape[-1] // heads)


def _spatial_attention(x, block, heads, theta_axis, grid):
    grid_h, grid_w = grid
    q = _split_heads(x @ block["wq"], heads).swapaxes(-2, -3)
    k = _split_heads(x @ block["wk"], heads).swapaxes(-2, -3)
    v = _split_heads(x @ block["wv"], heads).swapaxes(-2, -3)
    q, k = spatial_rope_apply(q, k, grid_h, grid_w, theta_axis)
    scores = (q @ k.swapaxes(-1, -2)) * (1.0 / math.sqrt(q.shape[-1]))
    out = softmax(scores, axis=-1) @ v
    out = out.swapaxes(-2, -3)
    out = out.reshape(*out.shape[:-2], out.shape[-2] * out.shape[-1])
    return out @ block["wo"]


def _to_temporal(x, heads):
    # (B, L, S, hidden) -> (B, heads, S, L, head_dim)
    return _split_heads(x, heads).transpose((0, 3, 2, 1, 4))


def _from_temporal(x):
    # (B, heads, S, L, head_dim) -> (B, L, S, hidden)
    x = x.transpose((0, 3, 2, 1, 4))
    return x.reshape(*x.shape[:-2], x.shape[-2] * x.shape[-1])


def _causal_attention(q, k, v):
    length = q.shape[-2]
    mask = np.triu(np.ones((length, length), dtype=bool), k=1)
    scores = (q @ k.swapaxes(-1, -2)) * (1.0 / math.sqrt(q.shape[-1]))
    weights = softmax(masked_fill(scores, mask, -np.inf), axis=-1)
    return weights @ v


def _check_memory(memory, config, batch, tokens):
    if len(memory) != config.depth:
        raise ShapeError(f"memory holds {len(memory)} block states, model depth is {config.depth}")
    hd = config.head_dim
    want_m = (batch, config.heads, tokens, hd, hd)
    want_n = (batch, config.heads, tokens, hd, 1)
    for b, (m, n) in enumerate(memory):
        if tuple(m.shape) != want_m or tuple(n.shape) != want_n:
            raise ShapeError(
                f"memory block {b} has shapes {tuple(m.shape)}/{tuple(n.shape)}, "
                f"expected {want_m}/{want_n}"
            )


def _trunk(params, config, latents, conditions, temporal_fn):
    """Shared token pipeline; `temporal_fn(b, q, k, v) -> mixed values`."""
    heads = config.heads
    theta_axis = rope_angles(config.head_dim // 2, config.rope_base)
    grid = latents.shape[-2], latents.shape[-1]

    x = latents.reshape(*latents.shape[:-2], latents.shape[-2] * latents.shape[-1])
    x = x.swapaxes(-1, -2)  # (B, L, S, C)
    h = x @ params["patch.w"] + params["patch.b"]

    for b in range(config.depth):
        prefix = f"block{b}"
        mod_args = (
            params[f"{prefix}.adaln.w_gamma"],
            params[f"{prefix}.adaln.b_gamma"],
            params[f"{prefix}.adaln.w_beta"],
            params[f"{prefix}.adaln.b_beta"],
        )
        spatial = {p: params[f"{prefix}.spatial.{p}"] for p in ("wq", "wk", "wv", "wo")}
        h = h + _spatial_attention(adaln(h, conditions, *mod_args), spatial, heads, theta_axis, grid)

        x = adaln(h, conditions, *mod_args)
        q = _to_temporal(x @ params[f"{prefix}.temporal.wq"], heads)
        k = _to_temporal(x @ params[f"{prefix}.temporal.wk"], heads)
        v = _to_temporal(x @ params[f"{prefix}.temporal.wv"], heads)
        h = h + _from_temporal(temporal_fn(b, q, k, v)) @ params[f"{prefix}.temporal.wo"]

        x = adaln(h, conditions, *mod_args)
        x = gelu(x @ params[f"{prefix}.mlp.w1"] + params[f"{prefix}.mlp.b1"])
        h = h + x @ params[f"{prefix}.mlp.w2"] + params[f"{prefix}.mlp.b2"]

    out = h @ params["head.w"] + params["head.b"]
    out = out.swapaxes(-1, -2)
    return out.reshape(*out.shape[:-1], *grid)


def _normalize_inputs(config, latents, timesteps, conditions, positions):
    latents = np.asarray(latents)
    if latents.ndim == 4:
        batched = False
        latents = latents[None]
    elif latents.ndim == 5:
        batched = True
    else:
        raise ShapeError(f"latents must be (L, C, gh, gw) or batched, got shape {latents.shape}")
    b, length, channels = latents.shape[0], latents.shape[1], latents.shape[2]
    if channels != config.channels:
        raise ShapeError(f"latents carry {channels} channels, config implies {config.channels}")

    timesteps = np.asarray(timesteps)
    if timesteps.shape not in ((length,), (b, length)):
        raise ShapeError(f"timesteps shape {timesteps.shape} does not cover {length} frames")
    if timesteps.min(initial=0) < 0:
        raise DomainError("timesteps must be non-negative")

    conditions = as_tensor(conditions)
    if conditions.ndim == 2:
        conditions = conditions.reshape(1, *conditions.shape)
    if conditions.shape[-1] != config.embed_dim or conditions.shape[-2] != length:
        raise ShapeError(
            f"conditions shape {tuple(conditions.shape)} does not match "
            f"{length} frames of width {config.embed_dim}"
        )

    positions = np.asarray(positions)
    if positions.shape != (length,):
        raise ShapeError(f"positions shape {positions.shape} != ({length},)")
    if not np.issubdtype(positions.dtype, np.integer):
        raise DomainError(f"positions must be integers, got {positions.dtype}")
    return as_tensor(latents), conditions, positions, batched


def forward(params, config, latents, timesteps, conditions, positions, mode="vanilla", yarn=None, memory=None):
    """Predict per-frame noise for a window of latents.

    `conditions` comes from `embed_condition` and already carries the
    timestep signal; `timesteps` is validated against the frame count so a
    mismatched conditioning bug fails loudly. `positions` are per-frame
    integer rotary positions (negative for retrieved slots). `mode` picks
    the temporal attention flavor; "yarn" requires warp parameters and
    "infini" accepts an optional per-block memory for windowed inference
    (without it the segment driver runs, which needs length >= window).
    """
    if mode not in MODES:
        raise ConfigError(f"unknown forward mode {mode!r}, expected one of {MODES}")
    if mode != "yarn" and yarn is not None:
        raise ConfigError("yarn parameters are only valid with mode='yarn'")
    if mode != "infini" and memory is not None:
        raise ConfigError("memory is only valid with mode='infini'")
    latents, conditions, positions, batched = _normalize_inputs(
        config, latents, timesteps, conditions, positions
    )

    theta = rope_angles(config.head_dim, config.rope_base)
    if mode == "yarn":
        if yarn is None:
            raise ConfigError("mode='yarn' requires warp parameters")
        if yarn.dim != config.head_dim:
            raise ConfigError(f"warp dim {yarn.dim} != head dim {config.head_dim}")
        if yarn.base != config.rope_base:
            raise ConfigError(f"warp base {yarn.base} != rotary base {config.rope_base}")
        theta = yarn_frequencies(theta, yarn)

    if mode == "infini" and memory is not None:
        tokens = latents.shape[-2] * latents.shape[-1]
        _check_memory(memory, config, latents.shape[0], tokens)

    def temporal_fn(b, q, k, v):
        q, k = rope_apply(q, k, positions, theta)
        if mode != "infini":
            return _causal_attention(q, k, v)
        gate = params[f"block{b}.temporal.gate"].reshape(config.heads, 1, 1, 1)
        if memory is None:
            out, _, _ = infini_drive(
                q, k, v, gate, window=config.window, stride=config.window // 2
            )
            return out
        a_local = local_window_attention(q, k, v, query_offset=0)
        a_mem = infini_retrieve(q, *memory[b])
        return infini_combine(a_mem, a_local, gate)

    out = _trunk(params, config, latents, conditions, temporal_fn)
    return out if batched else out.reshape(*out.shape[1:])


def fresh_memory(config, tokens, batch=1, dtype=np.float32):
    """Empty per-block compressive memory for windowed infini inference."""
    hd = config.head_dim
    return [
        empty_memory(hd, hd, lead=(batch, config.heads, tokens), dtype=dtype)
        for _ in range(config.depth)
    ]


def infini_ingest(params, config, latents, timesteps, conditions, positions, memory, count=None):
    """Fold the oldest `count` frames of a window into each block's memory.

    Runs the trunk once with the given memory fixed, captures every block's
    rotated keys and values for the first `count` frames, and returns a new
    memory list updated with them. The returned tensors are detached
    constants: ingestion is an inference-time operation and gradients never
    thread across windows.
    """
    latents_arr = np.asarray(latents)
    length = latents_arr.shape[-4]
    if count is None:
        count = config.window // 2
    if not 0 < count < length:
        raise ConfigError(f"cannot ingest {count} of {length} frames")
    latents, conditions, positions, _ = _normalize_inputs(
        config, latents, timesteps, conditions, positions
    )
    tokens = latents.shape[-2] * latents.shape[-1]
    _check_memory(memory, config, latents.shape[0], tokens)
    theta = rope_angles(config.head_dim, config.rope_base)

    updated = []

    def temporal_fn(b, q, k, v):
        q, k = rope_apply(q, k, positions, theta)
        frame_axis = k.ndim - 2
        head_k = narrow(k, frame_axis, 0, count)
        head_v = narrow(v, frame_axis, 0, count)
        m_new, n_new = infini_update(*memory[b], head_k, head_v)
        updated.append((as_tensor(m_new.data.copy()), as_tensor(n_new.data.copy())))
        gate = params[f"block{b}.temporal.gate"].reshape(config.heads, 1, 1, 1)
        a_local = local_window_attention(q, k, v, query_offset=0)
        a_mem = infini_retrieve(q, *memory[b])
        return infini_combine(a_mem, a_local, gate)

    _trunk(params, config, latents, conditions, temporal_fn)
    return updated
