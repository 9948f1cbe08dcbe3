"""Lossless patchify codec between uint8 frames and float latents, plus
global-state normalization for conditioning.

The codec is a pure rearrangement: p x p pixel patches become channels, pixel
values scale to [0, 1]. decode(encode(frame)) reproduces the frame exactly,
so pixel-space metrics measure the model and nothing else.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, ShapeError

# divisors bringing toy-world coordinate excursions into roughly [-1, 1]
POSITION_SCALE = 10.0
YAW_SCALE = 180.0


def encode(frames, patch=4):
    """Frames (..., H, W, 3) uint8 -> latents (..., 3*p*p, H/p, W/p) float32."""
    frames = np.asarray(frames)
    if frames.shape[-1] != 3 or frames.ndim < 3:
        raise ShapeError(f"encode expects (..., H, W, 3), got {frames.shape}")
    h, w = frames.shape[-3], frames.shape[-2]
    if h % patch or w % patch:
        raise ConfigError(f"frame {h}x{w} not divisible by patch {patch}")
    gh, gw = h // patch, w // patch
    lead = frames.shape[:-3]
    x = frames.astype(np.float32) / np.float32(255.0)
    x = x.reshape(lead + (gh, patch, gw, patch, 3))
    order = tuple(range(len(lead))) + tuple(len(lead) + i for i in (0, 2, 1, 3, 4))
    x = x.transpose(order)  # (..., gh, gw, p, p, 3)
    x = x.reshape(lead + (gh, gw, patch * patch * 3))
    last = len(lead)
    return np.ascontiguousarray(np.moveaxis(x, -1, last))  # (..., C, gh, gw)


def decode(latents, patch=4):
    """Latents (..., 3*p*p, gh, gw) -> frames (..., gh*p, gw*p, 3) uint8.

    Values are clamped to [0, 1] and quantized by round-half-up.
    """
    latents = np.asarray(latents)
    if latents.ndim < 3 or latents.shape[-3] != 3 * patch * patch:
        raise ShapeError(f"decode expects (..., {3 * patch * patch}, gh, gw) for patch {patch}, got {latents.shape}")
    gh, gw = latents.shape[-2], latents.shape[-1]
    lead = latents.shape[:-3]
    x = np.moveaxis(latents, len(lead), -1)  # (..., gh, gw, C)
    x = x.reshape(lead + (gh, gw, patch, patch, 3))
    order = tuple(range(len(lead))) + tuple(len(lead) + i for i in (0, 2, 1, 3, 4))
    x = x.transpose(order)  # (..., gh, p, gw, p, 3)
    x = x.reshape(lead + (gh * patch, gw * patch, 3))
    x = np.clip(x, 0.0, 1.0)
    return np.floor(x * np.float32(255.0) + np.float32(0.5)).astype(np.uint8)


def normalize_states(states):
    """States (L, 4) [x, y, z, yaw] -> (L, 4) float32 relative to states[0].

    Positions shift by the first state and scale by 1/10; yaw becomes the
    wrapped signed difference in (-180, 180] scaled by 1/180. The first output
    row is always the zero vector.
    """
    states = np.asarray(states, dtype=np.float32)
    if states.ndim != 2 or states.shape[1] != 4 or states.shape[0] == 0:
        raise ShapeError(f"normalize_states expects non-empty (L, 4), got {states.shape}")
    out = np.empty_like(states)
    out[:, :3] = (states[:, :3] - states[0, :3]) / np.float32(POSITION_SCALE)
    d = np.mod(states[:, 3] - states[0, 3], np.float32(360.0))
    d = np.where(d > 180.0, d - np.float32(360.0), d)
    out[:, 3] = d / np.float32(YAW_SCALE)
    out[0] = 0.0
    return out
