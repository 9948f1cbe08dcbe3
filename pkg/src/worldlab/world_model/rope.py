"""Rotary position embeddings for the temporal axis and the 2-D token grid.

Rotation uses the split-half convention: dimension d pairs with dimension
d + D/2 and both rotate by angle position * theta_d. Attention scores between
rotated vectors then depend on positions only through their difference.
"""

import numpy as np

from ..errors import ConfigError, ShapeError
from ..numerics import as_tensor, concat, narrow


def rope_angles(dim, base):
    """Per-pair rotation angles theta_d = base^(-2d/dim) for d in [0, dim/2)."""
    if dim < 2 or dim % 2 != 0:
        raise ConfigError(f"rotary dimension must be a positive even number, got {dim}")
    d = np.arange(dim // 2, dtype=np.float64)
    return base ** (-2.0 * d / dim)


def _rotation_tables(positions, theta, dtype):
    positions = np.asarray(positions)
    if positions.ndim != 1:
        raise ShapeError(f"positions must be one-dimensional, got shape {positions.shape}")
    angles = positions.astype(np.float64)[:, None] * np.asarray(theta, dtype=np.float64)[None, :]
    return np.cos(angles).astype(dtype), np.sin(angles).astype(dtype)


def _rotate(x, cos, sin):
    dim = x.shape[-1]
    lo = narrow(x, x.ndim - 1, 0, dim // 2)
    hi = narrow(x, x.ndim - 1, dim // 2, dim // 2)
    return concat([lo * cos - hi * sin, lo * sin + hi * cos], axis=x.ndim - 1)


def rope_apply(q, k, positions, theta):
    """Rotate (q, k) along their last dimension by per-frame angles.

    `q` and `k` have shape (..., L, dim) with one integer position per frame;
    `theta` holds dim/2 per-pair angles. Positions may be negative.
    """
    q, k = as_tensor(q), as_tensor(k)
    dim = q.shape[-1]
    if dim % 2 != 0:
        raise ConfigError(f"rotary dimension must be even, got {dim}")
    if k.shape[-1] != dim:
        raise ShapeError(f"q and k disagree on head dim: {dim} vs {k.shape[-1]}")
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (dim // 2,):
        raise ShapeError(f"theta must have shape ({dim // 2},), got {theta.shape}")
    positions = np.asarray(positions)
    if positions.shape != (q.shape[-2],):
        raise ShapeError(
            f"expected {q.shape[-2]} positions for {q.shape[-2]} frames, got shape {positions.shape}"
        )
    cos, sin = _rotation_tables(positions, theta, q.data.dtype)
    return _rotate(q, cos, sin), _rotate(k, cos, sin)


def grid_positions(grid_h, grid_w):
    """Row and column index per token of a grid flattened in row-major order."""
    rows = np.repeat(np.arange(grid_h, dtype=np.int64), grid_w)
    cols = np.tile(np.arange(grid_w, dtype=np.int64), grid_h)
    return rows, cols


def spatial_rope_apply(q, k, grid_h, grid_w, theta_axis):
    """Axis-split rotary over a token grid.

    The head dimension splits in half; the first half rotates by row index
    and the second by column index, each with `theta_axis` pair angles
    (dim/4 of them). `q` and `k` have shape (..., grid_h*grid_w, dim).
    """
    q, k = as_tensor(q), as_tensor(k)
    dim = q.shape[-1]
    if dim % 4 != 0:
        raise ConfigError(f"axis-split rotary needs head dim divisible by 4, got {dim}")
    if q.shape[-2] != grid_h * grid_w:
        raise ShapeError(
            f"expected {grid_h * grid_w} grid tokens, got {q.shape[-2]}"
        )
    rows, cols = grid_positions(grid_h, grid_w)
    half = dim // 2
    axis = q.ndim - 1
    q_row, q_col = narrow(q, axis, 0, half), narrow(q, axis, half, half)
    k_row, k_col = narrow(k, axis, 0, half), narrow(k, axis, half, half)
    q_row, k_row = rope_apply(q_row, k_row, rows, theta_axis)
    q_col, k_col = rope_apply(q_col, k_col, cols, theta_axis)
    return concat([q_row, q_col], axis=axis), concat([k_row, k_col], axis=axis)
