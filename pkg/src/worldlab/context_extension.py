"""Long-context baselines: frequency warping for temporal rotary embeddings
and a compressive-memory attention state machine driven over overlapping
segments.

The warping is pure table math (numpy). The memory ops build on the autodiff
Tensor so the per-head gate and the projections behind k/v can train.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, ShapeError
from .numerics import as_tensor, concat, elu_plus_one, masked_fill, narrow, sigmoid, softmax

DENOM_GUARD = 1e-6


@dataclass(frozen=True)
class YarnParams:
    """Warp configuration: stretch factor, original context length, ramp
    bounds on the context-to-wavelength ratio, rotary base, head dimension.
    """

    dim: int
    stretch: float = 4.0
    context: float = 20.0
    r_low: float = 1.0
    r_high: float = 32.0
    base: float = 10000.0

    def __post_init__(self):
        if self.stretch <= 1.0:
            raise ConfigError(f"stretch must exceed 1, got {self.stretch}")
        if not (0.0 <= self.r_low < self.r_high):
            raise ConfigError(f"ramp bounds need 0 <= r_low < r_high, got {self.r_low}, {self.r_high}")
        if self.dim <= 2 or self.dim % 2:
            raise ConfigError(f"head dimension must be even and > 2, got {self.dim}")
        if self.context <= 0 or self.base <= 1.0:
            raise ConfigError(f"need context > 0 and base > 1, got {self.context}, {self.base}")

    def adjusted_base(self):
        return self.base * self.stretch ** (self.dim / (self.dim - 2))


def yarn_frequencies(theta, params):
    """Warp per-dimension rotary angles theta (dim/2,).

    Wavelengths come from the adjusted base: lambda_d = 2*pi*(b')^(2d/D).
    The ramp gamma rises linearly in r_d = context/lambda_d between the
    bounds; the output interpolates between theta/stretch (interpolation
    branch) and theta (extrapolation branch).
    """
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (params.dim // 2,):
        raise ShapeError(f"theta must have shape ({params.dim // 2},), got {theta.shape}")
    if np.any(theta <= 0):
        raise DomainError("rotary angles must be positive")
    d = np.arange(params.dim // 2, dtype=np.float64)
    lam = 2.0 * math.pi * params.adjusted_base() ** (2.0 * d / params.dim)
    r = params.context / lam
    gamma = np.clip((r - params.r_low) / (params.r_high - params.r_low), 0.0, 1.0)
    return (1.0 - gamma) * (theta / params.stretch) + gamma * theta


def _guarded_rows(numer, denom):
    """numer / denom with rows zeroed wherever denom < DENOM_GUARD."""
    empty = denom.data < DENOM_GUARD
    safe = masked_fill(denom, empty, 1.0)
    out = numer / safe
    wide = np.broadcast_to(empty, out.data.shape)
    return masked_fill(out, wide, 0.0)


def infini_retrieve(q, m_prev, n_prev):
    """Memory read A_mem = sigma(q) M / sigma(q) n with guarded division.

    q (..., N, d_k), m_prev (..., d_k, d_v), n_prev (..., d_k, 1).
    Rows with (near-)empty memory return exact zeros.
    """
    q = as_tensor(q)
    sig = elu_plus_one(q)
    numer = sig @ as_tensor(m_prev)
    denom = sig @ as_tensor(n_prev)
    return _guarded_rows(numer, denom)


def infini_update(m_prev, n_prev, k, v):
    """Delta-rule write: M += sigma(k)^T (v - retrieve(k)), n += sigma(k)^T 1."""
    k = as_tensor(k)
    v = as_tensor(v)
    m_prev = as_tensor(m_prev)
    n_prev = as_tensor(n_prev)
    if k.data.shape[:-1] != v.data.shape[:-1]:
        raise ShapeError(f"k rows {k.data.shape} do not match v rows {v.data.shape}")
    sig = elu_plus_one(k)
    redundant = _guarded_rows(sig @ m_prev, sig @ n_prev)
    sig_t = sig.swapaxes(-1, -2)
    m_new = m_prev + sig_t @ (v - redundant)
    ones = np.ones(k.data.shape[:-1] + (1,), dtype=k.data.dtype)
    n_new = n_prev + sig_t @ as_tensor(ones)
    return m_new, n_new


def infini_combine(a_mem, a_local, beta):
    """Learned convex gate: sigmoid(beta) A_mem + (1 - sigmoid(beta)) A_local."""
    gate = sigmoid(as_tensor(beta))
    return gate * as_tensor(a_mem) + (1.0 - gate) * as_tensor(a_local)


def empty_memory(d_k, d_v, lead=(), dtype=np.float32):
    """Zero-initialized memory pair (M, n) with optional leading axes."""
    m = as_tensor(np.zeros(lead + (d_k, d_v), dtype=dtype))
    n = as_tensor(np.zeros(lead + (d_k, 1), dtype=dtype))
    return m, n


def local_window_attention(q, k, v, query_offset):
    """Causal softmax attention of queries (..., Q, d) over a window's
    keys/values (..., W, d); query i sits at window position query_offset+i
    and attends to positions <= its own.
    """
    q = as_tensor(q)
    k = as_tensor(k)
    v = as_tensor(v)
    d_k = q.data.shape[-1]
    scores = (q @ k.swapaxes(-1, -2)) * (1.0 / math.sqrt(d_k))
    q_len = q.data.shape[-2]
    w_len = k.data.shape[-2]
    key_pos = np.arange(w_len)
    query_pos = query_offset + np.arange(q_len)
    blocked = key_pos[None, :] > query_pos[:, None]
    scores = masked_fill(scores, np.broadcast_to(blocked, scores.data.shape), -np.inf)
    return softmax(scores, axis=-1) @ v


def infini_drive(q, k, v, beta, window=20, stride=10):
    """Slide over a sequence, threading compressive memory across slides.

    Per slide covering frames [lo, lo+window): the trailing stride frames'
    queries combine local causal attention over the window with retrieval
    from the memory of everything before the window; afterwards the leading
    stride frames' (k, v) are written into memory. Outputs cover frames
    [window-stride, last slide end); earlier frames return zeros.

    q, k, v: (..., L, d) Tensors or arrays. Returns (outputs, (M, n), slides).
    """
    q = as_tensor(q)
    k = as_tensor(k)
    v = as_tensor(v)
    length = q.data.shape[-2]
    if length < window:
        raise ShapeError(f"sequence length {length} is shorter than the window {window}")
    if window <= stride:
        raise ConfigError(f"window {window} must exceed stride {stride}")
    lead = q.data.shape[:-2]
    d_k = k.data.shape[-1]
    d_v = v.data.shape[-1]
    mem_m, mem_n = empty_memory(d_k, d_v, lead=lead, dtype=q.data.dtype)

    head = as_tensor(np.zeros(lead + (window - stride, d_v), dtype=q.data.dtype))
    pieces = [head]
    slides = 0
    lo = 0
    axis = q.data.ndim - 2
    while lo + window <= length:
        k_win = narrow(k, axis, lo, window)
        v_win = narrow(v, axis, lo, window)
        q_tail = narrow(q, axis, lo + window - stride, stride)
        a_local = local_window_attention(q_tail, k_win, v_win, query_offset=window - stride)
        a_mem = infini_retrieve(q_tail, mem_m, mem_n)
        pieces.append(infini_combine(a_mem, a_local, beta))
        k_head = narrow(k, axis, lo, stride)
        v_head = narrow(v, axis, lo, stride)
        mem_m, mem_n = infini_update(mem_m, mem_n, k_head, v_head)
        slides += 1
        lo += stride

    outputs = concat(pieces, axis=axis)
    return outputs, (mem_m, mem_n), slides
