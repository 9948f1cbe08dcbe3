"""DDPM noise schedule, forward noising, per-frame timestep sampling, the
ancestral reverse step, and the masked per-frame loss.

Timesteps are 1-indexed: t ranges over [1, T], with t=0 meaning clean. The
tables store step t at index t-1; lookups go through helpers that handle 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, ShapeError
from .numerics import Tensor, as_tensor

DEFAULT_T = 50
DEFAULT_BETA_1 = 1e-4
DEFAULT_BETA_T = 0.02


@dataclass(frozen=True)
class NoiseSchedule:
    """Beta schedule with derived alpha, alpha-bar, and sigma tables."""

    T: int
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray
    sigmas: np.ndarray

    def beta(self, t):
        return float(self.betas[t - 1])

    def alpha(self, t):
        return float(self.alphas[t - 1])

    def alpha_bar(self, t):
        """alpha-bar at step t, with t=0 meaning the clean limit 1.0."""
        return 1.0 if t == 0 else float(self.alpha_bars[t - 1])

    def alpha_bar_vector(self, t):
        """Vectorized alpha-bar lookup for integer arrays with 0 allowed."""
        table = np.concatenate([[1.0], self.alpha_bars])
        return table[np.asarray(t, dtype=np.int64)]

    def sigma(self, t):
        """Reverse-step noise scale; the final step (t=1) is deterministic."""
        return 0.0 if t == 1 else float(self.sigmas[t - 1])

    def retrieved_low_cap(self):
        """Upper end of the low-noise band used for retrieved frames."""
        return math.ceil(self.T / 5)


def make_schedule(T=DEFAULT_T, beta_1=DEFAULT_BETA_1, beta_T=DEFAULT_BETA_T, shape="linear"):
    """Linear beta schedule with derived tables."""
    if shape != "linear":
        raise ConfigError(f"unsupported schedule shape {shape!r}")
    if T < 2:
        raise ConfigError(f"schedule needs T >= 2, got {T}")
    if not (0.0 < beta_1 <= beta_T < 1.0):
        raise ConfigError(f"betas must satisfy 0 < beta_1 <= beta_T < 1, got {beta_1}, {beta_T}")
    betas = np.linspace(beta_1, beta_T, T, dtype=np.float64)
    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)
    sigmas = np.sqrt(betas)
    return NoiseSchedule(T=T, betas=betas, alphas=alphas, alpha_bars=alpha_bars, sigmas=sigmas)


def noisify(z0, t, eps, schedule):
    """Closed-form forward noising z_t = sqrt(abar_t) z0 + sqrt(1-abar_t) eps.

    t may be a scalar in [0, T] or an integer array broadcast over leading
    axes of z0 (per-frame timesteps). t=0 entries pass through unchanged.
    """
    z0 = np.asarray(z0)
    eps = np.asarray(eps)
    if eps.shape != z0.shape:
        raise ShapeError(f"eps shape {eps.shape} does not match z0 shape {z0.shape}")
    t_arr = np.asarray(t, dtype=np.int64)
    if t_arr.min() < 0 or t_arr.max() > schedule.T:
        raise DomainError(f"timesteps must lie in [0, {schedule.T}], got range [{t_arr.min()}, {t_arr.max()}]")
    if t_arr.ndim == 0:
        abar = schedule.alpha_bar(int(t_arr))
        scale_z = z0.dtype.type(math.sqrt(abar))
        scale_e = z0.dtype.type(math.sqrt(1.0 - abar))
        return scale_z * z0 + scale_e * eps
    abar = schedule.alpha_bar_vector(t_arr)
    expand = abar.reshape(t_arr.shape + (1,) * (z0.ndim - t_arr.ndim))
    scale_z = np.sqrt(expand).astype(z0.dtype)
    scale_e = np.sqrt(1.0 - expand).astype(z0.dtype)
    return scale_z * z0 + scale_e * eps


def sample_timesteps(L, mode, rng, schedule):
    """Per-frame timestep vector: mode "independent" draws uniformly from
    {1..T} per frame; "retrieved_low" draws from {0..ceil(T/5)} (the low
    band applied to retrieved frames during training); "mixed" draws each
    frame from {1..ceil(T/5)} with probability 1/2 and from {1..T}
    otherwise, so heavily noised frames usually sit among near-clean
    neighbours the way a frame being generated does at rollout time. The
    mixed low band starts at 1 because these frames carry loss and need a
    noise target.
    """
    if L < 1:
        raise ConfigError(f"timestep vector length must be >= 1, got {L}")
    if mode == "independent":
        return rng.integers(1, schedule.T + 1, size=L)
    if mode == "retrieved_low":
        return rng.integers(0, schedule.retrieved_low_cap() + 1, size=L)
    if mode == "mixed":
        low = rng.integers(1, schedule.retrieved_low_cap() + 1, size=L)
        full = rng.integers(1, schedule.T + 1, size=L)
        return np.where(rng.random(L) < 0.5, low, full)
    raise ConfigError(f"unknown timestep mode {mode!r}")


def ddpm_step(z_t, eps_hat, t, schedule, rng=None):
    """One ancestral reverse step from t to t-1.

    z_{t-1} = (z_t - (beta_t/sqrt(1-abar_t)) eps_hat)/sqrt(alpha_t) + sigma_t eps,
    with sigma forced to 0 at t=1, so rng is consulted only for t > 1.
    """
    z_t = np.asarray(z_t)
    eps_hat = np.asarray(eps_hat)
    if eps_hat.shape != z_t.shape:
        raise ShapeError(f"eps_hat shape {eps_hat.shape} does not match z_t shape {z_t.shape}")
    if not (1 <= t <= schedule.T):
        raise DomainError(f"reverse step needs t in [1, {schedule.T}], got {t}")
    beta = schedule.beta(t)
    abar = schedule.alpha_bar(t)
    coeff = z_t.dtype.type(beta / math.sqrt(1.0 - abar))
    inv_sqrt_alpha = z_t.dtype.type(1.0 / math.sqrt(schedule.alpha(t)))
    mean = (z_t - coeff * eps_hat) * inv_sqrt_alpha
    sigma = schedule.sigma(t)
    if sigma == 0.0:
        return mean
    noise = rng.standard_normal(z_t.shape).astype(z_t.dtype)
    return mean + z_t.dtype.type(sigma) * noise


def df_loss(eps_hat, eps, mask):
    """Masked per-frame diffusion loss.

    Per frame, the mean squared error over latent elements; the scalar loss
    is the mean over frames with mask 1. Masked frames contribute exactly
    zero, including their gradients. Accepts Tensors or arrays; returns a
    Tensor so the result can join a training graph.
    """
    eps_hat = eps_hat if isinstance(eps_hat, Tensor) else as_tensor(eps_hat)
    eps = eps.data if isinstance(eps, Tensor) else np.asarray(eps)
    mask = np.asarray(mask)
    if eps.shape != eps_hat.data.shape:
        raise ShapeError(f"eps shape {eps.shape} does not match eps_hat shape {eps_hat.data.shape}")
    if mask.shape != eps_hat.data.shape[: mask.ndim]:
        raise ShapeError(f"mask shape {mask.shape} does not prefix {eps_hat.data.shape}")
    count = float(mask.sum())
    if count == 0:
        raise DomainError("mask selects no frames")
    diff = eps_hat - eps
    per_frame = (diff * diff).mean(axis=tuple(range(mask.ndim, eps_hat.data.ndim)))
    weights = (mask / count).astype(eps_hat.data.dtype)
    return (per_frame * weights).sum()
