"""The training loop for all variants.

Determinism contract: the run rng is seeded from the config and consumed in
a fixed order. Parameter init draws first (in param_shapes order; the yarn
variant loads instead), then per step: for each batch element a trajectory
index, a window start, the history variant's segment draws, and the
element's timesteps; finally one noise draw for the whole batch. Equal
configs over equal data therefore give bit-identical checkpoints.
"""

from __future__ import annotations

import math
import os
import time

import numpy as np

from ..context_extension import YarnParams
from ..diffusion_core import df_loss, make_schedule, noisify
from ..errors import ConfigError, NumericError
from ..gridworld import load_dataset
from ..numerics import Adam
from ..world_model import embed_condition, forward, init_params, load_checkpoint, save_checkpoint
from .batches import min_trajectory_length, sample_batch
from .config import TrainLogRecord, write_log


def load_training_data(path):
    """Trajectories from a .wmt file or a directory of them, sorted by name."""
    if os.path.isdir(path):
        names = sorted(n for n in os.listdir(path) if n.endswith(".wmt"))
        if not names:
            raise ConfigError(f"no .wmt files under {path}")
        out = []
        for name in names:
            trajectories, _ = load_dataset(os.path.join(path, name))
            out.extend(trajectories)
        return out
    trajectories, _ = load_dataset(path)
    return trajectories


def yarn_params_for(config):
    return YarnParams(
        dim=config.model.head_dim,
        stretch=config.yarn_stretch,
        context=float(config.model.window),
        base=config.model.rope_base,
    )


def prepare_model(config, rng):
    """Initial parameters: fresh draws, or the checkpoint yarn resumes from."""
    if config.variant == "yarn":
        params, model_config, _ = load_checkpoint(config.init_checkpoint)
        if model_config != config.model:
            raise ConfigError(
                f"init checkpoint model {model_config.to_dict()} does not match "
                f"configured model {config.model.to_dict()}"
            )
        return params
    return init_params(config.model, rng)


def step_loss(params, config, batch, eps, schedule):
    """Masked denoising loss for one batch; returns the loss Tensor."""
    z_t = noisify(batch.latents, batch.timesteps, eps, schedule)
    conditions = embed_condition(
        params,
        config.model,
        batch.actions,
        batch.states,
        batch.timesteps,
        null_mask=batch.action_null,
        state_mask=batch.state_mask,
    )
    mode = "vanilla"
    yarn = None
    if config.variant == "yarn":
        mode = "yarn"
        yarn = yarn_params_for(config)
    elif config.variant == "infini":
        mode = "infini"
    eps_hat = forward(
        params, config.model, z_t, batch.timesteps, conditions, batch.positions, mode=mode, yarn=yarn
    )
    return df_loss(eps_hat, eps, batch.loss_mask)


def train(config, trajectories=None):
    """Run training; returns (params, records) and writes configured outputs.

    A non-finite loss aborts with NumericError after flushing the log with
    a diagnostic final record.
    """
    if trajectories is None:
        trajectories = load_training_data(config.dataset)
    if not trajectories:
        raise ConfigError("no trajectories to train on")
    needed = min_trajectory_length(config)
    for i, traj in enumerate(trajectories):
        if len(traj) < needed:
            raise ConfigError(
                f"trajectory {i} has {len(traj)} frames, variant {config.variant} needs {needed}"
            )

    rng = np.random.default_rng(config.seed)
    schedule = make_schedule(config.diffusion_steps, config.beta_start, config.beta_end)
    params = prepare_model(config, rng)
    overrides = None
    if config.variant == "infini":
        overrides = {name: config.gate_lr for name in params if name.endswith(".gate")}
    optimizer = Adam(params, lr=config.learning_rate, lr_overrides=overrides)

    records = []
    for step in range(config.steps):
        began = time.perf_counter()
        batch = sample_batch(config, trajectories, rng, schedule)
        eps = rng.standard_normal(batch.latents.shape).astype(np.float32)
        loss = step_loss(params, config, batch, eps, schedule)
        loss_value = float(loss.data)
        if not math.isfinite(loss_value):
            records.append(TrainLogRecord(step=step, loss=loss_value, grad_norm=float("nan"), seconds=0.0))
            if config.log:
                write_log(records, config.log)
            raise NumericError(f"non-finite loss {loss_value} at step {step}")
        optimizer.zero_grad()
        loss.backward()
        grad_norm = optimizer.grad_norm()
        optimizer.step()
        records.append(
            TrainLogRecord(
                step=step,
                loss=loss_value,
                grad_norm=grad_norm,
                seconds=time.perf_counter() - began,
            )
        )

    if config.checkpoint:
        metadata = {
            "variant": config.variant,
            "seed": config.seed,
            "steps": config.steps,
            "final_loss": records[-1].loss if records else None,
            "train_config": config.to_dict(),
        }
        save_checkpoint(params, config.model, config.checkpoint, metadata=metadata)
    if config.log:
        write_log(records, config.log)
    return params, records
