"""A small conv net that predicts per-step camera state deltas.

Input is one frame plus the action taken on it; output is the resulting
[dx, dy, dz, dyaw / 90] with yaw wrapped to (-180, 180]. The frame matters
because collisions and jump height depend on the surroundings, not just the
action. Evaluation integrates these deltas over generated video to measure
whether the model's imagery stays consistent with its action stream.
"""

from __future__ import annotations

import numpy as np

from ..errors import CheckpointError, ShapeError
from ..numerics import Adam, as_tensor, concat, conv2d, parameter, relu
from ..tensor_bag import load_tensor_bag, save_tensor_bag
from .config import TrainLogRecord

YAW_TARGET_SCALE = 90.0


def init_pose_params(rng):
    def normal(name, shape, scale):
        return parameter(name, rng.normal(0.0, scale, size=shape).astype(np.float32))

    def zeros(name, shape):
        return parameter(name, np.zeros(shape, dtype=np.float32))

    return {
        "conv1.w": normal("conv1.w", (8, 3, 3, 3), 0.05),
        "conv1.b": zeros("conv1.b", (8,)),
        "conv2.w": normal("conv2.w", (16, 8, 3, 3), 0.05),
        "conv2.b": zeros("conv2.b", (16,)),
        "dense.w": normal("dense.w", (16 * 8 * 8 + 4, 64), 0.02),
        "dense.b": zeros("dense.b", (64,)),
        "out.w": zeros("out.w", (64, 4)),
        "out.b": zeros("out.b", (4,)),
    }


def pose_forward(params, frames, actions):
    """Predict (B, 4) scaled deltas from frames (B, 32, 32, 3) and actions (B, 4)."""
    frames = np.asarray(frames)
    actions = np.asarray(actions)
    if frames.ndim != 4 or frames.shape[1:] != (32, 32, 3):
        raise ShapeError(f"frames must be (B, 32, 32, 3), got {frames.shape}")
    if actions.shape != (frames.shape[0], 4):
        raise ShapeError(f"actions must be (B, 4), got {actions.shape}")
    x = frames.astype(np.float32) / np.float32(255.0) - np.float32(0.5)
    x = as_tensor(x.transpose(0, 3, 1, 2))
    h = relu(conv2d(x, params["conv1.w"], params["conv1.b"], stride=2, padding=1))
    h = relu(conv2d(h, params["conv2.w"], params["conv2.b"], stride=2, padding=1))
    flat = h.reshape(frames.shape[0], 16 * 8 * 8)
    flat = concat([flat, as_tensor(actions.astype(np.float32))], axis=1)
    hidden = relu(flat @ params["dense.w"] + params["dense.b"])
    return hidden @ params["out.w"] + params["out.b"]


def pose_targets(traj):
    """(frames, actions, targets) for every consecutive pair in a trajectory."""
    states = traj.states.astype(np.float32)
    deltas = states[1:] - states[:-1]
    dyaw = np.mod(states[1:, 3] - states[:-1, 3], np.float32(360.0))
    dyaw = np.where(dyaw > 180.0, dyaw - np.float32(360.0), dyaw)
    targets = deltas.copy()
    targets[:, 3] = dyaw / np.float32(YAW_TARGET_SCALE)
    return traj.frames[:-1], traj.actions[:-1], targets


def stack_pose_data(trajectories):
    frames, actions, targets = zip(*(pose_targets(t) for t in trajectories))
    return (
        np.concatenate(frames),
        np.concatenate(actions).astype(np.float32),
        np.concatenate(targets),
    )


def train_pose(trajectories, steps=1500, batch_size=64, lr=1e-3, seed=0):
    """Fit the predictor by mean squared error over random pairs."""
    frames, actions, targets = stack_pose_data(trajectories)
    rng = np.random.default_rng(seed)
    params = init_pose_params(rng)
    optimizer = Adam(params, lr=lr)
    records = []
    for step in range(steps):
        idx = rng.integers(len(frames), size=batch_size)
        pred = pose_forward(params, frames[idx], actions[idx])
        err = pred - as_tensor(targets[idx])
        loss = (err * err).mean()
        optimizer.zero_grad()
        loss.backward()
        grad_norm = optimizer.grad_norm()
        optimizer.step()
        records.append(
            TrainLogRecord(step=step, loss=float(loss.data), grad_norm=grad_norm, seconds=0.0)
        )
    return params, records


def predict_deltas(params, frames, actions):
    """Raw-unit deltas (B, 4): positions as-is, yaw unscaled back to degrees."""
    out = pose_forward(params, frames, np.asarray(actions, dtype=np.float32)).data.copy()
    out[:, 3] *= YAW_TARGET_SCALE
    return out


def pose_mae(params, trajectories, limit=4096, seed=0):
    """Mean absolute error on scaled targets over (up to) ``limit`` pairs."""
    frames, actions, targets = stack_pose_data(trajectories)
    if len(frames) > limit:
        idx = np.random.default_rng(seed).choice(len(frames), size=limit, replace=False)
        frames, actions, targets = frames[idx], actions[idx], targets[idx]
    total = 0.0
    for lo in range(0, len(frames), 256):
        pred = pose_forward(params, frames[lo : lo + 256], actions[lo : lo + 256]).data
        total += float(np.abs(pred - targets[lo : lo + 256]).sum())
    return total / (len(frames) * 4)


def save_pose(params, path, metadata=None):
    meta = {"kind": "pose"}
    meta.update(metadata or {})
    save_tensor_bag({name: p.data for name, p in params.items()}, path, metadata=meta)


def load_pose(path):
    tensors, metadata = load_tensor_bag(path)
    if metadata.get("kind") != "pose":
        raise CheckpointError(f"expected a pose checkpoint, got kind {metadata.get('kind')!r}")
    return {name: parameter(name, arr) for name, arr in tensors.items()}, metadata
