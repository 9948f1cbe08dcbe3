"""A norm-free residual conv net scoring frames as real or generated.

Four residual blocks around two strided downsampling convs, global average
pooling, and a linear head producing one logit per frame. Its held-out
accuracy after training on real versus generated frames is the decoupled
quality score: near 0.5 accuracy means generations are indistinguishable.
"""

from __future__ import annotations

import numpy as np

from ..errors import CheckpointError, ShapeError
from ..numerics import Adam, as_tensor, conv2d, parameter, relu, sigmoid, softplus
from ..tensor_bag import load_tensor_bag, save_tensor_bag
from .config import TrainLogRecord


def init_disc_params(rng):
    def normal(name, shape, scale=0.05):
        return parameter(name, rng.normal(0.0, scale, size=shape).astype(np.float32))

    def zeros(name, shape):
        return parameter(name, np.zeros(shape, dtype=np.float32))

    params = {
        "stem.w": normal("stem.w", (16, 3, 3, 3)),
        "stem.b": zeros("stem.b", (16,)),
        "down.w": normal("down.w", (32, 16, 3, 3)),
        "down.b": zeros("down.b", (32,)),
        "head.w": zeros("head.w", (32, 1)),
        "head.b": zeros("head.b", (1,)),
    }
    for i, channels in ((1, 16), (2, 16), (3, 32), (4, 32)):
        for conv in ("c1", "c2"):
            params[f"rb{i}.{conv}.w"] = normal(f"rb{i}.{conv}.w", (channels, channels, 3, 3))
            params[f"rb{i}.{conv}.b"] = zeros(f"rb{i}.{conv}.b", (channels,))
    return params


def _res_block(params, h, i):
    inner = conv2d(relu(h), params[f"rb{i}.c1.w"], params[f"rb{i}.c1.b"], padding=1)
    inner = conv2d(relu(inner), params[f"rb{i}.c2.w"], params[f"rb{i}.c2.b"], padding=1)
    return h + inner


def disc_forward(params, frames):
    """Logits (B,) for frames (B, 32, 32, 3) uint8 or float in [0, 255]."""
    frames = np.asarray(frames)
    if frames.ndim != 4 or frames.shape[1:] != (32, 32, 3):
        raise ShapeError(f"frames must be (B, 32, 32, 3), got {frames.shape}")
    x = frames.astype(np.float32) / np.float32(255.0) - np.float32(0.5)
    h = conv2d(as_tensor(x.transpose(0, 3, 1, 2)), params["stem.w"], params["stem.b"], stride=2, padding=1)
    h = _res_block(params, h, 1)
    h = _res_block(params, h, 2)
    h = conv2d(h, params["down.w"], params["down.b"], stride=2, padding=1)
    h = _res_block(params, h, 3)
    h = _res_block(params, h, 4)
    pooled = h.reshape(frames.shape[0], 32, 8 * 8).mean(axis=2)
    logits = pooled @ params["head.w"] + params["head.b"]
    return logits.reshape(frames.shape[0])


def bce_with_logits(logits, labels):
    """Mean binary cross-entropy, computed as softplus(x) - x * y for stability."""
    labels = as_tensor(np.asarray(labels, dtype=np.float32))
    return (softplus(logits) - logits * labels).mean()


def train_discriminator(real_frames, generated_frames, steps=400, batch_size=16, lr=1e-3, seed=0):
    """Fit real-vs-generated; each step draws batch_size of each class."""
    real_frames = np.asarray(real_frames)
    generated_frames = np.asarray(generated_frames)
    rng = np.random.default_rng(seed)
    params = init_disc_params(rng)
    optimizer = Adam(params, lr=lr)
    labels = np.concatenate(
        [np.ones(batch_size, dtype=np.float32), np.zeros(batch_size, dtype=np.float32)]
    )
    records = []
    for step in range(steps):
        idx_real = rng.integers(len(real_frames), size=batch_size)
        idx_fake = rng.integers(len(generated_frames), size=batch_size)
        batch = np.concatenate([real_frames[idx_real], generated_frames[idx_fake]])
        loss = bce_with_logits(disc_forward(params, batch), labels)
        optimizer.zero_grad()
        loss.backward()
        grad_norm = optimizer.grad_norm()
        optimizer.step()
        records.append(
            TrainLogRecord(step=step, loss=float(loss.data), grad_norm=grad_norm, seconds=0.0)
        )
    return params, records


def score_frames(params, frames):
    """Probability-of-real per frame, chunked to bound memory."""
    frames = np.asarray(frames)
    scores = []
    for lo in range(0, len(frames), 256):
        logits = disc_forward(params, frames[lo : lo + 256])
        scores.append(sigmoid(logits).data)
    return np.concatenate(scores)


def save_discriminator(params, path, metadata=None):
    meta = {"kind": "discriminator"}
    meta.update(metadata or {})
    save_tensor_bag({name: p.data for name, p in params.items()}, path, metadata=meta)


def load_discriminator(path):
    tensors, metadata = load_tensor_bag(path)
    if metadata.get("kind") != "discriminator":
        raise CheckpointError(
            f"expected a discriminator checkpoint, got kind {metadata.get('kind')!r}"
        )
    return {name: parameter(name, arr) for name, arr in tensors.items()}, metadata
