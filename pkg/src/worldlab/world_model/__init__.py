"""Spatiotemporal diffusion transformer: config, parameters, forward, checkpoints."""

from .checkpoint import load_checkpoint, save_checkpoint
from .config import ModelConfig
from .network import (
    adaln,
    embed_condition,
    forward,
    fresh_memory,
    infini_ingest,
    sinusoidal_features,
)
from .params import ACTION_COMPONENTS, check_params, init_params, param_shapes
from .rope import grid_positions, rope_angles, rope_apply, spatial_rope_apply

__all__ = [
    "ModelConfig",
    "ACTION_COMPONENTS",
    "adaln",
    "check_params",
    "embed_condition",
    "forward",
    "fresh_memory",
    "grid_positions",
    "infini_ingest",
    "init_params",
    "load_checkpoint",
    "param_shapes",
    "rope_angles",
    "rope_apply",
    "save_checkpoint",
    "sinusoidal_features",
    "spatial_rope_apply",
]
