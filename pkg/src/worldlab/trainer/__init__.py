"""Training: the diffusion world model in five variants, plus the pose
predictor and frame discriminator used by evaluation."""

from .batches import Batch, Sample, assemble, min_start, min_trajectory_length, sample_batch
from .config import (
    TrainConfig,
    TrainLogRecord,
    VARIANTS,
    load_train_config,
    read_log,
    save_train_config,
    write_log,
)
from .discriminator import (
    bce_with_logits,
    disc_forward,
    init_disc_params,
    load_discriminator,
    save_discriminator,
    score_frames,
    train_discriminator,
)
from .loop import load_training_data, step_loss, train, yarn_params_for
from .pose import (
    init_pose_params,
    load_pose,
    pose_forward,
    pose_mae,
    pose_targets,
    predict_deltas,
    save_pose,
    train_pose,
)

__all__ = [
    "Batch",
    "Sample",
    "TrainConfig",
    "TrainLogRecord",
    "VARIANTS",
    "assemble",
    "bce_with_logits",
    "disc_forward",
    "init_disc_params",
    "init_pose_params",
    "load_discriminator",
    "load_pose",
    "load_train_config",
    "load_training_data",
    "min_start",
    "min_trajectory_length",
    "pose_forward",
    "pose_mae",
    "pose_targets",
    "predict_deltas",
    "read_log",
    "sample_batch",
    "save_discriminator",
    "save_pose",
    "save_train_config",
    "score_frames",
    "step_loss",
    "train",
    "train_pose",
    "train_discriminator",
    "write_log",
    "yarn_params_for",
]
