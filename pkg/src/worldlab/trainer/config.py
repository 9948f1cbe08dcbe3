"""Training configuration and log records.

A TrainConfig fully determines a run: variant, model shape, data windowing,
diffusion schedule, optimizer settings, and seed. Two runs with equal
configs on equal data produce bit-identical checkpoints.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from ..errors import ConfigError, FormatError
from ..world_model import ModelConfig

VARIANTS = ("df", "vrag", "yarn", "history", "infini")


@dataclass(frozen=True)
class TrainConfig:
    """One training run.

    ``window`` is the transformer sequence length per sample. For the
    retrieval variants (vrag, history) the first ``retrieved`` slots hold
    history frames and only the remaining ``window - retrieved`` frames
    carry loss. The yarn variant trains on ``yarn_length`` frames with
    interpolated rotary frequencies, and infini trains on ``2 * window``
    frames driven through overlapping slides.
    """

    variant: str = "df"
    model: ModelConfig = field(default_factory=ModelConfig)
    steps: int = 1000
    batch_size: int = 4
    learning_rate: float = 3e-4
    seed: int = 0
    window: int = 20
    retrieved: int = 0
    diffusion_steps: int = 50
    beta_start: float = 1e-4
    beta_end: float = 0.02
    retrieval_weights: tuple = (10.0, 10.0, 10.0, 3.0)
    temporal_offset: int = 100
    retrieved_noise: str = "low"
    context_noise: str = "independent"
    buffer_capacity: int = 124
    heuristic_segments: int = 5
    heuristic_base: int = 2
    heuristic_growth: float = 2.0
    yarn_stretch: float = 4.0
    yarn_length: int = 40
    init_checkpoint: str = ""
    gate_lr: float = 3e-3
    dataset: str = ""
    checkpoint: str = ""
    log: str = ""

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        for name in ("steps", "batch_size", "window", "diffusion_steps", "buffer_capacity"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        for name in ("learning_rate", "gate_lr"):
            value = getattr(self, name)
            if not value > 0:
                raise ConfigError(f"{name} must be positive, got {value!r}")
        if not 0 < self.beta_start < self.beta_end < 1:
            raise ConfigError(
                f"betas must satisfy 0 < start < end < 1, got ({self.beta_start}, {self.beta_end})"
            )
        if self.window < 2:
            raise ConfigError(f"window must be >= 2, got {self.window}")
        object.__setattr__(self, "retrieval_weights", tuple(float(w) for w in self.retrieval_weights))
        if len(self.retrieval_weights) != 4:
            raise ConfigError(f"retrieval_weights needs 4 entries, got {len(self.retrieval_weights)}")
        if self.retrieved_noise not in ("low", "independent"):
            raise ConfigError(f"retrieved_noise must be 'low' or 'independent', got {self.retrieved_noise!r}")
        if self.context_noise not in ("independent", "mixed"):
            raise ConfigError(f"context_noise must be 'independent' or 'mixed', got {self.context_noise!r}")
        if self.variant in ("vrag", "history"):
            if not 1 <= self.retrieved < self.window:
                raise ConfigError(
                    f"{self.variant} needs 1 <= retrieved < window, got retrieved={self.retrieved} window={self.window}"
                )
            if self.temporal_offset < self.retrieved:
                raise ConfigError(
                    f"temporal_offset {self.temporal_offset} must be >= retrieved {self.retrieved}"
                )
            if self.buffer_capacity < self.retrieved:
                raise ConfigError(
                    f"buffer_capacity {self.buffer_capacity} must be >= retrieved {self.retrieved}"
                )
        elif self.retrieved != 0:
            raise ConfigError(f"retrieved slots only apply to vrag and history, not {self.variant}")
        if self.variant == "history":
            if self.heuristic_segments < 1 or self.heuristic_base < 1:
                raise ConfigError("heuristic_segments and heuristic_base must be positive")
            if self.retrieved % self.heuristic_segments != 0:
                raise ConfigError(
                    f"retrieved {self.retrieved} must divide evenly into {self.heuristic_segments} segments"
                )
        if self.variant == "yarn":
            if not self.init_checkpoint:
                raise ConfigError("yarn fine-tuning needs init_checkpoint")
            if self.yarn_stretch <= 1.0:
                raise ConfigError(f"yarn_stretch must exceed 1, got {self.yarn_stretch}")
            if self.yarn_length <= self.window:
                raise ConfigError(
                    f"yarn_length {self.yarn_length} must exceed the base window {self.window}"
                )
        if self.variant == "infini" and self.window != self.model.window:
            raise ConfigError(
                f"infini training needs window == model.window, got {self.window} vs {self.model.window}"
            )

    def sequence_length(self):
        """Frames per training sample for this variant."""
        if self.variant == "yarn":
            return self.yarn_length
        if self.variant == "infini":
            return 2 * self.window
        return self.window

    def current_length(self):
        """Frames in the loss-bearing current window (excludes retrieved slots)."""
        return self.window - self.retrieved

    def to_dict(self):
        out = dataclasses.asdict(self)
        out["model"] = self.model.to_dict()
        out["retrieval_weights"] = list(self.retrieval_weights)
        return out

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError(f"train config must be a mapping, got {type(data).__name__}")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown train config fields: {', '.join(unknown)}")
        kwargs = dict(data)
        if "model" in kwargs:
            kwargs["model"] = ModelConfig.from_dict(kwargs["model"])
        if "retrieval_weights" in kwargs:
            kwargs["retrieval_weights"] = tuple(kwargs["retrieval_weights"])
        return cls(**kwargs)


def load_train_config(path):
    """Read a TrainConfig from a JSON file."""
    with open(path, "rb") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path} is not valid JSON: {exc}") from exc
    return TrainConfig.from_dict(data)


def save_train_config(config, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass(frozen=True)
class TrainLogRecord:
    """One optimizer step: loss, gradient norm, and wall time in seconds."""

    step: int
    loss: float
    grad_norm: float
    seconds: float


def write_log(records, path):
    """Write step records as JSON lines."""
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(dataclasses.asdict(record), sort_keys=True))
            fh.write("\n")


def read_log(path):
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{line_no} is not valid JSON: {exc}") from exc
            records.append(TrainLogRecord(**data))
    return records
