"""Model hyperparameters and derived dimensions."""

from dataclasses import asdict, dataclass, fields

from ..errors import ConfigError


@dataclass(frozen=True)
class ModelConfig:
    """Shape of the denoising network.

    `window` is the temporal context length the model is trained to attend
    over; retrieval variants split it between retrieved and current frames.
    `patch` is the frame patch size, so a 32x32 frame becomes a
    (32/patch)x(32/patch) grid of tokens with 3*patch*patch channels each.
    """

    hidden: int = 128
    depth: int = 4
    heads: int = 4
    embed_dim: int = 128
    window: int = 20
    patch: int = 4
    rope_base: float = 10000.0
    mlp_ratio: int = 4
    condition_on_state: bool = True

    def __post_init__(self):
        for name in ("hidden", "depth", "heads", "embed_dim", "window", "patch", "mlp_ratio"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if self.window < 2:
            raise ConfigError(f"window must be at least 2, got {self.window}")
        if self.hidden % self.heads != 0:
            raise ConfigError(
                f"hidden ({self.hidden}) must be divisible by heads ({self.heads})"
            )
        if (self.hidden // self.heads) % 4 != 0:
            raise ConfigError(
                "per-head dimension must be a multiple of 4 for rotary pairs "
                f"on both grid axes, got {self.hidden // self.heads}"
            )
        if self.embed_dim % 2 != 0:
            raise ConfigError(f"embed_dim must be even, got {self.embed_dim}")
        if self.rope_base <= 1.0:
            raise ConfigError(f"rope_base must exceed 1, got {self.rope_base}")

    @property
    def head_dim(self):
        return self.hidden // self.heads

    @property
    def channels(self):
        return 3 * self.patch * self.patch

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, payload):
        known = {f.name for f in fields(cls)}
        extra = set(payload) - known
        if extra:
            raise ConfigError(f"unknown model config fields: {sorted(extra)}")
        return cls(**payload)
