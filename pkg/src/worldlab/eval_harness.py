"""Decoupled evaluation: image metrics, rollout protocols, and reports.

The two protocols share one driver: prime a session on a real prefix, let
the model generate the remaining frames for the same action stream, then
score each generated frame against the ground-truth render at the true
state (which, because the integrator is exact, is the real trajectory
frame itself). ``world_coherence`` uses scripted scenario trajectories
that revisit previously seen parts of the map; ``compounding_error`` uses
long random walks. Reports carry per-frame-index metric curves plus
aggregates, and serialize to a JSON file and one CSV per metric with
byte-stable formatting.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
import time
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, FormatError, ShapeError
from .gridworld import SCENARIO_PATTERNS, generate_map, rollout_random, rollout_scenario
from .rollout_engine import RolloutConfig, oracle_rollout, rollout
from .trainer.discriminator import load_discriminator, score_frames
from .world_model import load_checkpoint

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
PIXEL_RANGE = 255.0
PSNR_CAP = 100.0

PROTOCOLS = ("world_coherence", "compounding_error")
REPORT_SCHEMA = "worldlab.eval_report.v1"


def _gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    half = (size - 1) / 2.0
    x = np.arange(size, dtype=np.float64) - half
    w = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return w / w.sum()


def _filter_valid(img, window):
    """Separable windowed weighted mean, valid positions only."""
    k = len(window)
    h, w = img.shape
    rows = np.zeros((h, w - k + 1), dtype=np.float64)
    for i, weight in enumerate(window):
        rows += weight * img[:, i : w - k + 1 + i]
    out = np.zeros((h - k + 1, w - k + 1), dtype=np.float64)
    for i, weight in enumerate(window):
        out += weight * rows[i : h - k + 1 + i, :]
    return out


def _check_pair(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ShapeError(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a = a[:, :, None]
        b = b[:, :, None]
    if a.ndim != 3:
        raise ShapeError(f"images must be (H, W) or (H, W, C), got {a.shape}")
    return a.astype(np.float64), b.astype(np.float64)


def ssim(a, b):
    """Structural similarity with an 11x11 Gaussian window (sigma 1.5).

    Computed per channel over all valid window positions, then averaged
    over positions and channels. Identical images score exactly 1.0;
    the measure is symmetric in its arguments.
    """
    a, b = _check_pair(a, b)
    h, w, channels = a.shape
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise ShapeError(
            f"images must be at least {SSIM_WINDOW}x{SSIM_WINDOW} for SSIM, got {h}x{w}"
        )
    window = _gaussian_window()
    c1 = (SSIM_K1 * PIXEL_RANGE) ** 2
    c2 = (SSIM_K2 * PIXEL_RANGE) ** 2
    total = 0.0
    for c in range(channels):
        x = a[:, :, c]
        y = b[:, :, c]
        mu_x = _filter_valid(x, window)
        mu_y = _filter_valid(y, window)
        var_x = _filter_valid(x * x, window) - mu_x * mu_x
        var_y = _filter_valid(y * y, window) - mu_y * mu_y
        cov = _filter_valid(x * y, window) - mu_x * mu_y
        score = ((2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)) / (
            (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
        )
        total += float(score.mean())
    return total / channels


def psnr(a, b):
    """Peak signal-to-noise ratio in dB against a 255 peak, capped at 100."""
    a, b = _check_pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(PIXEL_RANGE * PIXEL_RANGE / mse))


def metric_curve(metric, generated, reference):
    """Apply a pairwise metric along the frame axis; returns (N,) float64."""
    generated = np.asarray(generated)
    reference = np.asarray(reference)
    if generated.shape != reference.shape:
        raise ShapeError(
            f"frame stacks differ: {generated.shape} vs {reference.shape}"
        )
    return np.array([metric(g, r) for g, r in zip(generated, reference)], dtype=np.float64)


def score_discriminator(disc, frames):
    """Probability-of-real per frame from a trained discriminator.

    ``disc`` is either loaded parameters or a checkpoint path.
    """
    if isinstance(disc, (str, os.PathLike)):
        if not os.path.exists(disc):
            raise ConfigError(f"missing discriminator checkpoint: {disc}")
        disc, _ = load_discriminator(disc)
    return score_frames(disc, frames)


def make_scenario_set(episodes, length, seed):
    """Scripted evaluation trajectories cycling the scenario patterns.

    Each episode gets its own map (seed * 1000 + index), so coherence is
    measured across distinct worlds rather than one lucky layout.
    """
    patterns = sorted(SCENARIO_PATTERNS)
    out = []
    for i in range(episodes):
        tile_map = generate_map(seed * 1000 + i)
        out.append(rollout_scenario(tile_map, patterns[i % len(patterns)], length))
    return out


def make_random_set(episodes, length, seed):
    """Random-walk evaluation trajectories, one fresh map per episode."""
    out = []
    for i in range(episodes):
        episode_seed = seed * 1000 + i
        tile_map = generate_map(episode_seed)
        out.append(rollout_random(tile_map, seed=episode_seed, length=length))
    return out


def _episode_label(trajectory):
    meta = trajectory.meta or {}
    tag = meta.get("pattern") or meta.get("policy") or "trajectory"
    return f"{tag}@map{trajectory.map_seed}"


@dataclass(frozen=True)
class EvalConfig:
    """How much to evaluate: episodes x horizon, after init_length real frames."""

    episodes: int = 20
    horizon: int = 120
    init_length: int = 40
    seed: int = 0

    def __post_init__(self):
        if self.episodes < 1:
            raise ConfigError(f"episodes must be >= 1, got {self.episodes}")
        if self.horizon < 1:
            raise ConfigError(f"horizon must be >= 1, got {self.horizon}")
        if self.init_length < 1:
            raise ConfigError(f"init_length must be >= 1, got {self.init_length}")

    def trajectory_length(self):
        return self.init_length + self.horizon

    def to_dict(self):
        return dataclasses.asdict(self)


COHERENCE_DEFAULTS = EvalConfig(episodes=20, horizon=80, init_length=40)
COMPOUNDING_DEFAULTS = EvalConfig(episodes=10, horizon=360, init_length=40)


@dataclass(frozen=True)
class EvalArm:
    """One model under evaluation: a name, a rollout config, and weights.

    Oracle arms skip the network and denoise toward the encoded real
    frames; they pin the metric ceiling the plumbing allows.
    """

    name: str
    config: RolloutConfig
    params: dict | None = None
    model: object = None
    oracle: bool = False
    patch: int = 4
    pose_params: dict | None = None

    def __post_init__(self):
        if not self.name:
            raise ConfigError("arm name must be non-empty")
        if not self.oracle and (self.params is None or self.model is None):
            raise ConfigError(f"arm {self.name!r} needs params and model (or oracle=True)")

    def run(self, trajectory, length, prime):
        if self.oracle:
            return oracle_rollout(
                self.config, trajectory, length=length, prime=prime, patch=self.patch
            )
        return rollout(
            self.params,
            self.model,
            self.config,
            trajectory,
            length=length,
            prime=prime,
            pose_params=self.pose_params,
        )


def rollout_config_from_train(train_config, **overrides):
    """Derive generation settings from a checkpoint's training config."""
    if not isinstance(train_config, dict):
        train_config = train_config.to_dict()
    variant = train_config["variant"]
    window = train_config["yarn_length"] if variant == "yarn" else train_config["window"]
    fields = dict(
        variant=variant,
        window=window,
        retrieved=train_config["retrieved"],
        diffusion_steps=train_config["diffusion_steps"],
        beta_start=train_config["beta_start"],
        beta_end=train_config["beta_end"],
        temporal_offset=train_config["temporal_offset"],
        retrieval_weights=tuple(train_config["retrieval_weights"]),
        buffer_capacity=train_config["buffer_capacity"],
        heuristic_segments=train_config["heuristic_segments"],
        heuristic_base=train_config["heuristic_base"],
        heuristic_growth=train_config["heuristic_growth"],
        yarn_stretch=train_config["yarn_stretch"],
    )
    fields.update(overrides)
    return RolloutConfig(**fields)


def model_arm(name, checkpoint, **overrides):
    """Load a .wmc checkpoint into an evaluation arm.

    Rollout settings derive from the training config stored in the
    checkpoint; keyword overrides adjust them (seed, window, pose_source).
    """
    if not os.path.exists(checkpoint):
        raise ConfigError(f"missing checkpoint: {checkpoint}")
    params, model, metadata = load_checkpoint(checkpoint)
    train_config = metadata.get("train_config")
    if train_config is None:
        raise FormatError(f"checkpoint {checkpoint} has no train_config metadata")
    config = rollout_config_from_train(train_config, **overrides)
    return EvalArm(name=name, config=config, params=params, model=model, patch=model.patch)


def oracle_arm(name="oracle", config=None, patch=4, **overrides):
    if config is None:
        config = RolloutConfig(**overrides)
    return EvalArm(name=name, config=config, oracle=True, patch=patch)


@dataclass(frozen=True)
class EvalReport:
    """Per-frame-index metric curves plus aggregates for a set of arms.

    Invariants: every curve has exactly ``horizon`` entries aligned with
    ``frame_index``, and each ``<metric>_mean`` aggregate equals the mean
    of the stored curve, so the JSON can be audited from the CSVs alone.
    """

    protocol: str
    variants: tuple
    seed: int
    episodes: int
    horizon: int
    init_length: int
    frame_index: tuple
    curves: dict
    aggregates: dict
    runtime_seconds: float
    configs: dict
    episode_labels: tuple = ()
    schema: str = REPORT_SCHEMA

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"protocol must be one of {PROTOCOLS}, got {self.protocol!r}")
        if len(self.frame_index) != self.horizon:
            raise ConfigError(
                f"frame_index has {len(self.frame_index)} entries, horizon is {self.horizon}"
            )
        for metric, per_variant in self.curves.items():
            if set(per_variant) != set(self.variants):
                raise ConfigError(f"curve {metric!r} misses variants")
            for variant, curve in per_variant.items():
                if len(curve) != self.horizon:
                    raise ConfigError(
                        f"curve {metric}/{variant} has {len(curve)} points, "
                        f"horizon is {self.horizon}"
                    )

    def to_dict(self):
        """Report document. Wall clock stays out of it so that identical
        (config, seed, checkpoint) runs emit bit-identical files; read
        runtime_seconds off the in-memory report instead."""
        return {
            "schema": self.schema,
            "protocol": self.protocol,
            "variants": list(self.variants),
            "seed": self.seed,
            "episodes": self.episodes,
            "horizon": self.horizon,
            "init_length": self.init_length,
            "frame_index": [int(i) for i in self.frame_index],
            "curves": {
                metric: {variant: list(curve) for variant, curve in per_variant.items()}
                for metric, per_variant in self.curves.items()
            },
            "aggregates": {
                variant: dict(stats) for variant, stats in self.aggregates.items()
            },
            "configs": {name: dict(cfg) for name, cfg in self.configs.items()},
            "episode_labels": list(self.episode_labels),
        }

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise FormatError(f"report must be a mapping, got {type(data).__name__}")
        if data.get("schema") != REPORT_SCHEMA:
            raise FormatError(f"unknown report schema {data.get('schema')!r}")
        try:
            return cls(
                protocol=data["protocol"],
                variants=tuple(data["variants"]),
                seed=data["seed"],
                episodes=data["episodes"],
                horizon=data["horizon"],
                init_length=data["init_length"],
                frame_index=tuple(data["frame_index"]),
                curves={
                    metric: {v: tuple(curve) for v, curve in per.items()}
                    for metric, per in data["curves"].items()
                },
                aggregates=data["aggregates"],
                runtime_seconds=float(data.get("runtime_seconds", 0.0)),
                configs=data["configs"],
                episode_labels=tuple(data.get("episode_labels", ())),
            )
        except KeyError as exc:
            raise FormatError(f"report misses field {exc.args[0]!r}") from exc


def _curve_aggregates(metric, curve):
    curve = np.asarray(curve, dtype=np.float64)
    slope = float(np.polyfit(np.arange(len(curve), dtype=np.float64), curve, 1)[0])
    return {
        f"{metric}_mean": float(curve.mean()),
        f"{metric}_slope": slope,
        f"{metric}_final": float(curve[-1]),
    }


def _run_protocol(protocol, arms, trajectories, config, disc_params=None):
    started = time.perf_counter()
    names = [arm.name for arm in arms]
    if len(set(names)) != len(names):
        raise ConfigError(f"arm names must be unique, got {names}")
    length = config.trajectory_length()
    for i, traj in enumerate(trajectories):
        if len(traj) < length:
            raise ConfigError(
                f"episode {i} has {len(traj)} frames, protocol needs {length}"
            )

    metrics = ["ssim", "psnr"] + (["disc"] if disc_params is not None else [])
    curves = {metric: {} for metric in metrics}
    aggregates = {}
    for arm in arms:
        rows = {metric: np.empty((len(trajectories), config.horizon)) for metric in metrics}
        for i, traj in enumerate(trajectories):
            result = arm.run(traj, length, config.init_length)
            generated = result.frames[config.init_length :]
            reference = traj.frames[config.init_length : length]
            rows["ssim"][i] = metric_curve(ssim, generated, reference)
            rows["psnr"][i] = metric_curve(psnr, generated, reference)
            if disc_params is not None:
                rows["disc"][i] = score_frames(disc_params, generated)
        stats = {}
        for metric in metrics:
            curve = rows[metric].mean(axis=0)
            curves[metric][arm.name] = tuple(float(v) for v in curve)
            stats.update(_curve_aggregates(metric, curve))
        aggregates[arm.name] = stats

    frame_index = tuple(range(config.init_length, length))
    return EvalReport(
        protocol=protocol,
        variants=tuple(names),
        seed=config.seed,
        episodes=len(trajectories),
        horizon=config.horizon,
        init_length=config.init_length,
        frame_index=frame_index,
        curves=curves,
        aggregates=aggregates,
        runtime_seconds=time.perf_counter() - started,
        configs={arm.name: arm.config.to_dict() for arm in arms},
        episode_labels=tuple(_episode_label(t) for t in trajectories),
    )


def eval_world_coherence(arms, trajectories=None, config=None, disc_params=None):
    """Score arms on scripted revisit scenarios against ground truth."""
    config = config or COHERENCE_DEFAULTS
    if trajectories is None:
        trajectories = make_scenario_set(
            config.episodes, config.trajectory_length(), config.seed
        )
    return _run_protocol("world_coherence", arms, trajectories, config, disc_params)


def eval_compounding_error(arms, trajectories=None, config=None, disc_params=None):
    """Score arms on long random walks; the SSIM curve shape is the point."""
    config = config or COMPOUNDING_DEFAULTS
    if trajectories is None:
        trajectories = make_random_set(
            config.episodes, config.trajectory_length(), config.seed
        )
    return _run_protocol("compounding_error", arms, trajectories, config, disc_params)


def _format_float(value):
    return repr(float(value))


def emit_report(report, out_dir):
    """Write the report JSON and one CSV per metric; returns the paths.

    Output is byte-stable: emitting the same report twice produces
    identical files. CSV columns are frame_index then one column per
    variant in report order; floats use shortest-roundtrip formatting so
    aggregates can be recomputed from the CSV exactly.
    """
    os.makedirs(out_dir, exist_ok=True)
    stem = f"{report.protocol}_seed{report.seed}"
    json_path = os.path.join(out_dir, f"{stem}.json")
    payload = json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    with open(json_path, "w", encoding="utf-8") as fh:
        fh.write(payload)

    csv_paths = {}
    for metric in sorted(report.curves):
        per_variant = report.curves[metric]
        path = os.path.join(out_dir, f"{stem}_{metric}.csv")
        lines = ["frame_index," + ",".join(report.variants)]
        for row, idx in enumerate(report.frame_index):
            cells = [str(int(idx))]
            cells += [_format_float(per_variant[v][row]) for v in report.variants]
            lines.append(",".join(cells))
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
        csv_paths[metric] = path
    return {"json": json_path, "csv": csv_paths}


def load_report(path):
    if not os.path.exists(path):
        raise ConfigError(f"missing report: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"report {path} is not valid JSON: {exc}") from exc
    return EvalReport.from_dict(data)
