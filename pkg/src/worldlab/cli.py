"""Command-line pipeline: data generation, training, rollout, evaluation,
discriminator fitting, and serving.

Exit codes: 0 success, 2 usage (bad or missing flags, including paths
that do not exist), 3 malformed data or containers, 4 numeric abort
during training. Every flag error names the flag.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .errors import (
    CheckpointError,
    ConfigError,
    FormatError,
    NumericError,
    WorldLabError,
)
from .eval_harness import (
    COHERENCE_DEFAULTS,
    COMPOUNDING_DEFAULTS,
    EvalConfig,
    emit_report,
    eval_compounding_error,
    eval_world_coherence,
    make_random_set,
    model_arm,
    oracle_arm,
    rollout_config_from_train,
)
from .gridworld import SCENARIO_PATTERNS, generate_map, load_dataset, rollout_random, rollout_scenario, save_dataset
from .rollout_engine import POSE_SOURCES, rollout
from .trainer import (
    load_train_config,
    load_discriminator,
    load_pose,
    save_discriminator,
    train,
    train_discriminator,
)
from .world_model import load_checkpoint


class UsageError(ConfigError):
    """Flag-level problem; always names the flag."""


def _require_file(path, flag):
    if not path or not os.path.isfile(path):
        raise UsageError(f"{flag}: expected an existing file, got {path!r}")
    return path


def _require_positive(value, flag):
    if value < 1:
        raise UsageError(f"{flag}: expected a positive integer, got {value}")
    return value


def cmd_gen_data(args):
    _require_positive(args.num_traj, "--num-traj")
    _require_positive(args.length, "--len")
    trajectories = make_random_set(args.num_traj, args.length, args.seed)
    save_dataset(
        args.out,
        trajectories,
        extra_meta={"seed": args.seed, "policy": "random", "source": "gen-data"},
    )
    print(f"wrote {args.num_traj} x {args.length}-frame trajectories to {args.out}")
    return 0


def cmd_train(args):
    _require_file(args.config, "--config")
    config = load_train_config(args.config)
    if not config.dataset:
        raise UsageError("--config: the config file must set a dataset path")
    if not os.path.exists(config.dataset):
        raise UsageError(f"--config: dataset {config.dataset!r} does not exist")
    if not config.checkpoint:
        raise UsageError("--config: the config file must set a checkpoint path")
    params, records = train(config)
    print(
        f"trained {config.variant} for {config.steps} steps, "
        f"final loss {records[-1].loss:.4f}"
    )
    print(f"checkpoint: {config.checkpoint}")
    if config.log:
        print(f"log: {config.log}")
    return 0


def _load_actions_file(path):
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"actions file {path} is not valid JSON: {exc}") from exc
    if isinstance(data, dict):
        data = data.get("actions")
    if not isinstance(data, list) or not data:
        raise FormatError(f"actions file {path} must hold a non-empty list of [move, strafe, turn, jump] rows")
    return data


def cmd_rollout(args):
    _require_file(args.ckpt, "--ckpt")
    _require_positive(args.frames, "--frames")
    if (args.scenario is None) == (args.actions_file is None):
        raise UsageError("exactly one of --scenario or --actions-file is required")
    params, model, metadata = load_checkpoint(args.ckpt)
    train_config = metadata.get("train_config")
    if train_config is None:
        raise FormatError(f"checkpoint {args.ckpt} has no train_config metadata")
    pose_params = None
    if args.pose_source == "predicted":
        _require_file(args.pose, "--pose")
        pose_params, _ = load_pose(args.pose)
    config = rollout_config_from_train(
        train_config, seed=args.seed, pose_source=args.pose_source
    )
    variant = config.variant
    prime = args.init_length
    if not prime:
        prime = 62 if variant == "history" else config.window
    map_seed = args.map_seed if args.map_seed is not None else args.seed
    tile_map = generate_map(map_seed)

    if args.scenario is not None:
        names = ["random"] + sorted(SCENARIO_PATTERNS)
        if args.scenario not in names:
            raise UsageError(f"--scenario: expected one of {names}, got {args.scenario!r}")
        length = prime + args.frames
        if args.scenario == "random":
            priming = rollout_random(tile_map, seed=args.seed, length=length)
        else:
            priming = rollout_scenario(tile_map, args.scenario, length)
        result = rollout(
            params, model, config, priming, length=length, prime=prime, pose_params=pose_params
        )
    else:
        _require_file(args.actions_file, "--actions-file")
        rows = _load_actions_file(args.actions_file)
        if len(rows) != args.frames:
            raise UsageError(
                f"--frames: {args.frames} does not match the {len(rows)} actions in the file"
            )
        priming = rollout_random(tile_map, seed=args.seed, length=prime)
        result = rollout(
            params, model, config, priming, prime=prime, actions=rows, pose_params=pose_params
        )

    generated = result.to_trajectory(
        extra_meta={
            "seed": args.seed,
            "map_seed": map_seed,
            "checkpoint": os.path.basename(args.ckpt),
            "rollout_config": config.to_dict(),
        }
    )
    save_dataset(args.out, [generated], extra_meta=generated.meta)
    print(
        f"rolled {args.frames} frames ({variant}, prime {prime}) to {args.out}"
    )
    return 0


def cmd_eval(args):
    for path in args.ckpt:
        _require_file(path, "--ckpt")
    base = COHERENCE_DEFAULTS if args.protocol == "world_coherence" else COMPOUNDING_DEFAULTS
    config = EvalConfig(
        episodes=args.episodes or base.episodes,
        horizon=args.horizon or base.horizon,
        init_length=args.init_length or base.init_length,
        seed=args.seed,
    )
    arms = []
    for path in args.ckpt:
        name = os.path.splitext(os.path.basename(path))[0]
        if any(arm.name == name for arm in arms):
            name = f"{name}_{len(arms)}"
        arms.append(model_arm(name, path, seed=args.seed))
    if args.oracle:
        patch = arms[0].patch if arms else 4
        arms.append(oracle_arm("oracle", patch=patch))
    if not arms:
        raise UsageError("--ckpt: at least one checkpoint (or --oracle) is required")

    trajectories = None
    if args.data:
        _require_file(args.data, "--data")
        trajectories, _ = load_dataset(args.data)
    disc_params = None
    if args.disc:
        _require_file(args.disc, "--disc")
        disc_params, _ = load_discriminator(args.disc)

    runner = eval_world_coherence if args.protocol == "world_coherence" else eval_compounding_error
    report = runner(arms, trajectories=trajectories, config=config, disc_params=disc_params)
    paths = emit_report(report, args.report_dir)
    print(f"report: {paths['json']}")
    for name in report.variants:
        stats = report.aggregates[name]
        print(
            f"  {name}: ssim {stats['ssim_mean']:.4f} "
            f"(slope {stats['ssim_slope']:+.2e}), psnr {stats['psnr_mean']:.2f}"
        )
    return 0


def cmd_disc_train(args):
    _require_file(args.real, "--real")
    _require_file(args.fake, "--fake")
    real, _ = load_dataset(args.real)
    fake, _ = load_dataset(args.fake)
    real_frames = np.concatenate([t.frames for t in real])
    fake_frames = np.concatenate([t.frames for t in fake])
    params, records = train_discriminator(
        real_frames,
        fake_frames,
        steps=args.steps,
        batch_size=args.batch_size,
        lr=args.lr,
        seed=args.seed,
    )
    save_discriminator(
        params,
        args.out,
        metadata={
            "steps": args.steps,
            "seed": args.seed,
            "real": os.path.basename(args.real),
            "fake": os.path.basename(args.fake),
        },
    )
    print(f"trained discriminator for {args.steps} steps, final loss {records[-1].loss:.4f}")
    print(f"checkpoint: {args.out}")
    return 0


def cmd_serve(args):
    import uvicorn

    from .service import create_app

    _require_file(args.ckpt, "--ckpt")
    if args.pose_source == "predicted":
        _require_file(args.pose, "--pose")
    app = create_app(
        checkpoint=args.ckpt,
        pose_source=args.pose_source,
        pose_checkpoint=args.pose if args.pose_source == "predicted" else None,
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="worldlab",
        description="Interactive video world model: data, training, rollout, eval, serving.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("gen-data", help="generate a random-walk trajectory dataset (.wmt)")
    p.add_argument("--seed", type=int, default=0, help="base rng seed (default 0)")
    p.add_argument("--num-traj", type=int, required=True, help="number of trajectories")
    p.add_argument("--len", dest="length", type=int, required=True, help="frames per trajectory")
    p.add_argument("--out", required=True, help="output .wmt path")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a variant from a JSON config")
    p.add_argument("--config", required=True, help="training config JSON path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("rollout", help="generate frames from a checkpoint (.wmt out)")
    p.add_argument("--ckpt", required=True, help="model checkpoint (.wmc)")
    p.add_argument("--scenario", help="priming scenario: random or a named pattern")
    p.add_argument("--actions-file", help="JSON action rows to drive generation")
    p.add_argument("--frames", type=int, required=True, help="frames to generate")
    p.add_argument("--out", required=True, help="output .wmt path")
    p.add_argument("--seed", type=int, default=0, help="session seed (default 0)")
    p.add_argument("--map-seed", type=int, default=None, help="map seed (default: --seed)")
    p.add_argument("--init-length", type=int, default=0, help="real frames to prime with")
    p.add_argument(
        "--pose-source", choices=POSE_SOURCES, default="ground_truth",
        help="conditioning pose track (default ground_truth)",
    )
    p.add_argument("--pose", help="pose predictor checkpoint, for --pose-source predicted")
    p.set_defaults(func=cmd_rollout)

    p = sub.add_parser("eval", help="run an evaluation protocol and emit reports")
    p.add_argument(
        "--ckpt", action="append", default=[],
        help="model checkpoint (.wmc); repeat for several arms",
    )
    p.add_argument(
        "--protocol", required=True, choices=("world_coherence", "compounding_error"),
        help="evaluation protocol",
    )
    p.add_argument("--data", help="episode dataset (.wmt); default: synthesized per protocol")
    p.add_argument("--report-dir", required=True, help="directory for the JSON/CSV report")
    p.add_argument("--episodes", type=int, default=0, help="episode count (default per protocol)")
    p.add_argument("--horizon", type=int, default=0, help="generated frames per episode")
    p.add_argument("--init-length", type=int, default=0, help="real frames to prime with")
    p.add_argument("--seed", type=int, default=0, help="episode-set seed (default 0)")
    p.add_argument("--disc", help="discriminator checkpoint for realism curves")
    p.add_argument("--oracle", action="store_true", help="add the oracle-denoiser ceiling arm")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("disc-train", help="fit the real-vs-generated discriminator")
    p.add_argument("--real", required=True, help="real trajectory dataset (.wmt)")
    p.add_argument("--fake", required=True, help="generated trajectory dataset (.wmt)")
    p.add_argument("--out", required=True, help="output discriminator checkpoint path")
    p.add_argument("--steps", type=int, default=400, help="optimizer steps (default 400)")
    p.add_argument("--batch-size", type=int, default=16, help="frames per class per step")
    p.add_argument("--lr", type=float, default=1e-3, help="learning rate (default 1e-3)")
    p.add_argument("--seed", type=int, default=0, help="rng seed (default 0)")
    p.set_defaults(func=cmd_disc_train)

    p = sub.add_parser("serve", help="serve interactive sessions over HTTP/WebSocket")
    p.add_argument("--ckpt", required=True, help="model checkpoint (.wmc)")
    p.add_argument("--port", type=int, default=8700, help="port to bind (default 8700)")
    p.add_argument("--host", default="127.0.0.1", help="host to bind (default 127.0.0.1)")
    p.add_argument(
        "--pose-source", choices=POSE_SOURCES, default="ground_truth",
        help="conditioning pose track (default ground_truth)",
    )
    p.add_argument("--pose", help="pose predictor checkpoint, for --pose-source predicted")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericError as err:
        print(f"worldlab {args.command}: numeric abort: {err}", file=sys.stderr)
        return 4
    except (FormatError, CheckpointError) as err:
        print(f"worldlab {args.command}: data error: {err}", file=sys.stderr)
        return 3
    except ConfigError as err:
        print(f"worldlab {args.command}: usage error: {err}", file=sys.stderr)
        return 2
    except WorldLabError as err:
        print(f"worldlab {args.command}: error: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
