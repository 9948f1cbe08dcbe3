"""Train and evaluate the comparison variants, freezing reports for the
acceptance suite.

Stages, each skipped when its outputs already exist so an interrupted run
resumes where it stopped:
  1. dataset: 200 random-walk trajectories x 300 frames
  2. nine trainings: df10, df20, vrag x 3 seeds
  3. per-training-seed reports: world_coherence (20 scenario episodes,
     120 frames with 40-frame init), compounding_error (10 random
     episodes, 400 frames), and the retrieval ablation (vrag vs
     vrag_no_training vs vrag_no_memory on the coherence episodes)
  4. summary.json with per-seed orderings and seed-mean margins

Run from the repository root:
    python3 scripts/run_acceptance_experiments.py
    python3 scripts/run_acceptance_experiments.py --steps 2000 --out /tmp/pilot
"""

import argparse
import json
import os
import sys
import time

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from worldlab.eval_harness import (
    COHERENCE_DEFAULTS,
    COMPOUNDING_DEFAULTS,
    emit_report,
    eval_compounding_error,
    eval_world_coherence,
    load_report,
    make_random_set,
    model_arm,
)
from worldlab.gridworld import load_dataset, save_dataset
from worldlab.trainer import TrainConfig, save_train_config, train
from worldlab.world_model import ModelConfig

MODEL = ModelConfig(hidden=64, heads=4, depth=2, embed_dim=64, window=20, patch=8, mlp_ratio=2)
DATA_SEED = 7
TRAIN_SEEDS = (0, 1, 2)
DATA_TRAJECTORIES = 200
DATA_FRAMES = 300
LEARNING_RATE = 1e-3
BATCH_SIZE = 4
DIFFUSION_STEPS = 50
BETA_END = 0.02

VARIANTS = {
    "df10": dict(variant="df", window=10, retrieved=0),
    "df20": dict(variant="df", window=20, retrieved=0),
    "vrag": dict(variant="vrag", window=20, retrieved=10),
}


def log(message):
    print(f"[{time.strftime('%H:%M:%S')}] {message}", flush=True)


def ensure_dataset(path):
    if os.path.exists(path):
        log(f"dataset exists: {path}")
        return
    log(f"generating dataset: {DATA_TRAJECTORIES} x {DATA_FRAMES} frames")
    trajectories = make_random_set(DATA_TRAJECTORIES, DATA_FRAMES, DATA_SEED)
    save_dataset(path, trajectories, extra_meta={"seed": DATA_SEED, "policy": "random"})
    log(f"wrote {path}")


def ensure_checkpoint(name, seed, steps, data, ckpt_dir):
    path = os.path.join(ckpt_dir, f"{name}_seed{seed}.wmc")
    if os.path.exists(path):
        log(f"checkpoint exists: {path}")
        return path
    config = TrainConfig(
        model=MODEL,
        steps=steps,
        batch_size=BATCH_SIZE,
        learning_rate=LEARNING_RATE,
        seed=seed,
        diffusion_steps=DIFFUSION_STEPS,
        beta_end=BETA_END,
        checkpoint=path,
        log=os.path.join(ckpt_dir, f"{name}_seed{seed}.log"),
        **VARIANTS[name],
    )
    save_train_config(config, os.path.join(ckpt_dir, f"{name}_seed{seed}.json"))
    log(f"training {name} seed {seed} ({steps} steps)")
    t0 = time.perf_counter()
    _, records = train(config, data)
    log(f"trained {name} seed {seed}: final loss {records[-1].loss:.4f} "
        f"in {time.perf_counter() - t0:.0f}s")
    return path


def ensure_report(kind, out_dir, builder):
    json_path = os.path.join(out_dir, f"{kind}_seed0.json")
    if os.path.exists(json_path):
        log(f"report exists: {json_path}")
        return load_report(json_path)
    t0 = time.perf_counter()
    report = builder()
    emit_report(report, out_dir)
    log(f"wrote {json_path} in {time.perf_counter() - t0:.0f}s")
    return report


def ordering(values, names):
    """True when values[names[i]] strictly decreases along names."""
    return all(values[a] > values[b] for a, b in zip(names, names[1:]))


def summarize(out_dir, coherence, compounding, ablation):
    summary = {"per_seed": {}, "seed_mean": {}, "verdicts": {}}
    coh_names = ("vrag", "df20", "df10")
    abl_names = ("vrag", "vrag_no_training", "vrag_no_memory")

    coh_means = {name: [] for name in coh_names}
    cmp_final = {name: [] for name in coh_names}
    cmp_slopes = {name: [] for name in coh_names}
    abl_means = {name: [] for name in abl_names}
    for seed in TRAIN_SEEDS:
        coh = coherence[seed]
        cmp = compounding[seed]
        abl = ablation[seed]
        per_seed = {
            "coherence_ssim_mean": {
                name: coh.aggregates[name]["ssim_mean"] for name in coh_names
            },
            "coherence_ordering_holds": ordering(
                {n: coh.aggregates[n]["ssim_mean"] for n in coh_names}, coh_names
            ),
            "compounding_final200_mean": {
                name: float(np.mean(cmp.curves["ssim"][name][-200:])) for name in coh_names
            },
            "compounding_ssim_slope": {
                name: cmp.aggregates[name]["ssim_slope"] for name in coh_names
            },
            "ablation_ssim_mean": {
                name: abl.aggregates[name]["ssim_mean"] for name in abl_names
            },
            "ablation_ordering_holds": ordering(
                {n: abl.aggregates[n]["ssim_mean"] for n in abl_names}, abl_names
            ),
        }
        summary["per_seed"][str(seed)] = per_seed
        for name in coh_names:
            coh_means[name].append(per_seed["coherence_ssim_mean"][name])
            cmp_final[name].append(per_seed["compounding_final200_mean"][name])
            cmp_slopes[name].append(per_seed["compounding_ssim_slope"][name])
        for name in abl_names:
            abl_means[name].append(per_seed["ablation_ssim_mean"][name])

    mean = lambda xs: float(np.mean(xs))
    summary["seed_mean"] = {
        "coherence_ssim_mean": {n: mean(coh_means[n]) for n in coh_names},
        "compounding_final200_mean": {n: mean(cmp_final[n]) for n in coh_names},
        "ablation_ssim_mean": {n: mean(abl_means[n]) for n in abl_names},
    }

    coherence_votes = sum(
        summary["per_seed"][str(s)]["coherence_ordering_holds"] for s in TRAIN_SEEDS
    )
    ablation_votes = sum(
        summary["per_seed"][str(s)]["ablation_ordering_holds"] for s in TRAIN_SEEDS
    )
    sm = summary["seed_mean"]
    summary["verdicts"] = {
        "coherence_ordering_votes": int(coherence_votes),
        "coherence_margin_vrag_minus_df20": sm["coherence_ssim_mean"]["vrag"]
        - sm["coherence_ssim_mean"]["df20"],
        "table1_directional": bool(
            coherence_votes >= 2
            and sm["coherence_ssim_mean"]["vrag"] - sm["coherence_ssim_mean"]["df20"] >= 0.01
        ),
        "table2_directional": bool(
            sm["compounding_final200_mean"]["vrag"] > sm["compounding_final200_mean"]["df20"]
            and all(max(cmp_slopes[name]) <= 0.0 for name in coh_names)
        ),
        "compounding_slopes_nonpositive": {
            name: bool(max(cmp_slopes[name]) <= 0.0) for name in coh_names
        },
        "ablation_ordering_votes": int(ablation_votes),
        "ablation_directional": bool(ablation_votes >= 2),
    }
    path = os.path.join(out_dir, "summary.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    log(f"wrote {path}")
    return summary


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="runs/acceptance", help="output directory")
    parser.add_argument("--steps", type=int, default=20000, help="training steps per run")
    parser.add_argument("--stage", choices=("all", "data", "train", "eval"), default="all")
    args = parser.parse_args(argv)

    out_dir = args.out
    ckpt_dir = os.path.join(out_dir, "ckpt")
    data_dir = os.path.join(out_dir, "data")
    os.makedirs(ckpt_dir, exist_ok=True)
    os.makedirs(data_dir, exist_ok=True)

    data_path = os.path.join(data_dir, "train.wmt")
    ensure_dataset(data_path)
    if args.stage == "data":
        return 0

    data, _ = load_dataset(data_path)
    checkpoints = {}
    for seed in TRAIN_SEEDS:
        for name in VARIANTS:
            checkpoints[name, seed] = ensure_checkpoint(
                name, seed, args.steps, data, ckpt_dir
            )
    del data
    if args.stage == "train":
        return 0

    coherence, compounding, ablation = {}, {}, {}
    for seed in TRAIN_SEEDS:
        seed_dir = os.path.join(out_dir, f"seed{seed}")
        arms = lambda: [
            model_arm(name, checkpoints[name, seed]) for name in ("vrag", "df20", "df10")
        ]
        coherence[seed] = ensure_report(
            "world_coherence", seed_dir,
            lambda: eval_world_coherence(arms(), config=COHERENCE_DEFAULTS),
        )
        compounding[seed] = ensure_report(
            "compounding_error", seed_dir,
            lambda: eval_compounding_error(arms(), config=COMPOUNDING_DEFAULTS),
        )
        ablation_arms = lambda: [
            model_arm("vrag", checkpoints["vrag", seed]),
            model_arm(
                "vrag_no_training", checkpoints["df20", seed],
                variant="vrag", retrieved=10,
            ),
            model_arm(
                "vrag_no_memory", checkpoints["vrag", seed],
                variant="df", window=10, retrieved=0,
            ),
        ]
        ablation[seed] = ensure_report(
            "world_coherence", os.path.join(seed_dir, "ablation"),
            lambda: eval_world_coherence(ablation_arms(), config=COHERENCE_DEFAULTS),
        )

    summary = summarize(out_dir, coherence, compounding, ablation)
    log("verdicts: " + json.dumps(summary["verdicts"], sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
