"""Command-line entry point.

One binary with subcommands covering the whole pipeline: corpus synthesis and
distortion, the two training stages, quality-head training, evaluation (in-
and cross-corpus), ablations, and feature analysis. Every subcommand takes
--seed and produces identical artifacts on identical invocations. Relative
data paths resolve against $COAE_DATA_DIR when it is set.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

PROFILES = ("canonical", "tiny")


def _resolve(path: str | Path) -> Path:
    p = Path(path)
    if p.is_absolute():
        return p
    base = os.environ.get("COAE_DATA_DIR")
    return (Path(base) / p) if base else p


def _manifest_path(arg: str) -> Path:
    p = _resolve(arg)
    return p / "manifest.jsonl" if p.is_dir() else p


def _load_manifest(arg: str):
    from .manifest import read_manifest

    return read_manifest(_manifest_path(arg))


def _profile(name: str):
    from .nets import NetProfile

    return NetProfile.named(name)


def _train_config(args, stage: str):
    from .training import TrainConfig

    overrides = {
        k: v
        for k, v in {
            "epochs": args.epochs,
            "batch_size": args.batch_size,
            "learning_rate": args.learning_rate,
            "patch_size": args.patch_size,
            "seed": args.seed,
            "ablation": getattr(args, "ablation", None),
            "perceptual_weight": getattr(args, "perceptual_weight", None),
        }.items()
        if v is not None
    }
    if args.config:
        cfg = TrainConfig.from_file(_resolve(args.config), stage=stage, **overrides)
    else:
        cfg = TrainConfig(stage=stage, **overrides)
    return cfg


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with training-config fields; flags override it")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--patch-size", type=int, default=None)
    p.add_argument("--perceptual-weight", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="coae",
        description="Collaborative-autoencoder image quality toolkit: corpus "
        "generation, two-stage training, quality prediction, evaluation, "
        "ablations, and feature analysis.",
    )
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("synth", help="generate synthetic pristine images")
    p.add_argument("--n", type=int, required=True, help="number of images")
    p.add_argument("--size", type=int, default=64, help="square image side in pixels")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory for PNGs + manifest")

    p = sub.add_parser("distort", help="build a distorted corpus from pristine images")
    p.add_argument("--pristine-dir", required=True, help="directory of pristine PNGs")
    p.add_argument("--types", default=",".join(_toy_types()), help="comma-separated type ids")
    p.add_argument("--levels", default="1,2,3,4,5", help="comma-separated severity levels 1-5")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--name", default="corpus", help="corpus name recorded in the manifest")
    p.add_argument("--out", required=True, help="output corpus directory")

    p = sub.add_parser("train-cae", help="stage 1: train the content autoencoder")
    p.add_argument("--corpus", required=True, help="corpus directory or manifest path")
    p.add_argument("--profile", choices=PROFILES, default="canonical")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--ablation", choices=("none", "s_cae"), default=None)
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--log", default=None, help="training-log JSONL path")
    _add_train_flags(p)

    p = sub.add_parser("train-dae", help="stage 2: train the distortion autoencoder")
    p.add_argument("--corpus", required=True)
    p.add_argument("--cae", default=None, help="content checkpoint (omit only with --ablation s_dae)")
    p.add_argument("--profile", choices=PROFILES, default="canonical")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--ablation", choices=("none", "s_dae", "no_spp", "no_multilevel"), default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--log", default=None)
    _add_train_flags(p)

    p = sub.add_parser("train-visor", help="train the quality head on frozen encoders")
    p.add_argument("--corpus", required=True)
    p.add_argument("--cae", required=True)
    p.add_argument("--dae", required=True)
    p.add_argument("--feature-mode", choices=("both", "content_only", "distortion_only"), default="both")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    _add_train_flags(p)

    p = sub.add_parser("eval", help="session-median SRCC/PLCC on one corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--cae", required=True)
    p.add_argument("--dae", required=True)
    p.add_argument("--sessions", type=int, default=10)
    p.add_argument("--base-seed", type=int, default=0)
    p.add_argument("--train-ratio", type=float, default=0.8)
    p.add_argument("--feature-mode", choices=("both", "content_only", "distortion_only"), default="both")
    p.add_argument("--seed", type=int, default=None, help="head-training seed template")
    p.add_argument("--out", default=None, help="report JSONL path")
    _add_train_flags(p)

    p = sub.add_parser("cross-eval", help="train the head on one corpus, test on another")
    p.add_argument("--train-corpus", required=True)
    p.add_argument("--test-corpus", required=True)
    p.add_argument("--cae", required=True)
    p.add_argument("--dae", required=True)
    p.add_argument("--feature-mode", choices=("both", "content_only", "distortion_only"), default="both")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    _add_train_flags(p)

    p = sub.add_parser("ablate", help="train and evaluate one ablation variant")
    p.add_argument("--variant", required=True, choices=("full", "s_cae", "s_dae", "no_spp", "no_multilevel"))
    p.add_argument("--corpus", required=True)
    p.add_argument("--profile", choices=PROFILES, default="tiny")
    p.add_argument("--cae", default=None, help="reuse an existing content checkpoint")
    p.add_argument("--sessions", type=int, default=3)
    p.add_argument("--base-seed", type=int, default=0)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="working/output directory")
    _add_train_flags(p)

    p = sub.add_parser("analyze", help="export features, similarity, separability, embedding plots")
    p.add_argument("--corpus", required=True)
    p.add_argument("--cae", required=True)
    p.add_argument("--dae", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-pairs", type=int, default=64, help="pair budget for the similarity study")
    p.add_argument("--out", required=True, help="output directory")
    return ap


def _toy_types():
    from .pipeline import TOY_TYPES

    return TOY_TYPES


def _cmd_synth(args) -> int:
    from .imaging import synth_pristine, save_image

    out = _resolve(args.out)
    out.mkdir(parents=True, exist_ok=True)
    images = synth_pristine(args.n, args.size, args.seed)
    with open(out / "manifest.jsonl", "w") as fh:
        fh.write(json.dumps({"kind": "pristine", "n": args.n, "size": args.size, "seed": args.seed}) + "\n")
        for i, img in enumerate(images):
            name = f"{i:04d}.png"
            save_image(img, out / name)
            fh.write(json.dumps({"path": name, "index": i}, sort_keys=True) + "\n")
    print(f"wrote {args.n} pristine images to {out}")
    return 0


def _cmd_distort(args) -> int:
    from .distortions import build_corpus
    from .imaging import load_image

    pdir = _resolve(args.pristine_dir)
    paths = sorted(pdir.glob("*.png"))
    if not paths:
        raise FileNotFoundError(f"no PNGs found in {pdir}")
    pristine = [load_image(p) for p in paths]
    types = [t.strip() for t in args.types.split(",") if t.strip()]
    levels = [int(v) for v in args.levels.split(",") if v.strip()]
    manifest = build_corpus(pristine, types, levels, _resolve(args.out), args.seed, name=args.name)
    print(f"corpus {manifest.name}: {len(manifest.records)} records at {manifest.root}")
    return 0


def _cmd_train_cae(args) -> int:
    from .training import train_content_stage

    manifest = _load_manifest(args.corpus)
    cfg = _train_config(args, "cae")
    records = manifest.pristine_records() if cfg.ablation != "s_cae" else None
    res = train_content_stage(
        manifest, cfg, _profile(args.profile), _resolve(args.out),
        records=records, log_path=_resolve(args.log) if args.log else None, verbose=True,
    )
    print(
        f"content checkpoint {res.checkpoint_path}; holdout recon "
        f"{res.init_holdout_recon:.4f} -> {res.final_holdout_recon:.4f}"
    )
    return 0


def _cmd_train_dae(args) -> int:
    from .training import train_distortion_stage

    manifest = _load_manifest(args.corpus)
    cfg = _train_config(args, "dae")
    res = train_distortion_stage(
        _resolve(args.cae) if args.cae else None, manifest, cfg,
        _profile(args.profile), _resolve(args.out),
        log_path=_resolve(args.log) if args.log else None, verbose=True,
    )
    print(
        f"distortion checkpoint {res.checkpoint_path}; holdout recon "
        f"{res.init_holdout_recon:.4f} -> {res.final_holdout_recon:.4f}"
    )
    return 0


def _cmd_train_visor(args) -> int:
    from .visor import train_quality_predictor

    manifest = _load_manifest(args.corpus)
    cfg = _train_config(args, "visor")
    info = train_quality_predictor(
        _resolve(args.cae), _resolve(args.dae), manifest, cfg, _resolve(args.out),
        feature_mode=args.feature_mode,
    )
    print(f"quality head {info['head_path']}; final training MSE {info['final_mse']:.5f}")
    return 0


def _cmd_eval(args) -> int:
    from .evaluation import render_table, run_sessions, write_report
    from .nets import load_checkpoint, load_content_autoencoder, load_distortion_autoencoder

    manifest = _load_manifest(args.corpus)
    cae = load_content_autoencoder(load_checkpoint(_resolve(args.cae)))
    dae = load_distortion_autoencoder(load_checkpoint(_resolve(args.dae)))
    cfg = _train_config(args, "visor")
    summary = run_sessions(
        cae, dae, manifest, cfg,
        n_sessions=args.sessions, base_seed=args.base_seed,
        train_ratio=args.train_ratio, feature_mode=args.feature_mode,
    )
    row = summary.to_dict()
    if args.out:
        write_report(_resolve(args.out), [row])
    print(render_table([row]))
    if summary.n_failed:
        print(f"{summary.n_failed} of {len(summary.sessions)} sessions failed", file=sys.stderr)
    return 0 if summary.n_failed < len(summary.sessions) else 1


def _cmd_cross_eval(args) -> int:
    from .evaluation import cross_corpus_eval, write_report
    from .nets import load_checkpoint, load_content_autoencoder, load_distortion_autoencoder

    tr = _load_manifest(args.train_corpus)
    te = _load_manifest(args.test_corpus)
    cae = load_content_autoencoder(load_checkpoint(_resolve(args.cae)))
    dae = load_distortion_autoencoder(load_checkpoint(_resolve(args.dae)))
    cfg = _train_config(args, "visor")
    row = cross_corpus_eval(cae, dae, tr, te, cfg, feature_mode=args.feature_mode)
    if args.out:
        write_report(_resolve(args.out), [row])
    print(
        f"train {row['train_corpus']} -> test {row['test_corpus']}: "
        f"SRCC {row['srcc']:.3f}  PLCC {row['plcc']:.3f}"
    )
    return 0


def _cmd_ablate(args) -> int:
    from .pipeline import run_ablation
    from .training import TrainConfig

    manifest = _load_manifest(args.corpus)
    seed = args.seed if args.seed is not None else 0
    epochs = args.epochs
    batch = args.batch_size if args.batch_size is not None else 8
    patch = args.patch_size if args.patch_size is not None else 64
    lr = args.learning_rate if args.learning_rate is not None else 1e-3
    cae_cfg = TrainConfig("cae", epochs=epochs or 30, batch_size=batch, patch_size=patch, seed=seed, learning_rate=lr)
    dae_cfg = TrainConfig("dae", epochs=epochs or 5, batch_size=batch, patch_size=patch, seed=seed, learning_rate=lr)
    visor_cfg = TrainConfig("visor", epochs=150, batch_size=64, learning_rate=1e-3, patch_size=patch, seed=seed)
    row = run_ablation(
        args.variant, manifest, _profile(args.profile), _resolve(args.out),
        cae_cfg, dae_cfg, visor_cfg,
        n_sessions=args.sessions, base_seed=args.base_seed,
        cae_ckpt_path=_resolve(args.cae) if args.cae else None, verbose=True,
    )
    out = {k: v for k, v in row.items() if k != "summary"}
    out = {k: (str(v) if isinstance(v, Path) else v) for k, v in out.items()}
    with open(_resolve(args.out) / f"ablation_{args.variant}.json", "w") as fh:
        json.dump(out, fh, sort_keys=True, indent=2)
    print(
        f"{args.variant}: SRCC median {row['srcc_median']:.3f}  "
        f"PLCC median {row['plcc_median']:.3f}  ({row['feature_mode']})"
    )
    return 0


def _cmd_analyze(args) -> int:
    from .features import (
        content_similarity_study,
        distortion_separability,
        embed_2d,
        export_features,
        plot_embedding,
    )
    from .nets import load_checkpoint, load_content_autoencoder, load_distortion_autoencoder
    from .training import ImageStore

    manifest = _load_manifest(args.corpus)
    cae = load_content_autoencoder(load_checkpoint(_resolve(args.cae)))
    dae = load_distortion_autoencoder(load_checkpoint(_resolve(args.dae)))
    out = _resolve(args.out)
    out.mkdir(parents=True, exist_ok=True)

    records = export_features(cae, dae, manifest, out / "features.jsonl")

    store = ImageStore(manifest.root)
    distorted = manifest.distorted_records()[: args.max_pairs]
    pairs = [(store.get(r.pristine_path), store.get(r.distorted_path)) for r in distorted]
    sim = content_similarity_study(cae, pairs) if pairs else None

    sep = distortion_separability(records, seed=args.seed)

    import numpy as np

    fd = np.stack([r.f_d for r in records])
    coords, explained = embed_2d(fd)
    plot_embedding(coords, [r.type_id for r in records], out / "embedding_types.svg",
                   title="distortion features by type")
    mos = [r.pseudo_mos for r in records]
    plot_embedding(coords, [r.type_id for r in records], out / "embedding_scores.svg",
                   scores=mos, title="distortion features by pseudo-MOS")

    report = {
        "content_similarity": sim,
        "separability": sep,
        "embedding_explained_variance": [float(v) for v in explained],
        "n_records": len(records),
    }
    with open(out / "analysis.json", "w") as fh:
        json.dump(report, fh, sort_keys=True, indent=2)
    if sim:
        print(f"content cosine similarity: raw {sim['mean_cosine']:.4f}  pooled {sim['mean_cosine_pooled']:.4f}")
    print(f"probe accuracy {sep['probe_accuracy']:.3f}  pristine margin {sep['pristine_margin']:.4f}")
    print(f"embedding variance explained: {explained[0]:.3f} + {explained[1]:.3f}")
    return 0


_HANDLERS = {
    "synth": _cmd_synth,
    "distort": _cmd_distort,
    "train-cae": _cmd_train_cae,
    "train-dae": _cmd_train_dae,
    "train-visor": _cmd_train_visor,
    "eval": _cmd_eval,
    "cross-eval": _cmd_cross_eval,
    "ablate": _cmd_ablate,
    "analyze": _cmd_analyze,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _HANDLERS[args.cmd](args)
    except (ValueError, FileNotFoundError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
