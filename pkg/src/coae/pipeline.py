"""End-to-end orchestration shared by the CLI and the experiment tests:
toy-corpus construction, the two training stages back to back, and the
ablation study that retrains each reduced variant and scores it under the
session protocol.
"""

from __future__ import annotations

from dataclasses import replace
from pathlib import Path

import numpy as np

from .distortions import build_corpus
from .evaluation import EvalSummary, run_sessions
from .imaging import synth_pristine
from .manifest import CorpusManifest
from .nets import NetProfile, load_checkpoint, load_content_autoencoder, load_distortion_autoencoder
from .training import TrainConfig, TrainResult, train_content_stage, train_distortion_stage
from .visor import extract_quality_features

TOY_TYPES = ("gaussian_blur", "gaussian_noise", "overexposure", "pixelate", "color_saturation")
ABLATION_VARIANTS = ("full", "s_cae", "s_dae", "no_spp", "no_multilevel")


def build_toy_corpus(
    out_dir,
    n_pristine: int = 64,
    size: int = 64,
    seed: int = 0,
    types=TOY_TYPES,
    levels=(1, 2, 3, 4, 5),
    name: str = "toy",
) -> CorpusManifest:
    """Synthesizes pristine images and distorts them into a labeled corpus."""
    pristine = synth_pristine(n_pristine, size, seed)
    return build_corpus(pristine, list(types), list(levels), out_dir, seed, name=name)


def features_for(
    manifest: CorpusManifest, cae=None, dae=None, profile: NetProfile | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Per-record (content_gap, f_d) features, zero-filled for a missing net.

    Ablation settings that drop one encoder still flow through the shared
    evaluation path; the corresponding feature block is zeros and the head's
    feature_mode must ignore it.
    """
    from .training import ImageStore

    if cae is None and dae is None:
        raise ValueError("need at least one encoder")
    if profile is None:
        profile = cae.profile if cae is not None else dae.profile
    store = ImageStore(manifest.root)
    images = [store.get(r.image_path) for r in manifest.records]
    if cae is not None and dae is not None:
        return extract_quality_features(cae, dae, images)
    n = len(images)
    if cae is not None:
        gaps, _ = _single_encoder_gaps(cae, images)
        return gaps, np.zeros((n, profile.fd_dim), dtype=np.float32)
    fds = _single_encoder_fds(dae, images)
    return np.zeros((n, profile.content_channels), dtype=np.float32), fds


def _single_encoder_gaps(cae, images):
    import torch

    from .visor import _prepare

    cae.eval()
    gaps = []
    with torch.no_grad():
        for img in images:
            cmap = cae.encoder(_prepare(img, cae.profile))
            gaps.append(cmap.mean(dim=(2, 3)).squeeze(0).numpy())
    return np.stack(gaps), None


def _single_encoder_fds(dae, images):
    import torch

    from .visor import _prepare

    dae.eval()
    fds = []
    with torch.no_grad():
        for img in images:
            fds.append(dae.encoder(_prepare(img, dae.profile)).squeeze(0).numpy())
    return np.stack(fds)


def train_two_stage(
    manifest: CorpusManifest,
    profile: NetProfile,
    out_dir,
    cae_cfg: TrainConfig,
    dae_cfg: TrainConfig,
    verbose: bool = False,
) -> dict:
    """Stage 1 on the pristine records, then stage 2 on the distorted pairs."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cae_path = out_dir / "cae.pt"
    dae_path = out_dir / "dae.pt"
    r1 = train_content_stage(
        manifest, cae_cfg, profile, cae_path,
        records=manifest.pristine_records(),
        log_path=out_dir / "cae_log.jsonl", verbose=verbose,
    )
    r2 = train_distortion_stage(
        cae_path, manifest, dae_cfg, profile, dae_path,
        log_path=out_dir / "dae_log.jsonl", verbose=verbose,
    )
    return {"cae_path": cae_path, "dae_path": dae_path, "cae_result": r1, "dae_result": r2}


def _variant_mode(variant: str) -> str:
    return {"s_cae": "content_only", "s_dae": "distortion_only"}.get(variant, "both")


def run_ablation(
    variant: str,
    manifest: CorpusManifest,
    profile: NetProfile,
    work_dir,
    cae_cfg: TrainConfig,
    dae_cfg: TrainConfig,
    visor_cfg: TrainConfig,
    n_sessions: int = 3,
    base_seed: int = 0,
    cae_ckpt_path=None,
    verbose: bool = False,
) -> dict:
    """Trains one ablation variant and scores it with the session protocol.

    "full" is the collaborative baseline. "s_cae"/"s_dae" train one
    autoencoder independently and predict quality from its features alone;
    "no_spp"/"no_multilevel" use the reduced distortion encoders with the
    shared frozen content codec (trained here if no checkpoint is given).
    """
    if variant not in ABLATION_VARIANTS:
        raise ValueError(f"variant must be one of {ABLATION_VARIANTS}, got {variant!r}")
    work_dir = Path(work_dir)
    work_dir.mkdir(parents=True, exist_ok=True)
    mode = _variant_mode(variant)

    cae = dae = None
    paths: dict = {"variant": variant}
    if variant == "s_cae":
        ck = work_dir / "s_cae.pt"
        train_content_stage(
            manifest, replace(cae_cfg, ablation="s_cae"), profile, ck, verbose=verbose
        )
        cae = load_content_autoencoder(load_checkpoint(ck))
        paths["cae_path"] = ck
    elif variant == "s_dae":
        ck = work_dir / "s_dae.pt"
        train_distortion_stage(
            None, manifest, replace(dae_cfg, ablation="s_dae"), profile, ck, verbose=verbose
        )
        dae = load_distortion_autoencoder(load_checkpoint(ck))
        paths["dae_path"] = ck
    else:
        if cae_ckpt_path is None:
            cae_ckpt_path = work_dir / "cae.pt"
            train_content_stage(
                manifest, cae_cfg, profile, cae_ckpt_path,
                records=manifest.pristine_records(), verbose=verbose,
            )
        cae = load_content_autoencoder(load_checkpoint(cae_ckpt_path))
        ablation = "none" if variant == "full" else variant
        ck = work_dir / f"dae_{variant}.pt"
        train_distortion_stage(
            cae_ckpt_path, manifest, replace(dae_cfg, ablation=ablation), profile, ck,
            verbose=verbose,
        )
        dae = load_distortion_autoencoder(load_checkpoint(ck))
        paths["cae_path"] = cae_ckpt_path
        paths["dae_path"] = ck

    features = features_for(manifest, cae, dae, profile)
    summary: EvalSummary = run_sessions(
        cae, dae, manifest, visor_cfg,
        n_sessions=n_sessions, base_seed=base_seed,
        feature_mode=mode, features=features, profile=profile,
    )
    return {
        **paths,
        "feature_mode": mode,
        "srcc_median": summary.srcc_median,
        "plcc_median": summary.plcc_median,
        "n_failed": summary.n_failed,
        "summary": summary,
    }
