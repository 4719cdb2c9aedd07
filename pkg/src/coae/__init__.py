"""Collaborative autoencoders for blind image quality assessment.

A content autoencoder learns from pristine images; a distortion autoencoder
reconstructs distorted images given the frozen content features, which forces
its encoder to isolate the distortion. A small regression head on top of the
two frozen encoders predicts perceptual quality. The package also ships a
synthetic distortion-corpus generator, a rank-correlation evaluation
harness, ablation variants, and feature-analysis tools.
"""

from .distortions import DistortionSpec, DISTORTION_TYPES, apply_distortion, build_corpus, pseudo_mos
from .evaluation import (
    cross_corpus_eval,
    plcc,
    render_table,
    run_sessions,
    split_by_reference,
    srcc,
    weighted_average,
)
from .features import (
    content_similarity_study,
    distortion_separability,
    embed_2d,
    export_features,
    mean_cosine,
)
from .imaging import Rng, crop_patch, derive_seed, load_image, save_image, synth_pristine, validate_image
from .losses import overall_loss, percep_loss, pyramid_distance, recon_loss, register_perceptual_provider
from .manifest import CorpusManifest, CorpusRecord, read_manifest, write_manifest
from .nets import (
    ContentAutoencoder,
    DistortionAutoencoder,
    NetProfile,
    load_checkpoint,
    param_hash,
    save_checkpoint,
    spp_pool,
)
from .pipeline import build_toy_corpus, run_ablation, train_two_stage
from .training import TrainConfig, train_content_stage, train_distortion_stage
from .visor import QualityHead, QualityPredictor, train_quality_head, train_quality_predictor

__version__ = "0.1.0"

__all__ = [
    "CorpusManifest",
    "CorpusRecord",
    "ContentAutoencoder",
    "DistortionAutoencoder",
    "DistortionSpec",
    "DISTORTION_TYPES",
    "NetProfile",
    "QualityHead",
    "QualityPredictor",
    "Rng",
    "TrainConfig",
    "apply_distortion",
    "build_corpus",
    "build_toy_corpus",
    "content_similarity_study",
    "crop_patch",
    "cross_corpus_eval",
    "derive_seed",
    "distortion_separability",
    "embed_2d",
    "export_features",
    "load_checkpoint",
    "load_image",
    "mean_cosine",
    "overall_loss",
    "param_hash",
    "percep_loss",
    "plcc",
    "pseudo_mos",
    "pyramid_distance",
    "read_manifest",
    "recon_loss",
    "register_perceptual_provider",
    "render_table",
    "run_ablation",
    "run_sessions",
    "save_checkpoint",
    "save_image",
    "split_by_reference",
    "spp_pool",
    "srcc",
    "synth_pristine",
    "train_content_stage",
    "train_distortion_stage",
    "train_quality_head",
    "train_quality_predictor",
    "train_two_stage",
    "validate_image",
    "weighted_average",
    "write_manifest",
]
