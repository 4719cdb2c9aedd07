"""Shared fixtures.

Two tiers: micro fixtures (seconds) for unit tests, and the session-scoped
toy bundle (minutes of CPU) that trains the full pipeline once for the
experiment-backed tests. All constants here are frozen; changing them
invalidates the calibrated thresholds in the tests that consume them.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest
import torch

torch.set_num_threads(1)

from coae.evaluation import EvalSummary, run_sessions
from coae.nets import (
    NetProfile,
    load_checkpoint,
    load_content_autoencoder,
    load_distortion_autoencoder,
)
from coae.pipeline import TOY_TYPES, build_toy_corpus, features_for
from coae.training import (
    ImageStore,
    TrainConfig,
    TrainResult,
    train_content_stage,
    train_distortion_stage,
)

# one line per release criterion, printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


# frozen toy-experiment configuration (calibrated once, then fixed)
TOY_N_PRISTINE_A = 64
TOY_N_PRISTINE_B = 32
TOY_SIZE = 64
TOY_SEED_A = 0
TOY_SEED_B = 1
TOY_CAE = dict(epochs=30, batch_size=8, patch_size=64, seed=0, learning_rate=1e-3)
TOY_DAE = dict(epochs=4, batch_size=8, patch_size=64, seed=0, learning_rate=1e-3)
TOY_VISOR = dict(epochs=150, batch_size=64, patch_size=64, seed=0, learning_rate=1e-3)
TOY_SESSIONS = 3
TOY_BASE_SEED = 100

MICRO_TYPES = ("gaussian_blur", "gaussian_noise", "pixelate")


@pytest.fixture(scope="session")
def tiny_profile() -> NetProfile:
    return NetProfile.tiny()


@pytest.fixture(scope="session")
def micro_corpus(tmp_path_factory):
    d = tmp_path_factory.mktemp("micro_corpus")
    return build_toy_corpus(
        d, n_pristine=6, size=32, seed=11, types=MICRO_TYPES, levels=(1, 3, 5), name="micro"
    )


@dataclass
class MicroNets:
    cae_path: Path
    dae_path: Path
    cae_log: Path
    dae_log: Path
    cae_result: TrainResult
    dae_result: TrainResult
    cae_cfg: TrainConfig
    dae_cfg: TrainConfig


@pytest.fixture(scope="session")
def micro_nets(micro_corpus, tiny_profile, tmp_path_factory) -> MicroNets:
    """Briefly trained CAE + DAE checkpoints for plumbing-level tests."""
    d = tmp_path_factory.mktemp("micro_nets")
    cae_cfg = TrainConfig("cae", epochs=2, batch_size=4, patch_size=32, seed=5, learning_rate=1e-3)
    dae_cfg = TrainConfig("dae", epochs=1, batch_size=4, patch_size=32, seed=5, learning_rate=1e-3)
    cae_path, dae_path = d / "cae.pt", d / "dae.pt"
    cae_log, dae_log = d / "cae_log.jsonl", d / "dae_log.jsonl"
    cae_res = train_content_stage(
        micro_corpus, cae_cfg, tiny_profile, cae_path,
        records=micro_corpus.pristine_records(), log_path=cae_log,
    )
    dae_res = train_distortion_stage(
        cae_path, micro_corpus, dae_cfg, tiny_profile, dae_path, log_path=dae_log
    )
    return MicroNets(cae_path, dae_path, cae_log, dae_log, cae_res, dae_res, cae_cfg, dae_cfg)


@dataclass
class ToyBundle:
    profile: NetProfile
    manifest_a: object
    manifest_b: object
    cae_path: Path
    dae_path: Path
    sdae_path: Path
    cae_result: TrainResult
    dae_result: TrainResult
    cae: object
    dae: object
    sdae: object
    features_a: tuple[np.ndarray, np.ndarray]
    features_b: tuple[np.ndarray, np.ndarray]
    sdae_fds_a: np.ndarray
    visor_cfg: TrainConfig
    summary_a: EvalSummary


@pytest.fixture(scope="session")
def toy_bundle(tmp_path_factory) -> ToyBundle:
    """Trains the full toy pipeline once: corpus A/B, stage 1, stage 2, the
    standalone-DAE ablation, cached features, and the in-corpus session run."""
    d = tmp_path_factory.mktemp("toy")
    profile = NetProfile.tiny()
    man_a = build_toy_corpus(
        d / "corpus_a", n_pristine=TOY_N_PRISTINE_A, size=TOY_SIZE, seed=TOY_SEED_A,
        types=TOY_TYPES, name="toy-a",
    )
    man_b = build_toy_corpus(
        d / "corpus_b", n_pristine=TOY_N_PRISTINE_B, size=TOY_SIZE, seed=TOY_SEED_B,
        types=TOY_TYPES, name="toy-b",
    )
    cae_path, dae_path, sdae_path = d / "cae.pt", d / "dae.pt", d / "sdae.pt"
    cae_res = train_content_stage(
        man_a, TrainConfig("cae", **TOY_CAE), profile, cae_path,
        records=man_a.pristine_records(),
    )
    dae_res = train_distortion_stage(
        cae_path, man_a, TrainConfig("dae", **TOY_DAE), profile, dae_path
    )
    train_distortion_stage(
        None, man_a, TrainConfig("dae", ablation="s_dae", **TOY_DAE), profile, sdae_path
    )
    cae = load_content_autoencoder(load_checkpoint(cae_path))
    dae = load_distortion_autoencoder(load_checkpoint(dae_path))
    sdae = load_distortion_autoencoder(load_checkpoint(sdae_path))
    features_a = features_for(man_a, cae, dae, profile)
    features_b = features_for(man_b, cae, dae, profile)
    _, sdae_fds_a = features_for(man_a, None, sdae, profile)
    visor_cfg = TrainConfig("visor", **TOY_VISOR)
    summary_a = run_sessions(
        cae, dae, man_a, visor_cfg, n_sessions=TOY_SESSIONS, base_seed=TOY_BASE_SEED,
        features=features_a, profile=profile,
    )
    return ToyBundle(
        profile=profile, manifest_a=man_a, manifest_b=man_b,
        cae_path=cae_path, dae_path=dae_path, sdae_path=sdae_path,
        cae_result=cae_res, dae_result=dae_res,
        cae=cae, dae=dae, sdae=sdae,
        features_a=features_a, features_b=features_b, sdae_fds_a=sdae_fds_a,
        visor_cfg=visor_cfg, summary_a=summary_a,
    )


@pytest.fixture(scope="session")
def toy_feature_records(toy_bundle):
    from coae.features import FeatureRecord

    gaps, fds = toy_bundle.features_a
    return [
        FeatureRecord(r.image_path, r.type_id, r.level, fds[i], gaps[i], r.pseudo_mos)
        for i, r in enumerate(toy_bundle.manifest_a.records)
    ]


@pytest.fixture(scope="session")
def toy_pair_images(toy_bundle):
    """64 aligned (pristine, distorted) image pairs drawn across the corpus."""
    man = toy_bundle.manifest_a
    store = ImageStore(man.root)
    drecs = man.distorted_records()
    sel = np.random.default_rng(7).choice(len(drecs), size=64, replace=False)
    return [(store.get(drecs[i].pristine_path), store.get(drecs[i].distorted_path)) for i in sel]
