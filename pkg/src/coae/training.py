"""Two-stage training: the content codec learns from pristine images, then its
parameters are frozen while the distortion autoencoder learns to reconstruct
distorted images given the frozen content features of the matching pristine
image. Ablation flags cover independently trained variants and the reduced
distortion-encoder architectures.

All training is deterministic given (config, corpus, seed): model init comes
from the torch seed, data order and patch positions from Philox streams
derived from the same seed.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .imaging import Rng, load_image
from .losses import overall_loss, recon_loss
from .manifest import CorpusManifest, CorpusRecord
from .nets import (
    ContentAutoencoder,
    DistortionAutoencoder,
    NetProfile,
    checkpoint_modules,
    load_checkpoint,
    load_content_autoencoder,
    param_hash,
    save_checkpoint,
)

VALID_STAGES = ("cae", "dae", "visor")
VALID_ABLATIONS = ("none", "s_cae", "s_dae", "no_spp", "no_multilevel")


@dataclass
class TrainConfig:
    stage: str
    epochs: int = 30
    batch_size: int = 16
    learning_rate: float = 1e-4
    patch_size: int = 256
    seed: int = 0
    ablation: str = "none"
    perceptual_weight: float = 1.0
    holdout_fraction: float = 0.125

    def __post_init__(self):
        if self.stage not in VALID_STAGES:
            raise ValueError(f"stage must be one of {VALID_STAGES}, got {self.stage!r}")
        if self.ablation not in VALID_ABLATIONS:
            raise ValueError(f"ablation must be one of {VALID_ABLATIONS}, got {self.ablation!r}")
        if self.epochs <= 0 or self.batch_size <= 0 or self.learning_rate <= 0:
            raise ValueError("epochs, batch_size and learning_rate must be positive")
        if self.patch_size % 4 != 0:
            raise ValueError("patch_size must be divisible by 4")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)

    @classmethod
    def from_file(cls, path: str | Path, **overrides) -> "TrainConfig":
        d = json.loads(Path(path).read_text())
        d.update(overrides)
        return cls.from_dict(d)


@dataclass
class TrainResult:
    checkpoint_path: Path
    init_holdout_recon: float
    final_holdout_recon: float
    steps: int
    log_path: Path | None = None


class ImageStore:
    """Caches decoded corpus images as float32 arrays, keyed by resolved path."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self._cache: dict[str, np.ndarray] = {}

    def get(self, rel_path: str) -> np.ndarray:
        if rel_path not in self._cache:
            full = self.root / rel_path
            if not full.exists():
                raise FileNotFoundError(f"corpus image missing: {full}")
            self._cache[rel_path] = load_image(full).astype(np.float32)
        return self._cache[rel_path]


def _center_crop(img: np.ndarray, size: int) -> np.ndarray:
    h, w = img.shape[:2]
    if h < size or w < size:
        raise ValueError(f"image {h}x{w} smaller than patch {size}")
    y, x = (h - size) // 2, (w - size) // 2
    return img[y : y + size, x : x + size]


def _aligned_crops(imgs: list[np.ndarray], size: int, rng: Rng) -> list[np.ndarray]:
    # all images in the group share content and dimensions; one offset for all
    h, w = imgs[0].shape[:2]
    if h < size or w < size:
        raise ValueError(f"image {h}x{w} smaller than patch {size}")
    y = int(rng.gen.integers(0, h - size + 1))
    x = int(rng.gen.integers(0, w - size + 1))
    return [im[y : y + size, x : x + size] for im in imgs]


def _to_batch(imgs: list[np.ndarray]) -> torch.Tensor:
    arr = np.stack([np.transpose(im, (2, 0, 1)) for im in imgs])
    return torch.from_numpy(np.ascontiguousarray(arr))


def _holdout_split(n: int, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    if n < 2:
        raise ValueError("need at least 2 records to carve a holdout set")
    k = max(1, int(round(fraction * n)))
    k = min(k, n - 1)
    perm = Rng(seed).spawn(2).gen.permutation(n)
    return perm[k:], perm[:k]


class _StepLog:
    def __init__(self, path: Path | None):
        self.path = path
        self._fh = open(path, "w") if path else None

    def write(self, step: int, lr, lp, lo) -> None:
        if self._fh:
            rec = {
                "step": step,
                "L_recon": float(torch.as_tensor(lr).detach()),
                "L_percep": float(torch.as_tensor(lp).detach()),
                "L_overall": float(torch.as_tensor(lo).detach()),
            }
            self._fh.write(json.dumps(rec, sort_keys=True) + "\n")

    def close(self):
        if self._fh:
            self._fh.close()


def train_content_stage(
    manifest: CorpusManifest,
    cfg: TrainConfig,
    profile: NetProfile,
    out_path: str | Path,
    records: list[CorpusRecord] | None = None,
    log_path: str | Path | None = None,
    verbose: bool = False,
) -> TrainResult:
    """Stage 1: train the content autoencoder on pristine images.

    With ``ablation="s_cae"`` the same architecture trains as a plain
    autoencoder on distorted images instead; otherwise any distorted record in
    the input is rejected to keep the content features distortion-free.
    """
    if cfg.stage != "cae":
        raise ValueError(f"content stage requires stage='cae', got {cfg.stage!r}")
    records = list(records if records is not None else manifest.records)
    if cfg.ablation == "s_cae":
        records = [r for r in records if not r.is_pristine]
        if not records:
            raise ValueError("s_cae ablation needs distorted records")
    elif any(not r.is_pristine for r in records):
        raise ValueError("distorted records present; content stage trains on pristine only")
    if not records:
        raise ValueError("no training records")

    store = ImageStore(manifest.root)
    train_idx, hold_idx = _holdout_split(len(records), cfg.holdout_fraction, cfg.seed)

    torch.manual_seed(cfg.seed)
    net = ContentAutoencoder(profile)
    opt = torch.optim.Adam(net.parameters(), lr=cfg.learning_rate)

    def holdout_recon() -> float:
        net.eval()
        with torch.no_grad():
            imgs = [_center_crop(store.get(records[i].image_path), cfg.patch_size) for i in hold_idx]
            batch = _to_batch(imgs)
            return float(recon_loss(net(batch), batch))

    init_holdout = holdout_recon()
    order_rng = Rng(cfg.seed).spawn(3)
    log = _StepLog(Path(log_path) if log_path else None)
    step = 0
    for epoch in range(cfg.epochs):
        net.train()
        order = order_rng.gen.permutation(len(train_idx))
        for start in range(0, len(order), cfg.batch_size):
            chunk = [int(train_idx[j]) for j in order[start : start + cfg.batch_size]]
            imgs = []
            for idx in chunk:
                crop_rng = Rng(cfg.seed).spawn(4, epoch, idx)
                imgs.append(
                    _aligned_crops([store.get(records[idx].image_path)], cfg.patch_size, crop_rng)[0]
                )
            batch = _to_batch(imgs)
            opt.zero_grad()
            total, lr_term, lp_term = overall_loss(net(batch), batch, cfg.perceptual_weight)
            total.backward()
            opt.step()
            step += 1
            log.write(step, lr_term, lp_term, total)
        if verbose and (epoch + 1) % 10 == 0:
            print(f"[cae] epoch {epoch + 1}/{cfg.epochs} loss {total.item():.4f}")
    log.close()

    final_holdout = holdout_recon()
    stage_tag = "cae"
    save_checkpoint(
        out_path,
        profile,
        stage_tag,
        checkpoint_modules(net),
        meta={
            "config": cfg.to_dict(),
            "corpus_seed": manifest.corpus_seed,
            "ablation": cfg.ablation,
            "init_holdout_recon": init_holdout,
            "final_holdout_recon": final_holdout,
            "steps": step,
        },
    )
    return TrainResult(Path(out_path), init_holdout, final_holdout, step, Path(log_path) if log_path else None)


def train_distortion_stage(
    cae_ckpt_path: str | Path | None,
    manifest: CorpusManifest,
    cfg: TrainConfig,
    profile: NetProfile,
    out_path: str | Path,
    records: list[CorpusRecord] | None = None,
    log_path: str | Path | None = None,
    verbose: bool = False,
) -> TrainResult:
    """Stage 2: train the distortion autoencoder on (pristine, distorted) pairs.

    The content codec is loaded from its checkpoint and frozen; its encoder
    runs on the pristine partner of each distorted image. ``ablation="s_dae"``
    trains the standalone variant (no content input, no content checkpoint
    needed); ``no_spp`` / ``no_multilevel`` select the reduced encoders.
    """
    if cfg.stage != "dae":
        raise ValueError(f"distortion stage requires stage='dae', got {cfg.stage!r}")
    if cfg.ablation == "s_cae":
        raise ValueError("s_cae is a content-stage ablation")
    standalone = cfg.ablation == "s_dae"
    variant = cfg.ablation if cfg.ablation in ("no_spp", "no_multilevel") else "full"

    records = [r for r in (records if records is not None else manifest.records) if not r.is_pristine]
    if not records:
        raise ValueError("no distorted records to train on")

    store = ImageStore(manifest.root)
    cae = None
    cae_hash = None
    if not standalone:
        if cae_ckpt_path is None:
            raise ValueError("content checkpoint required unless ablation='s_dae'")
        ckpt = load_checkpoint(cae_ckpt_path)
        if ckpt.stage != "cae":
            raise ValueError(f"expected a content-stage checkpoint, got stage {ckpt.stage!r}")
        if ckpt.profile != profile:
            raise ValueError("content checkpoint profile does not match")
        cae = load_content_autoencoder(ckpt)
        cae.eval()
        cae.requires_grad_(False)
        cae_hash = param_hash(cae)
        # pairs must resolve: every distorted record needs its pristine partner
        for r in records:
            if not (manifest.root / r.pristine_path).exists():
                raise FileNotFoundError(f"pristine partner missing: {r.pristine_path}")

    train_idx, hold_idx = _holdout_split(len(records), cfg.holdout_fraction, cfg.seed)

    torch.manual_seed(cfg.seed)
    dae = DistortionAutoencoder(profile, variant=variant, standalone=standalone)
    opt = torch.optim.Adam(dae.parameters(), lr=cfg.learning_rate)

    def holdout_recon() -> float:
        dae.eval()
        with torch.no_grad():
            losses = []
            for i in hold_idx:
                r = records[int(i)]
                dimg = _center_crop(store.get(r.distorted_path), cfg.patch_size)
                dbatch = _to_batch([dimg])
                if standalone:
                    out = dae(dbatch)
                else:
                    pimg = _center_crop(store.get(r.pristine_path), cfg.patch_size)
                    out = dae(dbatch, cae.encoder(_to_batch([pimg])))
                losses.append(float(recon_loss(out, dbatch)))
            return float(np.mean(losses))

    init_holdout = holdout_recon()
    order_rng = Rng(cfg.seed).spawn(3)
    log = _StepLog(Path(log_path) if log_path else None)
    step = 0
    for epoch in range(cfg.epochs):
        dae.train()
        order = order_rng.gen.permutation(len(train_idx))
        for start in range(0, len(order), cfg.batch_size):
            chunk = [int(train_idx[j]) for j in order[start : start + cfg.batch_size]]
            dist_imgs, prist_imgs = [], []
            for idx in chunk:
                r = records[idx]
                crop_rng = Rng(cfg.seed).spawn(4, epoch, idx)
                if standalone:
                    dimg = _aligned_crops([store.get(r.distorted_path)], cfg.patch_size, crop_rng)[0]
                    dist_imgs.append(dimg)
                else:
                    dimg, pimg = _aligned_crops(
                        [store.get(r.distorted_path), store.get(r.pristine_path)],
                        cfg.patch_size,
                        crop_rng,
                    )
                    dist_imgs.append(dimg)
                    prist_imgs.append(pimg)
            dbatch = _to_batch(dist_imgs)
            opt.zero_grad()
            if standalone:
                out = dae(dbatch)
            else:
                with torch.no_grad():
                    content = cae.encoder(_to_batch(prist_imgs))
                out = dae(dbatch, content)
            total, lr_term, lp_term = overall_loss(out, dbatch, cfg.perceptual_weight)
            total.backward()
            opt.step()
            step += 1
            log.write(step, lr_term, lp_term, total)
        if verbose:
            print(f"[dae] epoch {epoch + 1}/{cfg.epochs} loss {total.item():.4f}")
    log.close()

    if cae is not None and param_hash(cae) != cae_hash:
        raise RuntimeError("frozen content parameters changed during stage 2")

    final_holdout = holdout_recon()
    meta = {
        "config": cfg.to_dict(),
        "corpus_seed": manifest.corpus_seed,
        "ablation": cfg.ablation,
        "variant": variant,
        "standalone": standalone,
        "init_holdout_recon": init_holdout,
        "final_holdout_recon": final_holdout,
        "steps": step,
    }
    if cae_hash is not None:
        meta["cae_hash"] = cae_hash
    save_checkpoint(out_path, profile, "dae", checkpoint_modules(dae), meta=meta)
    return TrainResult(Path(out_path), init_holdout, final_holdout, step, Path(log_path) if log_path else None)
