"""Quality prediction on top of the two frozen encoders.

The content encoder's feature map is pooled to a compact vector (1x1 conv then
global average pooling), concatenated with the distortion feature vector, and
regressed to a scalar score by a small fully connected head trained with MSE.
Both encoders stay frozen; only the head (and its pooling conv) learn.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .imaging import pad_to_multiple, to_tensor, validate_image
from .manifest import CorpusManifest
from .nets import (
    Checkpoint,
    NetProfile,
    load_checkpoint,
    load_content_autoencoder,
    load_distortion_autoencoder,
    param_hash,
    save_checkpoint,
)
from .training import ImageStore, TrainConfig

FEATURE_MODES = ("both", "content_only", "distortion_only")
HEAD_HIDDEN = (128, 64)


class QualityHead(nn.Module):
    """Pools content features, concatenates distortion features, regresses MOS.

    ``feature_mode`` restricts the input for ablation studies: content-only
    drops the distortion vector, distortion-only drops the content branch
    (including its pooling conv).
    """

    def __init__(self, profile: NetProfile, feature_mode: str = "both"):
        super().__init__()
        if feature_mode not in FEATURE_MODES:
            raise ValueError(f"feature_mode must be one of {FEATURE_MODES}, got {feature_mode!r}")
        self.profile = profile
        self.feature_mode = feature_mode
        if feature_mode != "distortion_only":
            self.pool_conv = nn.Conv2d(profile.content_channels, profile.fc_dim, kernel_size=1)
        in_dim = {
            "both": profile.fc_dim + profile.fd_dim,
            "content_only": profile.fc_dim,
            "distortion_only": profile.fd_dim,
        }[feature_mode]
        h1, h2 = HEAD_HIDDEN
        self.regressor = nn.Sequential(
            nn.Linear(in_dim, h1), nn.ReLU(inplace=True),
            nn.Linear(h1, h2), nn.ReLU(inplace=True),
            nn.Linear(h2, 1),
        )

    def pool_content(self, content_map: torch.Tensor) -> torch.Tensor:
        return self.pool_conv(content_map).mean(dim=(2, 3))

    def pool_from_gap(self, content_gap: torch.Tensor) -> torch.Tensor:
        # 1x1 conv followed by GAP commutes with GAP followed by the same
        # linear map, so cached per-image GAP vectors give identical results
        w = self.pool_conv.weight.view(self.profile.fc_dim, self.profile.content_channels)
        return F.linear(content_gap, w, self.pool_conv.bias)

    def combine(self, content_gap: torch.Tensor | None, f_d: torch.Tensor | None) -> torch.Tensor:
        if self.feature_mode == "distortion_only":
            return f_d
        pooled = self.pool_from_gap(content_gap)
        if self.feature_mode == "content_only":
            return pooled
        return torch.cat([pooled, f_d], dim=1)

    def forward(self, content_map: torch.Tensor | None, f_d: torch.Tensor | None) -> torch.Tensor:
        if self.feature_mode == "distortion_only":
            f_q = f_d
        else:
            pooled = self.pool_content(content_map)
            f_q = pooled if self.feature_mode == "content_only" else torch.cat([pooled, f_d], dim=1)
        return self.regressor(f_q).squeeze(1)

    def quality_dim(self) -> int:
        return self.regressor[0].in_features


def extract_quality_features(cae, dae, images: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Runs both frozen encoders once per image at full size.

    Returns (content_gap, f_d): the globally averaged content map and the
    distortion feature vector, one row per image.
    """
    cae.eval()
    dae.eval()
    gaps, fds = [], []
    with torch.no_grad():
        for img in images:
            batch = _prepare(img, cae.profile)
            cmap = cae.encoder(batch)
            gaps.append(cmap.mean(dim=(2, 3)).squeeze(0).numpy())
            fds.append(dae.encoder(batch).squeeze(0).numpy())
    return np.stack(gaps), np.stack(fds)


def _prepare(img: np.ndarray, profile: NetProfile) -> torch.Tensor:
    validate_image(img, min_dim=profile.min_input)
    return to_tensor(pad_to_multiple(img, 4)).unsqueeze(0)


def train_quality_head(
    content_gap: np.ndarray,
    f_d: np.ndarray,
    mos: np.ndarray,
    cfg: TrainConfig,
    profile: NetProfile,
    feature_mode: str = "both",
) -> tuple[QualityHead, dict]:
    """Fits the regression head on cached features with MSE against MOS
    rescaled to [0, 1] by the training range."""
    if cfg.stage != "visor":
        raise ValueError(f"quality head training requires stage='visor', got {cfg.stage!r}")
    mos = np.asarray(mos, dtype=np.float64)
    n = len(mos)
    if n < 2:
        raise ValueError("need at least 2 samples")
    lo, hi = float(mos.min()), float(mos.max())
    if hi <= lo:
        raise ValueError("MOS range is degenerate; cannot normalize targets")
    target = torch.from_numpy(((mos - lo) / (hi - lo)).astype(np.float32))
    gap_t = torch.from_numpy(np.asarray(content_gap, dtype=np.float32))
    fd_t = torch.from_numpy(np.asarray(f_d, dtype=np.float32))

    torch.manual_seed(cfg.seed)
    head = QualityHead(profile, feature_mode)
    opt = torch.optim.Adam(head.parameters(), lr=cfg.learning_rate)
    from .imaging import Rng

    order_rng = Rng(cfg.seed).spawn(5)
    for _epoch in range(cfg.epochs):
        order = order_rng.gen.permutation(n)
        for start in range(0, n, cfg.batch_size):
            sel = torch.from_numpy(order[start : start + cfg.batch_size].copy())
            opt.zero_grad()
            pred = head.regressor(head.combine(gap_t[sel], fd_t[sel])).squeeze(1)
            loss = F.mse_loss(pred, target[sel])
            loss.backward()
            opt.step()
    info = {"mos_min": lo, "mos_max": hi, "final_mse": loss.item()}
    return head, info


def save_quality_head(path, head: QualityHead, meta: dict) -> None:
    meta = dict(meta)
    meta["feature_mode"] = head.feature_mode
    save_checkpoint(path, head.profile, "visor", {"head": head}, meta=meta)


def load_quality_head(ckpt: Checkpoint | str) -> QualityHead:
    if not isinstance(ckpt, Checkpoint):
        ckpt = load_checkpoint(ckpt)
    if ckpt.stage != "visor":
        raise ValueError(f"expected a quality-head checkpoint, got stage {ckpt.stage!r}")
    head = QualityHead(ckpt.profile, ckpt.meta.get("feature_mode", "both"))
    ckpt.load_into("head", head)
    head.eval()
    return head


def train_quality_predictor(
    cae_ckpt_path,
    dae_ckpt_path,
    manifest: CorpusManifest,
    cfg: TrainConfig,
    out_path,
    feature_mode: str = "both",
) -> dict:
    """End-to-end head training from a corpus with pseudo-MOS labels.

    Loads both frozen encoders, extracts features once, fits the head, and
    verifies by parameter hash that neither encoder moved.
    """
    cae = load_content_autoencoder(load_checkpoint(cae_ckpt_path))
    dae = load_distortion_autoencoder(load_checkpoint(dae_ckpt_path))
    cae_hash, dae_hash = param_hash(cae), param_hash(dae)

    store = ImageStore(manifest.root)
    images = [store.get(r.image_path) for r in manifest.records]
    mos = np.array([r.pseudo_mos for r in manifest.records], dtype=np.float64)
    gaps, fds = extract_quality_features(cae, dae, images)
    head, info = train_quality_head(gaps, fds, mos, cfg, cae.profile, feature_mode)

    if param_hash(cae) != cae_hash or param_hash(dae) != dae_hash:
        raise RuntimeError("frozen encoder parameters changed during quality training")
    save_quality_head(
        out_path,
        head,
        meta={
            "config": cfg.to_dict(),
            "cae_hash": cae_hash,
            "dae_hash": dae_hash,
            "corpus_seed": manifest.corpus_seed,
            **info,
        },
    )
    return {
        "head_path": str(out_path),
        "cae_hash": cae_hash,
        "dae_hash": dae_hash,
        "n_records": len(manifest.records),
        "feature_mode": feature_mode,
        **info,
    }


class QualityPredictor:
    """Frozen encoders plus trained head; maps an RGB image to a scalar score."""

    def __init__(self, cae, dae, head: QualityHead):
        self.cae = cae
        self.dae = dae
        self.head = head
        for m in (self.cae, self.dae, self.head):
            m.eval()

    @classmethod
    def load(cls, cae_ckpt_path, dae_ckpt_path, head_ckpt_path) -> "QualityPredictor":
        cae = load_content_autoencoder(load_checkpoint(cae_ckpt_path))
        dae = load_distortion_autoencoder(load_checkpoint(dae_ckpt_path))
        head = load_quality_head(head_ckpt_path)
        if cae.profile != head.profile:
            raise ValueError("encoder and head profiles do not match")
        return cls(cae, dae, head)

    def predict(self, img: np.ndarray) -> float:
        batch = _prepare(img, self.head.profile)
        with torch.no_grad():
            f_d = self.dae.encoder(batch)
            if self.head.feature_mode == "distortion_only":
                return float(self.head(None, f_d))
            cmap = self.cae.encoder(batch)
            return float(self.head(cmap, f_d))

    def predict_many(self, images: list[np.ndarray]) -> np.ndarray:
        return np.array([self.predict(im) for im in images], dtype=np.float64)
