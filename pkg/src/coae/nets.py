"""Network definitions: content autoencoder, distortion encoder with
multi-level pyramid-pooled taps, and the modulation-based distortion decoder.

The content codec downsamples by 4 (two stride-2 stages); the distortion
encoder taps four stride-2 stages and squeezes each tap to a fixed-length
code, so the concatenated distortion vector has the same length for any input
size. The distortion decoder turns the distortion vector into a modulation
signal that rectifies the content feature map in four residual steps before
rendering.
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass
from pathlib import Path

import torch
import torch.nn.functional as F
from torch import nn

CHECKPOINT_VERSION = 1

DAE_VARIANTS = ("full", "no_spp", "no_multilevel")


@dataclass(frozen=True)
class NetProfile:
    """Width plan for one model family; tiny (scale 0.25) exists for CI speed."""

    width_scale: float
    content_channels: int
    fd_dim: int
    fc_dim: int
    s_dim: int
    min_input: int

    def __post_init__(self):
        if self.fd_dim % 4 != 0:
            raise ValueError("fd_dim must be divisible by 4 (four taps)")
        if self.s_dim != 4 * self.content_channels:
            raise ValueError("s_dim must equal 4 x content_channels")

    @property
    def stem_channels(self) -> int:
        return int(64 * self.width_scale)

    @property
    def mid_channels(self) -> int:
        return int(128 * self.width_scale)

    @property
    def spp_channels(self) -> int:
        return int(32 * self.width_scale)

    @property
    def tap_dim(self) -> int:
        return self.fd_dim // 4

    @classmethod
    def canonical(cls) -> "NetProfile":
        return cls(width_scale=1.0, content_channels=256, fd_dim=256, fc_dim=16, s_dim=1024, min_input=32)

    @classmethod
    def tiny(cls) -> "NetProfile":
        return cls(width_scale=0.25, content_channels=64, fd_dim=64, fc_dim=4, s_dim=256, min_input=8)

    @classmethod
    def named(cls, name: str) -> "NetProfile":
        if name == "canonical":
            return cls.canonical()
        if name == "tiny":
            return cls.tiny()
        raise ValueError(f"unknown profile {name!r}")

    @property
    def name(self) -> str:
        return "canonical" if self.width_scale == 1.0 else "tiny"


class ResidualBlock(nn.Module):
    """k3-BN-ReLU-k3-BN plus identity skip."""

    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.bn1 = nn.BatchNorm2d(channels)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)
        self.bn2 = nn.BatchNorm2d(channels)

    def forward(self, x):
        h = F.relu(self.bn1(self.conv1(x)))
        return x + self.bn2(self.conv2(h))


class ContentEncoder(nn.Module):
    """Three conv+BN+ReLU layers (stride 1,2,2) followed by four residual blocks."""

    def __init__(self, profile: NetProfile):
        super().__init__()
        self.profile = profile
        c1, c2, c3 = profile.stem_channels, profile.mid_channels, profile.content_channels
        self.stem = nn.Sequential(
            nn.Conv2d(3, c1, 7, stride=1, padding=3), nn.BatchNorm2d(c1), nn.ReLU(inplace=True),
            nn.Conv2d(c1, c2, 4, stride=2, padding=1), nn.BatchNorm2d(c2), nn.ReLU(inplace=True),
            nn.Conv2d(c2, c3, 4, stride=2, padding=1), nn.BatchNorm2d(c3), nn.ReLU(inplace=True),
        )
        self.blocks = nn.Sequential(*[ResidualBlock(c3) for _ in range(4)])

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h, w = x.shape[-2:]
        if h % 4 != 0 or w % 4 != 0:
            raise ValueError(f"input size {h}x{w} not divisible by 4")
        return self.blocks(self.stem(x))


class ContentDecoder(nn.Module):
    """Dual of the encoder: four residual blocks, then the upsampling tail."""

    def __init__(self, profile: NetProfile):
        super().__init__()
        self.profile = profile
        c3 = profile.content_channels
        self.blocks = nn.Sequential(*[ResidualBlock(c3) for _ in range(4)])
        self.tail = UpsamplingTail(profile)

    def forward(self, feat: torch.Tensor) -> torch.Tensor:
        if feat.shape[-3] != self.profile.content_channels:
            raise ValueError(
                f"expected {self.profile.content_channels} channels, got {feat.shape[-3]}"
            )
        return self.tail(self.blocks(feat))


class UpsamplingTail(nn.Module):
    """Two stride-2 transposed convs and a final k7 conv with sigmoid squashing."""

    def __init__(self, profile: NetProfile):
        super().__init__()
        c1, c2, c3 = profile.stem_channels, profile.mid_channels, profile.content_channels
        self.layers = nn.Sequential(
            nn.ConvTranspose2d(c3, c2, 4, stride=2, padding=1), nn.BatchNorm2d(c2), nn.ReLU(inplace=True),
            nn.ConvTranspose2d(c2, c1, 4, stride=2, padding=1), nn.BatchNorm2d(c1), nn.ReLU(inplace=True),
            nn.Conv2d(c1, 3, 7, stride=1, padding=3),
        )

    def forward(self, x):
        return torch.sigmoid(self.layers(x))


class ContentAutoencoder(nn.Module):
    def __init__(self, profile: NetProfile):
        super().__init__()
        self.profile = profile
        self.encoder = ContentEncoder(profile)
        self.decoder = ContentDecoder(profile)

    def forward(self, x):
        return self.decoder(self.encoder(x))


def spp_pool(feat: torch.Tensor, levels: tuple[int, ...]) -> torch.Tensor:
    """Pyramid max-pooling: for each level l the map is cut into an l x l grid
    of near-equal cells (ceil-split), each cell max-pooled per channel, and the
    level outputs concatenated. (..., C, h, w) -> (..., C * sum(l^2)).

    Bin order: levels in the given order; within a level, channel-major then
    row-major cells.
    """
    if feat.dim() == 3:
        return spp_pool(feat.unsqueeze(0), levels).squeeze(0)
    h, w = feat.shape[-2:]
    if min(h, w) < max(levels):
        raise ValueError(f"map {h}x{w} smaller than pyramid level {max(levels)}")
    parts = [F.adaptive_max_pool2d(feat, lv).flatten(1) for lv in levels]
    return torch.cat(parts, dim=1)


class SppNeck(nn.Module):
    """Per-tap squeeze: 1x1 conv, pyramid pooling, fully connected projection."""

    def __init__(self, in_channels: int, out_dim: int, spp_channels: int, levels: tuple[int, ...] = (1, 2, 4)):
        super().__init__()
        self.levels = levels
        self.reduce = nn.Conv2d(in_channels, spp_channels, 1)
        self.fc = nn.Linear(spp_channels * sum(lv * lv for lv in levels), out_dim)

    def forward(self, x):
        x = self.reduce(x)
        h, w = x.shape[-2:]
        m = max(self.levels)
        if min(h, w) < m:
            # tiny maps are duplicated up to the coarsest grid so the pyramid
            # stays well-defined on very small inputs
            x = F.interpolate(x, size=(max(h, m), max(w, m)), mode="nearest")
        return self.fc(spp_pool(x, self.levels))


class GapNeck(nn.Module):
    """Squeeze used by the no_spp ablation: global average pool then FC."""

    def __init__(self, in_channels: int, out_dim: int):
        super().__init__()
        self.fc = nn.Linear(in_channels, out_dim)

    def forward(self, x):
        return self.fc(F.adaptive_avg_pool2d(x, 1).flatten(1))


class DistortionEncoder(nn.Module):
    """Four stride-2 stages with a squeezed tap after each; the four tap codes
    concatenate (in stage order) into the fixed-length distortion vector."""

    def __init__(self, profile: NetProfile, variant: str = "full"):
        super().__init__()
        if variant not in DAE_VARIANTS:
            raise ValueError(f"unknown variant {variant!r}")
        self.profile = profile
        self.variant = variant
        c1, c2, c3 = profile.stem_channels, profile.mid_channels, profile.content_channels
        chans = [c1, c2, c3, c3]
        ins = [3, c1, c2, c3]
        self.stages = nn.ModuleList(
            nn.Sequential(
                nn.Conv2d(i, c, 3, stride=2, padding=1), nn.BatchNorm2d(c), nn.ReLU(inplace=True)
            )
            for i, c in zip(ins, chans)
        )
        if variant == "full":
            self.necks = nn.ModuleList(
                SppNeck(c, profile.tap_dim, profile.spp_channels) for c in chans
            )
        elif variant == "no_spp":
            self.necks = nn.ModuleList(GapNeck(c, profile.tap_dim) for c in chans)
        else:  # no_multilevel: only the deepest tap, widened to the full vector
            self.necks = nn.ModuleList([SppNeck(chans[-1], profile.fd_dim, profile.spp_channels)])

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h, w = x.shape[-2:]
        if min(h, w) < self.profile.min_input:
            raise ValueError(f"input {h}x{w} below minimum size {self.profile.min_input}")
        taps = []
        for stage in self.stages:
            x = stage(x)
            taps.append(x)
        if self.variant == "no_multilevel":
            return self.necks[0](taps[-1])
        return torch.cat([neck(t) for neck, t in zip(self.necks, taps)], dim=1)


class SubModResBlock(nn.Module):
    """Residual modulation: the signal slice is copied across space, joined to
    the feature channels, and a two-conv branch (final conv zero-initialized,
    so the block starts as identity) is added back."""

    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = nn.Conv2d(2 * channels, channels, 3, padding=1)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)
        nn.init.zeros_(self.conv2.weight)
        nn.init.zeros_(self.conv2.bias)

    def forward(self, feat: torch.Tensor, signal: torch.Tensor) -> torch.Tensor:
        if signal.shape[-1] != feat.shape[-3]:
            raise ValueError(
                f"signal length {signal.shape[-1]} != feature channels {feat.shape[-3]}"
            )
        b, _, h, w = feat.shape
        tiled = signal[:, :, None, None].expand(b, signal.shape[-1], h, w)
        branch = self.conv2(F.relu(self.conv1(torch.cat([feat, tiled], dim=1))))
        return feat + branch


class DistortionDecoder(nn.Module):
    """Expands the distortion vector to a modulation signal, applies it to the
    content feature map in four sequential residual steps, then renders."""

    def __init__(self, profile: NetProfile):
        super().__init__()
        self.profile = profile
        self.expand = nn.Linear(profile.fd_dim, profile.s_dim)
        self.blocks = nn.ModuleList(SubModResBlock(profile.content_channels) for _ in range(4))
        self.tail = UpsamplingTail(profile)

    def split_signal(self, s: torch.Tensor) -> list[torch.Tensor]:
        """Four equal contiguous slices, consumed by the blocks in order."""
        c = self.profile.content_channels
        return [s[:, k * c : (k + 1) * c] for k in range(4)]

    def modulate(self, content_map: torch.Tensor, dist_vec: torch.Tensor) -> torch.Tensor:
        self._check(content_map, dist_vec)
        s = self.expand(dist_vec)
        feat = content_map
        for block, sk in zip(self.blocks, self.split_signal(s)):
            feat = block(feat, sk)
        return feat

    def render(self, modulated: torch.Tensor) -> torch.Tensor:
        return self.tail(modulated)

    def forward(self, content_map: torch.Tensor, dist_vec: torch.Tensor) -> torch.Tensor:
        return self.render(self.modulate(content_map, dist_vec))

    def _check(self, content_map, dist_vec):
        if content_map.shape[-3] != self.profile.content_channels:
            raise ValueError(
                f"content map has {content_map.shape[-3]} channels, "
                f"profile expects {self.profile.content_channels}"
            )
        if dist_vec.shape[-1] != self.profile.fd_dim:
            raise ValueError(
                f"distortion vector length {dist_vec.shape[-1]} != fd_dim {self.profile.fd_dim}"
            )


class ConstantMap(nn.Module):
    """Learned per-channel constant, broadcast to any spatial size."""

    def __init__(self, channels: int):
        super().__init__()
        self.value = nn.Parameter(torch.zeros(channels, 1, 1))

    def forward(self, batch: int, h: int, w: int) -> torch.Tensor:
        return self.value.expand(batch, self.value.shape[0], h, w)


class DistortionAutoencoder(nn.Module):
    """Distortion encoder plus modulation decoder.

    ``standalone=True`` (the independent-training ablation) replaces the
    external content map with a learned constant map, so reconstruction must
    be driven by the distortion vector alone.
    """

    def __init__(self, profile: NetProfile, variant: str = "full", standalone: bool = False):
        super().__init__()
        self.profile = profile
        self.variant = variant
        self.standalone = standalone
        self.encoder = DistortionEncoder(profile, variant)
        self.decoder = DistortionDecoder(profile)
        if standalone:
            self.content_const = ConstantMap(profile.content_channels)

    def forward(self, distorted: torch.Tensor, content_map: torch.Tensor | None = None) -> torch.Tensor:
        dist_vec = self.encoder(distorted)
        if self.standalone:
            if content_map is not None:
                raise ValueError("standalone decoder takes no external content map")
            b, _, h, w = distorted.shape
            content_map = self.content_const(b, h // 4, w // 4)
        elif content_map is None:
            raise ValueError("content map required unless standalone")
        return self.decoder(content_map, dist_vec)


def param_hash(module: nn.Module) -> str:
    """SHA-256 over all parameters and buffers, keyed by path; order-stable."""
    h = hashlib.sha256()
    state = module.state_dict()
    for name in sorted(state):
        t = state[name].detach().cpu().contiguous()
        h.update(name.encode())
        h.update(str(t.dtype).encode())
        h.update(str(tuple(t.shape)).encode())
        h.update(t.numpy().tobytes())
    return h.hexdigest()


@dataclass
class Checkpoint:
    profile: NetProfile
    stage: str
    modules: dict
    meta: dict
    format_version: int = CHECKPOINT_VERSION

    def load_into(self, name: str, module: nn.Module) -> nn.Module:
        module.load_state_dict(self.modules[name])
        return module


def save_checkpoint(
    path: str | Path,
    profile: NetProfile,
    stage: str,
    modules: dict[str, nn.Module],
    meta: dict | None = None,
) -> None:
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "profile": asdict(profile),
        "stage": stage,
        "modules": {k: m.state_dict() for k, m in modules.items()},
        "meta": meta or {},
    }
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, str(path))


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    payload = torch.load(str(path), map_location="cpu", weights_only=True)
    version = payload.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version!r} in {path}")
    return Checkpoint(
        profile=NetProfile(**payload["profile"]),
        stage=payload["stage"],
        modules=payload["modules"],
        meta=payload["meta"],
        format_version=version,
    )


def load_content_autoencoder(ckpt: Checkpoint) -> ContentAutoencoder:
    net = ContentAutoencoder(ckpt.profile)
    ckpt.load_into("encoder", net.encoder)
    ckpt.load_into("decoder", net.decoder)
    return net


def load_distortion_autoencoder(ckpt: Checkpoint) -> DistortionAutoencoder:
    net = DistortionAutoencoder(
        ckpt.profile,
        variant=ckpt.meta.get("variant", "full"),
        standalone=bool(ckpt.meta.get("standalone", False)),
    )
    ckpt.load_into("encoder", net.encoder)
    ckpt.load_into("decoder", net.decoder)
    if net.standalone:
        ckpt.load_into("content_const", net.content_const)
    return net


def checkpoint_modules(net: nn.Module) -> dict[str, nn.Module]:
    """Named submodules to persist for a content or distortion autoencoder."""
    mods = {"encoder": net.encoder, "decoder": net.decoder}
    if getattr(net, "standalone", False):
        mods["content_const"] = net.content_const
    return mods
