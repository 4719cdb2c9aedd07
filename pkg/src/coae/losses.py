"""Reconstruction and perceptual losses.

The pixel loss is the Frobenius norm of the difference (square root of the
summed squared differences), averaged over the batch when inputs are batched.
The perceptual term is pluggable: any registered provider taking two image
batches and returning a nonnegative scalar. The self-contained default is a
Gaussian-pyramid distance; a pretrained feature-space distance can be
registered under its own name when its weights are available.
"""

from __future__ import annotations

from typing import Callable

import numpy as np
import torch
import torch.nn.functional as F

DEFAULT_PROVIDER = "pyramid"

_BINOMIAL5 = torch.tensor([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


def _as_batch(x) -> torch.Tensor:
    if isinstance(x, np.ndarray):
        if x.ndim != 3 or x.shape[2] != 3:
            raise ValueError(f"expected H x W x 3 image array, got shape {x.shape}")
        x = torch.from_numpy(np.ascontiguousarray(np.transpose(x, (2, 0, 1))))
    if not isinstance(x, torch.Tensor):
        raise TypeError(f"expected image array or tensor, got {type(x)}")
    if x.dim() == 3:
        x = x.unsqueeze(0)
    if x.dim() != 4:
        raise ValueError(f"expected (C,H,W) or (B,C,H,W), got shape {tuple(x.shape)}")
    return x


def _pair(a, b) -> tuple[torch.Tensor, torch.Tensor]:
    ta, tb = _as_batch(a), _as_batch(b)
    if ta.shape != tb.shape:
        raise ValueError(f"shape mismatch: {tuple(ta.shape)} vs {tuple(tb.shape)}")
    if ta.dtype != tb.dtype:
        tb = tb.to(ta.dtype)
    return ta, tb


def recon_loss(a, b) -> torch.Tensor:
    """Per-image Frobenius norm of (a - b); mean over the batch."""
    ta, tb = _pair(a, b)
    per_image = (ta - tb).pow(2).flatten(1).sum(dim=1).sqrt()
    return per_image.mean()


def _pyramid_down(x: torch.Tensor) -> torch.Tensor:
    c = x.shape[1]
    k = _BINOMIAL5.to(x.dtype)
    kh = k.view(1, 1, 1, 5).expand(c, 1, 1, 5)
    kv = k.view(1, 1, 5, 1).expand(c, 1, 5, 1)
    x = F.pad(x, (2, 2, 0, 0), mode="reflect" if x.shape[-1] >= 3 else "replicate")
    x = F.conv2d(x, kh, groups=c)
    x = F.pad(x, (0, 0, 2, 2), mode="reflect" if x.shape[-2] >= 3 else "replicate")
    x = F.conv2d(x, kv, groups=c)
    return x[:, :, ::2, ::2]


def pyramid_distance(a, b, levels: int = 4) -> torch.Tensor:
    """Mean Frobenius distance across Gaussian-pyramid levels 0..levels-1."""
    ta, tb = _pair(a, b)
    total = torch.zeros((), dtype=ta.dtype)
    for i in range(levels):
        total = total + (ta - tb).pow(2).flatten(1).sum(dim=1).sqrt().mean()
        if i < levels - 1:
            if min(ta.shape[-2:]) < 2:
                # map already collapsed; remaining levels repeat it
                continue
            ta, tb = _pyramid_down(ta), _pyramid_down(tb)
    return total / levels


_PROVIDERS: dict[str, Callable] = {"pyramid": pyramid_distance}


def register_perceptual_provider(name: str, fn: Callable) -> None:
    _PROVIDERS[name] = fn


def get_perceptual_provider(name: str = DEFAULT_PROVIDER) -> Callable:
    if name not in _PROVIDERS:
        raise KeyError(f"no perceptual provider named {name!r}")
    return _PROVIDERS[name]


def percep_loss(a, b, provider: str | Callable = DEFAULT_PROVIDER) -> torch.Tensor:
    fn = get_perceptual_provider(provider) if isinstance(provider, str) else provider
    return fn(a, b)


def overall_loss(
    out,
    target,
    perceptual_weight: float = 1.0,
    provider: str | Callable = DEFAULT_PROVIDER,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Returns (total, recon, percep) with total = recon + weight * percep."""
    lr = recon_loss(out, target)
    lp = percep_loss(out, target, provider)
    return lr + perceptual_weight * lp, lr, lp
