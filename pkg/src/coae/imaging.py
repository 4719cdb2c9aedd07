"""Image primitives: [0,1] float RGB arrays, a portable seeded RNG, patch
cropping, PNG round-trips, and procedural pristine-image synthesis.

Images are H x W x 3 float arrays with values in [0, 1]. All randomness flows
through :class:`Rng`, which wraps numpy's counter-based Philox generator so a
given seed reproduces the same stream on every platform.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
from numpy.random import Generator, Philox, SeedSequence
from PIL import Image as PILImage
from scipy.ndimage import gaussian_filter

MIN_IMAGE_DIM = 32


class Rng:
    """Deterministic random stream (Philox, counter-based).

    Streams are identified by (seed, key). ``spawn`` derives an independent
    child stream; per-task children should be spawned rather than sharing one
    instance across threads.
    """

    def __init__(self, seed: int, key: tuple[int, ...] = ()):
        self.seed = int(seed)
        self.key = tuple(int(k) for k in key)
        self.gen: Generator = Generator(Philox(SeedSequence(self.seed, spawn_key=self.key)))

    def spawn(self, *key: int) -> "Rng":
        return Rng(self.seed, self.key + tuple(int(k) for k in key))

    def __repr__(self) -> str:  # pragma: no cover
        return f"Rng(seed={self.seed}, key={self.key})"


def derive_seed(base_seed: int, *key: int) -> int:
    """Derive a stable 64-bit child seed from a base seed and an index key."""
    ss = SeedSequence(int(base_seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0])


def validate_image(img: np.ndarray, min_dim: int = MIN_IMAGE_DIM) -> np.ndarray:
    """Check the Image invariants; returns the array unchanged."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected H x W x 3 image, got shape {img.shape}")
    h, w = img.shape[:2]
    if h < min_dim or w < min_dim:
        raise ValueError(f"image {h}x{w} below minimum dimension {min_dim}")
    if not np.isfinite(img).all():
        raise ValueError("image contains non-finite values")
    if img.min() < 0.0 or img.max() > 1.0:
        raise ValueError("pixel values outside [0, 1]")
    return img


def to_tensor(img: np.ndarray, dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """H x W x 3 numpy image to a (3, H, W) torch tensor."""
    arr = np.ascontiguousarray(np.transpose(np.asarray(img, dtype=np.float64), (2, 0, 1)))
    return torch.from_numpy(arr).to(dtype)


def to_image(t: torch.Tensor) -> np.ndarray:
    """(3, H, W) or (1, 3, H, W) tensor back to an H x W x 3 float64 image."""
    if t.dim() == 4:
        if t.shape[0] != 1:
            raise ValueError("expected a single image, got a batch")
        t = t[0]
    arr = t.detach().cpu().numpy().astype(np.float64)
    return np.clip(np.transpose(arr, (1, 2, 0)), 0.0, 1.0)


def _synth_one(h: int, w: int, g: Generator) -> np.ndarray:
    yy, xx = np.meshgrid(
        np.linspace(0.0, 1.0, h), np.linspace(0.0, 1.0, w), indexing="ij"
    )
    img = np.empty((h, w, 3))

    # smooth base: per-channel linear gradient plus a shared radial bump
    for c in range(3):
        ax, ay = g.uniform(-0.5, 0.5, size=2)
        img[..., c] = g.uniform(0.25, 0.75) + ax * (xx - 0.5) + ay * (yy - 0.5)
    cx, cy = g.uniform(0.2, 0.8, size=2)
    r2 = (xx - cx) ** 2 + (yy - cy) ** 2
    bump = np.exp(-r2 / (2.0 * g.uniform(0.08, 0.3) ** 2))
    img += g.uniform(-0.35, 0.35) * bump[..., None] * g.uniform(0.5, 1.0, size=3)

    # band-limited texture
    noise = g.standard_normal((h, w))
    noise = gaussian_filter(noise, sigma=g.uniform(1.0, 3.0), mode="reflect")
    noise /= noise.std() + 1e-12
    img += g.uniform(0.03, 0.09) * noise[..., None] * g.uniform(0.4, 1.0, size=3)

    # geometric shapes: rectangles, ellipses, stripes
    for _ in range(int(g.integers(2, 6))):
        kind = int(g.integers(3))
        color = g.uniform(0.0, 1.0, size=3)
        alpha = g.uniform(0.5, 1.0)
        if kind == 0:
            x0, y0 = g.uniform(0.0, 0.7, size=2)
            x1 = x0 + g.uniform(0.1, 0.3)
            y1 = y0 + g.uniform(0.1, 0.3)
            mask = (xx >= x0) & (xx <= x1) & (yy >= y0) & (yy <= y1)
        elif kind == 1:
            ex, ey = g.uniform(0.15, 0.85, size=2)
            rx, ry = g.uniform(0.05, 0.25, size=2)
            mask = ((xx - ex) / rx) ** 2 + ((yy - ey) / ry) ** 2 <= 1.0
        else:
            a, b = g.uniform(-1.0, 1.0, size=2)
            norm = np.hypot(a, b) + 1e-9
            dist = np.abs(a * xx + b * yy + g.uniform(-0.5, 0.5)) / norm
            mask = dist < g.uniform(0.02, 0.08)
        img[mask] = (1.0 - alpha) * img[mask] + alpha * color

    return np.clip(img, 0.0, 1.0)


def synth_pristine(n: int, size: int | tuple[int, int], seed: int) -> list[np.ndarray]:
    """Generate ``n`` deterministic procedural images of the given size.

    ``size`` is (H, W) or a single side length for square images. Content
    varies across indices (gradients, textures, shapes); the same
    (n, size, seed) always reproduces the same pixels.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if isinstance(size, int):
        size = (size, size)
    h, w = int(size[0]), int(size[1])
    if h < MIN_IMAGE_DIM or w < MIN_IMAGE_DIM:
        raise ValueError(f"size must be at least {MIN_IMAGE_DIM}x{MIN_IMAGE_DIM}")
    root = Rng(seed)
    return [validate_image(_synth_one(h, w, root.spawn(i).gen)) for i in range(n)]


def crop_patch(img: np.ndarray, size: tuple[int, int], rng: Rng) -> np.ndarray:
    """Contiguous random sub-image of exact ``size``; uniform over offsets."""
    img = np.asarray(img)
    ph, pw = int(size[0]), int(size[1])
    h, w = img.shape[:2]
    if ph > h or pw > w:
        raise ValueError(f"patch {ph}x{pw} larger than image {h}x{w}")
    y = int(rng.gen.integers(0, h - ph + 1))
    x = int(rng.gen.integers(0, w - pw + 1))
    return img[y : y + ph, x : x + pw].copy()


def save_image(img: np.ndarray, path: str | Path) -> None:
    """Write an image as 8-bit PNG (lossless; quantizes to 1/255 steps)."""
    img = validate_image(img, min_dim=1)
    arr = np.round(np.asarray(img, dtype=np.float64) * 255.0).astype(np.uint8)
    PILImage.fromarray(arr, mode="RGB").save(str(path), format="PNG")


def load_image(path: str | Path) -> np.ndarray:
    """Read an 8-bit PNG back into a [0,1] float image."""
    with PILImage.open(str(path)) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return arr / 255.0


def pad_to_multiple(img: np.ndarray, multiple: int = 4) -> np.ndarray:
    """Reflect-pad H and W up to the next multiple; identity when aligned."""
    h, w = img.shape[:2]
    ph = (-h) % multiple
    pw = (-w) % multiple
    if ph == 0 and pw == 0:
        return img
    return np.pad(img, ((0, ph), (0, pw), (0, 0)), mode="reflect")
