"""Parametric distortion operators with 5 severity levels, plus corpus generation.

Each operator is a pure function of (image, resolved params, record seed).
Level tables are frozen constants; severity grows with level for every type.
The pseudo-MOS attached to corpus records is the monotone proxy
``1 - level/5`` (1.0 for pristine images), not a perceptual ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import convolve, gaussian_filter

from .imaging import Rng, derive_seed, save_image, validate_image
from .manifest import PRISTINE_TYPE, CorpusManifest, CorpusRecord, write_manifest

GENERATOR_VERSION = "corpus-v1"
LEVELS = (1, 2, 3, 4, 5)

MOTION_BLUR_ANGLES = (0.0, 45.0, 90.0, 135.0)

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


def _resolve_params(type_id: str, level: int, seed: int) -> dict:
    # frozen level tables; stochastic parameters (motion-blur angle) resolve
    # from the record seed so the spec alone determines the output
    if type_id == "gaussian_blur":
        return {"sigma": 0.8 * level}
    if type_id == "motion_blur":
        angle_idx = int(Rng(seed).spawn(0).gen.integers(len(MOTION_BLUR_ANGLES)))
        return {"length": 2 * level + 1, "angle_deg": MOTION_BLUR_ANGLES[angle_idx]}
    if type_id == "gaussian_noise":
        return {"sigma": 0.02 * level}
    if type_id == "impulse_noise":
        return {"prob": 0.01 * level}
    if type_id == "quantize":
        return {"levels": 2 ** (7 - level)}
    if type_id == "contrast_decrease":
        return {"gain": 1.0 - 0.15 * level}
    if type_id == "overexposure":
        return {"offset": 0.1 * level}
    if type_id == "underexposure":
        return {"offset": -0.1 * level}
    if type_id == "pixelate":
        return {"block": level + 1}
    if type_id == "color_saturation":
        return {"gain": 1.0 - 0.18 * level}
    raise ValueError(f"unknown distortion type: {type_id!r}")


@dataclass(frozen=True)
class DistortionSpec:
    """One corruption: type, severity level 1..5, resolved parameters, seed."""

    type_id: str
    level: int
    params: dict
    seed: int

    @classmethod
    def create(cls, type_id: str, level: int, seed: int = 0) -> "DistortionSpec":
        if level not in LEVELS:
            raise ValueError(f"level must be in 1..5, got {level}")
        return cls(type_id=type_id, level=int(level), params=_resolve_params(type_id, level, seed), seed=int(seed))


def _blur(img, params, rng):
    sigma = params["sigma"]
    if sigma <= 0:
        return img.copy()
    return gaussian_filter(img, sigma=(sigma, sigma, 0.0), mode="reflect")


def _motion_blur(img, params, rng):
    length = int(params["length"])
    theta = np.deg2rad(params["angle_deg"])
    k = np.zeros((length, length))
    c = (length - 1) / 2.0
    for t in np.linspace(-c, c, length):
        y = int(round(c + t * np.sin(theta)))
        x = int(round(c + t * np.cos(theta)))
        k[y, x] += 1.0
    k /= k.sum()
    out = np.empty_like(img)
    for ch in range(3):
        out[..., ch] = convolve(img[..., ch], k, mode="reflect")
    return out


def _gaussian_noise(img, params, rng):
    noise = rng.gen.standard_normal(img.shape)
    return img + params["sigma"] * noise


def _impulse_noise(img, params, rng):
    p = params["prob"]
    u = rng.gen.uniform(size=img.shape[:2])
    out = img.copy()
    out[u < p / 2.0] = 1.0
    out[u > 1.0 - p / 2.0] = 0.0
    return out


def _quantize(img, params, rng):
    n = int(params["levels"])
    return np.round(img * (n - 1)) / (n - 1)


def _contrast(img, params, rng):
    return 0.5 + params["gain"] * (img - 0.5)


def _exposure(img, params, rng):
    return img + params["offset"]


def _pixelate(img, params, rng):
    b = int(params["block"])
    h, w = img.shape[:2]
    ph, pw = (-h) % b, (-w) % b
    padded = np.pad(img, ((0, ph), (0, pw), (0, 0)), mode="edge")
    hh, ww = padded.shape[:2]
    blocks = padded.reshape(hh // b, b, ww // b, b, 3).mean(axis=(1, 3))
    out = np.repeat(np.repeat(blocks, b, axis=0), b, axis=1)
    return out[:h, :w]


def _saturation(img, params, rng):
    luma = img @ LUMA_WEIGHTS
    return luma[..., None] + params["gain"] * (img - luma[..., None])


_OPERATORS = {
    "gaussian_blur": _blur,
    "motion_blur": _motion_blur,
    "gaussian_noise": _gaussian_noise,
    "impulse_noise": _impulse_noise,
    "quantize": _quantize,
    "contrast_decrease": _contrast,
    "overexposure": _exposure,
    "underexposure": _exposure,
    "pixelate": _pixelate,
    "color_saturation": _saturation,
}

DISTORTION_TYPES = tuple(_OPERATORS)


def apply_distortion(img: np.ndarray, spec: DistortionSpec) -> np.ndarray:
    """Apply one distortion; same-size output clipped to [0,1], deterministic."""
    img = np.asarray(img, dtype=np.float64)
    if spec.type_id not in _OPERATORS:
        raise ValueError(f"unknown distortion type: {spec.type_id!r}")
    rng = Rng(spec.seed).spawn(1)
    out = _OPERATORS[spec.type_id](img, spec.params, rng)
    assert out.shape == img.shape
    return np.clip(out, 0.0, 1.0)


def pseudo_mos(level: int) -> float:
    return 1.0 - level / 5.0


def build_corpus(
    pristine: list[np.ndarray],
    types: list[str],
    levels: list[int],
    out_dir: str | Path,
    seed: int,
    name: str | None = None,
) -> CorpusManifest:
    """Write |pristine| x |types| x |levels| distorted PNGs plus the pristine set.

    Layout: ``pristine/NNNN.png`` and ``dist/<type>/<level>/NNNN_<seed>.png``,
    with a manifest.jsonl enumerating one record per image. Fully deterministic
    given (inputs, seed).
    """
    if not pristine or not types or not levels:
        raise ValueError("pristine, types and levels must be nonempty")
    for t in types:
        if t not in _OPERATORS:
            raise ValueError(f"unknown distortion type: {t!r}")
    for lv in levels:
        if lv not in LEVELS:
            raise ValueError(f"level must be in 1..5, got {lv}")

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records: list[CorpusRecord] = []

    for i, img in enumerate(pristine):
        validate_image(img)
        rel = f"pristine/{i:04d}.png"
        (out_dir / "pristine").mkdir(exist_ok=True)
        save_image(img, out_dir / rel)
        records.append(
            CorpusRecord(
                pristine_path=rel,
                distorted_path=None,
                type_id=PRISTINE_TYPE,
                level=0,
                seed=0,
                pseudo_mos=1.0,
            )
        )

    for i, img in enumerate(pristine):
        for ti, t in enumerate(types):
            for lv in levels:
                rec_seed = derive_seed(seed, i, ti, lv)
                spec = DistortionSpec.create(t, lv, rec_seed)
                dist = apply_distortion(img, spec)
                rel = f"dist/{t}/{lv}/{i:04d}_{rec_seed}.png"
                (out_dir / "dist" / t / str(lv)).mkdir(parents=True, exist_ok=True)
                save_image(dist, out_dir / rel)
                records.append(
                    CorpusRecord(
                        pristine_path=f"pristine/{i:04d}.png",
                        distorted_path=rel,
                        type_id=t,
                        level=lv,
                        seed=rec_seed,
                        pseudo_mos=pseudo_mos(lv),
                    )
                )

    manifest = CorpusManifest(
        records=records,
        corpus_seed=int(seed),
        generator_version=GENERATOR_VERSION,
        name=name or out_dir.name,
        root=out_dir,
    )
    write_manifest(manifest, out_dir / "manifest.jsonl")
    return manifest
