"""Quantitative checks on what the two encoders learned.

Three analyses: cosine similarity between content features of distorted
images and their pristine versions (content robustness), a linear probe
predicting distortion type from distortion features (separability), and a
2-D principal-component embedding exported for plotting.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from scipy.spatial.distance import cdist, pdist

from .manifest import PRISTINE_TYPE, CorpusManifest
from .training import ImageStore
from .visor import _prepare


@dataclass
class FeatureRecord:
    image_id: str
    type_id: str
    level: int
    f_d: np.ndarray
    content_gap: np.ndarray | None = None
    pseudo_mos: float | None = None

    @property
    def is_pristine(self) -> bool:
        return self.type_id == PRISTINE_TYPE

    def to_json(self) -> str:
        d = {
            "image_id": self.image_id,
            "type_id": self.type_id,
            "level": self.level,
            "pseudo_mos": self.pseudo_mos,
            "f_d": [float(v) for v in self.f_d],
        }
        if self.content_gap is not None:
            d["content_gap"] = [float(v) for v in self.content_gap]
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureRecord":
        gap = d.get("content_gap")
        return cls(
            image_id=d["image_id"],
            type_id=d["type_id"],
            level=int(d["level"]),
            f_d=np.asarray(d["f_d"], dtype=np.float64),
            content_gap=None if gap is None else np.asarray(gap, dtype=np.float64),
            pseudo_mos=d.get("pseudo_mos"),
        )


def export_features(cae, dae, manifest: CorpusManifest, out_path=None) -> list[FeatureRecord]:
    """One FeatureRecord per manifest record, in manifest order."""
    cae.eval()
    dae.eval()
    store = ImageStore(manifest.root)
    out = []
    with torch.no_grad():
        for rec in manifest.records:
            batch = _prepare(store.get(rec.image_path), cae.profile)
            cmap = cae.encoder(batch)
            out.append(
                FeatureRecord(
                    image_id=rec.image_path,
                    type_id=rec.type_id,
                    level=rec.level,
                    f_d=dae.encoder(batch).squeeze(0).numpy().astype(np.float64),
                    content_gap=cmap.mean(dim=(2, 3)).squeeze(0).numpy().astype(np.float64),
                    pseudo_mos=rec.pseudo_mos,
                )
            )
    if out_path is not None:
        with open(out_path, "w") as fh:
            for fr in out:
                fh.write(fr.to_json() + "\n")
    return out


def load_features(path) -> list[FeatureRecord]:
    lines = Path(path).read_text().splitlines()
    return [FeatureRecord.from_dict(json.loads(ln)) for ln in lines if ln.strip()]


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError("vectors must have equal length")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity undefined for zero vectors")
    return float(np.dot(a, b) / (na * nb))


def mean_cosine(vector_pairs) -> float:
    """Mean cosine similarity over (a, b) vector pairs."""
    pairs = list(vector_pairs)
    if not pairs:
        raise ValueError("empty pair list")
    return float(np.mean([cosine_similarity(a, b) for a, b in pairs]))


def content_similarity_study(cae, image_pairs) -> dict:
    """Cosine similarity between content features of aligned image pairs.

    ``image_pairs`` holds (pristine, distorted) arrays with identical shapes.
    Reports the mean over raw flattened feature maps and, separately, over
    globally average-pooled vectors.
    """
    pairs = list(image_pairs)
    if not pairs:
        raise ValueError("empty pair list")
    cae.eval()
    raw, pooled = [], []
    with torch.no_grad():
        for prist, dist in pairs:
            fp = cae.encoder(_prepare(prist, cae.profile))
            fd = cae.encoder(_prepare(dist, cae.profile))
            raw.append((fp.numpy().ravel(), fd.numpy().ravel()))
            pooled.append((fp.mean(dim=(2, 3)).numpy().ravel(), fd.mean(dim=(2, 3)).numpy().ravel()))
    return {
        "mean_cosine": mean_cosine(raw),
        "mean_cosine_pooled": mean_cosine(pooled),
        "n_pairs": len(pairs),
    }


def distortion_separability(
    records: list[FeatureRecord], seed: int = 0, test_fraction: float = 0.2, reg_c: float = 10.0
) -> dict:
    """Linear-probe accuracy on distortion type plus the pristine margin.

    The probe is a multinomial logistic regression on standardized f_d with a
    seeded stratified split; standardization plus a weak penalty (C=10) keeps
    the probe a measure of linearly decodable information rather than of
    feature scaling. pristine_margin is the mean pristine-to-distorted f_d
    distance minus the mean pristine-to-pristine distance, computed on the raw
    features; positive means pristine features cluster tighter than they sit
    from distorted ones.
    """
    from sklearn.linear_model import LogisticRegression
    from sklearn.model_selection import train_test_split
    from sklearn.pipeline import make_pipeline
    from sklearn.preprocessing import StandardScaler

    distorted = [r for r in records if not r.is_pristine]
    labels = sorted({r.type_id for r in distorted})
    if len(labels) < 2:
        raise ValueError("need at least 2 distortion types for the probe")
    x = np.stack([r.f_d for r in distorted])
    y = np.array([labels.index(r.type_id) for r in distorted])
    x_tr, x_te, y_tr, y_te = train_test_split(
        x, y, test_size=test_fraction, stratify=y, random_state=seed
    )
    probe = make_pipeline(StandardScaler(), LogisticRegression(max_iter=2000, C=reg_c))
    probe.fit(x_tr, y_tr)
    acc = float(probe.score(x_te, y_te))

    pristine = [r for r in records if r.is_pristine]
    margin = float("nan")
    if len(pristine) >= 2:
        p = np.stack([r.f_d for r in pristine])
        cross = cdist(p, x)
        within = pdist(p)
        margin = float(cross.mean() - within.mean())
    return {
        "probe_accuracy": acc,
        "pristine_margin": margin,
        "n_classes": len(labels),
        "classes": labels,
        "n_train": len(y_tr),
        "n_test": len(y_te),
    }


def embed_2d(features) -> tuple[np.ndarray, np.ndarray]:
    """Projects feature vectors onto their top-2 principal components.

    Returns (coords, explained): N x 2 coordinates and the fraction of total
    variance carried by each of the two components. Component signs follow a
    fixed convention (the largest-magnitude loading is positive) so the
    output does not depend on record order.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or len(x) < 3:
        raise ValueError("need at least 3 feature vectors")
    centered = x - x.mean(axis=0)
    total_var = float((centered**2).sum())
    if total_var == 0.0:
        raise ValueError("features have zero variance; embedding is degenerate")
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    comps = vt[:2].copy()
    for k in range(comps.shape[0]):
        j = int(np.argmax(np.abs(comps[k])))
        if comps[k, j] < 0:
            comps[k] = -comps[k]
    coords = centered @ comps.T
    if comps.shape[0] < 2:
        coords = np.pad(coords, ((0, 0), (0, 2 - coords.shape[1])))
    explained = (s[:2] ** 2) / total_var
    if explained.shape[0] < 2:
        explained = np.pad(explained, (0, 2 - explained.shape[0]))
    return coords, explained


def plot_embedding(coords, labels, out_path, scores=None, title: str | None = None) -> None:
    """Scatter plot of the 2-D embedding, colored by class or by score.

    With ``scores`` given, points are colored on a continuous scale (quality
    view); otherwise each label gets a categorical color. Output is SVG with
    deterministic content.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "coae"
    coords = np.asarray(coords, dtype=np.float64)
    fig, ax = plt.subplots(figsize=(6, 5))
    if scores is not None:
        sc = ax.scatter(coords[:, 0], coords[:, 1], c=np.asarray(scores), cmap="viridis", s=18)
        fig.colorbar(sc, ax=ax, label="score")
    else:
        uniq = sorted(set(labels))
        cmap = plt.get_cmap("tab10")
        for i, lab in enumerate(uniq):
            m = np.array([l == lab for l in labels])
            ax.scatter(coords[m, 0], coords[m, 1], s=18, color=cmap(i % 10), label=str(lab))
        ax.legend(fontsize=7, markerscale=0.8)
    ax.set_xlabel("component 1")
    ax.set_ylabel("component 2")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(out_path, format="svg", metadata={"Date": None})
    plt.close(fig)
