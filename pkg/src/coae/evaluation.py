"""Correlation metrics and the repeated-split evaluation protocol.

Quality predictors are scored by Spearman (SRCC) and Pearson (PLCC)
correlation between predicted scores and MOS. Evaluation repeats over several
sessions, each with its own seed and its own reference-disjoint 80/20 split,
and reports per-corpus medians; multi-corpus summaries use a sample-count
weighted average.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from .imaging import Rng
from .manifest import CorpusManifest, CorpusRecord
from .training import ImageStore, TrainConfig
from .visor import extract_quality_features, train_quality_head


def average_ranks(x) -> np.ndarray:
    """Ranks 1..n with ties sharing the mean of the ranks they span."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("expected a 1-d array")
    order = np.argsort(x, kind="stable")
    ranks = np.empty(len(x), dtype=np.float64)
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and x[order[j + 1]] == x[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def plcc(pred, mos) -> float:
    """Pearson linear correlation coefficient."""
    pred = np.asarray(pred, dtype=np.float64)
    mos = np.asarray(mos, dtype=np.float64)
    if pred.shape != mos.shape or pred.ndim != 1:
        raise ValueError("inputs must be 1-d arrays of equal length")
    if len(pred) < 2:
        raise ValueError("need at least 2 samples")
    a = pred - pred.mean()
    b = mos - mos.mean()
    denom = np.sqrt((a * a).sum() * (b * b).sum())
    if denom == 0.0:
        return float("nan")
    return float((a * b).sum() / denom)


def srcc(pred, mos) -> float:
    """Spearman rank correlation: Pearson correlation of average ranks."""
    pred = np.asarray(pred, dtype=np.float64)
    mos = np.asarray(mos, dtype=np.float64)
    if pred.shape != mos.shape or pred.ndim != 1:
        raise ValueError("inputs must be 1-d arrays of equal length")
    if len(pred) < 2:
        raise ValueError("need at least 2 samples")
    return plcc(average_ranks(pred), average_ranks(mos))


def weighted_average(values, weights) -> float:
    values = np.asarray(values, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if values.shape != weights.shape or values.ndim != 1 or len(values) == 0:
        raise ValueError("values and weights must be equal-length 1-d arrays")
    if np.any(weights <= 0):
        raise ValueError("weights must be positive")
    return float((values * weights).sum() / weights.sum())


def split_by_reference(
    records: list[CorpusRecord], train_ratio: float, seed: int
) -> tuple[list[CorpusRecord], list[CorpusRecord]]:
    """Splits records so no reference image contributes to both sides.

    All records sharing a reference (the pristine image itself and every
    distortion of it) travel together; the reference list is shuffled by the
    session seed and cut at the requested ratio.
    """
    if not 0.0 < train_ratio < 1.0:
        raise ValueError("train_ratio must be in (0, 1)")
    refs = sorted({r.reference_id for r in records})
    if len(refs) < 2:
        raise ValueError("need at least 2 distinct references to split")
    perm = Rng(seed).spawn(6).gen.permutation(len(refs))
    n_train = int(round(train_ratio * len(refs)))
    n_train = min(max(n_train, 1), len(refs) - 1)
    train_refs = {refs[i] for i in perm[:n_train]}
    train = [r for r in records if r.reference_id in train_refs]
    test = [r for r in records if r.reference_id not in train_refs]
    return train, test


@dataclass
class SessionResult:
    session: int
    seed: int
    srcc: float = float("nan")
    plcc: float = float("nan")
    n_train: int = 0
    n_test: int = 0
    error: str | None = None


@dataclass
class EvalSummary:
    corpus_name: str
    n_records: int
    sessions: list[SessionResult] = field(default_factory=list)

    @property
    def srcc_median(self) -> float:
        vals = [s.srcc for s in self.sessions if s.error is None]
        return float(np.median(vals)) if vals else float("nan")

    @property
    def plcc_median(self) -> float:
        vals = [s.plcc for s in self.sessions if s.error is None]
        return float(np.median(vals)) if vals else float("nan")

    @property
    def n_failed(self) -> int:
        return sum(1 for s in self.sessions if s.error is not None)

    def to_dict(self) -> dict:
        return {
            "corpus_name": self.corpus_name,
            "n_records": self.n_records,
            "srcc_median": self.srcc_median,
            "plcc_median": self.plcc_median,
            "n_failed": self.n_failed,
            "sessions": [vars(s) for s in self.sessions],
        }


def _predict_cached(head, gaps: np.ndarray, fds: np.ndarray) -> np.ndarray:
    with torch.no_grad():
        g = torch.from_numpy(np.asarray(gaps, dtype=np.float32))
        f = torch.from_numpy(np.asarray(fds, dtype=np.float32))
        return head.regressor(head.combine(g, f)).squeeze(1).numpy().astype(np.float64)


def corpus_features(cae, dae, manifest: CorpusManifest) -> tuple[np.ndarray, np.ndarray]:
    """Extracts (content_gap, f_d) for every record, in manifest order."""
    store = ImageStore(manifest.root)
    images = [store.get(r.image_path) for r in manifest.records]
    return extract_quality_features(cae, dae, images)


def run_sessions(
    cae,
    dae,
    manifest: CorpusManifest,
    cfg: TrainConfig,
    n_sessions: int = 10,
    base_seed: int = 0,
    train_ratio: float = 0.8,
    feature_mode: str = "both",
    features: tuple[np.ndarray, np.ndarray] | None = None,
    profile=None,
) -> EvalSummary:
    """Repeats train/test evaluation over independently seeded splits.

    Features are extracted once (the encoders are frozen, so they do not vary
    across sessions); each session refits the regression head on its train
    split and scores the held-out references. A session that raises is
    recorded with its error message rather than aborting the run.
    """
    if n_sessions < 1:
        raise ValueError("need at least 1 session")
    if profile is None:
        profile = cae.profile if cae is not None else dae.profile
    records = list(manifest.records)
    if features is None:
        features = corpus_features(cae, dae, manifest)
    gaps, fds = features
    if len(gaps) != len(records):
        raise ValueError("feature rows do not match manifest records")
    mos = np.array([r.pseudo_mos for r in records], dtype=np.float64)
    index = {id(r): i for i, r in enumerate(records)}

    summary = EvalSummary(corpus_name=manifest.name, n_records=len(records))
    for s in range(n_sessions):
        seed = base_seed + s
        result = SessionResult(session=s, seed=seed)
        try:
            train, test = split_by_reference(records, train_ratio, seed)
            tr = [index[id(r)] for r in train]
            te = [index[id(r)] for r in test]
            head, _info = train_quality_head(
                gaps[tr], fds[tr], mos[tr], replace(cfg, seed=seed), profile, feature_mode
            )
            pred = _predict_cached(head, gaps[te], fds[te])
            result.srcc = srcc(pred, mos[te])
            result.plcc = plcc(pred, mos[te])
            result.n_train, result.n_test = len(tr), len(te)
        except Exception as exc:  # captured per session, run continues
            result.error = f"{type(exc).__name__}: {exc}"
        summary.sessions.append(result)
    return summary


def cross_corpus_eval(
    cae,
    dae,
    train_manifest: CorpusManifest,
    test_manifest: CorpusManifest,
    cfg: TrainConfig,
    feature_mode: str = "both",
    train_features: tuple[np.ndarray, np.ndarray] | None = None,
    test_features: tuple[np.ndarray, np.ndarray] | None = None,
    profile=None,
) -> dict:
    """Trains the head on one full corpus and scores another, untouched one."""
    if train_manifest.root.resolve() == test_manifest.root.resolve():
        raise ValueError("cross-corpus evaluation needs two distinct corpora")
    if profile is None:
        profile = cae.profile if cae is not None else dae.profile
    tr_gaps, tr_fds = train_features if train_features else corpus_features(cae, dae, train_manifest)
    te_gaps, te_fds = test_features if test_features else corpus_features(cae, dae, test_manifest)
    tr_mos = np.array([r.pseudo_mos for r in train_manifest.records], dtype=np.float64)
    te_mos = np.array([r.pseudo_mos for r in test_manifest.records], dtype=np.float64)
    head, _info = train_quality_head(tr_gaps, tr_fds, tr_mos, cfg, profile, feature_mode)
    pred = _predict_cached(head, te_gaps, te_fds)
    return {
        "train_corpus": train_manifest.name,
        "test_corpus": test_manifest.name,
        "srcc": srcc(pred, te_mos),
        "plcc": plcc(pred, te_mos),
        "n_train": len(tr_mos),
        "n_test": len(te_mos),
    }


def write_report(path, summaries: list[dict]) -> None:
    with open(path, "w") as fh:
        for row in summaries:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def read_report(path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]


def render_table(rows: list[dict]) -> str:
    """Formats per-corpus medians plus a weighted-average row as plain text.

    Each row needs corpus_name, srcc_median, plcc_median and n_records; the
    weighted average uses record counts as weights.
    """
    if not rows:
        raise ValueError("no rows to render")
    name_w = max(len("corpus"), *(len(str(r["corpus_name"])) for r in rows), len("weighted avg"))
    lines = [f"{'corpus':<{name_w}}  {'n':>6}  {'SRCC':>7}  {'PLCC':>7}"]
    lines.append("-" * len(lines[0]))
    for r in rows:
        lines.append(
            f"{r['corpus_name']:<{name_w}}  {r['n_records']:>6}  "
            f"{r['srcc_median']:>7.3f}  {r['plcc_median']:>7.3f}"
        )
    if len(rows) > 1:
        weights = [r["n_records"] for r in rows]
        wa_s = weighted_average([r["srcc_median"] for r in rows], weights)
        wa_p = weighted_average([r["plcc_median"] for r in rows], weights)
        lines.append("-" * len(lines[0]))
        lines.append(f"{'weighted avg':<{name_w}}  {sum(weights):>6}  {wa_s:>7.3f}  {wa_p:>7.3f}")
    return "\n".join(lines)
