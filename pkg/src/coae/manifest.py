"""Corpus and MOS manifests as line-delimited JSON.

A corpus manifest starts with one header line carrying corpus-level fields
(corpus_seed, generator_version, name) followed by one record line per image.
Record lines use exactly the keys: pristine_path, distorted_path, type_id,
level, seed, pseudo_mos. Paths are stored relative to the manifest location.

A MOS manifest is the same format with {image_path, mos} records; this is the
adapter surface for plugging in externally annotated datasets.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

PRISTINE_TYPE = "pristine"


@dataclass(frozen=True)
class CorpusRecord:
    pristine_path: str
    distorted_path: str | None
    type_id: str
    level: int
    seed: int
    pseudo_mos: float

    @property
    def is_pristine(self) -> bool:
        return self.distorted_path is None

    @property
    def image_path(self) -> str:
        """Path of the image this record scores (distorted, or the pristine itself)."""
        return self.pristine_path if self.distorted_path is None else self.distorted_path

    @property
    def reference_id(self) -> str:
        return self.pristine_path

    def to_json(self) -> str:
        return json.dumps(
            {
                "pristine_path": self.pristine_path,
                "distorted_path": self.distorted_path,
                "type_id": self.type_id,
                "level": self.level,
                "seed": self.seed,
                "pseudo_mos": self.pseudo_mos,
            },
            sort_keys=True,
        )

    @classmethod
    def from_dict(cls, d: dict) -> "CorpusRecord":
        return cls(
            pristine_path=d["pristine_path"],
            distorted_path=d["distorted_path"],
            type_id=d["type_id"],
            level=int(d["level"]),
            seed=int(d["seed"]),
            pseudo_mos=float(d["pseudo_mos"]),
        )


@dataclass
class CorpusManifest:
    records: list[CorpusRecord]
    corpus_seed: int
    generator_version: str
    name: str
    root: Path = field(default_factory=Path)

    def resolve(self, rel_path: str) -> Path:
        return self.root / rel_path

    def pristine_records(self) -> list[CorpusRecord]:
        return [r for r in self.records if r.is_pristine]

    def distorted_records(self) -> list[CorpusRecord]:
        return [r for r in self.records if not r.is_pristine]


def write_manifest(manifest: CorpusManifest, path: str | Path) -> None:
    path = Path(path)
    lines = [
        json.dumps(
            {
                "corpus_seed": manifest.corpus_seed,
                "generator_version": manifest.generator_version,
                "name": manifest.name,
            },
            sort_keys=True,
        )
    ]
    lines += [r.to_json() for r in manifest.records]
    path.write_text("\n".join(lines) + "\n")


def read_manifest(path: str | Path) -> CorpusManifest:
    path = Path(path)
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    if not lines:
        raise ValueError(f"empty manifest: {path}")
    header = json.loads(lines[0])
    records = [CorpusRecord.from_dict(json.loads(ln)) for ln in lines[1:]]
    return CorpusManifest(
        records=records,
        corpus_seed=int(header["corpus_seed"]),
        generator_version=str(header["generator_version"]),
        name=str(header.get("name", path.stem)),
        root=path.parent,
    )


def write_mos_manifest(records: list[tuple[str, float]], path: str | Path) -> None:
    path = Path(path)
    lines = [
        json.dumps({"image_path": p, "mos": float(m)}, sort_keys=True)
        for p, m in records
    ]
    path.write_text("\n".join(lines) + "\n")


def load_mos_manifest(path: str | Path) -> list[tuple[str, float]]:
    """Read {image_path, mos} records; paths resolved against the file's directory."""
    path = Path(path)
    out: list[tuple[str, float]] = []
    for ln in path.read_text().splitlines():
        if not ln.strip():
            continue
        d = json.loads(ln)
        out.append((str(path.parent / d["image_path"]), float(d["mos"])))
    if not out:
        raise ValueError(f"no records in MOS manifest: {path}")
    return out
