"""TSV readers and writers for score tables, manifests, priors and splits."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .metrics import N_SCORES, SCORE_NAMES

MANIFEST_HEADER = ("sentence-id", "system", "parse-file", "offset")
SCORE_KEY = ("sentence-id", "system")


class SchemaError(ValueError):
    """A table does not have the expected columns or value types."""


def fmt_float(v: float) -> str:
    # shortest repr that round-trips exactly
    return repr(float(v))


def write_tsv(rows: Iterable[Sequence], header: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, delimiter="\t", lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
    w.writerow(header)
    for row in rows:
        w.writerow([fmt_float(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def write_json(rows: Iterable[Sequence], header: Sequence[str]) -> str:
    records = [{h: (float(v) if isinstance(v, np.floating) else v) for h, v in zip(header, row)} for row in rows]
    return json.dumps(records, indent=1, sort_keys=False) + "\n"


def render(rows: Iterable[Sequence], header: Sequence[str], fmt: str = "tsv") -> str:
    if fmt == "tsv":
        return write_tsv(rows, header)
    if fmt == "json":
        return write_json(list(rows), header)
    raise ValueError(f"unknown output format {fmt!r}")


def read_tsv(path, required: Sequence[str]) -> list[dict[str, str]]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh, delimiter="\t")
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: empty table")
        missing = [c for c in required if c not in reader.fieldnames]
        if missing:
            raise SchemaError(f"{path}: missing columns {missing}")
        return list(reader)


@dataclass
class ScoreTable:
    """Rows keyed by (sentence-id, system) with the 36 canonical score columns."""

    keys: list[tuple[str, str]]
    values: np.ndarray  # (n, 36)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1, N_SCORES)
        if len(self.keys) != len(self.values):
            raise SchemaError("key and value counts differ")
        if len(set(self.keys)) != len(self.keys):
            raise SchemaError("duplicate (sentence-id, system) keys")

    def index(self) -> dict[tuple[str, str], int]:
        return {k: i for i, k in enumerate(self.keys)}

    def column(self, name: str) -> np.ndarray:
        return self.values[:, SCORE_NAMES.index(name)]

    def to_text(self, fmt: str = "tsv") -> str:
        rows = ([sid, sysname, *map(float, vals)] for (sid, sysname), vals in zip(self.keys, self.values))
        return render(rows, SCORE_KEY + SCORE_NAMES, fmt)

    @classmethod
    def read(cls, path) -> "ScoreTable":
        rows = read_tsv(path, SCORE_KEY + SCORE_NAMES)
        keys, vals = [], []
        for n, r in enumerate(rows):
            keys.append((r["sentence-id"], r["system"]))
            try:
                vals.append([float(r[c]) for c in SCORE_NAMES])
            except ValueError as exc:
                raise SchemaError(f"{path}: row {n + 2}: non-numeric score") from exc
        return cls(keys, np.array(vals).reshape(-1, N_SCORES))


@dataclass(frozen=True)
class ManifestRow:
    sentence_id: str
    system: str
    parse_file: str
    offset: int


def read_manifest(path) -> list[ManifestRow]:
    out = []
    for n, r in enumerate(read_tsv(path, MANIFEST_HEADER)):
        try:
            offset = int(r["offset"])
        except ValueError as exc:
            raise SchemaError(f"{path}: row {n + 2}: non-integer offset") from exc
        out.append(ManifestRow(r["sentence-id"], r["system"], r["parse-file"], offset))
    return out


def write_manifest(rows: Iterable[ManifestRow]) -> str:
    return write_tsv(((r.sentence_id, r.system, r.parse_file, r.offset) for r in rows), MANIFEST_HEADER)


def read_prior(path) -> dict[str, float]:
    prior = {}
    for n, r in enumerate(read_tsv(path, ("system", "dev-f1"))):
        try:
            prior[r["system"]] = float(r["dev-f1"])
        except ValueError as exc:
            raise SchemaError(f"{path}: row {n + 2}: non-numeric dev-f1") from exc
    return prior


def read_splits(path) -> dict[str, str]:
    return {r["sentence-id"]: r["split"] for r in read_tsv(path, ("sentence-id", "split"))}


def resolve(base: Path, name: str) -> Path:
    p = Path(name)
    return p if p.is_absolute() else base / p
