"""
Labeled tweet corpora: load/validate (JSONL or TSV), summarize, split and k-fold.

Canonical format is JSONL with {"id", "text", "label"}; TSV is id<TAB>label<TAB>text.
Tokenized corpora (output of preprocessing) are JSONL {"id", "tokens", "label"?}.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Literal, Sequence

import numpy as np
from pydantic import BaseModel, Field, field_validator

from misinfo.arabic_text import Preprocessor, PreprocessConfig, TokenSequence
from misinfo.errors import DataError

logger = logging.getLogger(__name__)

CorpusFormat = Literal["jsonl", "tsv"]


@dataclass(frozen=True)
class TweetRecord:
    id: str
    text: str
    label: int | None = None
    timestamp: str | None = None

    def __post_init__(self) -> None:
        if not self.text or not self.text.strip():
            raise DataError("record %r has empty text" % self.id)
        if self.label is not None and self.label not in (0, 1):
            raise DataError("record %r has label %r outside {0,1}" % (self.id, self.label))

    def to_dict(self) -> dict:
        d: dict = {"id": self.id, "text": self.text, "label": self.label}
        if self.timestamp is not None:
            d["timestamp"] = self.timestamp
        return d


@dataclass(frozen=True)
class LabeledDataset:
    """Ordered, fully labeled records. Immutable after construction."""

    records: tuple[TweetRecord, ...]
    positive_count: int = field(init=False)
    negative_count: int = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "records", tuple(self.records))
        pos = 0
        for r in self.records:
            if r.label is None:
                raise DataError("record %r has no label" % r.id)
            pos += r.label
        object.__setattr__(self, "positive_count", pos)
        object.__setattr__(self, "negative_count", len(self.records) - pos)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def labels(self) -> np.ndarray:
        return np.fromiter((r.label for r in self.records), dtype=np.int64, count=len(self.records))

    @property
    def texts(self) -> list[str]:
        return [r.text for r in self.records]

    def subset(self, indices: Iterable[int]) -> "LabeledDataset":
        return LabeledDataset(tuple(self.records[i] for i in indices))


class SplitSpec(BaseModel):
    """Split fractions (e.g. [0.8, 0.2] or [0.6, 0.2, 0.2]), seed and stratification flag."""

    fractions: list[float] = Field(default_factory=lambda: [0.8, 0.2])
    seed: int = 42
    stratified: bool = True

    @field_validator("fractions")
    @classmethod
    def _check_fractions(cls, v: list[float]) -> list[float]:
        if not v:
            raise ValueError("fractions must not be empty")
        if any(not (0.0 < f <= 1.0) for f in v) or (len(v) > 1 and any(f >= 1.0 for f in v)):
            raise ValueError("each fraction must lie in (0,1): %r" % (v,))
        if abs(sum(v) - 1.0) > 1e-9:
            raise ValueError("fractions must sum to 1, got %r (sum %.12g)" % (v, sum(v)))
        return v


# --- loading / writing ---


def _parse_label(raw: object, line: int) -> int:
    if isinstance(raw, bool):
        raise DataError("label must be 0 or 1, got %r" % raw, line)
    if isinstance(raw, str) and raw.strip() in ("0", "1"):
        return int(raw.strip())
    if isinstance(raw, (int, float)) and raw in (0, 1):
        return int(raw)
    raise DataError("label must be 0 or 1, got %r" % (raw,), line)


def _infer_format(path: Path, fmt: CorpusFormat | None) -> CorpusFormat:
    if fmt is not None:
        return fmt
    return "tsv" if path.suffix.lower() in (".tsv", ".tab") else "jsonl"


def _iter_records(path: Path, fmt: CorpusFormat, require_label: bool) -> Iterable[TweetRecord]:
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            if fmt == "jsonl":
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as e:
                    raise DataError("invalid JSON (%s)" % e.msg, lineno) from e
                if not isinstance(obj, dict) or "id" not in obj or "text" not in obj:
                    raise DataError("expected an object with id and text", lineno)
                rid, text, label = obj["id"], obj["text"], obj.get("label")
                timestamp = obj.get("timestamp")
            else:
                parts = line.split("\t", 2)
                if len(parts) != 3:
                    raise DataError("expected id<TAB>label<TAB>text", lineno)
                rid, label, text = parts
                timestamp = None
            if label is None or label == "":
                if require_label:
                    raise DataError("missing label", lineno)
                parsed = None
            else:
                parsed = _parse_label(label, lineno)
            if not isinstance(text, str) or not text.strip():
                raise DataError("empty text", lineno)
            yield TweetRecord(str(rid), text, parsed, timestamp)


def load_records(path: str | Path, format: CorpusFormat | None = None) -> list[TweetRecord]:
    """Records with optional labels (for scoring unlabeled tweets)."""
    path = Path(path)
    return list(_iter_records(path, _infer_format(path, format), require_label=False))


def load_dataset(path: str | Path, format: CorpusFormat | None = None) -> LabeledDataset:
    """Load a labeled corpus; record order is preserved from the file."""
    path = Path(path)
    if not path.is_file():
        raise DataError("corpus file not found: %s" % path)
    records = list(_iter_records(path, _infer_format(path, format), require_label=True))
    if not records:
        raise DataError("no records in %s" % path)
    ds = LabeledDataset(tuple(records))
    logger.info("loaded %d records from %s (%d positive, %d negative)", len(ds), path, ds.positive_count, ds.negative_count)
    return ds


def write_dataset(ds: LabeledDataset | Sequence[TweetRecord], path: str | Path, format: CorpusFormat | None = None) -> Path:
    path = Path(path)
    fmt = _infer_format(path, format)
    records = ds.records if isinstance(ds, LabeledDataset) else ds
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            if fmt == "jsonl":
                f.write(json.dumps(r.to_dict(), ensure_ascii=False) + "\n")
            else:
                f.write("%s\t%s\t%s\n" % (r.id, "" if r.label is None else r.label, r.text.replace("\t", " ").replace("\n", " ")))
    return path


def write_token_file(path: str | Path, seqs: Sequence[TokenSequence], labels: Sequence[int | None] | None = None) -> Path:
    """Tokenized JSONL: {"id", "tokens", "label"} (label omitted when unknown)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for i, seq in enumerate(seqs):
            row: dict = {"id": seq.source_id, "tokens": list(seq.tokens)}
            if labels is not None and labels[i] is not None:
                row["label"] = int(labels[i])
            f.write(json.dumps(row, ensure_ascii=False) + "\n")
    return path


def read_token_file(path: str | Path) -> tuple[list[TokenSequence], list[int | None]]:
    path = Path(path)
    if not path.is_file():
        raise DataError("token file not found: %s" % path)
    seqs: list[TokenSequence] = []
    labels: list[int | None] = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataError("invalid JSON (%s)" % e.msg, lineno) from e
            tokens = obj.get("tokens") if isinstance(obj, dict) else None
            if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
                raise DataError("expected an object with a tokens list", lineno)
            label = obj.get("label")
            seqs.append(TokenSequence(tuple(tokens), str(obj.get("id", ""))))
            labels.append(None if label is None else _parse_label(label, lineno))
    if not seqs:
        raise DataError("no records in %s" % path)
    return seqs, labels


def require_labels(labels: Sequence[int | None], what: str = "token file") -> np.ndarray:
    if any(lab is None for lab in labels):
        raise DataError("%s has unlabeled records" % what)
    return np.asarray(labels, dtype=np.int64)


# --- statistics ---


@dataclass(frozen=True)
class DatasetStats:
    n_records: int
    positive_count: int
    negative_count: int
    class_ratio: float
    unique_tokens: int
    unique_tokens_positive: int
    unique_tokens_negative: int
    mean_tokens_per_tweet: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def dataset_stats(ds: LabeledDataset, config: PreprocessConfig | Preprocessor | None = None) -> DatasetStats:
    """Counts, positive-class ratio and unique-token counts over preprocessed text."""
    if len(ds) == 0:
        raise DataError("dataset is empty")
    pre = config if isinstance(config, Preprocessor) else Preprocessor(config)
    vocab: set[str] = set()
    by_class: dict[int, set[str]] = {0: set(), 1: set()}
    total = 0
    for r in ds.records:
        toks = pre(r.text, r.id).tokens
        total += len(toks)
        vocab.update(toks)
        by_class[r.label].update(toks)
    return DatasetStats(
        n_records=len(ds),
        positive_count=ds.positive_count,
        negative_count=ds.negative_count,
        class_ratio=ds.positive_count / len(ds),
        unique_tokens=len(vocab),
        unique_tokens_positive=len(by_class[1]),
        unique_tokens_negative=len(by_class[0]),
        mean_tokens_per_tweet=total / len(ds),
    )


# --- splitting ---


def part_sizes(n: int, fractions: Sequence[float]) -> list[int]:
    """floor(n*f) per part, remainder to the first part."""
    sizes = [int(math.floor(n * f + 1e-9)) for f in fractions]
    sizes[0] += n - sum(sizes)
    return sizes


def split_indices(labels: Sequence[int] | np.ndarray, fractions: Sequence[float], seed: int, stratified: bool = True) -> list[np.ndarray]:
    """Disjoint index arrays (each sorted) covering range(len(labels))."""
    labels = np.asarray(labels)
    n = len(labels)
    if len(fractions) == 1:
        return [np.arange(n)]
    rng = np.random.default_rng(seed)
    parts: list[list[np.ndarray]] = [[] for _ in fractions]
    if stratified:
        for c in (0, 1):
            idx = np.flatnonzero(labels == c)
            sizes = part_sizes(len(idx), fractions)
            if min(sizes) < 1:
                raise DataError(
                    "too few records of class %d (%d) to stratify into %d parts" % (c, len(idx), len(fractions))
                )
            perm = rng.permutation(idx)
            start = 0
            for p, size in enumerate(sizes):
                parts[p].append(perm[start:start + size])
                start += size
    else:
        perm = rng.permutation(n)
        start = 0
        for p, size in enumerate(part_sizes(n, fractions)):
            parts[p].append(perm[start:start + size])
            start += size
    return [np.sort(np.concatenate(p)) for p in parts]


def split(ds: LabeledDataset, spec: SplitSpec) -> list[LabeledDataset]:
    if len(spec.fractions) == 1:
        return [ds]
    idx = split_indices(ds.labels, spec.fractions, spec.seed, spec.stratified)
    parts = [ds.subset(i) for i in idx]
    logger.info("split %d records into %s", len(ds), [len(p) for p in parts])
    return parts


def fold_indices(labels: Sequence[int] | np.ndarray, k: int, seed: int, stratified: bool = True) -> list[tuple[np.ndarray, np.ndarray]]:
    """(train, validation) index pairs; every index is in exactly one validation fold."""
    labels = np.asarray(labels)
    n = len(labels)
    if k < 2:
        raise DataError("k must be >= 2, got %d" % k)
    if k > n:
        raise DataError("k=%d exceeds number of records (%d)" % (k, n))
    rng = np.random.default_rng(seed)
    fold_of = np.empty(n, dtype=np.int64)
    if stratified:
        for c in (0, 1):
            idx = np.flatnonzero(labels == c)
            if len(idx) < k:
                raise DataError("class %d has %d records; stratified %d-fold needs at least %d" % (c, len(idx), k, k))
            perm = rng.permutation(idx)
            fold_of[perm] = np.arange(len(perm)) % k
    else:
        perm = rng.permutation(n)
        fold_of[perm] = np.arange(n) % k
    all_idx = np.arange(n)
    return [(all_idx[fold_of != f], all_idx[fold_of == f]) for f in range(k)]


def kfold(ds: LabeledDataset, k: int, seed: int, stratified: bool = True) -> list[tuple[LabeledDataset, LabeledDataset]]:
    return [(ds.subset(tr), ds.subset(va)) for tr, va in fold_indices(ds.labels, k, seed, stratified)]
