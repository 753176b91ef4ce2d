"""
TF-IDF features: n-gram extraction, vocabulary fitting (top max_features terms by corpus
term frequency) and weights TF_i * log(N / DF_i), taken literally (no smoothing).
"""

from __future__ import annotations

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Sequence

import numpy as np
from scipy import sparse
from pydantic import BaseModel, Field

from misinfo.arabic_text import TokenSequence
from misinfo.errors import DataError

logger = logging.getLogger(__name__)

NgramMode = Literal["unigram", "bi_tri"]
LogBase = Literal["natural", "base10"]


class TfidfConfig(BaseModel):
    ngram_mode: NgramMode = "unigram"
    max_features: int = Field(5000, ge=1)
    log_base: LogBase = "natural"
    l2_normalize: bool = False


@dataclass(frozen=True)
class Vocabulary:
    """Retained terms (column order), their document frequencies and the corpus size."""

    terms: tuple[str, ...]
    index: dict[str, int]
    df: dict[str, int]
    n_docs: int
    config: TfidfConfig

    def __len__(self) -> int:
        return len(self.terms)


@dataclass(frozen=True)
class SparseVector:
    """Strictly increasing column ids with positive weights."""

    cols: np.ndarray
    weights: np.ndarray
    dim: int

    def __len__(self) -> int:
        return len(self.cols)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.cols] = self.weights
        return out

    def entries(self) -> list[tuple[int, float]]:
        return [(int(c), float(w)) for c, w in zip(self.cols, self.weights)]


def extract_ngrams(seq: TokenSequence | Sequence[str], mode: NgramMode) -> list[str]:
    tokens = list(seq.tokens if isinstance(seq, TokenSequence) else seq)
    if mode == "unigram":
        return tokens
    if mode != "bi_tri":
        raise ValueError("unknown ngram mode %r" % mode)
    out = [" ".join(tokens[i:i + 2]) for i in range(len(tokens) - 1)]
    out += [" ".join(tokens[i:i + 3]) for i in range(len(tokens) - 2)]
    return out


def fit_vocabulary(corpus: Sequence[TokenSequence], cfg: TfidfConfig | None = None) -> Vocabulary:
    """Keep the max_features most frequent terms (ties broken lexicographically)."""
    cfg = cfg or TfidfConfig()
    if not corpus:
        raise DataError("cannot fit a vocabulary on an empty corpus")
    tf: Counter[str] = Counter()
    df: Counter[str] = Counter()
    for seq in corpus:
        terms = extract_ngrams(seq, cfg.ngram_mode)
        tf.update(terms)
        df.update(set(terms))
    ranked = sorted(tf.items(), key=lambda kv: (-kv[1], kv[0]))[: cfg.max_features]
    terms = tuple(t for t, _ in ranked)
    vocab = Vocabulary(
        terms=terms,
        index={t: i for i, t in enumerate(terms)},
        df={t: df[t] for t in terms},
        n_docs=len(corpus),
        config=cfg,
    )
    logger.info("fitted %s vocabulary: %d of %d distinct terms over %d docs", cfg.ngram_mode, len(terms), len(tf), len(corpus))
    return vocab


def _log(x: float, base: LogBase) -> float:
    return math.log10(x) if base == "base10" else math.log(x)


def tfidf_vector(seq: TokenSequence, vocab: Vocabulary, cfg: TfidfConfig | None = None) -> SparseVector:
    cfg = cfg or vocab.config
    counts = Counter(t for t in extract_ngrams(seq, cfg.ngram_mode) if t in vocab.index)
    entries = []
    for term, tf in counts.items():
        w = tf * _log(vocab.n_docs / vocab.df[term], cfg.log_base)
        if w > 0.0:
            entries.append((vocab.index[term], w))
    entries.sort()
    cols = np.fromiter((c for c, _ in entries), dtype=np.int64, count=len(entries))
    weights = np.fromiter((w for _, w in entries), dtype=np.float64, count=len(entries))
    if cfg.l2_normalize and len(weights):
        weights = weights / np.sqrt(np.dot(weights, weights))
    return SparseVector(cols, weights, len(vocab))


def transform_corpus(corpus: Sequence[TokenSequence], vocab: Vocabulary, cfg: TfidfConfig | None = None) -> list[SparseVector]:
    return [tfidf_vector(seq, vocab, cfg) for seq in corpus]


def to_matrix(vectors: Sequence[SparseVector], dim: int | None = None) -> sparse.csr_matrix:
    """Stack sparse vectors into an n x dim CSR matrix."""
    if dim is None:
        dim = vectors[0].dim if vectors else 0
    indptr = np.zeros(len(vectors) + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([len(v) for v in vectors])
    indices = np.concatenate([v.cols for v in vectors]) if vectors else np.zeros(0, dtype=np.int64)
    data = np.concatenate([v.weights for v in vectors]) if vectors else np.zeros(0)
    return sparse.csr_matrix((data, indices, indptr), shape=(len(vectors), dim))


# --- persistence ---


def save_vocabulary(vocab: Vocabulary, path: str | Path) -> Path:
    """TSV: header '# {json}' with n_docs and config, then term<TAB>column<TAB>df."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {"n_docs": vocab.n_docs, "config": vocab.config.model_dump()}
    with open(path, "w", encoding="utf-8") as f:
        f.write("# " + json.dumps(header, sort_keys=True) + "\n")
        for i, term in enumerate(vocab.terms):
            f.write("%s\t%d\t%d\n" % (term, i, vocab.df[term]))
    return path


def load_vocabulary(path: str | Path) -> Vocabulary:
    path = Path(path)
    with open(path, encoding="utf-8") as f:
        first = f.readline()
        if not first.startswith("# "):
            raise DataError("missing vocabulary header", 1)
        try:
            header = json.loads(first[2:])
        except json.JSONDecodeError as e:
            raise DataError("invalid vocabulary header (%s)" % e.msg, 1) from e
        terms: list[str] = []
        df: dict[str, int] = {}
        for lineno, line in enumerate(f, start=2):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 3:
                raise DataError("expected term<TAB>column<TAB>df", lineno)
            term, col, d = parts[0], int(parts[1]), int(parts[2])
            if col != len(terms):
                raise DataError("column ids must be contiguous from 0 (got %d)" % col, lineno)
            terms.append(term)
            df[term] = d
    return Vocabulary(
        terms=tuple(terms),
        index={t: i for i, t in enumerate(terms)},
        df=df,
        n_docs=int(header["n_docs"]),
        config=TfidfConfig.model_validate(header["config"]),
    )


def write_libsvm(path: str | Path, ids: Sequence[str], labels: Sequence[int | None], vectors: Sequence[SparseVector]) -> Path:
    """One tweet per line: id label col:weight col:weight ...; ids must be single non-empty tokens."""
    for rid in ids:
        if rid.split() != [rid]:
            raise DataError("libsvm id %r is empty or contains whitespace" % rid)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for rid, label, v in zip(ids, labels, vectors):
            pairs = " ".join("%d:%.17g" % (c, w) for c, w in zip(v.cols, v.weights))
            f.write(("%s %s %s" % (rid, "" if label is None else label, pairs)).rstrip() + "\n")
    return path


def read_libsvm(path: str | Path, dim: int) -> tuple[list[str], list[int | None], list[SparseVector]]:
    ids: list[str] = []
    labels: list[int | None] = []
    vectors: list[SparseVector] = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            parts = line.split()
            if not parts:
                continue
            ids.append(parts[0])
            rest = parts[1:]
            label: int | None = None
            if rest and ":" not in rest[0]:
                label = int(rest[0])
                rest = rest[1:]
            try:
                pairs = [(int(c), float(w)) for c, w in (p.split(":", 1) for p in rest)]
            except ValueError as e:
                raise DataError("malformed col:weight pair", lineno) from e
            if any(c >= dim for c, _ in pairs):
                raise DataError("column id out of range for dim %d" % dim, lineno)
            labels.append(label)
            vectors.append(SparseVector(
                np.array([c for c, _ in pairs], dtype=np.int64),
                np.array([w for _, w in pairs], dtype=np.float64),
                dim,
            ))
    return ids, labels, vectors
