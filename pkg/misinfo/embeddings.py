"""
Word embeddings trained from tokenized tweets: word2vec CBOW with negative sampling and
FastText-style subword composition, plus tweet vectors (mean of word vectors).

Training applies updates per mini-batch of `batch` target words: every gradient in a
batch is computed against the parameters at the start of the batch, then applied at once.
A FastText input word is the sum of its word row and its hashed character n-gram rows;
every constituent row receives the full context gradient, as a CBOW context row does.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Sequence

import numpy as np
from joblib import Parallel, delayed
from pydantic import BaseModel, Field, model_validator
from scipy.special import expit

from misinfo.arabic_text import TokenSequence
from misinfo.errors import DataError, TrainingError

logger = logging.getLogger(__name__)

EmbedMode = Literal["cbow", "fasttext"]

REAL = np.float32
BUCKET_MAGIC = b"MISFTBK1"
NOISE_POWER = 0.75


class EmbedTrainConfig(BaseModel):
    dim: int = Field(200, ge=1)
    window: int = Field(3, ge=1)
    negatives: int = Field(10, ge=1)
    min_count: int = Field(5, ge=1)
    epochs: int = Field(5, ge=0)
    batch: int = Field(50, ge=1, description="Target words per mini-batch update")
    mode: EmbedMode = "cbow"
    subword_min: int = Field(3, ge=1)
    subword_max: int = Field(6, ge=1)
    buckets: int = Field(2_000_000, ge=1)
    learning_rate: float = Field(0.025, gt=0)
    min_learning_rate: float = Field(1e-4, ge=0)
    seed: int = 1
    workers: int = Field(1, ge=1, description="> 1 trains shards concurrently without locks (not reproducible)")

    @model_validator(mode="after")
    def _check_subwords(self) -> "EmbedTrainConfig":
        if self.subword_min > self.subword_max:
            raise ValueError("subword_min (%d) > subword_max (%d)" % (self.subword_min, self.subword_max))
        return self


# --- subwords ---


def ft_hash(data: bytes) -> int:
    """32-bit FNV-1a."""
    h = 2166136261
    for b in data:
        h ^= b
        h = (h * 16777619) & 0xFFFFFFFF
    return h


def compute_subwords(word: str, min_n: int, max_n: int) -> list[str]:
    """Character n-grams of '<word>' for n in [min_n, max_n], ordered by n then position."""
    extended = "<" + word + ">"
    return [extended[i:i + n] for n in range(min_n, max_n + 1) for i in range(len(extended) - n + 1)]


def subword_buckets(word: str, min_n: int, max_n: int, buckets: int) -> list[int]:
    return [ft_hash(ng.encode("utf-8")) % buckets for ng in compute_subwords(word, min_n, max_n)]


# --- vocabulary ---


@dataclass(frozen=True)
class EmbedVocab:
    """Words ranked by frequency (then lexicographically) and the 3/4-power noise distribution."""

    words: tuple[str, ...]
    index: dict[str, int]
    counts: np.ndarray
    noise: np.ndarray

    def __len__(self) -> int:
        return len(self.words)


def build_embed_vocab(corpus: Sequence[TokenSequence], cfg: EmbedTrainConfig) -> EmbedVocab:
    if not corpus:
        raise DataError("cannot build an embedding vocabulary from an empty corpus")
    freq: dict[str, int] = {}
    for seq in corpus:
        for t in seq.tokens:
            freq[t] = freq.get(t, 0) + 1
    kept = sorted(((w, c) for w, c in freq.items() if c >= cfg.min_count), key=lambda kv: (-kv[1], kv[0]))
    if not kept:
        raise DataError("no word reaches min_count=%d (%d distinct words)" % (cfg.min_count, len(freq)))
    words = tuple(w for w, _ in kept)
    counts = np.array([c for _, c in kept], dtype=np.int64)
    weights = counts.astype(np.float64) ** NOISE_POWER
    logger.info("embedding vocabulary: %d of %d words with count >= %d", len(words), len(freq), cfg.min_count)
    return EmbedVocab(words, {w: i for i, w in enumerate(words)}, counts, weights / weights.sum())


# --- table ---


@dataclass
class EmbeddingTable:
    """
    Trained vectors. For fasttext tables bucket vectors are stored sparsely: only buckets
    touched by vocabulary words have rows (bucket_ids sorted); other buckets are zero.
    """

    words: tuple[str, ...]
    vocab: dict[str, int]
    input_vectors: np.ndarray
    mode: EmbedMode = "cbow"
    bucket_ids: np.ndarray | None = None
    bucket_vectors: np.ndarray | None = None
    buckets: int = 0
    subword_min: int = 3
    subword_max: int = 6
    output_vectors: np.ndarray | None = None
    history: list[dict] = field(default_factory=list)
    _composed: np.ndarray | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return int(self.input_vectors.shape[1])

    def __len__(self) -> int:
        return len(self.words)

    def bucket_vector(self, bucket: int) -> np.ndarray:
        if self.bucket_ids is None or self.bucket_vectors is None:
            raise ValueError("table has no subword buckets")
        pos = int(np.searchsorted(self.bucket_ids, bucket))
        if pos < len(self.bucket_ids) and self.bucket_ids[pos] == bucket:
            return self.bucket_vectors[pos]
        return np.zeros(self.dim, dtype=self.bucket_vectors.dtype)

    def subword_sum(self, word: str) -> np.ndarray | None:
        ids = subword_buckets(word, self.subword_min, self.subword_max, self.buckets)
        if not ids:
            return None
        out = np.zeros(self.dim, dtype=np.float64)
        for b in ids:
            out += self.bucket_vector(b)
        return out

    def _composed_row(self, i: int, word: str) -> np.ndarray:
        # no n-grams when len(word) + 2 < subword_min: the word is its own row
        sub = self.subword_sum(word)
        return self.input_vectors[i] if sub is None else self.input_vectors[i] + sub

    def word_matrix(self) -> np.ndarray:
        """Composed vectors of all vocabulary words (cached)."""
        if self._composed is None:
            if self.mode == "fasttext":
                self._composed = np.vstack([self._composed_row(i, w) for i, w in enumerate(self.words)]).astype(REAL)
            else:
                self._composed = self.input_vectors
        return self._composed


def word_vector(table: EmbeddingTable, word: str) -> np.ndarray | None:
    """Vocabulary row (plus subwords for fasttext); OOV fasttext words use subwords only."""
    i = table.vocab.get(word)
    if table.mode == "cbow":
        return None if i is None else table.input_vectors[i]
    if i is not None:
        return table.word_matrix()[i]
    sub = table.subword_sum(word)
    return None if sub is None else sub.astype(REAL)


@dataclass(frozen=True)
class TweetVector:
    values: np.ndarray
    n_words: int


def tweet_vector(table: EmbeddingTable, seq: TokenSequence) -> TweetVector:
    """Mean of the available word vectors; zero vector when none is available."""
    total = np.zeros(table.dim, dtype=np.float64)
    n = 0
    for t in seq.tokens:
        v = word_vector(table, t)
        if v is not None:
            total += v
            n += 1
    return TweetVector(total / n if n else total, n)


def tweet_matrix(table: EmbeddingTable, corpus: Sequence[TokenSequence]) -> np.ndarray:
    rows = [tweet_vector(table, seq) for seq in corpus]
    empty = sum(1 for r in rows if r.n_words == 0)
    if empty:
        logger.warning("%d of %d tweets have no word vectors (zero rows)", empty, len(rows))
    return np.vstack([r.values for r in rows]) if rows else np.zeros((0, table.dim))


def nearest_neighbors(table: EmbeddingTable, word: str, k: int) -> list[tuple[str, float]]:
    """Top-k vocabulary words by cosine (query excluded), ties broken lexicographically."""
    q = word_vector(table, word)
    if q is None:
        raise DataError("word %r has no vector" % word)
    mat = table.word_matrix().astype(np.float64)
    q = np.asarray(q, dtype=np.float64)
    norms = np.linalg.norm(mat, axis=1) * np.linalg.norm(q)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = np.where(norms > 0, mat @ q / np.where(norms > 0, norms, 1.0), 0.0)
    pairs = [(w, float(c)) for w, c in zip(table.words, cos) if w != word]
    pairs.sort(key=lambda wc: (-wc[1], wc[0]))
    return pairs[:k]


# --- training ---


@dataclass
class _Layout:
    """Input-matrix rows composing each vocabulary word (ragged: flat + ptr/len)."""

    flat: np.ndarray
    ptr: np.ndarray
    lens: np.ndarray
    bucket_ids: np.ndarray | None

    def rows(self, words: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        lens = self.lens[words]
        group_start = np.cumsum(lens) - lens
        idx = np.repeat(self.ptr[words] - group_start, lens) + np.arange(int(lens.sum()))
        return self.flat[idx], lens


def _layout(vocab: EmbedVocab, cfg: EmbedTrainConfig) -> _Layout:
    v = len(vocab)
    if cfg.mode == "cbow":
        return _Layout(np.arange(v), np.arange(v), np.ones(v, dtype=np.int64), None)
    per_word = [subword_buckets(w, cfg.subword_min, cfg.subword_max, cfg.buckets) for w in vocab.words]
    used = np.unique(np.fromiter((b for ids in per_word for b in ids), dtype=np.int64))
    row_of = {int(b): v + i for i, b in enumerate(used)}
    rows = [[i] + [row_of[b] for b in ids] for i, ids in enumerate(per_word)]
    lens = np.array([len(r) for r in rows], dtype=np.int64)
    ptr = np.cumsum(lens) - lens
    return _Layout(np.fromiter((x for r in rows for x in r), dtype=np.int64), ptr, lens, used)


def init_table(vocab: EmbedVocab, cfg: EmbedTrainConfig) -> EmbeddingTable:
    """Input rows uniform in [-0.5/D, 0.5/D]; output rows zero."""
    layout = _layout(vocab, cfg)
    n_rows = len(vocab) + (0 if layout.bucket_ids is None else len(layout.bucket_ids))
    rng = np.random.default_rng(cfg.seed)
    full = ((rng.random((n_rows, cfg.dim)) - 0.5) / cfg.dim).astype(REAL)
    return _table_from(vocab, cfg, layout, full, np.zeros((len(vocab), cfg.dim), dtype=REAL))


def _table_from(vocab: EmbedVocab, cfg: EmbedTrainConfig, layout: _Layout, full: np.ndarray, out: np.ndarray) -> EmbeddingTable:
    v = len(vocab)
    return EmbeddingTable(
        words=vocab.words,
        vocab=dict(vocab.index),
        input_vectors=full[:v],
        mode=cfg.mode,
        bucket_ids=layout.bucket_ids,
        bucket_vectors=None if layout.bucket_ids is None else full[v:],
        buckets=cfg.buckets if cfg.mode == "fasttext" else 0,
        subword_min=cfg.subword_min,
        subword_max=cfg.subword_max,
        output_vectors=out,
    )


def _context_matrix(corpus: Sequence[TokenSequence], vocab: EmbedVocab, window: int) -> tuple[np.ndarray, np.ndarray]:
    """Targets and their (up to window per side) context ids, -1 for empty slots."""
    ids: list[int] = []
    sent: list[int] = []
    for s, seq in enumerate(corpus):
        for t in seq.tokens:
            i = vocab.index.get(t)
            if i is not None:
                ids.append(i)
                sent.append(s)
    words = np.asarray(ids, dtype=np.int64)
    sents = np.asarray(sent, dtype=np.int64)
    n = len(words)
    if n < 2:
        raise DataError("training corpus has %d in-vocabulary tokens; need at least 2" % n)
    offsets = [o for o in range(-window, window + 1) if o != 0]
    ctx = np.full((n, len(offsets)), -1, dtype=np.int64)
    pos = np.arange(n)
    for j, o in enumerate(offsets):
        other = pos + o
        idx = np.flatnonzero((other >= 0) & (other < n))
        idx = idx[sents[other[idx]] == sents[idx]]
        ctx[idx, j] = words[other[idx]]
    keep = (ctx >= 0).any(axis=1)
    return words[keep], ctx[keep]


@dataclass(frozen=True)
class LossBatch:
    """Fixed target, context (-1 padded) and negative word ids for measuring the sampled loss."""

    targets: np.ndarray
    contexts: np.ndarray
    negatives: np.ndarray


class _Trainer:
    def __init__(self, vocab: EmbedVocab, cfg: EmbedTrainConfig, table: EmbeddingTable) -> None:
        self.vocab = vocab
        self.cfg = cfg
        self.layout = _layout(vocab, cfg)
        parts = [table.input_vectors] if table.bucket_vectors is None else [table.input_vectors, table.bucket_vectors]
        self.full = np.ascontiguousarray(np.vstack(parts))
        self.out = table.output_vectors if table.output_vectors is not None else np.zeros((len(vocab), cfg.dim), dtype=REAL)
        self.cum_noise = np.cumsum(vocab.noise)

    def sample_negatives(self, rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
        idx = np.searchsorted(self.cum_noise, rng.random(shape), side="right")
        return np.minimum(idx, len(self.vocab) - 1)

    def hidden(self, ctx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        valid = ctx >= 0
        count = valid.sum(axis=1)
        uniq, inv = np.unique(ctx[valid], return_inverse=True)
        rows, lens = self.layout.rows(uniq)
        comp = np.add.reduceat(self.full[rows], np.cumsum(lens) - lens, axis=0)
        slots = np.zeros(ctx.shape + (self.cfg.dim,), dtype=REAL)
        slots[valid] = comp[inv]
        return slots.sum(axis=1) / count[:, None].astype(REAL), valid

    def scores(self, h: np.ndarray, targets: np.ndarray, negs: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        out_ids = np.concatenate([targets[:, None], negs], axis=1)
        o = self.out[out_ids]
        f = np.einsum("bd,bkd->bk", h, o)
        mask = np.ones(out_ids.shape, dtype=REAL)
        mask[:, 1:] = negs != targets[:, None]
        return f, out_ids, mask

    @staticmethod
    def loss(f: np.ndarray, mask: np.ndarray) -> np.ndarray:
        per = np.logaddexp(0.0, -f[:, 0]) + (np.logaddexp(0.0, f[:, 1:]) * mask[:, 1:]).sum(axis=1)
        return per

    def step(self, targets: np.ndarray, ctx: np.ndarray, negs: np.ndarray, lr: float) -> float:
        h, valid = self.hidden(ctx)
        f, out_ids, mask = self.scores(h, targets, negs)
        batch_loss = float(self.loss(f.astype(np.float64), mask).sum())
        labels = np.zeros_like(f)
        labels[:, 0] = 1.0
        g = ((labels - expit(f)) * mask * lr).astype(REAL)
        o = self.out[out_ids]
        neu1e = np.einsum("bk,bkd->bd", g, o)
        np.add.at(self.out, out_ids.ravel(), (g[:, :, None] * h[:, None, :]).reshape(-1, self.cfg.dim))
        owners = np.nonzero(valid)[0]
        rows, lens = self.layout.rows(ctx[valid])
        np.add.at(self.full, rows, neu1e[np.repeat(owners, lens)])
        return batch_loss


def _run_shard(trainer: _Trainer, targets: np.ndarray, ctx: np.ndarray, starts: Sequence[int], seed: int, epoch: int, done_before: int, total: int) -> float:
    cfg = trainer.cfg
    rng = np.random.default_rng([seed, epoch])
    loss = 0.0
    done = done_before
    for s in starts:
        t = targets[s:s + cfg.batch]
        progress = done / total
        lr = max(cfg.min_learning_rate, cfg.learning_rate - (cfg.learning_rate - cfg.min_learning_rate) * progress)
        negs = trainer.sample_negatives(rng, (len(t), cfg.negatives))
        loss += trainer.step(t, ctx[s:s + cfg.batch], negs, lr)
        done += len(t)
    return loss


def _train(corpus: Sequence[TokenSequence], cfg: EmbedTrainConfig) -> EmbeddingTable:
    vocab = build_embed_vocab(corpus, cfg)
    targets, ctx = _context_matrix(corpus, vocab, cfg.window)
    table = init_table(vocab, cfg)
    if cfg.epochs == 0:
        return table
    trainer = _Trainer(vocab, cfg, table)
    n = len(targets)
    total = n * cfg.epochs
    starts = list(range(0, n, cfg.batch))
    history: list[dict] = []
    for epoch in range(cfg.epochs):
        done_before = epoch * n
        if cfg.workers == 1:
            loss = _run_shard(trainer, targets, ctx, starts, cfg.seed, epoch, done_before, total)
        else:
            shards = [starts[w::cfg.workers] for w in range(cfg.workers)]
            losses = Parallel(n_jobs=cfg.workers, backend="threading")(
                delayed(_run_shard)(trainer, targets, ctx, sh, cfg.seed + w, epoch, done_before, total)
                for w, sh in enumerate(shards)
            )
            loss = float(sum(losses))
        if not (np.isfinite(trainer.full).all() and np.isfinite(trainer.out).all()):
            raise TrainingError("non-finite embedding values after epoch %d" % (epoch + 1))
        history.append({"epoch": epoch + 1, "loss": loss / n})
        logger.info("%s epoch %d/%d: loss %.5f over %d targets", cfg.mode, epoch + 1, cfg.epochs, loss / n, n)
    table = _table_from(vocab, cfg, trainer.layout, trainer.full, trainer.out)
    table.history = history
    return table


def train_cbow(corpus: Sequence[TokenSequence], cfg: EmbedTrainConfig | None = None) -> EmbeddingTable:
    cfg = cfg or EmbedTrainConfig()
    if cfg.mode != "cbow":
        cfg = cfg.model_copy(update={"mode": "cbow"})
    return _train(corpus, cfg)


def train_fasttext(corpus: Sequence[TokenSequence], cfg: EmbedTrainConfig | None = None) -> EmbeddingTable:
    cfg = cfg or EmbedTrainConfig(mode="fasttext")
    if cfg.mode != "fasttext":
        cfg = cfg.model_copy(update={"mode": "fasttext"})
    return _train(corpus, cfg)


def train_embeddings(corpus: Sequence[TokenSequence], cfg: EmbedTrainConfig) -> EmbeddingTable:
    return train_fasttext(corpus, cfg) if cfg.mode == "fasttext" else train_cbow(corpus, cfg)


def sample_loss_batch(corpus: Sequence[TokenSequence], cfg: EmbedTrainConfig, size: int, seed: int) -> LossBatch:
    """A fixed batch (targets, contexts, negatives) drawn from the corpus."""
    vocab = build_embed_vocab(corpus, cfg)
    targets, ctx = _context_matrix(corpus, vocab, cfg.window)
    rng = np.random.default_rng(seed)
    pick = np.sort(rng.choice(len(targets), size=min(size, len(targets)), replace=False))
    cum = np.cumsum(vocab.noise)
    negs = np.minimum(np.searchsorted(cum, rng.random((len(pick), cfg.negatives)), side="right"), len(vocab) - 1)
    return LossBatch(targets[pick], ctx[pick], negs)


def evaluate_loss(table: EmbeddingTable, batch: LossBatch, cfg: EmbedTrainConfig) -> float:
    """
    Mean negative-sampling logistic loss of the batch under the table's parameters.
    Word ids refer to the vocabulary built from the same corpus and cfg as the table.
    """
    if table.output_vectors is None:
        raise ValueError("table has no output vectors (loaded tables cannot be scored)")
    uniform = np.full(len(table), 1.0 / len(table))
    vocab = EmbedVocab(table.words, table.vocab, np.ones(len(table), dtype=np.int64), uniform)
    cfg = cfg.model_copy(update={
        "mode": table.mode,
        "buckets": table.buckets or cfg.buckets,
        "subword_min": table.subword_min,
        "subword_max": table.subword_max,
    })
    trainer = _Trainer(vocab, cfg, table)
    h, _ = trainer.hidden(batch.contexts)
    f, _, mask = trainer.scores(h, batch.targets, batch.negatives)
    return float(trainer.loss(f.astype(np.float64), mask).mean())


# --- persistence ---


def save_table(table: EmbeddingTable, path: str | Path) -> Path:
    """Word-vector text format ('|V| D' header, then 'word v1 ... vD'); fasttext buckets go to '<path>.buckets'."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write("%d %d\n" % (len(table), table.dim))
        for w, row in zip(table.words, table.input_vectors):
            f.write(w + " " + " ".join("%.9g" % x for x in row) + "\n")
    companion = _companion(path)
    if table.mode == "fasttext":
        header = json.dumps({
            "buckets": table.buckets,
            "subword_min": table.subword_min,
            "subword_max": table.subword_max,
            "rows": int(len(table.bucket_ids)),
            "dim": table.dim,
        }).encode("utf-8")
        with open(companion, "wb") as f:
            f.write(BUCKET_MAGIC)
            f.write(struct.pack("<I", len(header)))
            f.write(header)
            f.write(np.ascontiguousarray(table.bucket_ids, dtype="<i8").tobytes())
            f.write(np.ascontiguousarray(table.bucket_vectors, dtype="<f4").tobytes())
    elif companion.exists():
        companion.unlink()
    return path


def _companion(path: Path) -> Path:
    return path.with_name(path.name + ".buckets")


def load_table(path: str | Path) -> EmbeddingTable:
    path = Path(path)
    if not path.is_file():
        raise DataError("vector file not found: %s" % path)
    with open(path, encoding="utf-8") as f:
        header = f.readline().split()
        if len(header) != 2:
            raise DataError("expected '|V| D' header", 1)
        n, dim = int(header[0]), int(header[1])
        words: list[str] = []
        mat = np.zeros((n, dim), dtype=REAL)
        for lineno, line in enumerate(f, start=2):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split(" ")
            if len(parts) != dim + 1:
                raise DataError("row for %r has %d values, expected %d" % (parts[0], len(parts) - 1, dim), lineno)
            if len(words) >= n:
                raise DataError("more rows than the header's %d" % n, lineno)
            mat[len(words)] = np.asarray(parts[1:], dtype=np.float64)
            words.append(parts[0])
    if len(words) != n:
        raise DataError("truncated vector file: %d of %d rows" % (len(words), n))
    table = EmbeddingTable(tuple(words), {w: i for i, w in enumerate(words)}, mat)
    companion = _companion(path)
    if companion.exists():
        raw = companion.read_bytes()
        if raw[:8] != BUCKET_MAGIC:
            raise DataError("bad bucket section magic in %s" % companion)
        (hlen,) = struct.unpack("<I", raw[8:12])
        meta = json.loads(raw[12:12 + hlen].decode("utf-8"))
        if meta["dim"] != dim:
            raise DataError("bucket section dim %d does not match vectors dim %d" % (meta["dim"], dim))
        rows = meta["rows"]
        off = 12 + hlen
        need = off + rows * 8 + rows * dim * 4
        if len(raw) < need:
            raise DataError("truncated bucket section in %s" % companion)
        table.bucket_ids = np.frombuffer(raw, dtype="<i8", count=rows, offset=off).astype(np.int64)
        table.bucket_vectors = np.frombuffer(raw, dtype="<f4", count=rows * dim, offset=off + rows * 8).reshape(rows, dim).astype(REAL)
        table.mode = "fasttext"
        table.buckets = meta["buckets"]
        table.subword_min = meta["subword_min"]
        table.subword_max = meta["subword_max"]
    return table
