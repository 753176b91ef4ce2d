"""
Multi-scale 1-D convolutional tweet classifier.

Token ids are embedded, convolved with one bank of filters per kernel size (valid
convolution over the sequence axis), passed through ReLU and global max-pooling,
concatenated, dropped out in training mode and mapped by one dense unit to a logit.
Scores are sigmoid(logit). Id 0 is padding and maps to a zero embedding row that
never receives gradient; id 1 stands for out-of-vocabulary words.
"""

from __future__ import annotations

import copy
import csv
import json
import logging
import math
import struct
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from torch import nn

from misinfo.arabic_text import TokenSequence
from misinfo.classifiers.base import balanced_weights
from misinfo.cnn_config import CnnConfig, LossName
from misinfo.embeddings import EmbeddingTable, word_vector
from misinfo.errors import DataError, TrainingError
from misinfo.evaluation import roc_auc

logger = logging.getLogger(__name__)

PAD_ID = 0
OOV_ID = 1
CHECKPOINT_MAGIC = b"MISCNN01"
EPS_CLAMP = 1e-7


@dataclass(frozen=True)
class TokenIndex:
    """Word -> id; ids 0 and 1 are reserved, words ranked by frequency then lexicographically."""

    words: tuple[str, ...]
    index: dict[str, int] = field(repr=False)

    @property
    def vocab_size(self) -> int:
        return len(self.words) + 2

    def id(self, word: str) -> int:
        return self.index.get(word, OOV_ID)


def build_token_index(corpus: Sequence[TokenSequence], max_features: int) -> TokenIndex:
    """Keep at most max_features - 2 words so ids fit an embedding of max_features rows."""
    counts = Counter(t for seq in corpus for t in seq.tokens)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[: max(0, max_features - 2)]
    words = tuple(w for w, _ in ranked)
    return TokenIndex(words, {w: i + 2 for i, w in enumerate(words)})


@dataclass
class PaddedBatch:
    token_ids: np.ndarray
    labels: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.token_ids)

    def subset(self, idx: np.ndarray) -> "PaddedBatch":
        return PaddedBatch(self.token_ids[idx], None if self.labels is None else self.labels[idx])


def encode(corpus: Sequence[TokenSequence], index: TokenIndex, max_len: int, labels: Sequence[int] | None = None) -> PaddedBatch:
    """Right-pad with 0 and right-truncate to max_len."""
    ids = np.zeros((len(corpus), max_len), dtype=np.int64)
    for r, seq in enumerate(corpus):
        row = [index.id(t) for t in seq.tokens[:max_len]]
        ids[r, : len(row)] = row
    lab = None if labels is None else np.asarray(labels, dtype=np.int64)
    if lab is not None and len(lab) != len(ids):
        raise DataError("%d sequences but %d labels" % (len(ids), len(lab)))
    return PaddedBatch(ids, lab)


class CnnModel(nn.Module):
    def __init__(self, cfg: CnnConfig) -> None:
        super().__init__()
        self.cfg = cfg
        self.token_index: TokenIndex | None = None
        self.embedding = nn.Embedding(cfg.vocab_size, cfg.embed_dim, padding_idx=PAD_ID)
        self.convs = nn.ModuleList(nn.Conv1d(cfg.embed_dim, cfg.filters_per_kernel, k) for k in cfg.kernel_sizes)
        self.dropout = nn.Dropout(cfg.dropout)
        self.dense = nn.Linear(cfg.filters_per_kernel * len(cfg.kernel_sizes), 1)
        self.embedding.weight.requires_grad_(cfg.trainable_embeddings)

    def features(self, ids: torch.Tensor) -> torch.Tensor:
        x = self.embedding(ids).transpose(1, 2)
        pooled = [torch.relu(conv(x)).amax(dim=2) for conv in self.convs]
        return self.dropout(torch.cat(pooled, dim=1))

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        """Logits, shape (batch, 1)."""
        return self.dense(self.features(ids))

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())


def _init_weights(model: CnnModel) -> None:
    with torch.no_grad():
        nn.init.uniform_(model.embedding.weight, -0.05, 0.05)
        for layer in [*model.convs, model.dense]:
            fan_in = layer.weight[0].numel()
            bound = 1.0 / math.sqrt(fan_in)
            nn.init.uniform_(layer.weight, -bound, bound)
            nn.init.uniform_(layer.bias, -bound, bound)
        model.embedding.weight[PAD_ID].zero_()


def build_cnn(cfg: CnnConfig, table: EmbeddingTable | None = None, index: TokenIndex | None = None) -> CnnModel:
    """
    Random init, or rows copied from a trained embedding table for every indexed word the
    table can represent (FastText tables also compose vectors for unseen words).
    """
    if cfg.embed_init != "random":
        if table is None or index is None:
            raise DataError("embed_init=%s needs an embedding table and a token index" % cfg.embed_init)
        if table.dim != cfg.embed_dim:
            raise DataError("embedding table dim %d != embed_dim %d" % (table.dim, cfg.embed_dim))
    if index is not None and index.vocab_size > cfg.vocab_size:
        raise DataError("token index needs %d rows but vocab_size is %d" % (index.vocab_size, cfg.vocab_size))
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(cfg.seed)
        model = CnnModel(cfg)
        _init_weights(model)
    model.token_index = index
    if cfg.embed_init != "random":
        copied = 0
        with torch.no_grad():
            for word, i in index.index.items():
                vec = word_vector(table, word)
                if vec is not None:
                    model.embedding.weight[i] = torch.as_tensor(vec, dtype=model.embedding.weight.dtype)
                    copied += 1
        logger.info("initialized %d of %d embedding rows from %s vectors", copied, len(index.words), cfg.embed_init)
    return model


def _ids(batch: PaddedBatch | torch.Tensor | np.ndarray) -> torch.Tensor:
    ids = batch.token_ids if isinstance(batch, PaddedBatch) else batch
    return torch.as_tensor(ids, dtype=torch.long)


def forward(model: CnnModel, batch: PaddedBatch | torch.Tensor, train_mode: bool = False) -> torch.Tensor:
    """Scores in (0, 1), shape (batch, 1). Dropout is active only in train mode."""
    model.train(train_mode)
    return torch.sigmoid(model(_ids(batch)))


def predict_scores(model: CnnModel, batch: PaddedBatch) -> np.ndarray:
    with torch.no_grad():
        return forward(model, batch, train_mode=False).squeeze(1).double().numpy()


def loss_cross_entropy(scores: torch.Tensor, labels: torch.Tensor, class_weights: torch.Tensor | None = None) -> torch.Tensor:
    """Weighted mean binary cross-entropy with scores clamped to [1e-7, 1 - 1e-7]."""
    s = scores.reshape(-1).clamp(EPS_CLAMP, 1.0 - EPS_CLAMP)
    y = labels.reshape(-1).to(s.dtype)
    losses = -(y * torch.log(s) + (1.0 - y) * torch.log(1.0 - s))
    if class_weights is None:
        return losses.mean()
    w = class_weights.reshape(-1).to(s.dtype)
    return (w * losses).sum() / w.sum()


def loss_auc_surrogate(scores: torch.Tensor, labels: torch.Tensor, margin: float = 1.0) -> torch.Tensor:
    """Mean squared hinge max(0, margin - (s_p - s_n))^2 over all positive/negative pairs."""
    s = scores.reshape(-1)
    y = labels.reshape(-1)
    pos = s[y == 1]
    neg = s[y != 1]
    if pos.numel() == 0 or neg.numel() == 0:
        return s.sum() * 0.0
    hinge = torch.clamp(margin - (pos[:, None] - neg[None, :]), min=0.0)
    return (hinge * hinge).mean()


def objective(model: CnnModel, ids: torch.Tensor, labels: torch.Tensor, loss: LossName, weights: torch.Tensor | None = None) -> torch.Tensor:
    """Training loss on a batch; the surrogate ranks logits, cross-entropy scores sigmoid outputs."""
    logits = model(ids)
    if loss == "auc_surrogate":
        return loss_auc_surrogate(logits, labels)
    return loss_cross_entropy(torch.sigmoid(logits), labels, weights)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_auc: float


def _val_auc(model: CnnModel, valid: PaddedBatch) -> float:
    if valid.labels is None or len(np.unique(valid.labels)) < 2:
        return math.nan
    return roc_auc(valid.labels, predict_scores(model, valid))[1]


def train_cnn(
    model: CnnModel,
    train: PaddedBatch,
    valid: PaddedBatch | None = None,
    cfg: CnnConfig | None = None,
) -> tuple[CnnModel, list[EpochRecord]]:
    """
    Adam (beta1=0.9, beta2=0.999, eps=1e-8) over seeded shuffled mini-batches. With a
    labelled validation set the parameters of the best validation-AUC epoch (earliest on
    ties) are restored at the end.
    """
    cfg = cfg or model.cfg
    if train.labels is None:
        raise DataError("training batch needs labels")
    epochs = cfg.resolved_epochs()
    params = [p for p in model.parameters() if p.requires_grad]
    opt = torch.optim.Adam(params, lr=cfg.lr, betas=(0.9, 0.999), eps=1e-8)
    labels_all = torch.as_tensor(train.labels, dtype=torch.float32)
    ids_all = _ids(train)
    weights_all = None
    if cfg.class_weight == "balanced" and cfg.loss == "cross_entropy":
        weights_all = torch.as_tensor(balanced_weights(train.labels).per_sample(train.labels))
    rng = np.random.default_rng(cfg.seed)
    n = len(train)
    history: list[EpochRecord] = []
    best_auc = -math.inf
    best_state: dict[str, torch.Tensor] | None = None

    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(cfg.seed)
        for epoch in range(1, epochs + 1):
            model.train(True)
            order = torch.as_tensor(rng.permutation(n))
            total = 0.0
            for b, start in enumerate(range(0, n, cfg.batch)):
                idx = order[start:start + cfg.batch]
                w = None if weights_all is None else weights_all[idx]
                loss = objective(model, ids_all[idx], labels_all[idx], cfg.loss, w)
                if not torch.isfinite(loss):
                    raise TrainingError("non-finite %s loss at epoch %d, batch %d" % (cfg.loss, epoch, b))
                opt.zero_grad()
                loss.backward()
                opt.step()
                total += float(loss) * len(idx)
            train_loss = total / n
            val_auc = _val_auc(model, valid) if valid is not None else math.nan
            history.append(EpochRecord(epoch, train_loss, val_auc))
            logger.info("cnn epoch %d: train loss %.6f, val auc %.4f", epoch, train_loss, val_auc)
            if not math.isnan(val_auc) and val_auc > best_auc:
                best_auc = val_auc
                best_state = copy.deepcopy(model.state_dict())
    if best_state is not None:
        model.load_state_dict(best_state)
        logger.info("restored parameters of the best epoch (val auc %.4f)", best_auc)
    model.train(False)
    return model, history


def write_history_csv(history: Sequence[EpochRecord], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "train_loss", "val_auc"])
        for r in history:
            w.writerow([r.epoch, repr(r.train_loss), "" if math.isnan(r.val_auc) else repr(r.val_auc)])
    return path


def loss_gradients(model: CnnModel, batch: PaddedBatch, loss: LossName) -> dict[str, torch.Tensor]:
    """Analytic gradients of the batch loss with dropout off."""
    model.train(False)
    model.zero_grad()
    labels = torch.as_tensor(batch.labels, dtype=next(model.parameters()).dtype)
    objective(model, _ids(batch), labels, loss).backward()
    return {
        name: (p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p))
        for name, p in model.named_parameters()
    }


def gradient_check(model: CnnModel, batch: PaddedBatch, loss: LossName = "cross_entropy", h: float = 1e-5) -> float:
    """
    Max relative error between analytic gradients and central finite differences,
    in double precision, over every parameter except the padding embedding row.
    """
    model = copy.deepcopy(model).double()
    for p in model.parameters():
        p.requires_grad_(True)
    analytic = loss_gradients(model, batch, loss)
    ids = _ids(batch)
    labels = torch.as_tensor(batch.labels, dtype=torch.float64)
    worst = 0.0
    with torch.no_grad():
        for name, p in model.named_parameters():
            flat = p.view(-1)
            grad = analytic[name].view(-1)
            skip = range(PAD_ID * p.shape[1], (PAD_ID + 1) * p.shape[1]) if name == "embedding.weight" else range(0)
            for i in range(flat.numel()):
                if i in skip:
                    continue
                orig = flat[i].item()
                flat[i] = orig + h
                up = objective(model, ids, labels, loss).item()
                flat[i] = orig - h
                down = objective(model, ids, labels, loss).item()
                flat[i] = orig
                numeric = (up - down) / (2.0 * h)
                a = grad[i].item()
                denom = max(abs(a), abs(numeric), 1e-8)
                worst = max(worst, abs(a - numeric) / denom)
    return worst


# --- checkpoints ---


def save_checkpoint(model: CnnModel, path: str | Path, metadata: dict | None = None) -> Path:
    """Magic, uint32 header length, JSON header (config, parameter shapes, token index), float32 blob."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    state = model.state_dict()
    header = {
        "config": model.cfg.model_dump(),
        "parameters": [[name, list(t.shape)] for name, t in state.items()],
        "words": list(model.token_index.words) if model.token_index is not None else None,
        "metadata": metadata or {},
    }
    raw = json.dumps(header, ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", len(raw)))
        f.write(raw)
        for t in state.values():
            f.write(t.detach().cpu().numpy().astype("<f4").tobytes())
    logger.info("wrote CNN checkpoint to %s", path)
    return path


def load_checkpoint(path: str | Path) -> tuple[CnnModel, dict]:
    """Returns the model (eval mode) and the metadata stored with it."""
    data = Path(path).read_bytes()
    if not data.startswith(CHECKPOINT_MAGIC):
        raise DataError("%s is not a CNN checkpoint" % path)
    off = len(CHECKPOINT_MAGIC)
    (hlen,) = struct.unpack_from("<I", data, off)
    off += 4
    header = json.loads(data[off:off + hlen].decode("utf-8"))
    off += hlen
    cfg = CnnConfig.model_validate(header["config"])
    model = CnnModel(cfg)
    state = {}
    for name, shape in header["parameters"]:
        count = int(np.prod(shape)) if shape else 1
        end = off + 4 * count
        if end > len(data):
            raise DataError("truncated checkpoint at parameter %s" % name)
        state[name] = torch.from_numpy(np.frombuffer(data[off:end], dtype="<f4").reshape(shape).copy())
        off = end
    model.load_state_dict(state)
    words = header.get("words")
    if words is not None:
        model.token_index = TokenIndex(tuple(words), {w: i + 2 for i, w in enumerate(words)})
    model.train(False)
    return model, header.get("metadata", {})
