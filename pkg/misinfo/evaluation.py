"""Confusion counts, threshold metrics, ROC/AUC and cross-validated grid search."""

from __future__ import annotations

import csv
import itertools
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
from joblib import Parallel, delayed
from scipy.integrate import trapezoid

from misinfo.classifiers import FeatureMatrix, ModelSpec, TrainedModel, train
from misinfo.corpus import fold_indices
from misinfo.errors import ConfigError, DataError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class RocCurve:
    """Cumulative (fpr, tpr) per distinct score cut, from (0, 0) to (1, 1)."""

    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    auc: float
    precision: float
    recall: float
    f1: float
    confusion: ConfusionCounts
    threshold: float = 0.5

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def _labels(labels: Sequence[int] | np.ndarray) -> np.ndarray:
    return np.asarray(labels, dtype=np.int64)


def confusion(labels: Sequence[int] | np.ndarray, predicted: Sequence[int] | np.ndarray) -> ConfusionCounts:
    y = _labels(labels)
    p = _labels(predicted)
    if y.shape != p.shape:
        raise DataError("labels (%d) and predictions (%d) differ in length" % (len(y), len(p)))
    return ConfusionCounts(
        tp=int(((y == 1) & (p == 1)).sum()),
        fp=int(((y != 1) & (p == 1)).sum()),
        tn=int(((y != 1) & (p != 1)).sum()),
        fn=int(((y == 1) & (p != 1)).sum()),
    )


def f1_from_precision_recall(precision: float, recall: float) -> float:
    return 2.0 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0


def _check_scores(labels: np.ndarray, scores: np.ndarray) -> None:
    if labels.shape != scores.shape:
        raise DataError("labels (%d) and scores (%d) differ in length" % (len(labels), len(scores)))
    if not np.isfinite(scores).all():
        raise DataError("scores must be finite")
    n1 = int((labels == 1).sum())
    if n1 == 0 or n1 == len(labels):
        raise DataError("AUC undefined: labels contain a single class")


def roc_auc(labels: Sequence[int] | np.ndarray, scores: Sequence[float] | np.ndarray) -> tuple[RocCurve, float]:
    """ROC over tie-grouped score cuts (descending) and its trapezoidal area."""
    y = _labels(labels)
    s = np.asarray(scores, dtype=np.float64)
    _check_scores(y, s)
    order = np.argsort(-s, kind="mergesort")
    s_sorted = s[order]
    y_sorted = y[order]
    last_of_group = np.r_[np.flatnonzero(np.diff(s_sorted) != 0), len(s_sorted) - 1]
    tps = np.cumsum(y_sorted == 1)[last_of_group]
    fps = np.cumsum(y_sorted != 1)[last_of_group]
    tpr = np.r_[0.0, tps / tps[-1]]
    fpr = np.r_[0.0, fps / fps[-1]]
    thresholds = np.r_[np.inf, s_sorted[last_of_group]]
    auc = float(trapezoid(tpr, fpr))
    return RocCurve(fpr, tpr, thresholds), auc


def auc_score(labels: Sequence[int] | np.ndarray, scores: Sequence[float] | np.ndarray) -> float:
    return roc_auc(labels, scores)[1]


def auc_pair_oracle(labels: Sequence[int] | np.ndarray, scores: Sequence[float] | np.ndarray) -> float:
    """(concordant pairs + 1/2 tied pairs) / (P * N), counted directly."""
    y = _labels(labels)
    s = np.asarray(scores, dtype=np.float64)
    _check_scores(y, s)
    pos = s[y == 1]
    neg = s[y != 1]
    wins = (pos[:, None] > neg[None, :]).sum()
    ties = (pos[:, None] == neg[None, :]).sum()
    return float((wins + 0.5 * ties) / (len(pos) * len(neg)))


def compute_metrics(labels: Sequence[int] | np.ndarray, scores: Sequence[float] | np.ndarray, threshold: float = 0.5, label_scores: Sequence[float] | np.ndarray | None = None) -> MetricsReport:
    """
    Threshold metrics on label_scores (default: scores) plus AUC on scores. Models whose
    ranking score differs from their calibrated score (SVM with Platt scaling) pass both.
    """
    y = _labels(labels)
    s = np.asarray(scores, dtype=np.float64)
    if not len(y):
        raise DataError("cannot compute metrics on an empty set")
    ls = s if label_scores is None else np.asarray(label_scores, dtype=np.float64)
    counts = confusion(y, (ls >= threshold).astype(np.int64))
    precision = counts.tp / (counts.tp + counts.fp) if counts.tp + counts.fp else 0.0
    recall = counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn else 0.0
    _, auc = roc_auc(y, s)
    if len(np.unique(s)) < max(2, len(s) // 10):
        logger.warning("scores are heavily tied (%d distinct values over %d rows)", len(np.unique(s)), len(s))
    return MetricsReport(
        accuracy=(counts.tp + counts.tn) / counts.total,
        auc=auc,
        precision=precision,
        recall=recall,
        f1=f1_from_precision_recall(precision, recall),
        confusion=counts,
        threshold=threshold,
    )


# --- grid search ---


@dataclass(frozen=True)
class GridRow:
    params: dict[str, Any]
    mean_auc: float
    std_auc: float
    fold_aucs: tuple[float, ...]


@dataclass
class GridSearchResult:
    best_spec: ModelSpec
    rows: list[GridRow]
    best_index: int
    model: TrainedModel | None = field(default=None, repr=False)


def expand_grid(grid: Mapping[str, Sequence[Any]]) -> list[dict[str, Any]]:
    """Cartesian product over parameter names in sorted order (last name varies fastest)."""
    if not grid:
        raise ConfigError("parameter grid is empty")
    names = sorted(grid)
    for name in names:
        if not len(grid[name]):
            raise ConfigError("parameter %r has no values" % name)
    return [dict(zip(names, values)) for values in itertools.product(*(grid[n] for n in names))]


def _fold_auc(spec: ModelSpec, X: FeatureMatrix, train_idx: np.ndarray, val_idx: np.ndarray) -> float:
    model = train(spec, X.subset(train_idx))
    return auc_score(X.labels[val_idx], model.scores(X.X[val_idx]))


def grid_search(
    X: FeatureMatrix,
    kind: str,
    grid: Mapping[str, Sequence[Any]],
    k: int = 5,
    seed: int = 0,
    base_hyperparameters: Mapping[str, Any] | None = None,
    n_jobs: int = 1,
    refit: bool = True,
) -> GridSearchResult:
    """
    Mean stratified k-fold validation AUC for every grid point; the first point with the
    highest mean wins and is refit on all of X.
    """
    points = expand_grid(grid)
    folds = fold_indices(X.labels, k, seed, stratified=True)
    for f, (tr, va) in enumerate(folds):
        for part, idx in (("train", tr), ("validation", va)):
            if len(np.unique(X.labels[idx])) < 2:
                raise DataError("fold %d %s part has a single class" % (f, part))
    specs = [ModelSpec(kind=kind, hyperparameters={**(base_hyperparameters or {}), **pt}, seed=seed) for pt in points]
    for spec in specs:
        spec.params()
    jobs = [(i, tr, va) for i in range(len(specs)) for tr, va in folds]
    if n_jobs == 1:
        aucs = [_fold_auc(specs[i], X, tr, va) for i, tr, va in jobs]
    else:
        aucs = Parallel(n_jobs=n_jobs, prefer="threads")(delayed(_fold_auc)(specs[i], X, tr, va) for i, tr, va in jobs)
    rows: list[GridRow] = []
    best = 0
    for i, pt in enumerate(points):
        fold_aucs = tuple(aucs[i * k:(i + 1) * k])
        row = GridRow(pt, float(np.mean(fold_aucs)), float(np.std(fold_aucs)), fold_aucs)
        rows.append(row)
        logger.info("grid point %d/%d %s: mean auc %.4f (std %.4f)", i + 1, len(points), pt, row.mean_auc, row.std_auc)
        if row.mean_auc > rows[best].mean_auc:
            best = i
    result = GridSearchResult(specs[best], rows, best)
    logger.info("grid search winner: %s (mean auc %.4f)", points[best], rows[best].mean_auc)
    if refit:
        result.model = train(specs[best], X)
    return result


# --- artifacts ---


def _prepare(path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def write_roc_csv(curve: RocCurve, path: str | Path) -> Path:
    path = _prepare(path)
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["threshold", "fpr", "tpr"])
        for t, x, y in zip(curve.thresholds, curve.fpr, curve.tpr):
            w.writerow(["inf" if math.isinf(t) else repr(float(t)), repr(float(x)), repr(float(y))])
    return path


def write_metrics_json(report: MetricsReport, path: str | Path, extra: Mapping[str, Any] | None = None) -> Path:
    """Metrics plus run context (config, seed, model) as sorted, indented JSON."""
    path = _prepare(path)
    doc = {"metrics": report.to_dict(), **(extra or {})}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")
    return path


def write_grid_csv(result: GridSearchResult, path: str | Path) -> Path:
    path = _prepare(path)
    names = sorted(result.rows[0].params) if result.rows else []
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow([*names, "mean_auc", "std_auc"])
        for row in result.rows:
            w.writerow([*(json.dumps(row.params[n]) for n in names), repr(row.mean_auc), repr(row.std_auc)])
    return path
