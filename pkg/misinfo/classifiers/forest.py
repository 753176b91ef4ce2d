"""Random forest of entropy trees on bootstrap samples."""

from __future__ import annotations

import logging
import math

import numpy as np
from joblib import Parallel, delayed

from misinfo.classifiers.base import FeatureMatrix, Matrix, ModelSpec, RFParams, TrainedModel, as_dense, log2_features, resolve_weights
from misinfo.classifiers.tree import EntropyCriterion, Tree, grow_tree, presort

logger = logging.getLogger(__name__)


def resolve_max_features(setting: str | int | None, d: int) -> int:
    if setting is None:
        return d
    if setting == "log2":
        return log2_features(d)
    if setting == "sqrt":
        return max(1, math.ceil(math.sqrt(d)))
    return max(1, min(int(setting), d))


class ForestModel(TrainedModel):
    kind = "rf"

    def __init__(self, spec: ModelSpec, dim: int, trees: list[Tree]) -> None:
        super().__init__(spec, dim)
        self.trees = trees

    def _scores(self, X: Matrix) -> np.ndarray:
        X = as_dense(X)
        total = np.zeros(X.shape[0])
        for tree in self.trees:
            total += tree.predict(X)
        return total / len(self.trees)

    def parameters(self) -> dict:
        return {"trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_parameters(cls, spec: ModelSpec, dim: int, params: dict) -> "ForestModel":
        return cls(spec, dim, [Tree.from_dict(t) for t in params["trees"]])


def _build_tree(
    X: np.ndarray,
    order: np.ndarray,
    labels: np.ndarray,
    base_weights: np.ndarray,
    p: RFParams,
    m: int,
    seed: int,
) -> Tree:
    rng = np.random.default_rng(seed)
    n = len(labels)
    if p.bootstrap:
        counts = np.bincount(rng.integers(0, n, size=n), minlength=n)
    else:
        counts = np.ones(n, dtype=np.int64)
    rows = np.flatnonzero(counts)
    criterion = EntropyCriterion(labels, base_weights * counts)
    candidates = np.arange(X.shape[1])
    return grow_tree(X, order, rows, criterion, p.max_depth, candidates, m, rng)


def train_rf(X: FeatureMatrix, spec: ModelSpec | None = None, n_jobs: int | None = None) -> ForestModel:
    """
    Each tree sees a bootstrap sample (as integer sample weights), samples max_features
    candidate features per node and is grown to max_depth. Per-tree seeds are drawn up
    front from the model seed, so the forest does not depend on n_jobs.
    """
    spec = spec or ModelSpec(kind="rf")
    p: RFParams = spec.params()
    data = X.dense()
    labels = X.labels
    weights = resolve_weights(p.class_weight, labels).per_sample(labels)
    m = resolve_max_features(p.max_features, X.dim)
    order = presort(data)
    seeds = np.random.default_rng(spec.seed).integers(0, 2**31 - 1, size=p.n_estimators)
    jobs = n_jobs if n_jobs is not None else p.n_jobs
    if jobs == 1:
        trees = [_build_tree(data, order, labels, weights, p, m, int(s)) for s in seeds]
    else:
        trees = Parallel(n_jobs=jobs, prefer="threads")(
            delayed(_build_tree)(data, order, labels, weights, p, m, int(s)) for s in seeds
        )
    logger.info(
        "trained random forest: %d trees, max_depth=%d, %d of %d features per node, mean %.1f nodes",
        len(trees), p.max_depth, m, X.dim, np.mean([t.n_nodes for t in trees]),
    )
    return ForestModel(spec, X.dim, list(trees))
