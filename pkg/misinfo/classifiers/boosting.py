"""Second-order gradient-boosted regression trees on the logistic loss."""

from __future__ import annotations

import logging

import numpy as np
from scipy.special import expit

from misinfo.classifiers.base import FeatureMatrix, GBTParams, Matrix, ModelSpec, TrainedModel, as_dense, resolve_weights
from misinfo.classifiers.tree import SecondOrderCriterion, Tree, grow_tree, presort

logger = logging.getLogger(__name__)


class BoostedModel(TrainedModel):
    kind = "gbt"

    def __init__(self, spec: ModelSpec, dim: int, trees: list[Tree], base_score: float) -> None:
        super().__init__(spec, dim)
        self.trees = trees
        self.base_score = base_score

    def margin(self, X: Matrix) -> np.ndarray:
        return self._margin(as_dense(self._check(X)))

    def _margin(self, X: np.ndarray) -> np.ndarray:
        out = np.full(X.shape[0], self.base_score)
        for tree in self.trees:
            out += tree.predict(X)
        return out

    def _scores(self, X: Matrix) -> np.ndarray:
        return expit(self._margin(as_dense(X)))

    def parameters(self) -> dict:
        return {"base_score": self.base_score, "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_parameters(cls, spec: ModelSpec, dim: int, params: dict) -> "BoostedModel":
        return cls(spec, dim, [Tree.from_dict(t) for t in params["trees"]], float(params["base_score"]))


def logistic_grad_hess(margin: np.ndarray, labels: np.ndarray, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p = expit(margin)
    return (p - labels) * weights, p * (1.0 - p) * weights


def train_gbt(X: FeatureMatrix, spec: ModelSpec | None = None) -> BoostedModel:
    """
    Each round fits one tree to the current gradients and hessians, on a row subsample
    (without replacement) and a per-tree column subsample, and adds its leaf values
    (already scaled by the learning rate) to the margin.
    """
    spec = spec or ModelSpec(kind="gbt")
    p: GBTParams = spec.params()
    data = X.dense()
    labels = X.labels.astype(np.float64)
    weights = resolve_weights(p.class_weight, X.labels).per_sample(X.labels)
    n, d = data.shape
    order = presort(data)
    rng = np.random.default_rng(spec.seed)
    margin = np.full(n, p.base_score)
    trees: list[Tree] = []
    for round_ in range(p.n_rounds):
        g, h = logistic_grad_hess(margin, labels, weights)
        if p.subsample < 1.0:
            rows = np.sort(rng.choice(n, size=max(1, int(p.subsample * n)), replace=False))
        else:
            rows = np.arange(n)
        if p.colsample_bytree < 1.0:
            cols = np.sort(rng.choice(d, size=max(1, int(p.colsample_bytree * d)), replace=False))
        else:
            cols = np.arange(d)
        criterion = SecondOrderCriterion(g, h, p.reg_lambda, p.gamma, p.min_child_weight, p.learning_rate)
        tree = grow_tree(data, order, rows, criterion, p.max_depth, cols)
        trees.append(tree)
        margin += tree.predict(data)
        logger.debug("gbt round %d: %d nodes", round_ + 1, tree.n_nodes)
    logger.info("trained boosted trees: %d rounds, max_depth=%d, lr=%g", p.n_rounds, p.max_depth, p.learning_rate)
    return BoostedModel(spec, X.dim, trees, p.base_score)
