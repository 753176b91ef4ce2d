"""Linear model trained by plain SGD on the modified-Huber loss with an L2 penalty."""

from __future__ import annotations

import logging
import math

import numpy as np
from scipy import sparse

from misinfo.classifiers.base import FeatureMatrix, Matrix, ModelSpec, SGDParams, TrainedModel, resolve_weights
from misinfo.errors import TrainingError

logger = logging.getLogger(__name__)

WSCALE_FLOOR = 1e-9


def modified_huber_loss(z: float) -> float:
    if z >= 1.0:
        return 0.0
    if z >= -1.0:
        return (1.0 - z) ** 2
    return -4.0 * z


def modified_huber_dloss(p: float, y: float) -> float:
    """Derivative of the loss with respect to the prediction p."""
    z = p * y
    if z >= 1.0:
        return 0.0
    if z >= -1.0:
        return -2.0 * (1.0 - z) * y
    return -4.0 * y


def optimal_t0(alpha: float) -> float:
    """Offset of the 1 / (alpha (t0 + t)) schedule, from the usual typical-weight heuristic."""
    typw = math.sqrt(1.0 / math.sqrt(alpha))
    eta0 = typw / max(1.0, modified_huber_dloss(-typw, 1.0))
    return 1.0 / (eta0 * alpha)


class SGDModel(TrainedModel):
    kind = "sgd"

    def __init__(self, spec: ModelSpec, dim: int, coef: np.ndarray, intercept: float, n_iter: int = 0) -> None:
        super().__init__(spec, dim)
        self.coef = coef
        self.intercept = intercept
        self.n_iter = n_iter

    def decision_function(self, X: Matrix) -> np.ndarray:
        X = self._check(X)
        return np.asarray(X @ self.coef).ravel() + self.intercept

    def _scores(self, X: Matrix) -> np.ndarray:
        f = np.asarray(X @ self.coef).ravel() + self.intercept
        return np.clip((1.0 + f) / 2.0, 0.0, 1.0)

    def parameters(self) -> dict:
        return {"coef": self.coef.tolist(), "intercept": self.intercept, "n_iter": self.n_iter}

    @classmethod
    def from_parameters(cls, spec: ModelSpec, dim: int, params: dict) -> "SGDModel":
        return cls(spec, dim, np.asarray(params["coef"], dtype=np.float64), float(params["intercept"]), int(params.get("n_iter", 0)))


def _rows(X: Matrix) -> list[tuple[np.ndarray | None, np.ndarray]]:
    if sparse.issparse(X):
        X = sparse.csr_matrix(X)
        return [
            (X.indices[X.indptr[i]:X.indptr[i + 1]], X.data[X.indptr[i]:X.indptr[i + 1]])
            for i in range(X.shape[0])
        ]
    return [(None, row) for row in np.asarray(X, dtype=np.float64)]


def train_sgd(X: FeatureMatrix, spec: ModelSpec | None = None) -> SGDModel:
    """
    Per-sample updates with eta_t = 1 / (alpha (t0 + t)). The weight vector is kept as
    wscale * w so the L2 shrink is O(1) per step. Training stops after n_iter_no_change
    epochs whose mean loss fails to improve on the best by more than tol, or at max_iter.
    """
    spec = spec or ModelSpec(kind="sgd")
    p: SGDParams = spec.params()
    n, d = len(X), X.dim
    y = np.where(X.labels == 1, 1.0, -1.0)
    sw = resolve_weights(p.class_weight, X.labels).per_sample(X.labels)
    rows = _rows(X.X)
    rng = np.random.default_rng(spec.seed)

    w = np.zeros(d)
    wscale = 1.0
    b = 0.0
    t0 = optimal_t0(p.alpha)
    t = 0
    best_loss = math.inf
    no_improvement = 0
    epoch = 0
    for epoch in range(1, p.max_iter + 1):
        order = rng.permutation(n) if p.shuffle else np.arange(n)
        sumloss = 0.0
        for i in order:
            cols, vals = rows[i]
            dot = float(np.dot(w if cols is None else w[cols], vals))
            pred = wscale * dot + b
            sumloss += modified_huber_loss(pred * y[i])
            eta = 1.0 / (p.alpha * (t0 + t))
            update = -eta * modified_huber_dloss(pred, y[i]) * sw[i]
            if update != 0.0:
                if cols is None:
                    w += (update / wscale) * vals
                else:
                    w[cols] += (update / wscale) * vals
                b += update
            wscale *= max(0.0, 1.0 - eta * p.alpha)
            if wscale < WSCALE_FLOOR:
                w *= wscale
                wscale = 1.0
            t += 1
        mean_loss = sumloss / n
        if not math.isfinite(mean_loss) or not math.isfinite(b):
            raise TrainingError("SGD diverged at epoch %d (loss=%r)" % (epoch, mean_loss))
        logger.debug("sgd epoch %d: loss %.6f", epoch, mean_loss)
        if mean_loss > best_loss - p.tol:
            no_improvement += 1
        else:
            no_improvement = 0
        best_loss = min(best_loss, mean_loss)
        if no_improvement >= p.n_iter_no_change:
            logger.info("sgd: early stop after %d epochs (loss %.6f)", epoch, mean_loss)
            break
    else:
        logger.info("sgd: reached max_iter=%d (loss %.6f)", p.max_iter, best_loss)
    return SGDModel(spec, d, w * wscale, b, epoch)
