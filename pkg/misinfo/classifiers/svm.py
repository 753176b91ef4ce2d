"""
Soft-margin kernel SVM solved on the dual by SMO with second-order working-set selection.

The dual is min 1/2 a'Qa - e'a subject to y'a = 0 and 0 <= a_i <= C_i, with
Q_ij = y_i y_j K(x_i, x_j) and C_i = C * w_{y_i}. Decision values are
f(x) = sum_i a_i y_i K(x_i, x) - rho.
"""

from __future__ import annotations

import logging
from collections import OrderedDict

import numpy as np
from scipy import optimize, sparse
from scipy.special import expit, log_expit

from misinfo.classifiers.base import FeatureMatrix, Matrix, ModelSpec, SVMParams, TrainedModel, as_2d, require_both_classes, resolve_weights
from misinfo.corpus import fold_indices
from misinfo.errors import DataError, TrainingError

logger = logging.getLogger(__name__)

TAU = 1e-12
FULL_KERNEL_ROWS = 4000
CACHE_COLUMNS = 1024
PLATT_FOLDS = 3


def _row_norms(X: Matrix) -> np.ndarray:
    if sparse.issparse(X):
        return np.asarray(X.multiply(X).sum(axis=1)).ravel()
    return np.einsum("ij,ij->i", X, X)


def kernel_matrix(A: Matrix, B: Matrix, kernel: str, gamma: float, a_norms: np.ndarray | None = None, b_norms: np.ndarray | None = None) -> np.ndarray:
    """K(a, b) for every row pair: linear a.b or rbf exp(-gamma ||a - b||^2)."""
    dots = A @ B.T
    dots = dots.toarray() if sparse.issparse(dots) else np.asarray(dots, dtype=np.float64)
    if kernel == "linear":
        K = dots
    else:
        an = _row_norms(A) if a_norms is None else a_norms
        bn = _row_norms(B) if b_norms is None else b_norms
        sq = np.maximum(an[:, None] + bn[None, :] - 2.0 * dots, 0.0)
        K = np.exp(-gamma * sq)
    if not np.isfinite(K).all():
        raise TrainingError("non-finite kernel value (kernel=%s, gamma=%g)" % (kernel, gamma))
    return K


class _KernelColumns:
    """Kernel columns K[:, i] for the training rows; full matrix when small, LRU cache otherwise."""

    def __init__(self, X: Matrix, kernel: str, gamma: float) -> None:
        self.X = X
        self.kernel = kernel
        self.gamma = gamma
        self.norms = _row_norms(X)
        n = X.shape[0]
        self.full = kernel_matrix(X, X, kernel, gamma, self.norms, self.norms) if n <= FULL_KERNEL_ROWS else None
        self.cache: OrderedDict[int, np.ndarray] = OrderedDict()
        self.diag = np.ones(n) if kernel == "rbf" else self.norms.copy()

    def column(self, i: int) -> np.ndarray:
        if self.full is not None:
            return self.full[:, i]
        col = self.cache.get(i)
        if col is not None:
            self.cache.move_to_end(i)
            return col
        col = kernel_matrix(self.X, self.X[i:i + 1], self.kernel, self.gamma, self.norms, self.norms[i:i + 1]).ravel()
        self.cache[i] = col
        if len(self.cache) > CACHE_COLUMNS:
            self.cache.popitem(last=False)
        return col


def solve_dual(K: _KernelColumns, y: np.ndarray, C: np.ndarray, tol: float, max_iter: int) -> tuple[np.ndarray, float, int]:
    """SMO with second-order working-set selection; returns (alpha, rho, iterations)."""
    n = len(y)
    alpha = np.zeros(n)
    G = -np.ones(n)
    it = 0
    while True:
        yG = -y * G
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        if not up.any() or not low.any():
            break
        cand = np.where(up, yG, -np.inf)
        i = int(np.argmax(cand))
        gmax = cand[i]
        gmin = np.where(low, yG, np.inf).min()
        if gmax - gmin < tol:
            break
        if it >= max_iter:
            raise TrainingError("SVM solver hit the iteration cap (%d) with KKT gap %.3g > tol %.3g" % (max_iter, gmax - gmin, tol))
        Ki = K.column(i)
        b = gmax - yG
        quad = K.diag[i] + K.diag - 2.0 * Ki
        quad = np.where(quad > 0, quad, TAU)
        obj = np.where(low & (b > 0), -(b * b) / quad, np.inf)
        j = int(np.argmin(obj))
        if not np.isfinite(obj[j]):
            break
        Kj = K.column(j)
        ai, aj = alpha[i], alpha[j]
        Ci, Cj = C[i], C[j]
        kij = K.diag[i] + K.diag[j] - 2.0 * Ki[j]
        kij = kij if kij > 0 else TAU
        if y[i] != y[j]:
            delta = (-G[i] - G[j]) / kij
            diff = ai - aj
            ni, nj = ai + delta, aj + delta
            if diff > 0:
                if nj < 0:
                    nj, ni = 0.0, diff
            elif ni < 0:
                ni, nj = 0.0, -diff
            if diff > Ci - Cj:
                if ni > Ci:
                    ni, nj = Ci, Ci - diff
            elif nj > Cj:
                nj, ni = Cj, Cj + diff
        else:
            delta = (G[i] - G[j]) / kij
            total = ai + aj
            ni, nj = ai - delta, aj + delta
            if total > Ci:
                if ni > Ci:
                    ni, nj = Ci, total - Ci
            elif nj < 0:
                nj, ni = 0.0, total
            if total > Cj:
                if nj > Cj:
                    nj, ni = Cj, total - Cj
            elif ni < 0:
                ni, nj = 0.0, total
        di, dj = ni - ai, nj - aj
        alpha[i], alpha[j] = ni, nj
        G += y * (y[i] * Ki * di + y[j] * Kj * dj)
        it += 1
    return alpha, _rho(alpha, G, y, C), it


def _rho(alpha: np.ndarray, G: np.ndarray, y: np.ndarray, C: np.ndarray) -> float:
    yG = y * G
    at_upper = alpha >= C
    at_lower = alpha <= 0
    free = ~at_upper & ~at_lower
    if free.any():
        return float(yG[free].mean())
    ub_mask = (at_upper & (y < 0)) | (at_lower & (y > 0))
    lb_mask = (at_upper & (y > 0)) | (at_lower & (y < 0))
    ub = yG[ub_mask].min() if ub_mask.any() else np.inf
    lb = yG[lb_mask].max() if lb_mask.any() else -np.inf
    return float((ub + lb) / 2.0)


def fit_platt(decision: np.ndarray, labels: np.ndarray) -> tuple[float, float]:
    """Sigmoid P(y=1 | f) = 1 / (1 + exp(A f + B)) fit by regularized-target cross-entropy."""
    n1 = float((labels == 1).sum())
    n0 = float(len(labels) - n1)
    t = np.where(labels == 1, (n1 + 1.0) / (n1 + 2.0), 1.0 / (n0 + 2.0))

    def objective(ab: np.ndarray) -> tuple[float, np.ndarray]:
        z = ab[0] * decision + ab[1]
        # p = sigmoid(-z)
        loss = -(t * log_expit(-z) + (1.0 - t) * log_expit(z)).sum()
        r = t - expit(-z)
        return float(loss), np.array([(r * decision).sum(), r.sum()])

    prior = np.log((n0 + 1.0) / (n1 + 1.0))
    res = optimize.minimize(objective, np.array([0.0, prior]), jac=True, method="L-BFGS-B")
    return float(res.x[0]), float(res.x[1])


class SVMModel(TrainedModel):
    kind = "svm"

    def __init__(
        self,
        spec: ModelSpec,
        dim: int,
        support_vectors: Matrix,
        dual_coef: np.ndarray,
        rho: float,
        platt: tuple[float, float] | None = None,
        n_iter: int = 0,
    ) -> None:
        super().__init__(spec, dim)
        self.support_vectors = support_vectors
        self.dual_coef = dual_coef
        self.rho = rho
        self.platt = platt
        self.n_iter = n_iter
        p: SVMParams = spec.params()
        self.kernel = p.kernel
        self.gamma = p.gamma
        self.default_threshold = 0.5 if platt is not None else 0.0

    def _scores(self, X: Matrix) -> np.ndarray:
        if self.dual_coef.size == 0:
            return np.full(X.shape[0], -self.rho)
        K = kernel_matrix(X, self.support_vectors, self.kernel, self.gamma)
        return K @ self.dual_coef - self.rho

    def decision_function(self, X: Matrix) -> np.ndarray:
        return self.scores(X)

    def predict_proba(self, X: Matrix) -> np.ndarray:
        if self.platt is None:
            raise DataError("SVM was trained without probability calibration")
        A, B = self.platt
        return expit(-(A * self.scores(X) + B))

    def label_scores(self, X: Matrix) -> np.ndarray:
        return self.predict_proba(X) if self.platt is not None else self.scores(X)

    def parameters(self) -> dict:
        sv = self.support_vectors
        if sparse.issparse(sv):
            sv_out = {"sparse": True, "data": sv.data.tolist(), "indices": sv.indices.tolist(), "indptr": sv.indptr.tolist()}
        else:
            sv_out = {"sparse": False, "rows": np.asarray(sv).tolist()}
        return {
            "support_vectors": sv_out,
            "dual_coef": self.dual_coef.tolist(),
            "rho": self.rho,
            "platt": None if self.platt is None else list(self.platt),
            "n_iter": self.n_iter,
        }

    @classmethod
    def from_parameters(cls, spec: ModelSpec, dim: int, params: dict) -> "SVMModel":
        sv = params["support_vectors"]
        coef = np.asarray(params["dual_coef"], dtype=np.float64)
        if sv["sparse"]:
            vectors: Matrix = sparse.csr_matrix(
                (np.asarray(sv["data"], dtype=np.float64), np.asarray(sv["indices"], dtype=np.int64), np.asarray(sv["indptr"], dtype=np.int64)),
                shape=(len(coef), dim),
            )
        else:
            vectors = np.asarray(sv["rows"], dtype=np.float64).reshape(len(coef), dim)
        platt = params.get("platt")
        return cls(spec, dim, vectors, coef, float(params["rho"]), None if platt is None else (float(platt[0]), float(platt[1])), int(params.get("n_iter", 0)))


def _fit_dual(X: Matrix, labels: np.ndarray, p: SVMParams) -> tuple[Matrix, np.ndarray, float, int]:
    y = np.where(labels == 1, 1.0, -1.0)
    weights = resolve_weights(p.class_weight, labels)
    C = p.C * weights.per_sample(labels)
    n = len(y)
    max_iter = p.max_iter if p.max_iter is not None else max(100_000, 100 * n)
    alpha, rho, it = solve_dual(_KernelColumns(X, p.kernel, p.gamma), y, C, p.tol, max_iter)
    sv = np.flatnonzero(alpha > 0)
    return X[sv], alpha[sv] * y[sv], rho, it


def train_svm(X: FeatureMatrix, spec: ModelSpec | None = None) -> SVMModel:
    spec = spec or ModelSpec(kind="svm")
    p: SVMParams = spec.params()
    if len(X) > p.max_rows:
        raise DataError("kernel SVM limited to %d rows, got %d" % (p.max_rows, len(X)))
    require_both_classes(X.labels, "SVM")
    data = X.X
    sv, coef, rho, it = _fit_dual(data, X.labels, p)
    logger.info("trained %s SVM: %d rows, %d support vectors, %d iterations", p.kernel, len(X), len(coef), it)
    model = SVMModel(spec, X.dim, sv, coef, rho, None, it)
    if not p.probability:
        return model

    counts = np.bincount(X.labels, minlength=2)
    if counts.min() >= PLATT_FOLDS:
        decision = np.empty(len(X))
        for train_idx, val_idx in fold_indices(X.labels, PLATT_FOLDS, spec.seed):
            fsv, fcoef, frho, _ = _fit_dual(data[train_idx], X.labels[train_idx], p)
            fold = SVMModel(spec, X.dim, fsv, fcoef, frho)
            decision[val_idx] = fold.scores(as_2d(data[val_idx]))
    else:
        logger.warning("too few rows per class for %d-fold calibration; fitting the sigmoid in-sample", PLATT_FOLDS)
        decision = model.scores(data)
    platt = fit_platt(decision, X.labels)
    logger.debug("platt sigmoid A=%.4f B=%.4f", *platt)
    return SVMModel(spec, X.dim, sv, coef, rho, platt, it)
