"""Multinomial naive Bayes with additive smoothing."""

from __future__ import annotations

import logging

import numpy as np
from scipy import sparse
from scipy.special import expit

from misinfo.classifiers.base import FeatureMatrix, Matrix, ModelSpec, NBParams, TrainedModel, require_both_classes
from misinfo.errors import DataError

logger = logging.getLogger(__name__)


class NaiveBayesModel(TrainedModel):
    kind = "nb"

    def __init__(
        self,
        spec: ModelSpec,
        dim: int,
        feature_log_prob: np.ndarray,
        class_log_prior: np.ndarray,
        shift_min: np.ndarray | None = None,
        shift_range: np.ndarray | None = None,
    ) -> None:
        super().__init__(spec, dim)
        self.feature_log_prob = feature_log_prob
        self.class_log_prior = class_log_prior
        self.shift_min = shift_min
        self.shift_range = shift_range

    def _prepare(self, X: Matrix) -> Matrix:
        if self.shift_min is not None and not sparse.issparse(X):
            X = np.clip((np.asarray(X, dtype=np.float64) - self.shift_min) / self.shift_range, 0.0, 1.0)
        return X

    def joint_log_likelihood(self, X: Matrix) -> np.ndarray:
        X = self._prepare(self._check(X))
        jll = X @ self.feature_log_prob.T
        return np.asarray(jll) + self.class_log_prior

    def _scores(self, X: Matrix) -> np.ndarray:
        X = self._prepare(X)
        jll = np.asarray(X @ self.feature_log_prob.T) + self.class_log_prior
        return expit(jll[:, 1] - jll[:, 0])

    def parameters(self) -> dict:
        return {
            "feature_log_prob": self.feature_log_prob.tolist(),
            "class_log_prior": self.class_log_prior.tolist(),
            "shift_min": None if self.shift_min is None else self.shift_min.tolist(),
            "shift_range": None if self.shift_range is None else self.shift_range.tolist(),
        }

    @classmethod
    def from_parameters(cls, spec: ModelSpec, dim: int, params: dict) -> "NaiveBayesModel":
        shift_min = params.get("shift_min")
        shift_range = params.get("shift_range")
        return cls(
            spec,
            dim,
            np.asarray(params["feature_log_prob"], dtype=np.float64),
            np.asarray(params["class_log_prior"], dtype=np.float64),
            None if shift_min is None else np.asarray(shift_min, dtype=np.float64),
            None if shift_range is None else np.asarray(shift_range, dtype=np.float64),
        )


def train_nb(X: FeatureMatrix, spec: ModelSpec | None = None, alpha: float | None = None, fit_prior: bool | None = None) -> NaiveBayesModel:
    """
    Per-class feature log-likelihoods log((count_cj + alpha) / (sum_j count_cj + alpha * d));
    log-priors from class frequencies when fit_prior, otherwise uniform.

    Dense rows (tweet vectors) are min-max scaled per feature to [0, 1] first when
    shift_dense is set; sparse rows must already be non-negative.
    """
    spec = spec or ModelSpec(kind="nb")
    updates = {k: v for k, v in (("alpha", alpha), ("fit_prior", fit_prior)) if v is not None}
    if updates:
        spec = spec.with_params(**updates)
    p: NBParams = spec.params()
    labels = X.labels
    require_both_classes(labels, "naive Bayes")

    data = X.X
    shift_min = shift_range = None
    if not X.is_sparse and p.shift_dense:
        shift_min = data.min(axis=0)
        shift_range = data.max(axis=0) - shift_min
        shift_range = np.where(shift_range > 0, shift_range, 1.0)
        data = (data - shift_min) / shift_range
    values = data.data if sparse.issparse(data) else data
    if (values < 0).any():
        raise DataError("multinomial naive Bayes needs non-negative features")

    counts = np.vstack([np.asarray(data[labels == c].sum(axis=0)).ravel() for c in (0, 1)])
    smoothed = counts + p.alpha
    totals = smoothed.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore"):
        feature_log_prob = np.log(smoothed) - np.log(totals)
    if p.fit_prior:
        freq = np.array([(labels == 0).sum(), (labels == 1).sum()], dtype=np.float64)
        class_log_prior = np.log(freq / freq.sum())
    else:
        class_log_prior = np.full(2, -np.log(2.0))
    logger.info("trained naive Bayes: %d rows, %d features, alpha=%g", len(X), X.dim, p.alpha)
    return NaiveBayesModel(spec, X.dim, feature_log_prob, class_log_prior, shift_min, shift_range)
