"""Shared classifier types: feature matrices, class weights, model specs and the model base class."""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, ClassVar, Literal, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import sparse

from misinfo.errors import ConfigError, DataError

ModelKind = Literal["nb", "sgd", "svm", "rf", "gbt"]
ClassWeightMode = Literal["balanced"] | None

Matrix = np.ndarray | sparse.spmatrix


@dataclass(frozen=True)
class FeatureMatrix:
    """Rows (CSR sparse TF-IDF or dense tweet vectors) with binary labels."""

    X: Matrix
    labels: np.ndarray

    def __post_init__(self) -> None:
        labels = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "labels", labels)
        if sparse.issparse(self.X):
            object.__setattr__(self, "X", sparse.csr_matrix(self.X, dtype=np.float64))
        else:
            object.__setattr__(self, "X", np.asarray(self.X, dtype=np.float64))
        if self.X.ndim != 2 or self.X.shape[0] != len(labels):
            raise DataError("feature rows (%s) and labels (%d) disagree" % (self.X.shape, len(labels)))
        if len(labels) and not np.isin(labels, (0, 1)).all():
            raise DataError("labels must be 0 or 1")

    @property
    def dim(self) -> int:
        return int(self.X.shape[1])

    @property
    def is_sparse(self) -> bool:
        return sparse.issparse(self.X)

    def __len__(self) -> int:
        return int(self.X.shape[0])

    def subset(self, idx: np.ndarray) -> "FeatureMatrix":
        return FeatureMatrix(self.X[idx], self.labels[idx])

    def dense(self) -> np.ndarray:
        return as_dense(self.X)


def as_dense(X: Matrix) -> np.ndarray:
    return X.toarray() if sparse.issparse(X) else np.asarray(X, dtype=np.float64)


def as_2d(x: Matrix | Sequence[float]) -> Matrix:
    if sparse.issparse(x):
        return x
    arr = np.asarray(x, dtype=np.float64)
    return arr[None, :] if arr.ndim == 1 else arr


@dataclass(frozen=True)
class ClassWeights:
    w0: float = 1.0
    w1: float = 1.0

    def per_sample(self, labels: np.ndarray) -> np.ndarray:
        return np.where(np.asarray(labels) == 1, self.w1, self.w0).astype(np.float64)


def balanced_weights(labels: Sequence[int] | np.ndarray) -> ClassWeights:
    """w_c = N / (2 * N_c)."""
    labels = np.asarray(labels)
    n = len(labels)
    n1 = int((labels == 1).sum())
    n0 = n - n1
    if n1 == 0 or n0 == 0:
        raise DataError("balanced class weights need both classes (got %d positive, %d negative)" % (n1, n0))
    return ClassWeights(w0=n / (2.0 * n0), w1=n / (2.0 * n1))


def resolve_weights(mode: ClassWeightMode, labels: np.ndarray) -> ClassWeights:
    return balanced_weights(labels) if mode == "balanced" else ClassWeights()


def require_both_classes(labels: np.ndarray, what: str) -> None:
    if len(np.unique(labels)) < 2:
        raise DataError("%s needs both classes in the training data" % what)


# --- hyperparameter schemas ---


class _Params(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class NBParams(_Params):
    alpha: float = Field(0.5, ge=0)
    fit_prior: bool = True
    shift_dense: bool = Field(True, description="Min-max scale dense inputs to [0,1] per feature before fitting")


class SGDParams(_Params):
    alpha: float = Field(0.0056, gt=0)
    l1_ratio: float = Field(0.13, ge=0, le=1, description="Accepted for completeness; unused under the l2 penalty")
    loss: Literal["modified_huber"] = "modified_huber"
    penalty: Literal["l2"] = "l2"
    max_iter: int = Field(6000, ge=1)
    tol: float = 1e-4
    n_iter_no_change: int = Field(5, ge=1)
    class_weight: ClassWeightMode = "balanced"
    shuffle: bool = True


class SVMParams(_Params):
    C: float = Field(1.0, gt=0)
    gamma: float = Field(1.0, gt=0)
    kernel: Literal["rbf", "linear"] = "rbf"
    probability: bool = True
    class_weight: ClassWeightMode = "balanced"
    tol: float = Field(1e-3, gt=0)
    max_iter: int | None = Field(None, description="Solver iteration cap; default max(100000, 100 * n)")
    max_rows: int = Field(50_000, ge=1)


class RFParams(_Params):
    criterion: Literal["entropy"] = "entropy"
    max_depth: int = Field(8, ge=1)
    max_features: Literal["log2", "sqrt"] | int | None = "log2"
    n_estimators: int = Field(500, ge=1)
    class_weight: ClassWeightMode = "balanced"
    bootstrap: bool = True
    n_jobs: int = 1


class GBTParams(_Params):
    colsample_bytree: float = Field(0.8, gt=0, le=1)
    gamma: float = Field(2.0, ge=0)
    max_depth: int = Field(5, ge=1)
    min_child_weight: float = Field(1.0, ge=0)
    subsample: float = Field(1.0, gt=0, le=1)
    n_rounds: int = Field(100, ge=0)
    learning_rate: float = Field(0.3, gt=0)
    reg_lambda: float = Field(1.0, ge=0, alias="lambda")
    base_score: float = Field(0.0, description="Initial margin; scores are sigmoid(base_score + sum of leaves)")
    class_weight: ClassWeightMode = "balanced"


PARAM_SCHEMAS: dict[str, type[_Params]] = {
    "nb": NBParams,
    "sgd": SGDParams,
    "svm": SVMParams,
    "rf": RFParams,
    "gbt": GBTParams,
}


class ModelSpec(BaseModel):
    """Model kind, kind-specific hyperparameters (validated against the kind's schema) and seed."""

    kind: ModelKind
    hyperparameters: dict[str, Any] = Field(default_factory=dict)
    seed: int = 0

    def params(self) -> Any:
        try:
            return PARAM_SCHEMAS[self.kind].model_validate(self.hyperparameters)
        except ValueError as e:
            raise ConfigError("invalid %s hyperparameters: %s" % (self.kind, e)) from e

    def with_params(self, **updates: Any) -> "ModelSpec":
        return self.model_copy(update={"hyperparameters": {**self.hyperparameters, **updates}})


class TrainedModel(ABC):
    """A fitted binary classifier. Immutable after training; prediction is reentrant."""

    kind: ClassVar[str]
    default_threshold: float = 0.5

    def __init__(self, spec: ModelSpec, dim: int) -> None:
        self.spec = spec
        self.dim = dim

    def _check(self, X: Matrix) -> Matrix:
        X = as_2d(X)
        if X.shape[1] != self.dim:
            raise DataError("model expects %d features, got %d" % (self.dim, X.shape[1]))
        return X

    def scores(self, X: Matrix) -> np.ndarray:
        return self._scores(self._check(X))

    def label_scores(self, X: Matrix) -> np.ndarray:
        """Scores that predict_label thresholds (probabilities for calibrated models)."""
        return self.scores(X)

    @abstractmethod
    def _scores(self, X: Matrix) -> np.ndarray: ...

    @abstractmethod
    def parameters(self) -> dict: ...

    @classmethod
    @abstractmethod
    def from_parameters(cls, spec: ModelSpec, dim: int, params: dict) -> "TrainedModel": ...


def log2_features(d: int) -> int:
    return max(1, math.ceil(math.log2(d))) if d > 1 else 1
