"""
Classical classifiers over TF-IDF or tweet-vector features.

    >>> model = train(ModelSpec(kind="nb", hyperparameters={"alpha": 0.5}), features)
    >>> predict_scores(model, features.X)
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Callable

import numpy as np

from misinfo.classifiers.base import (
    PARAM_SCHEMAS,
    ClassWeights,
    FeatureMatrix,
    Matrix,
    ModelSpec,
    TrainedModel,
    as_2d,
    balanced_weights,
)
from misinfo.classifiers.boosting import BoostedModel, train_gbt
from misinfo.classifiers.forest import ForestModel, train_rf
from misinfo.classifiers.naive_bayes import NaiveBayesModel, train_nb
from misinfo.classifiers.sgd import SGDModel, train_sgd
from misinfo.classifiers.svm import SVMModel, train_svm
from misinfo.errors import DataError

logger = logging.getLogger(__name__)

MODEL_FORMAT = "misinfo-model"
MODEL_FORMAT_VERSION = 1

TRAINERS: dict[str, Callable[[FeatureMatrix, ModelSpec], TrainedModel]] = {
    "nb": train_nb,
    "sgd": train_sgd,
    "svm": train_svm,
    "rf": train_rf,
    "gbt": train_gbt,
}

MODEL_CLASSES: dict[str, type[TrainedModel]] = {
    "nb": NaiveBayesModel,
    "sgd": SGDModel,
    "svm": SVMModel,
    "rf": ForestModel,
    "gbt": BoostedModel,
}


def build_model(kind: str, hyperparameters: dict[str, Any] | None = None, seed: int = 0) -> ModelSpec:
    """Validated ModelSpec for `kind` (raises ConfigError on unknown keys or bad values)."""
    spec = ModelSpec(kind=kind, hyperparameters=hyperparameters or {}, seed=seed)
    spec.params()
    return spec


def train(spec: ModelSpec, X: FeatureMatrix) -> TrainedModel:
    return TRAINERS[spec.kind](X, spec)


def predict_score(model: TrainedModel, x: Matrix) -> float:
    x = as_2d(x)
    if x.shape[0] != 1:
        raise DataError("predict_score takes a single row, got %d" % x.shape[0])
    return float(model.scores(x)[0])


def predict_scores(model: TrainedModel, X: Matrix) -> np.ndarray:
    return model.scores(X)


def predict_labels(model: TrainedModel, X: Matrix, threshold: float | None = None) -> np.ndarray:
    t = model.default_threshold if threshold is None else threshold
    return (model.label_scores(X) >= t).astype(np.int64)


def predict_label(model: TrainedModel, x: Matrix, threshold: float | None = None) -> int:
    """1 iff the model's label score reaches the threshold (0.5, or 0 for an uncalibrated SVM)."""
    return int(predict_labels(model, as_2d(x), threshold)[0])


def save_model(model: TrainedModel, path: str | Path, metadata: dict[str, Any] | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_FORMAT_VERSION,
        "kind": model.kind,
        "spec": model.spec.model_dump(),
        "dim": model.dim,
        "parameters": model.parameters(),
        "metadata": metadata or {},
    }
    path.write_text(json.dumps(doc), encoding="utf-8")
    logger.info("wrote %s model to %s", model.kind, path)
    return path


def load_model(path: str | Path) -> TrainedModel:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise DataError("model file is not valid JSON (%s)" % e.msg, e.lineno) from e
    if doc.get("format") != MODEL_FORMAT:
        raise DataError("%s is not a model file" % path)
    kind = doc.get("kind")
    if kind not in MODEL_CLASSES:
        raise DataError("unknown model kind %r" % kind)
    spec = ModelSpec.model_validate(doc["spec"])
    return MODEL_CLASSES[kind].from_parameters(spec, int(doc["dim"]), doc["parameters"])


def load_model_metadata(path: str | Path) -> dict[str, Any]:
    return json.loads(Path(path).read_text(encoding="utf-8")).get("metadata", {})


__all__ = [
    "PARAM_SCHEMAS",
    "ClassWeights",
    "FeatureMatrix",
    "ModelSpec",
    "TrainedModel",
    "balanced_weights",
    "build_model",
    "load_model",
    "load_model_metadata",
    "predict_label",
    "predict_labels",
    "predict_score",
    "predict_scores",
    "save_model",
    "train",
    "train_gbt",
    "train_nb",
    "train_rf",
    "train_sgd",
    "train_svm",
]
