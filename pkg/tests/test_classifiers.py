"""Tests for the five classical classifiers, the shared tree builder and model files."""

import math

import numpy as np
import pytest
from scipy import sparse
from scipy.special import expit

from misinfo.classifiers import (
    FeatureMatrix,
    ModelSpec,
    balanced_weights,
    build_model,
    load_model,
    predict_label,
    predict_labels,
    predict_score,
    predict_scores,
    save_model,
    train,
    train_gbt,
    train_nb,
    train_rf,
    train_sgd,
    train_svm,
)
from misinfo.classifiers.forest import resolve_max_features
from misinfo.classifiers.sgd import modified_huber_loss
from misinfo.classifiers.tree import EntropyCriterion, SecondOrderCriterion, best_split, presort
from misinfo.corpus import split_indices
from misinfo.errors import ConfigError, DataError
from misinfo.evaluation import auc_score
from misinfo.features import TfidfConfig, fit_vocabulary, to_matrix, transform_corpus
from tests.conftest import make_corpus


def _blobs(n_per_class=20, seed=0, dim=2):
    rng = np.random.default_rng(seed)
    pos = rng.normal(2.0, 0.5, size=(n_per_class, dim))
    neg = rng.normal(-2.0, 0.5, size=(n_per_class, dim))
    return FeatureMatrix(np.vstack([pos, neg]), np.array([1] * n_per_class + [0] * n_per_class))


def _tfidf(token_corpus, l2=False):
    seqs, labels = token_corpus
    cfg = TfidfConfig(l2_normalize=l2)
    vocab = fit_vocabulary(seqs, cfg)
    return FeatureMatrix(to_matrix(transform_corpus(seqs, vocab, cfg)), labels)


# --- class weights and specs ---


def test_balanced_weights_published_counts():
    """w_c = N / (2 N_c) on 8786 tweets with 1311 positives."""
    labels = np.array([1] * 1311 + [0] * 7475)
    w = balanced_weights(labels)
    assert w.w1 == pytest.approx(3.351, abs=5e-4)
    assert w.w0 == pytest.approx(0.5877, abs=5e-5)


def test_balanced_weights_equal_classes_and_single_class():
    """Balanced classes weigh 1; one class alone is an error."""
    w = balanced_weights([0, 1, 0, 1])
    assert (w.w0, w.w1) == (1.0, 1.0)
    with pytest.raises(DataError):
        balanced_weights([1, 1, 1])


def test_build_model_validates_hyperparameters():
    """Unknown keys and out-of-range values raise ConfigError; lambda is accepted by name."""
    assert build_model("gbt", {"lambda": 2.0}).params().reg_lambda == 2.0
    with pytest.raises(ConfigError):
        build_model("nb", {"alpah": 0.5})
    with pytest.raises(ConfigError):
        build_model("svm", {"C": -1})


def test_training_leaves_features_untouched():
    """Balanced weighting changes training, never the input matrix."""
    X = _blobs(10)
    before = X.X.copy()
    for kind in ("nb", "sgd", "gbt"):
        train(build_model(kind, {"n_rounds": 3} if kind == "gbt" else {}), X)
    np.testing.assert_array_equal(X.X, before)


# --- naive Bayes ---


def test_nb_hand_computed_posterior():
    """Docs {a}->1 and {b}->0 with alpha=1 and uniform priors give 2/3 for {a}."""
    X = FeatureMatrix(sparse.csr_matrix([[1.0, 0.0], [0.0, 1.0]]), [1, 0])
    model = train_nb(X, alpha=1.0, fit_prior=False)
    assert predict_score(model, sparse.csr_matrix([[1.0, 0.0]])) == pytest.approx(2 / 3)


def test_nb_zero_vector_scores_class_prior():
    """With no evidence the score is the class-1 prior."""
    X = FeatureMatrix(sparse.csr_matrix([[1.0, 0.0], [0.0, 1.0], [0.0, 2.0]]), [1, 0, 0])
    model = train_nb(X)
    assert predict_score(model, sparse.csr_matrix((1, 2))) == pytest.approx(1 / 3)


def test_nb_scores_are_posteriors():
    """Class-1 score plus class-0 posterior is 1."""
    X = FeatureMatrix(sparse.csr_matrix([[2.0, 1.0, 0.0], [0.0, 1.0, 3.0], [1.0, 0.0, 1.0]]), [1, 0, 1])
    model = train_nb(X)
    jll = model.joint_log_likelihood(X.X)
    post0 = np.exp(jll[:, 0]) / np.exp(jll).sum(axis=1)
    np.testing.assert_allclose(model.scores(X.X) + post0, 1.0)


def test_nb_rejects_negative_sparse_features():
    """Multinomial NB needs non-negative inputs."""
    with pytest.raises(DataError):
        train_nb(FeatureMatrix(sparse.csr_matrix([[-1.0, 0.0], [0.0, 1.0]]), [1, 0]))


def test_nb_shifts_dense_vectors():
    """Dense tweet vectors with negative values are min-max scaled, not rejected."""
    model = train_nb(_blobs(10))
    scores = model.scores(_blobs(10).X)
    assert ((scores >= 0) & (scores <= 1)).all()


# --- SGD ---


def test_modified_huber_loss_pieces():
    """Quadratic on [-1, 1), linear below -1, zero from 1."""
    assert modified_huber_loss(2.0) == 0.0
    assert modified_huber_loss(0.0) == 1.0
    assert modified_huber_loss(-2.0) == 8.0


def test_sgd_separates_blobs():
    """Linearly separable data reaches training accuracy 1."""
    X = _blobs(20, seed=1)
    model = train_sgd(X)
    assert (predict_labels(model, X.X) == X.labels).all()
    scores = model.scores(X.X)
    assert ((scores >= 0) & (scores <= 1)).all()


def test_sgd_huge_alpha_zeroes_weights():
    """A dominating penalty shrinks the weights to zero: every input scores the same."""
    X = _blobs(10, seed=2)
    model = train_sgd(X, ModelSpec(kind="sgd", hyperparameters={"alpha": 1e6}))
    assert np.abs(model.coef).max() < 1e-8
    assert np.ptp(model.scores(X.X)) == 0.0


# --- SVM ---


def test_svm_rbf_solves_xor():
    """XOR is kernel-separable: training accuracy 1."""
    X = FeatureMatrix(np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]]), [0, 0, 1, 1])
    model = train_svm(X, ModelSpec(kind="svm", hyperparameters={"C": 10.0, "gamma": 1.0, "probability": False}))
    assert model.default_threshold == 0.0
    assert predict_labels(model, X.X).tolist() == [0, 0, 1, 1]


def test_svm_linear_margins():
    """Every training point of a separable set satisfies y f(x) >= 1 up to tolerance."""
    X = FeatureMatrix(
        np.array([[2.0, 2.0], [3.0, 3.0], [2.0, 3.0], [-2.0, -2.0], [-3.0, -2.0], [-2.0, -3.0]]),
        [1, 1, 1, 0, 0, 0],
    )
    spec = ModelSpec(kind="svm", hyperparameters={"kernel": "linear", "C": 100.0, "probability": False, "class_weight": None})
    model = train_svm(X, spec)
    y = np.where(X.labels == 1, 1.0, -1.0)
    assert (y * model.decision_function(X.X) >= 1 - 2e-3).all()


def test_svm_platt_probabilities_follow_decision_values():
    """Calibrated probabilities lie in [0, 1] and preserve the decision ranking."""
    X = _blobs(8, seed=4)
    model = train_svm(X)
    assert model.default_threshold == 0.5
    d = model.decision_function(X.X)
    p = model.predict_proba(X.X)
    assert ((p >= 0) & (p <= 1)).all()
    order = np.argsort(d, kind="stable")
    assert (np.diff(p[order]) >= -1e-12).all()


def test_svm_row_guard():
    """More rows than max_rows is refused before solving."""
    with pytest.raises(DataError):
        train_svm(_blobs(5), ModelSpec(kind="svm", hyperparameters={"max_rows": 4}))


# --- trees ---


def _entropy_bits(w1, w0):
    tot = w1 + w0
    return -sum(p * math.log2(p) for p in (w1 / tot, w0 / tot) if p > 0)


def _brute_entropy_split(X, y, w):
    best = (-math.inf, None, None)
    total1, total0 = w[y == 1].sum(), w[y == 0].sum()
    parent = _entropy_bits(total1, total0)
    for f in range(X.shape[1]):
        vals = sorted(set(X[:, f]))
        for a, b in zip(vals, vals[1:]):
            t = (a + b) / 2
            left = X[:, f] <= t
            l1, l0 = w[left & (y == 1)].sum(), w[left & (y == 0)].sum()
            r1, r0 = total1 - l1, total0 - l0
            child = ((l1 + l0) * _entropy_bits(l1, l0) + (r1 + r0) * _entropy_bits(r1, r0)) / (total1 + total0)
            gain = parent - child
            if gain > best[0] + 1e-12:
                best = (gain, f, t)
    return best


def _brute_second_order_split(X, g, h, lam):
    best = (-math.inf, None, None)
    G, H = g.sum(), h.sum()
    for f in range(X.shape[1]):
        vals = sorted(set(X[:, f]))
        for a, b in zip(vals, vals[1:]):
            t = (a + b) / 2
            left = X[:, f] <= t
            gl, hl = g[left].sum(), h[left].sum()
            gain = 0.5 * (gl**2 / (hl + lam) + (G - gl) ** 2 / (H - hl + lam) - G**2 / (H + lam))
            if gain > best[0] + 1e-12:
                best = (gain, f, t)
    return best


@pytest.mark.parametrize("seed", range(8))
def test_entropy_split_matches_exhaustive_search(seed):
    """Best information-gain split on a 10-row node equals the brute-force enumeration."""
    rng = np.random.default_rng(seed)
    X = rng.integers(0, 4, size=(10, 5)).astype(float)
    y = rng.integers(0, 2, size=10)
    y[:2] = [0, 1]
    w = rng.uniform(0.5, 2.0, size=10)
    split = best_split(X, presort(X), np.arange(10), np.arange(5), EntropyCriterion(y, w))
    gain, f, t = _brute_entropy_split(X, y, w)
    if gain <= 1e-12:
        assert split is None
        return
    assert (split.feature, split.threshold) == (f, t)
    assert split.gain == pytest.approx(gain, abs=1e-10)


@pytest.mark.parametrize("seed", range(8))
def test_second_order_split_matches_exhaustive_search(seed):
    """Best boosting-gain split on a 10-row node equals the brute-force enumeration."""
    rng = np.random.default_rng(100 + seed)
    X = rng.integers(0, 4, size=(10, 5)).astype(float)
    g = rng.normal(size=10)
    h = rng.uniform(0.1, 0.3, size=10)
    crit = SecondOrderCriterion(g, h, reg_lambda=1.0, gamma=0.0, min_child_weight=0.0, learning_rate=1.0)
    split = best_split(X, presort(X), np.arange(10), np.arange(5), crit)
    gain, f, t = _brute_second_order_split(X, g, h, 1.0)
    if gain <= 1e-12:
        assert split is None
        return
    assert (split.feature, split.threshold) == (f, t)
    assert split.gain == pytest.approx(gain, abs=1e-10)


# --- random forest ---


def test_rf_root_splits_on_separating_feature():
    """A depth-1 tree over all features splits on the one feature that separates the classes."""
    rng = np.random.default_rng(5)
    data = rng.normal(size=(40, 6))
    labels = (data[:, 3] > 0).astype(int)
    spec = ModelSpec(kind="rf", hyperparameters={"n_estimators": 1, "max_depth": 1, "max_features": None, "bootstrap": False})
    tree = train_rf(FeatureMatrix(data, labels), spec).trees[0]
    assert tree.feature[0] == 3
    assert data[labels == 0, 3].max() <= tree.threshold[0] < data[labels == 1, 3].min()


def test_rf_pure_node_is_a_leaf():
    """All-positive training data gives single-leaf trees scoring 1."""
    spec = ModelSpec(kind="rf", hyperparameters={"n_estimators": 3, "class_weight": None})
    model = train_rf(FeatureMatrix(np.arange(12.0).reshape(6, 2), [1] * 6), spec)
    assert [t.n_nodes for t in model.trees] == [1, 1, 1]
    np.testing.assert_array_equal(model.scores(np.zeros((2, 2))), [1.0, 1.0])


def test_rf_is_deterministic_and_independent_of_workers():
    """Same seed, same forest, whatever n_jobs is."""
    X = _blobs(15, seed=6, dim=4)
    spec = ModelSpec(kind="rf", hyperparameters={"n_estimators": 10}, seed=3)
    a = train_rf(X, spec).scores(X.X)
    b = train_rf(X, spec, n_jobs=2).scores(X.X)
    np.testing.assert_array_equal(a, b)


def test_rf_feature_subsampling_defaults_to_log2():
    """Each split samples ceil(log2 d) features unless told otherwise."""
    assert ModelSpec(kind="rf").params().max_features == "log2"
    assert resolve_max_features("log2", 1000) == 10
    assert resolve_max_features("sqrt", 1000) == 32
    assert resolve_max_features(None, 1000) == 1000
    assert resolve_max_features(5000, 1000) == 1000


# --- boosting ---

STUMP_X = np.array([[-3.0], [-2.0], [-1.0], [-0.5], [0.5], [1.0], [2.0], [3.0]])
STUMP_Y = [0, 0, 0, 0, 1, 1, 1, 1]


def _stump_spec(**kw):
    hp = {"n_rounds": 1, "max_depth": 1, "gamma": 0.0, "colsample_bytree": 1.0, "class_weight": None, "lambda": 1.0, "learning_rate": 0.3}
    hp.update(kw)
    return ModelSpec(kind="gbt", hyperparameters=hp)


def test_gbt_stump_by_hand():
    """At margin 0, g = 0.5 - y and h = 0.25: split at 0, leaves -lr G / (H + lambda) = -+0.3."""
    model = train_gbt(FeatureMatrix(STUMP_X, STUMP_Y), _stump_spec())
    tree = model.trees[0]
    assert tree.feature[0] == 0
    assert tree.threshold[0] == 0.0
    assert tree.value[tree.left[0]] == pytest.approx(-0.3 * 2.0 / (1.0 + 1.0))
    assert tree.value[tree.right[0]] == pytest.approx(0.3)
    np.testing.assert_allclose(model.scores(STUMP_X), expit([-0.3] * 4 + [0.3] * 4))


def test_gbt_gamma_above_every_gain_gives_a_leaf():
    """A minimum-gain penalty larger than any split gain leaves a single leaf."""
    model = train_gbt(FeatureMatrix(STUMP_X, STUMP_Y), _stump_spec(gamma=10.0))
    assert model.trees[0].n_nodes == 1


def test_gbt_zero_rounds_scores_base():
    """No rounds: every input scores sigmoid(base_score)."""
    model = train_gbt(FeatureMatrix(STUMP_X, STUMP_Y), _stump_spec(n_rounds=0, base_score=0.4))
    np.testing.assert_allclose(model.scores(np.array([[-10.0], [0.0], [10.0]])), expit(0.4))


# --- prediction and model files ---


def test_batch_predict_equals_row_predict():
    """Scoring a matrix equals scoring its rows one at a time."""
    X = _blobs(6, seed=8)
    model = train_gbt(X, ModelSpec(kind="gbt", hyperparameters={"n_rounds": 5}))
    batch = predict_scores(model, X.X)
    rows = [predict_score(model, row) for row in X.X]
    np.testing.assert_allclose(batch, rows)
    assert [predict_label(model, row) for row in X.X] == (batch >= 0.5).astype(int).tolist()


def test_dim_mismatch_rejected():
    """A model refuses rows of the wrong width."""
    model = train_nb(_blobs(5))
    with pytest.raises(DataError):
        predict_score(model, np.zeros(3))


@pytest.mark.parametrize("kind,hp", [
    ("nb", {}),
    ("sgd", {}),
    ("svm", {}),
    ("rf", {"n_estimators": 5}),
    ("gbt", {"n_rounds": 5}),
])
def test_saved_model_scores_identically(tmp_path, kind, hp):
    """A reloaded model file reproduces the trained model's scores."""
    X = _blobs(8, seed=9, dim=3)
    model = train(ModelSpec(kind=kind, hyperparameters=hp, seed=1), X)
    path = save_model(model, tmp_path / ("%s.json" % kind), {"note": "test"})
    back = load_model(path)
    assert back.kind == kind and back.dim == 3
    np.testing.assert_allclose(back.scores(X.X), model.scores(X.X))


def test_load_model_rejects_other_files(tmp_path):
    """Files that are not model files are data errors."""
    path = tmp_path / "x.json"
    path.write_text('{"format": "other"}', encoding="utf-8")
    with pytest.raises(DataError):
        load_model(path)


@pytest.mark.slow
@pytest.mark.parametrize("kind,hp,l2", [
    ("nb", {}, False),
    ("sgd", {}, False),
    ("svm", {}, True),
    ("rf", {"n_estimators": 50}, False),
    ("gbt", {"n_rounds": 20}, False),
])
def test_separable_corpus_training_auc(token_corpus, kind, hp, l2):
    """Distinct class vocabularies give training AUC >= 0.99 for every classifier."""
    X = _tfidf(token_corpus, l2)
    model = train(ModelSpec(kind=kind, hyperparameters=hp, seed=0), X)
    assert auc_score(X.labels, model.scores(X.X)) >= 0.99


def _held_out_auc(seqs, labels, kind, l2, seed=0):
    """Fit the vocabulary and model on a stratified 80% and score the other 20%."""
    train_idx, test_idx = split_indices(labels, [0.8, 0.2], seed)
    cfg = TfidfConfig(l2_normalize=l2)
    vocab = fit_vocabulary([seqs[i] for i in train_idx], cfg)

    def rows(idx):
        return FeatureMatrix(to_matrix(transform_corpus([seqs[i] for i in idx], vocab, cfg)), labels[idx])

    model = train(ModelSpec(kind=kind, seed=seed), rows(train_idx))
    test = rows(test_idx)
    return auc_score(test.labels, model.scores(test.X))


DEFAULT_PARAM_RUNS = [("nb", False), ("sgd", False), ("svm", True), ("rf", False), ("gbt", False)]


@pytest.mark.slow
@pytest.mark.parametrize("kind,l2", DEFAULT_PARAM_RUNS)
def test_separable_corpus_held_out_auc(kind, l2):
    """With default hyperparameters every classifier scores held-out AUC >= 0.95 on 1000 tweets."""
    seqs, labels = make_corpus(1000, 0.15, seed=21)
    assert _held_out_auc(seqs, labels, kind, l2) >= 0.95


@pytest.mark.slow
@pytest.mark.parametrize("kind,l2", DEFAULT_PARAM_RUNS)
def test_shuffled_labels_give_chance_auc(kind, l2):
    """Shuffling the labels leaves nothing to learn: mean held-out AUC stays near 0.5."""
    seqs, labels = make_corpus(1000, 0.15, seed=21)
    aucs = []
    for seed in range(5):
        shuffled = np.random.default_rng(100 + seed).permutation(labels)
        aucs.append(_held_out_auc(seqs, shuffled, kind, l2, seed=seed))
    assert 0.40 <= np.mean(aucs) <= 0.60
