"""Tests for the convolutional classifier: shapes, losses, gradients, training and checkpoints."""

import math

import numpy as np
import pytest
import torch
from pydantic import ValidationError

from misinfo.arabic_text import TokenSequence
from misinfo.embeddings import EmbedTrainConfig, train_cbow, train_fasttext, word_vector
from misinfo.neural import (
    OOV_ID,
    CnnConfig,
    PaddedBatch,
    build_cnn,
    build_token_index,
    encode,
    forward,
    gradient_check,
    load_checkpoint,
    loss_auc_surrogate,
    loss_cross_entropy,
    loss_gradients,
    predict_scores,
    save_checkpoint,
    train_cnn,
)


def _tiny_cfg(**kw):
    base = dict(embed_dim=4, kernel_sizes=[2, 3], filters_per_kernel=2, dropout=0.0, max_sequence_length=6, vocab_size=12, seed=3)
    base.update(kw)
    return CnnConfig(**base)


def _tiny_batch(seed=0, labels=(1, 0, 1, 0, 0, 1)):
    rng = np.random.default_rng(seed)
    ids = rng.integers(1, 12, size=(len(labels), 6))
    ids[0, 4:] = 0
    return PaddedBatch(ids, np.asarray(labels))


def test_parameter_count():
    """vocab 100: 100*200 + 100*(4*200+1) + 100*(5*200+1) + 201 = 200,401."""
    assert build_cnn(CnnConfig(vocab_size=100)).parameter_count() == 200_401


def test_default_epochs_follow_loss():
    """500 epochs for cross-entropy, 600 for the AUC surrogate, unless set."""
    assert CnnConfig().resolved_epochs() == 500
    assert CnnConfig(loss="auc_surrogate").resolved_epochs() == 600
    assert CnnConfig(epochs=7).resolved_epochs() == 7


def test_kernel_longer_than_sequence_rejected():
    """A kernel wider than max_sequence_length cannot produce any window."""
    with pytest.raises(ValidationError):
        CnnConfig(kernel_sizes=[4, 8], max_sequence_length=5)


def test_token_index_and_encoding():
    """Ids 0/1 are reserved; sequences are right-padded and right-truncated."""
    corpus = [TokenSequence(("سلم", "حرب", "سلم")), TokenSequence(("نفط",))]
    index = build_token_index(corpus, max_features=10)
    assert index.words == ("سلم", "حرب", "نفط")
    assert index.vocab_size == 5
    batch = encode([TokenSequence(("حرب", "مجهول", "سلم", "نفط"))], index, max_len=3)
    assert batch.token_ids.tolist() == [[3, OOV_ID, 2]]
    assert encode([TokenSequence(("نفط",))], index, max_len=3).token_ids.tolist() == [[4, 0, 0]]


def test_random_init_is_seeded():
    """The same seed gives bit-identical weights; the padding row is zero."""
    a = build_cnn(_tiny_cfg())
    b = build_cnn(_tiny_cfg())
    for pa, pb in zip(a.parameters(), b.parameters()):
        assert torch.equal(pa, pb)
    assert not a.embedding.weight[0].any()
    assert a.embedding.weight.abs().max() <= 0.05


def test_pretrained_rows_copied(token_corpus):
    """In-vocabulary rows equal the embedding table's vectors."""
    seqs, _ = token_corpus
    table = train_cbow(seqs, EmbedTrainConfig(dim=8, min_count=1, epochs=1))
    index = build_token_index(seqs, 100)
    model = build_cnn(_tiny_cfg(embed_dim=8, vocab_size=index.vocab_size, embed_init="cbow"), table, index)
    word = index.words[0]
    np.testing.assert_allclose(model.embedding.weight[index.id(word)].detach().numpy(), word_vector(table, word))


def test_hand_computed_forward():
    """One filter, kernel 2, dim 1 on a length-3 sequence."""
    cfg = CnnConfig(embed_dim=1, kernel_sizes=[2], filters_per_kernel=1, dropout=0.0, max_sequence_length=3, vocab_size=4)
    model = build_cnn(cfg)
    with torch.no_grad():
        model.embedding.weight.copy_(torch.tensor([[0.0], [0.5], [-1.0], [2.0]]))
        model.convs[0].weight.copy_(torch.tensor([[[0.3, -0.2]]]))
        model.convs[0].bias.fill_(0.1)
        model.dense.weight.fill_(1.5)
        model.dense.bias.fill_(-0.4)
    # windows: 0.3*0.5 - 0.2*-1 + 0.1 = 0.45 and 0.3*-1 - 0.2*2 + 0.1 = -0.6
    expected = 1.0 / (1.0 + math.exp(-(1.5 * 0.45 - 0.4)))
    out = forward(model, torch.tensor([[1, 2, 3]]))
    assert out.shape == (1, 1)
    assert out.item() == pytest.approx(expected, rel=1e-6)


def test_all_padding_input_scores_biases_only():
    """Zero embeddings leave only conv and dense biases."""
    model = build_cnn(_tiny_cfg())
    biases = torch.cat([torch.relu(c.bias) for c in model.convs])
    expected = torch.sigmoid(model.dense.weight @ biases + model.dense.bias)
    out = forward(model, torch.zeros((2, 6), dtype=torch.long))
    torch.testing.assert_close(out, expected.expand(2, 1))


def test_eval_forward_is_deterministic():
    """Dropout is off in eval mode, so repeated calls agree."""
    model = build_cnn(_tiny_cfg(dropout=0.5))
    batch = _tiny_batch()
    a = predict_scores(model, batch)
    b = predict_scores(model, batch)
    np.testing.assert_array_equal(a, b)
    assert ((a > 0) & (a < 1)).all()


def test_cross_entropy_matches_loop():
    """Mean and weighted cross-entropy equal a scalar loop."""
    rng = np.random.default_rng(1)
    s = rng.uniform(0.01, 0.99, size=10)
    y = rng.integers(0, 2, size=10)
    w = rng.uniform(0.5, 3.0, size=10)
    terms = [-(yi * math.log(si) + (1 - yi) * math.log(1 - si)) for si, yi in zip(s, y)]
    st, yt, wt = torch.tensor(s), torch.tensor(y), torch.tensor(w)
    assert loss_cross_entropy(st, yt).item() == pytest.approx(sum(terms) / 10, abs=1e-12)
    assert loss_cross_entropy(st, yt, wt).item() == pytest.approx(sum(a * b for a, b in zip(w, terms)) / w.sum(), abs=1e-12)


def test_cross_entropy_special_values():
    """s = 0.5 gives ln 2; clamping keeps perfect predictions finite and near 0."""
    assert loss_cross_entropy(torch.full((4,), 0.5, dtype=torch.float64), torch.tensor([1, 0, 1, 0])).item() == pytest.approx(math.log(2))
    perfect = loss_cross_entropy(torch.tensor([1.0, 0.0], dtype=torch.float64), torch.tensor([1, 0])).item()
    assert 0.0 < perfect < 1e-6


def test_auc_surrogate_matches_pair_loop():
    """Mean squared hinge over all positive/negative pairs."""
    s = [0.3, -0.2, 1.4, 0.9, 0.0, -1.1]
    y = [1, 0, 1, 0, 0, 1]
    pairs = [max(0.0, 1.0 - (sp - sn)) ** 2 for sp, yp in zip(s, y) if yp == 1 for sn, yn in zip(s, y) if yn == 0]
    got = loss_auc_surrogate(torch.tensor(s, dtype=torch.float64), torch.tensor(y)).item()
    assert got == pytest.approx(sum(pairs) / len(pairs), abs=1e-12)


def test_auc_surrogate_special_values():
    """Separated by 2: zero; one tied pair: one; one class only: zero."""
    assert loss_auc_surrogate(torch.tensor([3.0, 1.0]), torch.tensor([1, 0])).item() == 0.0
    assert loss_auc_surrogate(torch.tensor([0.0, 0.0]), torch.tensor([1, 0])).item() == 1.0
    assert loss_auc_surrogate(torch.tensor([0.2, 0.7]), torch.tensor([1, 1])).item() == 0.0


@pytest.mark.parametrize("loss", ["cross_entropy", "auc_surrogate"])
def test_gradient_check(loss):
    """Analytic gradients agree with central differences."""
    assert gradient_check(build_cnn(_tiny_cfg()), _tiny_batch(), loss) < 1e-4


def test_surrogate_without_pairs_has_zero_gradients():
    """A batch of a single class gives exactly zero surrogate gradients."""
    grads = loss_gradients(build_cnn(_tiny_cfg()), _tiny_batch(labels=(1, 1, 1, 1, 1, 1)), "auc_surrogate")
    assert all(not g.any() for g in grads.values())


def test_zero_learning_rate_changes_nothing():
    """lr=0 leaves every parameter unchanged and the loss history flat."""
    cfg = _tiny_cfg(lr=0.0, epochs=3, batch=2)
    model = build_cnn(cfg)
    before = [p.detach().clone() for p in model.parameters()]
    model, history = train_cnn(model, _tiny_batch(), cfg=cfg)
    for a, b in zip(before, model.parameters()):
        assert torch.equal(a, b)
    assert history[0].train_loss == pytest.approx(history[-1].train_loss, rel=1e-6)


def test_frozen_embeddings_never_change():
    """trainable_embeddings false keeps the embedding matrix bit-identical."""
    cfg = _tiny_cfg(trainable_embeddings=False, epochs=3, batch=2, lr=0.05)
    model = build_cnn(cfg)
    before = model.embedding.weight.detach().clone()
    dense_before = model.dense.weight.detach().clone()
    model, _ = train_cnn(model, _tiny_batch(), cfg=cfg)
    assert torch.equal(before, model.embedding.weight)
    assert not torch.equal(dense_before, model.dense.weight)


def test_checkpoint_restores_scores(tmp_path, token_corpus):
    """A reloaded checkpoint scores identically and keeps its token index."""
    seqs, labels = token_corpus
    index = build_token_index(seqs, 60)
    cfg = _tiny_cfg(vocab_size=index.vocab_size)
    model = build_cnn(cfg, index=index)
    batch = encode(seqs[:20], index, cfg.max_sequence_length, labels[:20])
    path = save_checkpoint(model, tmp_path / "model.cnn", {"run": "test"})
    back, meta = load_checkpoint(path)
    assert meta == {"run": "test"}
    assert back.token_index.words == index.words
    np.testing.assert_array_equal(predict_scores(back, batch), predict_scores(model, batch))


@pytest.mark.slow
def test_separable_corpus_validation_auc(token_corpus):
    """Distinct class vocabularies reach validation AUC >= 0.95 and the loss falls."""
    seqs, labels = token_corpus
    index = build_token_index(seqs[:300], 100)
    cfg = CnnConfig(
        embed_dim=16, kernel_sizes=[2, 3], filters_per_kernel=8, max_sequence_length=8,
        vocab_size=index.vocab_size, epochs=30, lr=5e-3, class_weight="balanced", seed=1,
    )
    train = encode(seqs[:300], index, cfg.max_sequence_length, labels[:300])
    valid = encode(seqs[300:], index, cfg.max_sequence_length, labels[300:])
    model, history = train_cnn(build_cnn(cfg, index=index), train, valid, cfg)
    assert len(history) == 30
    assert max(h.val_auc for h in history) >= 0.95
    assert history[-1].train_loss < history[0].train_loss


@pytest.mark.slow
def test_fasttext_initialized_cnn_validation_auc(token_corpus):
    """Embeddings copied from FastText vectors reach validation AUC >= 0.95 within 50 epochs."""
    seqs, labels = token_corpus
    table = train_fasttext(seqs[:300], EmbedTrainConfig(mode="fasttext", dim=16, min_count=1, epochs=5, buckets=5000, seed=4))
    index = build_token_index(seqs[:300], 100)
    cfg = CnnConfig(
        embed_dim=16, kernel_sizes=[2, 3], filters_per_kernel=8, max_sequence_length=8, vocab_size=index.vocab_size,
        embed_init="fasttext", epochs=50, lr=5e-3, class_weight="balanced", seed=1,
    )
    model = build_cnn(cfg, table, index)
    some_word = index.words[0]
    np.testing.assert_allclose(model.embedding.weight[index.id(some_word)].detach().numpy(), word_vector(table, some_word), rtol=1e-6)
    train = encode(seqs[:300], index, cfg.max_sequence_length, labels[:300])
    valid = encode(seqs[300:], index, cfg.max_sequence_length, labels[300:])
    _, history = train_cnn(model, train, valid, cfg)
    assert len(history) <= 50
    assert max(h.val_auc for h in history) >= 0.95
