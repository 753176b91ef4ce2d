"""Tests for n-gram extraction, vocabulary fitting and TF-IDF weights."""

import math

import numpy as np
import pytest

from misinfo.arabic_text import TokenSequence
from misinfo.errors import DataError
from misinfo.features import (
    TfidfConfig,
    extract_ngrams,
    fit_vocabulary,
    load_vocabulary,
    read_libsvm,
    save_vocabulary,
    tfidf_vector,
    to_matrix,
    transform_corpus,
    write_libsvm,
)


def _docs(*token_lists):
    return [TokenSequence(tuple(t), "d%d" % i) for i, t in enumerate(token_lists)]


DOCS = _docs(["سلم", "حرب", "سلم"], ["حرب", "نفط"], ["نفط", "قمح"])


def _dense_tfidf(docs, terms, base=math.log):
    """Direct TF * log(N / DF) over a fixed term list."""
    n = len(docs)
    out = np.zeros((n, len(terms)))
    for j, term in enumerate(terms):
        df = sum(term in d.tokens for d in docs)
        for i, d in enumerate(docs):
            tf = d.tokens.count(term)
            if tf and df:
                out[i, j] = tf * base(n / df)
    return out


def test_bigram_trigram_extraction():
    """bi_tri mode yields every bigram then every trigram."""
    assert extract_ngrams(["ا", "ب", "ج"], "bi_tri") == ["ا ب", "ب ج", "ا ب ج"]
    assert extract_ngrams(["ا"], "bi_tri") == []


def test_vocabulary_ranks_by_frequency_then_term():
    """Most frequent first; equal counts break lexicographically."""
    vocab = fit_vocabulary(DOCS)
    assert vocab.terms == tuple(sorted(["سلم", "حرب", "نفط"])) + ("قمح",)
    assert vocab.df["حرب"] == 2
    assert vocab.n_docs == 3


def test_max_features_truncates():
    """Only the top max_features terms are kept."""
    vocab = fit_vocabulary(DOCS, TfidfConfig(max_features=2))
    assert len(vocab) == 2


def test_tfidf_matches_dense_formula():
    """Sparse weights equal TF * ln(N / DF) computed directly."""
    vocab = fit_vocabulary(DOCS)
    X = to_matrix(transform_corpus(DOCS, vocab)).toarray()
    np.testing.assert_allclose(X, _dense_tfidf(DOCS, vocab.terms), rtol=1e-12)
    assert X[0, vocab.index["سلم"]] == pytest.approx(2 * math.log(3))


def test_tfidf_base10():
    """log_base base10 switches the logarithm."""
    cfg = TfidfConfig(log_base="base10")
    vocab = fit_vocabulary(DOCS, cfg)
    X = to_matrix(transform_corpus(DOCS, vocab)).toarray()
    np.testing.assert_allclose(X, _dense_tfidf(DOCS, vocab.terms, math.log10), rtol=1e-12)


def test_term_in_every_document_has_zero_weight():
    """DF == N gives log(1) = 0, so the term never appears in a vector."""
    docs = _docs(["خبر", "سلم"], ["خبر", "حرب"])
    vocab = fit_vocabulary(docs)
    v = tfidf_vector(docs[0], vocab)
    assert vocab.index["خبر"] not in v.cols.tolist()
    assert (v.weights > 0).all()


def test_sparse_vector_columns_increase():
    """Column ids are strictly increasing."""
    vocab = fit_vocabulary(DOCS)
    for v in transform_corpus(DOCS, vocab):
        assert (np.diff(v.cols) > 0).all()


def test_out_of_vocabulary_tweet_is_empty():
    """A tweet with only unseen terms yields the zero vector."""
    vocab = fit_vocabulary(DOCS)
    assert len(tfidf_vector(TokenSequence(("مجهول",)), vocab)) == 0


def test_l2_normalize():
    """Normalized vectors have unit length."""
    vocab = fit_vocabulary(DOCS, TfidfConfig(l2_normalize=True))
    v = tfidf_vector(DOCS[0], vocab)
    assert np.linalg.norm(v.weights) == pytest.approx(1.0)


def test_empty_corpus_rejected():
    """Fitting on nothing is a data error."""
    with pytest.raises(DataError):
        fit_vocabulary([])


def test_vocabulary_and_libsvm_files(tmp_path):
    """Saved vocabularies and feature files reload to the same values."""
    vocab = fit_vocabulary(DOCS, TfidfConfig(ngram_mode="unigram", max_features=3))
    back = load_vocabulary(save_vocabulary(vocab, tmp_path / "vocab.tsv"))
    assert back.terms == vocab.terms and back.df == vocab.df and back.config == vocab.config
    vectors = transform_corpus(DOCS, vocab)
    path = write_libsvm(tmp_path / "f.libsvm", ["a", "b", "c"], [1, 0, None], vectors)
    ids, labels, read = read_libsvm(path, len(vocab))
    assert ids == ["a", "b", "c"]
    assert labels == [1, 0, None]
    np.testing.assert_allclose(to_matrix(read).toarray(), to_matrix(vectors).toarray())


def test_libsvm_column_out_of_range(tmp_path):
    """Columns beyond the vocabulary are rejected with a line number."""
    path = tmp_path / "f.libsvm"
    path.write_text("a 1 0:1.5\nb 0 9:2.0\n", encoding="utf-8")
    with pytest.raises(DataError) as exc:
        read_libsvm(path, 3)
    assert exc.value.line == 2


@pytest.mark.parametrize("bad_id", ["tweet 7", "a\tb", ""])
def test_libsvm_rejects_ids_that_would_split(tmp_path, bad_id):
    """An id with whitespace would shift the label column, so nothing is written."""
    vocab = fit_vocabulary(DOCS, TfidfConfig(ngram_mode="unigram"))
    vectors = transform_corpus(DOCS, vocab)
    path = tmp_path / "f.libsvm"
    with pytest.raises(DataError, match="whitespace"):
        write_libsvm(path, ["a", bad_id, "c"], [1, 0, 1], vectors)
    assert not path.exists()
