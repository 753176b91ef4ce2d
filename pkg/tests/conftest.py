"""Pytest config for the misinformation pipeline tests: synthetic Arabic corpora."""

from __future__ import annotations

import itertools
from pathlib import Path

import numpy as np
import pytest

from misinfo.arabic_text import TokenSequence, load_stoplist
from misinfo.corpus import TweetRecord, write_dataset

# Root of the repo
ROOT = Path(__file__).resolve().parent.parent

# Letters that never form a stemmer affix, so synthetic words survive preprocessing unchanged.
_LETTERS = "بجدذرزسشصضطظعغفقكم"


def make_words(n: int, seed: int, exclude: frozenset[str] = frozenset()) -> list[str]:
    """n distinct four-letter Arabic words (no doubled letters, no stop words)."""
    stops = load_stoplist()
    rng = np.random.default_rng(seed)
    words: list[str] = []
    seen = set(exclude)
    while len(words) < n:
        w = "".join(rng.choice(list(_LETTERS), size=4))
        if any(a == b for a, b in itertools.pairwise(w)) or w in seen or w in stops:
            continue
        seen.add(w)
        words.append(w)
    return words


def class_vocabularies(seed: int = 0, size: int = 12) -> tuple[list[str], list[str], list[str]]:
    """(positive-only, negative-only, shared) word lists, pairwise disjoint."""
    words = make_words(3 * size, seed)
    return words[:size], words[size:2 * size], words[2 * size:]


def make_corpus(n: int, pos_rate: float = 0.15, seed: int = 0, length: int = 6) -> tuple[list[TokenSequence], np.ndarray]:
    """
    Tweets whose first half comes from a class-specific vocabulary and second half from a
    shared one. Exactly round(n * pos_rate) tweets are positive; order is shuffled.
    """
    pos_words, neg_words, shared = class_vocabularies(seed)
    rng = np.random.default_rng(seed + 1)
    n_pos = int(round(n * pos_rate))
    labels = np.array([1] * n_pos + [0] * (n - n_pos), dtype=np.int64)
    rng.shuffle(labels)
    half = length // 2
    seqs = []
    for i, y in enumerate(labels):
        own = pos_words if y == 1 else neg_words
        toks = list(rng.choice(own, size=half)) + list(rng.choice(shared, size=length - half))
        seqs.append(TokenSequence(tuple(str(t) for t in toks), "t%d" % i))
    return seqs, labels


def make_records(n: int, pos_rate: float = 0.15, seed: int = 0) -> list[TweetRecord]:
    """Raw tweets built from make_corpus, decorated with a URL, a hashtag and a mention."""
    seqs, labels = make_corpus(n, pos_rate, seed)
    return [
        TweetRecord(seq.source_id, "%s #%s @user https://t.co/x%d" % (seq.text(), seq.tokens[0], i), int(y))
        for i, (seq, y) in enumerate(zip(seqs, labels))
    ]


@pytest.fixture(scope="session")
def token_corpus() -> tuple[list[TokenSequence], np.ndarray]:
    """400 synthetic tweets, 15% positive, with separable class vocabularies."""
    return make_corpus(400, 0.15, seed=7)


@pytest.fixture
def corpus_file(tmp_path: Path) -> Path:
    """JSONL corpus of 300 raw tweets under tmp_path."""
    return write_dataset(make_records(300, 0.15, seed=3), tmp_path / "tweets.jsonl")


@pytest.fixture
def isolated_config(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> Path:
    """Point MISINFO_CONFIG_DIR at an empty directory and clear the config cache."""
    from misinfo.config import CONFIG_DIR_ENV, reset_run_config_cache

    cfg_dir = tmp_path / "config"
    monkeypatch.setenv(CONFIG_DIR_ENV, str(cfg_dir))
    reset_run_config_cache()
    yield cfg_dir
    reset_run_config_cache()
