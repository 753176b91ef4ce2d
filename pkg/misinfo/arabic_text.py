"""
Arabic-aware tweet preprocessing.

  clean       drop URLs, special characters, punctuation, diacritics and non-Arabic tokens
  normalize   orthographic unification (alef/yaa/taa-marbuta/...) and repetition collapsing
  tokenize    whitespace split
  remove_stopwords / stem
  preprocess  clean -> normalize -> tokenize -> remove_stopwords -> stem

Every function here is pure; rules, stop lists and stemmers are immutable and shareable.
"""

from __future__ import annotations

import logging
import re
import unicodedata
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Literal, Protocol

from pydantic import BaseModel, ConfigDict, Field, field_serializer, field_validator

logger = logging.getLogger(__name__)

StripClass = Literal["diacritics", "punctuation", "non_arabic"]
StemmerName = Literal["light", "none"]

# Arabic letters (hamza through yaa, plus the extended letters used in dialect spellings).
_ARABIC_LETTER = r"ء-غف-يٱ-ۓەۮۯۺ-ۼۿ"
ARABIC_LETTER_RE = re.compile("[%s]" % _ARABIC_LETTER)
_NON_ARABIC_LETTER_RE = re.compile("[^%s]" % _ARABIC_LETTER)

# Harakat, tanween, shadda, sukun, maddah/hamza marks, superscript alef, Quranic annotation signs.
DIACRITICS = "".join(chr(c) for c in [*range(0x064B, 0x0660), 0x0670, *range(0x06D6, 0x06EE)])
_DIACRITICS_RE = re.compile("[%s]" % re.escape(DIACRITICS))
TATWEEL = "ـ"

URL_RE = re.compile(r"(?:https?://|www\.)\S*", re.IGNORECASE)
SPECIAL_CHARS = "#%&@"

DEFAULT_CHAR_MAP: dict[str, str] = {
    "أ": "ا",
    "إ": "ا",
    "آ": "ا",
    "ئ": "ا",
    "ى": "ي",
    "ة": "ه",
    "ؤ": "و",
    "گ": "ك",
}


class NormalizationRules(BaseModel):
    """Orthographic normalization and cleaning rules."""

    model_config = ConfigDict(frozen=True)

    char_map: dict[str, str] = Field(default_factory=lambda: dict(DEFAULT_CHAR_MAP))
    strip_classes: frozenset[StripClass] = Field(
        default_factory=lambda: frozenset({"diacritics", "punctuation", "non_arabic"}),
        description="Codepoint classes removed by clean()",
    )
    repeat_threshold: int = Field(3, ge=2, description="Runs of at least this many identical codepoints collapse to one")

    @field_validator("char_map")
    @classmethod
    def _idempotent_map(cls, v: dict[str, str]) -> dict[str, str]:
        for src, dst in v.items():
            if len(src) != 1 or len(dst) > 1:
                raise ValueError("char_map must map single codepoints, got %r -> %r" % (src, dst))
            if dst in v and v[dst] != dst:
                raise ValueError("char_map is not idempotent: %r maps to %r which is remapped" % (src, dst))
        return v

    @field_serializer("strip_classes")
    def _sorted_classes(self, v: frozenset[str]) -> list[str]:
        return sorted(v)

    def translation_table(self) -> dict[int, str]:
        return {ord(k): v for k, v in self.char_map.items()}


DEFAULT_RULES = NormalizationRules()


@dataclass(frozen=True)
class TokenSequence:
    """Ordered tokens of one tweet."""

    tokens: tuple[str, ...]
    source_id: str = ""

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)

    def text(self) -> str:
        return " ".join(self.tokens)


@dataclass(frozen=True)
class StopList:
    """Set of stop words, stored in normalized form."""

    words: frozenset[str]

    @classmethod
    def from_words(cls, words: Iterable[str], rules: NormalizationRules = DEFAULT_RULES) -> "StopList":
        return cls(frozenset(w for w in (normalize(x.strip(), rules) for x in words) if w))

    def __contains__(self, token: object) -> bool:
        return token in self.words

    def __len__(self) -> int:
        return len(self.words)


EMPTY_STOPLIST = StopList(frozenset())


def _read_entries(text: str) -> list[str]:
    return [line.strip() for line in text.splitlines() if line.strip() and not line.lstrip().startswith("#")]


def _packaged(name: str) -> str:
    return resources.files("misinfo.data").joinpath(name).read_text(encoding="utf-8")


def load_stoplist(path: str | Path | None = None, rules: NormalizationRules = DEFAULT_RULES) -> StopList:
    """Load a stop list (one word per line); None loads the packaged MSA list."""
    raw = _packaged("stopwords.txt") if path is None else Path(path).read_text(encoding="utf-8")
    return StopList.from_words(_read_entries(raw), rules)


def load_affixes(prefixes_path: str | Path | None = None, suffixes_path: str | Path | None = None) -> tuple[list[str], list[str]]:
    """Prefix and suffix tables for the light stemmer (packaged defaults when paths are None)."""
    pre = _packaged("prefixes.txt") if prefixes_path is None else Path(prefixes_path).read_text(encoding="utf-8")
    suf = _packaged("suffixes.txt") if suffixes_path is None else Path(suffixes_path).read_text(encoding="utf-8")
    return _read_entries(pre), _read_entries(suf)


# --- cleaning / normalization ---


def _is_punct_or_symbol(ch: str) -> bool:
    return unicodedata.category(ch)[0] in ("P", "S")


def clean(text: str, rules: NormalizationRules = DEFAULT_RULES) -> str:
    """Remove URLs, special characters, punctuation, diacritics and non-Arabic material."""
    if not text:
        return ""
    text = URL_RE.sub(" ", text)
    if "diacritics" in rules.strip_classes:
        text = _DIACRITICS_RE.sub("", text).replace(TATWEEL, "")
    if "punctuation" in rules.strip_classes:
        text = "".join(" " if (c in SPECIAL_CHARS or _is_punct_or_symbol(c)) else c for c in text)
    else:
        text = "".join(" " if c in SPECIAL_CHARS else c for c in text)
    tokens = text.split()
    if "non_arabic" in rules.strip_classes:
        tokens = [_NON_ARABIC_LETTER_RE.sub("", t) for t in tokens if ARABIC_LETTER_RE.search(t)]
    return " ".join(t for t in tokens if t)


def _repeat_re(threshold: int) -> re.Pattern[str]:
    return re.compile(r"(.)\1{%d,}" % (threshold - 1), re.DOTALL)


def normalize(text: str, rules: NormalizationRules = DEFAULT_RULES) -> str:
    """Apply the character map, then collapse runs of >= repeat_threshold identical codepoints."""
    if not text:
        return ""
    text = text.translate(rules.translation_table())
    return _repeat_re(rules.repeat_threshold).sub(r"\1", text)


def tokenize(text: str, source_id: str = "") -> TokenSequence:
    return TokenSequence(tuple(text.split()), source_id)


def remove_stopwords(seq: TokenSequence, stops: StopList) -> TokenSequence:
    if not stops.words:
        return seq
    return TokenSequence(tuple(t for t in seq.tokens if t not in stops), seq.source_id)


# --- stemming ---


class Stemmer(Protocol):
    def __call__(self, token: str) -> str: ...


class NoopStemmer:
    """Identity stemmer."""

    name = "none"

    def __call__(self, token: str) -> str:
        return token


class LightStemmer:
    """
    Affix-stripping stemmer. Strips prefixes (longest first) while the residual keeps at
    least min_len characters, then suffixes the same way, until nothing more applies.
    A token is never emptied: when stripping would go below min_len the token is kept.
    """

    name = "light"

    def __init__(self, prefixes: Iterable[str], suffixes: Iterable[str], min_len: int = 3) -> None:
        if min_len < 1:
            raise ValueError("min_len must be >= 1")
        self.prefixes = tuple(sorted(set(prefixes), key=lambda a: (-len(a), a)))
        self.suffixes = tuple(sorted(set(suffixes), key=lambda a: (-len(a), a)))
        self.min_len = min_len

    @classmethod
    def default(cls) -> "LightStemmer":
        prefixes, suffixes = load_affixes()
        return cls(prefixes, suffixes)

    def _strip_prefix(self, token: str) -> str | None:
        for p in self.prefixes:
            if token.startswith(p) and len(token) - len(p) >= self.min_len:
                return token[len(p):]
        return None

    def _strip_suffix(self, token: str) -> str | None:
        for s in self.suffixes:
            if token.endswith(s) and len(token) - len(s) >= self.min_len:
                return token[: -len(s)]
        return None

    def __call__(self, token: str) -> str:
        if len(token) <= self.min_len:
            return token
        while (nxt := self._strip_prefix(token)) is not None:
            token = nxt
        while (nxt := self._strip_suffix(token)) is not None:
            token = nxt
        return token


def make_stemmer(name: StemmerName) -> Stemmer:
    if name == "none":
        return NoopStemmer()
    if name == "light":
        return LightStemmer.default()
    raise ValueError("unknown stemmer %r" % name)


def stem(seq: TokenSequence, stemmer: Stemmer | None = None) -> TokenSequence:
    stemmer = stemmer or LightStemmer.default()
    return TokenSequence(tuple(stemmer(t) or t for t in seq.tokens), seq.source_id)


# --- full pipeline ---


class PreprocessConfig(BaseModel):
    """Preprocessing choices; stoplist_path None selects the packaged list."""

    model_config = ConfigDict(extra="ignore")

    rules: NormalizationRules = Field(default_factory=NormalizationRules)
    stemmer: StemmerName = "light"
    stoplist_path: str | None = None
    use_stoplist: bool = True


class Preprocessor:
    """Resolved preprocessing pipeline (stop list and stemmer loaded once)."""

    def __init__(self, config: PreprocessConfig | None = None, stops: StopList | None = None, stemmer: Stemmer | None = None) -> None:
        self.config = config or PreprocessConfig()
        if stops is None:
            stops = load_stoplist(self.config.stoplist_path, self.config.rules) if self.config.use_stoplist else EMPTY_STOPLIST
        self.stops = stops
        self.stemmer = stemmer or make_stemmer(self.config.stemmer)

    def __call__(self, text: str, source_id: str = "") -> TokenSequence:
        rules = self.config.rules
        seq = tokenize(normalize(clean(text, rules), rules), source_id)
        seq = stem(remove_stopwords(seq, self.stops), self.stemmer)
        # a stem may coincide with a stop word
        return remove_stopwords(seq, self.stops)


_default_preprocessor: Preprocessor | None = None


def preprocess(text: str, config: PreprocessConfig | Preprocessor | None = None, source_id: str = "") -> TokenSequence:
    """clean -> normalize -> tokenize -> remove_stopwords -> stem."""
    global _default_preprocessor
    if isinstance(config, Preprocessor):
        return config(text, source_id)
    if config is None:
        if _default_preprocessor is None:
            _default_preprocessor = Preprocessor()
        return _default_preprocessor(text, source_id)
    return Preprocessor(config)(text, source_id)
