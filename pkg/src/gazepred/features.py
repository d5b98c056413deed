"""Engineered per-token features: lengths, lemma length difference, binary
flags, collapsed part-of-speech one-hots, and per-sentence TF-IDF.

Each sentence is treated as its own document for TF-IDF.  A token becomes a
term only when its lowercased text is a single alphanumeric run of length at
least two; everything else (single characters, digits, hyphenated or
punctuation-carrying tokens) routes to a fallback constant: 0.01 for the
words "a", "A", "I", and the configurable ``tfidf_error`` value (default 0.1)
otherwise.

Part-of-speech tags come from a pluggable tagger.  :class:`LexiconTagger` is
the built-in fallback (unigram lexicon plus suffix heuristics);
:class:`SidecarTagger` reads precomputed fine tags from a CSV keyed by
(sentence_id, word_id).  Lemmas follow the same pattern with
:class:`RuleLemmatizer` and :class:`SidecarLemmatizer`.
"""

from __future__ import annotations

import csv
import math
import re
import string
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .corpus import Corpus, Sentence, Token
from .errors import ConfigError, SchemaError, ValidationError

COLLAPSED_TAGS = ("NN", "VB", "JJ", "RB", "DT", "IN", "PRP", "UNK")

FEATURE_COLUMNS = (
    "word_len", "lem_word_len", "stopword", "number", "endword",
    "pos_NN", "pos_VB", "pos_JJ", "pos_RB", "pos_DT", "pos_IN", "pos_PRP",
    "pos_UNK",
    "tfidf",
)

FEATURE_GROUPS = {
    "word_len": ("word_len",),
    "lem_word_len": ("lem_word_len",),
    "stopword": ("stopword",),
    "number": ("number",),
    "endword": ("endword",),
    "pos": tuple(f"pos_{t}" for t in COLLAPSED_TAGS),
    "tfidf": ("tfidf",),
}

DEFAULT_TFIDF_ERROR = 0.1
_LOW_TFIDF_FALLBACK = 0.01
_LOW_TFIDF_WORDS = {"a", "A", "I"}

_TERM_RE = re.compile(r"[^\W_]{2,}", re.UNICODE)
_NUMBER_RE = re.compile(r"\d{1,3}(?:,\d{3})+(?:\.\d+)?|\d+(?:\.\d+)?")


def _load_asset(name: str) -> list[str]:
    text = resources.files("gazepred.data").joinpath(name).read_text("utf-8")
    return [line for line in text.splitlines() if line.strip()]


def _load_asset_pairs(name: str) -> dict[str, str]:
    pairs = {}
    for line in _load_asset(name):
        key, value = line.split("\t")
        pairs[key] = value
    return pairs


STOPWORDS = frozenset(_load_asset("stopwords.txt"))


def _strip_punct(text: str) -> str:
    return text.strip(string.punctuation)


def word_len(text: str) -> int:
    """Character count of the raw token text, punctuation included."""
    return len(text)


def is_stopword(text: str) -> int:
    """+1 if the lowercased, punctuation-stripped token is a stopword."""
    return 1 if _strip_punct(text).lower() in STOPWORDS else -1


def is_number(text: str) -> int:
    """+1 if the punctuation-stripped token is an integer or decimal numeral
    (comma thousands separators allowed)."""
    return 1 if _NUMBER_RE.fullmatch(_strip_punct(text)) else -1


def is_endword(token: Token, sentence: Sentence) -> int:
    """+1 if the token is the final token of its sentence."""
    last = sentence.tokens[-1]
    at_end = (token.sentence_id == last.sentence_id
              and token.word_id == last.word_id)
    return 1 if at_end else -1


def collapse_pos_tag(fine_tag: str) -> str:
    """Collapse a Penn-style fine tag into the 8-tag inventory."""
    if fine_tag.startswith("NN"):
        return "NN"
    if fine_tag.startswith("VB"):
        return "VB"
    if fine_tag.startswith("JJ"):
        return "JJ"
    if fine_tag.startswith("RB"):
        return "RB"
    if fine_tag in ("DT", "WDT"):
        return "DT"
    if fine_tag == "IN":
        return "IN"
    if fine_tag.startswith("PRP"):
        return "PRP"
    return "UNK"


def pos_onehot(collapsed_tag: str) -> np.ndarray:
    """One-hot vector over :data:`COLLAPSED_TAGS`."""
    try:
        index = COLLAPSED_TAGS.index(collapsed_tag)
    except ValueError:
        raise ConfigError(f"tag {collapsed_tag!r} is not in the collapsed "
                          f"set {COLLAPSED_TAGS}") from None
    vec = np.zeros(len(COLLAPSED_TAGS))
    vec[index] = 1.0
    return vec


# ---------------------------------------------------------------------------
# Lemmatizers
# ---------------------------------------------------------------------------

_VOWELS = set("aeiouy")
# Doubled finals that are usually part of the base word, not inflection.
_KEEP_DOUBLES = {"ll", "ss", "zz", "ff"}


def _has_vowel(stem: str) -> bool:
    return any(c in _VOWELS for c in stem)


def _undouble(stem: str) -> str:
    if (len(stem) >= 2 and stem[-1] == stem[-2]
            and stem[-1] not in _VOWELS and stem[-2:] not in _KEEP_DOUBLES):
        return stem[:-1]
    return stem


class RuleLemmatizer:
    """Suffix-stripping lemmatizer guarded by an exception table.

    Unknown or non-alphabetic words lemmatize to themselves.
    """

    def __init__(self):
        self._exceptions = _load_asset_pairs("lemma_exceptions.txt")

    def lemma(self, word: str) -> str:
        w = word.lower()
        if w in self._exceptions:
            return self._exceptions[w]
        if not w.isalpha():
            return word
        if len(w) >= 5 and w.endswith("ies"):
            return w[:-3] + "y"
        if len(w) >= 5 and w.endswith("es"):
            base = w[:-2]
            if base.endswith(("s", "x", "z", "ch", "sh")):
                return base
        if (len(w) >= 4 and w.endswith("s")
                and not w.endswith(("ss", "us", "is"))):
            return w[:-1]
        if len(w) >= 6 and w.endswith("ing"):
            stem = _undouble(w[:-3])
            if _has_vowel(stem):
                return stem
        if len(w) >= 5 and w.endswith("ed"):
            stem = _undouble(w[:-2])
            if stem.endswith("i"):
                stem = stem[:-1] + "y"
            if _has_vowel(stem):
                return stem
        return word

    def lemma_sentence(self, sentence: Sentence) -> list[str]:
        return [self.lemma(t.text) for t in sentence.tokens]


class SidecarLemmatizer:
    """Lemmas read from a CSV with columns sentence_id, word_id, lemma."""

    def __init__(self, table: dict[tuple[int, int], str]):
        self._table = table

    @classmethod
    def from_csv(cls, path: str | Path) -> "SidecarLemmatizer":
        return cls(_read_sidecar(path, "lemma"))

    def lemma_sentence(self, sentence: Sentence) -> list[str]:
        return [_sidecar_lookup(self._table, t, "lemma")
                for t in sentence.tokens]


def lemma_len_diff(text: str, lemmatizer) -> int:
    """Characters in the word minus characters in its lemma."""
    return len(text) - len(lemmatizer.lemma(text))


# ---------------------------------------------------------------------------
# Taggers
# ---------------------------------------------------------------------------

_NN_SUFFIXES = ("tion", "sion", "ment", "ness", "ity", "ance", "ence",
                "ship", "ism")
_JJ_SUFFIXES = ("ous", "ful", "ive", "able", "ible", "ish", "less", "ic",
                "al")


class LexiconTagger:
    """Unigram lexicon tagger with suffix heuristics, defaulting to NN."""

    def __init__(self):
        self._lexicon = _load_asset_pairs("tag_lexicon.txt")

    def _tag_word(self, text: str, sentence_initial: bool) -> str:
        stripped = _strip_punct(text)
        if stripped == "":
            return "."
        lowered = stripped.lower()
        if lowered in self._lexicon:
            return self._lexicon[lowered]
        if _NUMBER_RE.fullmatch(stripped):
            return "CD"
        if stripped[0].isupper() and not sentence_initial:
            return "NNP"
        if lowered.endswith("ly"):
            return "RB"
        if lowered.endswith("ing"):
            return "VBG"
        if lowered.endswith("ed"):
            return "VBD"
        if lowered.endswith(_NN_SUFFIXES):
            return "NN"
        if lowered.endswith(_JJ_SUFFIXES):
            return "JJ"
        if lowered.endswith("s") and not lowered.endswith("ss") and len(lowered) > 3:
            return "NNS"
        return "NN"

    def tag_sentence(self, sentence: Sentence) -> list[str]:
        return [self._tag_word(t.text, i == 0)
                for i, t in enumerate(sentence.tokens)]


class SidecarTagger:
    """Fine tags read from a CSV with columns sentence_id, word_id, tag."""

    def __init__(self, table: dict[tuple[int, int], str]):
        self._table = table

    @classmethod
    def from_csv(cls, path: str | Path) -> "SidecarTagger":
        return cls(_read_sidecar(path, "tag"))

    def tag_sentence(self, sentence: Sentence) -> list[str]:
        return [_sidecar_lookup(self._table, t, "tag")
                for t in sentence.tokens]


def _read_sidecar(path: str | Path, value_column: str) -> dict[tuple[int, int], str]:
    path = Path(path)
    table: dict[tuple[int, int], str] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for column in ("sentence_id", "word_id", value_column):
            if column not in header:
                raise SchemaError(f"{path}: missing required column '{column}'")
        for row in reader:
            key = (int(row["sentence_id"]), int(row["word_id"]))
            table[key] = row[value_column]
    return table


def _sidecar_lookup(table: dict, token: Token, kind: str) -> str:
    key = (token.sentence_id, token.word_id)
    if key not in table:
        raise ValidationError(
            f"sidecar {kind} file has no entry for (sentence_id, word_id) = "
            f"{key}")
    return table[key]


# ---------------------------------------------------------------------------
# TF-IDF
# ---------------------------------------------------------------------------

def _tfidf_term(text: str) -> str | None:
    lowered = text.lower()
    return lowered if _TERM_RE.fullmatch(lowered) else None


def compute_tfidf(corpus: Corpus,
                  tfidf_error: float = DEFAULT_TFIDF_ERROR
                  ) -> dict[tuple[int, int], float]:
    """Per-token TF-IDF with each sentence as its own document.

    Uses raw term counts, smoothed idf ``ln((1 + n_docs)/(1 + df)) + 1``, and
    l2 normalization of each document's term vector.  Tokens that do not form
    a term receive the fallback constants described in the module docstring.
    """
    if len(corpus) == 0:
        raise ValidationError("cannot compute TF-IDF on an empty corpus")

    vocab: dict[str, int] = {}
    doc_terms: list[list[str | None]] = []
    for sentence in corpus.sentences:
        terms = [_tfidf_term(t.text) for t in sentence.tokens]
        doc_terms.append(terms)
        for term in terms:
            if term is not None and term not in vocab:
                vocab[term] = len(vocab)

    n_docs = len(corpus)
    counts = np.zeros((n_docs, len(vocab)))
    for d, terms in enumerate(doc_terms):
        for term in terms:
            if term is not None:
                counts[d, vocab[term]] += 1.0

    if vocab:
        df = (counts > 0).sum(axis=0)
        idf = np.log((1.0 + n_docs) / (1.0 + df)) + 1.0
        weights = counts * idf
        norms = np.linalg.norm(weights, axis=1, keepdims=True)
        norms[norms == 0.0] = 1.0
        weights /= norms
    else:
        weights = counts

    values: dict[tuple[int, int], float] = {}
    for d, sentence in enumerate(corpus.sentences):
        for token, term in zip(sentence.tokens, doc_terms[d]):
            if term is None:
                value = (_LOW_TFIDF_FALLBACK if token.text in _LOW_TFIDF_WORDS
                         else tfidf_error)
            else:
                value = float(weights[d, vocab[term]])
            values[(token.sentence_id, token.word_id)] = value
    return values


# ---------------------------------------------------------------------------
# Assembly
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FeatureMatrix:
    """Per-token feature rows plus the column-name manifest.

    ``sentence_slices`` gives the (start, stop) row range of each sentence in
    corpus order, so models can process sentences individually.
    """

    matrix: np.ndarray
    columns: tuple[str, ...]
    sentence_slices: tuple[tuple[int, int], ...]

    @property
    def n_features(self) -> int:
        return self.matrix.shape[1]

    def sentence_rows(self, index: int) -> np.ndarray:
        start, stop = self.sentence_slices[index]
        return self.matrix[start:stop]

    def select(self, names: list[str] | tuple[str, ...]) -> "FeatureMatrix":
        """Restrict to a feature subset, by group name or column name."""
        columns = resolve_feature_names(names, self.columns)
        indices = [self.columns.index(c) for c in columns]
        return FeatureMatrix(self.matrix[:, indices].copy(), tuple(columns),
                             self.sentence_slices)


def resolve_feature_names(names, available=FEATURE_COLUMNS) -> list[str]:
    """Expand group names into column names, preserving manifest order.

    Raises :class:`ConfigError` for names that are neither a group nor a
    column of the manifest.
    """
    chosen: set[str] = set()
    for name in names:
        if name in FEATURE_GROUPS:
            chosen.update(FEATURE_GROUPS[name])
        elif name in available:
            chosen.add(name)
        else:
            raise ConfigError(
                f"unknown feature name {name!r}; valid groups: "
                f"{sorted(FEATURE_GROUPS)}; valid columns: {list(available)}")
    columns = [c for c in available if c in chosen]
    if not columns:
        raise ConfigError("feature subset is empty")
    return columns


def build_feature_matrix(corpus: Corpus, tagger=None, lemmatizer=None,
                         tfidf_error: float = DEFAULT_TFIDF_ERROR
                         ) -> FeatureMatrix:
    """Compute the full engineered feature matrix for a corpus.

    Column order is fixed by :data:`FEATURE_COLUMNS`; extraction is a pure
    function of (corpus, tagger, lemmatizer, tfidf_error).
    """
    tagger = tagger if tagger is not None else LexiconTagger()
    lemmatizer = lemmatizer if lemmatizer is not None else RuleLemmatizer()
    tfidf = compute_tfidf(corpus, tfidf_error)

    rows = []
    slices = []
    start = 0
    for sentence in corpus.sentences:
        fine_tags = tagger.tag_sentence(sentence)
        lemmas = lemmatizer.lemma_sentence(sentence)
        for token, fine_tag, lemma in zip(sentence.tokens, fine_tags, lemmas):
            onehot = pos_onehot(collapse_pos_tag(fine_tag))
            row = np.concatenate([
                [word_len(token.text),
                 len(token.text) - len(lemma),
                 is_stopword(token.text),
                 is_number(token.text),
                 is_endword(token, sentence)],
                onehot,
                [tfidf[(token.sentence_id, token.word_id)]],
            ])
            rows.append(row)
        slices.append((start, start + len(sentence)))
        start += len(sentence)
    return FeatureMatrix(np.array(rows, dtype=np.float64), FEATURE_COLUMNS,
                         tuple(slices))


def _format_value(value: float) -> str:
    if value == int(value):
        return str(int(value))
    return f"{value:.12g}"


def write_feature_csv(path: str | Path, corpus: Corpus,
                      features: FeatureMatrix) -> None:
    """Export the feature matrix with key columns and the manifest header."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sentence_id", "word_id", "word"]
                        + list(features.columns))
        i = 0
        for sentence in corpus.sentences:
            for token in sentence.tokens:
                writer.writerow(
                    [token.sentence_id, token.word_id, token.text]
                    + [_format_value(v) for v in features.matrix[i]])
                i += 1
