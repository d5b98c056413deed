"""Corpus I/O: the token-level gaze CSV, train/validation splitting, and
prediction serialization.

The corpus format is a UTF-8 comma-separated file with columns
``sentence_id, word_id, word`` and, for gold data, the five target columns
``nFix, FFD, GPT, TRT, fixProp`` (each scaled to lie in [0, 100]).
Sentence-final ``<EOS>`` marker tokens are dropped on load, together with
their target rows.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ParseError, SchemaError, ValidationError

TARGET_NAMES = ("nFix", "FFD", "GPT", "TRT", "fixProp")
EOS_MARKER = "<EOS>"

_KEY_COLUMNS = ("sentence_id", "word_id", "word")


@dataclass(frozen=True)
class GazeTargets:
    """The five per-token gaze measures, in original [0, 100] units."""

    nFix: float
    FFD: float
    GPT: float
    TRT: float
    fixProp: float

    def as_array(self) -> np.ndarray:
        return np.array([self.nFix, self.FFD, self.GPT, self.TRT, self.fixProp],
                        dtype=np.float64)

    @classmethod
    def from_array(cls, values) -> "GazeTargets":
        v = [float(x) for x in values]
        if len(v) != 5:
            raise ValidationError(f"expected 5 target values, got {len(v)}")
        return cls(*v)


@dataclass(frozen=True)
class Token:
    sentence_id: int
    word_id: int
    text: str


@dataclass
class Sentence:
    sentence_id: int
    tokens: list[Token]
    targets: list[GazeTargets] | None = None

    def __len__(self) -> int:
        return len(self.tokens)

    def words(self) -> list[str]:
        return [t.text for t in self.tokens]

    def targets_matrix(self) -> np.ndarray:
        """Gold targets as a (T, 5) float64 array."""
        if self.targets is None:
            raise ValidationError(
                f"sentence {self.sentence_id} carries no targets")
        return np.stack([t.as_array() for t in self.targets])


@dataclass
class Corpus:
    sentences: list[Sentence] = field(default_factory=list)
    has_targets: bool = False

    def __len__(self) -> int:
        return len(self.sentences)

    def n_tokens(self) -> int:
        return sum(len(s) for s in self.sentences)

    def tokens(self) -> list[Token]:
        return [t for s in self.sentences for t in s.tokens]

    def targets_matrix(self) -> np.ndarray:
        """All gold targets pooled across sentences, shape (N, 5)."""
        if not self.has_targets:
            raise ValidationError("corpus carries no targets")
        return np.concatenate([s.targets_matrix() for s in self.sentences])


def _parse_int(value: str, column: str, row_number: int) -> int:
    try:
        return int(value)
    except (TypeError, ValueError):
        raise ParseError(
            f"row {row_number}: column '{column}' is not an integer: {value!r}"
        ) from None


def _parse_target(value: str, column: str, row_number: int) -> float:
    try:
        parsed = float(value)
    except (TypeError, ValueError):
        raise ParseError(
            f"row {row_number}: column '{column}' is not numeric: {value!r}"
        ) from None
    if not np.isfinite(parsed) or parsed < 0.0 or parsed > 100.0:
        raise ValidationError(
            f"row {row_number}: column '{column}' out of the [0, 100] "
            f"target range: {value!r}")
    return parsed


def load_corpus(path: str | Path, expect_targets: bool = True) -> Corpus:
    """Read a gaze CSV into a :class:`Corpus`.

    Rows are grouped into sentences by ``sentence_id`` (in order of first
    appearance) and sorted by ``word_id`` within each sentence.  Tokens whose
    trimmed text equals ``<EOS>`` are dropped along with their target values.

    With ``expect_targets=True`` the five target columns are required and
    validated; with ``expect_targets=False`` targets are loaded only when all
    five columns are present and fully populated, otherwise the corpus is
    returned without targets (test files may or may not carry placeholder
    columns).
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames
        if header is None:
            raise SchemaError(f"{path}: empty file, no header row")
        for column in _KEY_COLUMNS:
            if column not in header:
                raise SchemaError(f"{path}: missing required column '{column}'")
        targets_present = all(c in header for c in TARGET_NAMES)
        if expect_targets and not targets_present:
            missing = [c for c in TARGET_NAMES if c not in header]
            raise SchemaError(f"{path}: missing target column '{missing[0]}'")
        rows = list(reader)

    read_targets = targets_present
    if not expect_targets and targets_present:
        # Placeholder target columns with empty cells count as "no targets".
        read_targets = all(
            all((row.get(c) or "").strip() != "" for c in TARGET_NAMES)
            for row in rows)

    by_sentence: dict[int, list[tuple[int, str, GazeTargets | None]]] = {}
    seen: set[tuple[int, int]] = set()
    for i, row in enumerate(rows):
        row_number = i + 2  # 1-based, counting the header line
        sid = _parse_int(row["sentence_id"], "sentence_id", row_number)
        wid = _parse_int(row["word_id"], "word_id", row_number)
        if (sid, wid) in seen:
            raise ValidationError(
                f"row {row_number}: duplicate (sentence_id, word_id) = "
                f"({sid}, {wid})")
        seen.add((sid, wid))
        word = row["word"] if row["word"] is not None else ""
        if word.strip() == EOS_MARKER:
            continue
        if word == "":
            raise ValidationError(f"row {row_number}: empty word")
        targets = None
        if read_targets:
            targets = GazeTargets(*(
                _parse_target(row[c], c, row_number) for c in TARGET_NAMES))
        by_sentence.setdefault(sid, []).append((wid, word, targets))

    if not by_sentence:
        raise ValidationError(f"{path}: no tokens after EOS stripping")

    sentences = []
    for sid, entries in by_sentence.items():
        entries.sort(key=lambda e: e[0])
        tokens = [Token(sid, wid, word) for wid, word, _ in entries]
        targets = [t for _, _, t in entries] if read_targets else None
        sentences.append(Sentence(sid, tokens, targets))
    return Corpus(sentences, has_targets=read_targets)


def split_train_val(corpus: Corpus, train_ratio: float,
                    seed: int) -> tuple[Corpus, Corpus]:
    """Partition a corpus into (train, validation) at sentence granularity.

    The assignment depends only on the seed, the set of sentence ids, and the
    ratio, so repeated calls with equal inputs give identical partitions.
    """
    if not corpus.has_targets:
        raise ValidationError("cannot split a corpus without targets")
    if not 0.0 < train_ratio < 1.0:
        raise ConfigError(f"train_ratio must lie in (0, 1), got {train_ratio}")
    ids = sorted(s.sentence_id for s in corpus.sentences)
    n_train = int(round(len(ids) * train_ratio))
    if n_train == 0 or n_train == len(ids):
        raise ConfigError(
            f"train_ratio {train_ratio} leaves an empty partition for "
            f"{len(ids)} sentences")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(ids))
    train_ids = {ids[i] for i in perm[:n_train]}
    train = [s for s in corpus.sentences if s.sentence_id in train_ids]
    val = [s for s in corpus.sentences if s.sentence_id not in train_ids]
    return Corpus(train, has_targets=True), Corpus(val, has_targets=True)


def write_predictions(path: str | Path, corpus: Corpus,
                      predictions: list[GazeTargets],
                      decimals: int = 4) -> None:
    """Write per-token predictions as a gaze CSV.

    Predictions must align one-to-one with the corpus tokens.  Values are
    clipped to [0, 100] and printed with a fixed number of decimal places.
    """
    n_tokens = corpus.n_tokens()
    if len(predictions) != n_tokens:
        raise ValidationError(
            f"prediction/token alignment mismatch: expected {n_tokens}, "
            f"got {len(predictions)}")
    fmt = f"{{:.{decimals}f}}"
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(_KEY_COLUMNS) + list(TARGET_NAMES))
        i = 0
        for sentence in corpus.sentences:
            for token in sentence.tokens:
                values = np.clip(predictions[i].as_array(), 0.0, 100.0)
                writer.writerow(
                    [token.sentence_id, token.word_id, token.text]
                    + [fmt.format(v) for v in values])
                i += 1
