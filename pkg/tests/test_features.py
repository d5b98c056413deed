import math
import re

import numpy as np
import pytest

from gazepred import (
    COLLAPSED_TAGS,
    ConfigError,
    FEATURE_COLUMNS,
    LexiconTagger,
    RuleLemmatizer,
    SidecarLemmatizer,
    SidecarTagger,
    Token,
    ValidationError,
    build_feature_matrix,
    collapse_pos_tag,
    compute_tfidf,
    is_endword,
    is_number,
    is_stopword,
    lemma_len_diff,
    load_corpus,
    pos_onehot,
    word_len,
)
from gazepred.corpus import Corpus, Sentence
from conftest import write_corpus_csv


def make_corpus(token_lists):
    sentences = []
    for sid, tokens in enumerate(token_lists):
        sentences.append(Sentence(sid, [Token(sid, wid, text)
                                        for wid, text in enumerate(tokens)]))
    return Corpus(sentences, has_targets=False)


# -- scalar extractors -------------------------------------------------------

def test_word_len():
    assert word_len("cat") == 3
    assert word_len("didn't") == 6
    assert word_len("a") == 1


def test_lemma_len_diff():
    lem = RuleLemmatizer()
    assert lem.lemma("running") == "run"
    assert lemma_len_diff("running", lem) == 4
    assert lemma_len_diff("cat", lem) == 0
    assert lemma_len_diff("7", lem) == 0
    assert lemma_len_diff("stories", lem) == 2
    assert lemma_len_diff("Making", lem) == 2  # case-insensitive lookup


def test_stopword_flag():
    assert is_stopword("the") == 1
    assert is_stopword("telescope") == -1
    assert is_stopword("The,") == 1  # strip punctuation, then lowercase


def test_number_flag():
    assert is_number("1984") == 1
    assert is_number("3.5") == 1
    assert is_number("2,500") == 1
    assert is_number("three") == -1
    assert is_number("3rd") == -1


def test_endword_flag():
    corpus = make_corpus([["The", "cat", "sat."], ["Hi"]])
    sentence = corpus.sentences[0]
    assert is_endword(sentence.tokens[-1], sentence) == 1
    assert is_endword(sentence.tokens[0], sentence) == -1
    single = corpus.sentences[1]
    assert is_endword(single.tokens[0], single) == 1


def test_collapse_pos_tag_table():
    assert collapse_pos_tag("NNP") == "NN"
    assert collapse_pos_tag("NNS") == "NN"
    assert collapse_pos_tag("VBZ") == "VB"
    assert collapse_pos_tag("JJR") == "JJ"
    assert collapse_pos_tag("RBS") == "RB"
    assert collapse_pos_tag("WDT") == "DT"
    assert collapse_pos_tag("DT") == "DT"
    assert collapse_pos_tag("IN") == "IN"
    assert collapse_pos_tag("PRP$") == "PRP"
    assert collapse_pos_tag("UH") == "UNK"
    assert collapse_pos_tag("WRB") == "UNK"  # prefix rules do not catch WRB
    assert collapse_pos_tag("") == "UNK"


def test_pos_onehot():
    assert np.array_equal(pos_onehot("NN"),
                          [1, 0, 0, 0, 0, 0, 0, 0])
    assert np.array_equal(pos_onehot("UNK"),
                          [0, 0, 0, 0, 0, 0, 0, 1])
    for tag in COLLAPSED_TAGS:
        assert pos_onehot(tag).sum() == 1
    with pytest.raises(ConfigError):
        pos_onehot("XYZ")


# -- TF-IDF: brute-force oracle ----------------------------------------------

def tfidf_oracle(token_lists, tfidf_error=0.1):
    """Independent reference: plain dicts and loops, no shared code with the
    library implementation.

    Documents are sentences.  A token yields a term iff its lowercased text
    is one alphanumeric run of length >= 2.  tf = raw count, idf =
    ln((1 + n_docs)/(1 + df)) + 1, document vectors l2-normalized.  Tokens
    without a term fall back to 0.01 for "a"/"A"/"I" and tfidf_error
    otherwise.
    """
    pattern = re.compile(r"[^\W_]{2,}", re.UNICODE)

    def term_of(text):
        lowered = text.lower()
        return lowered if pattern.fullmatch(lowered) else None

    n_docs = len(token_lists)
    doc_counts = []
    for tokens in token_lists:
        counts = {}
        for text in tokens:
            term = term_of(text)
            if term is not None:
                counts[term] = counts.get(term, 0) + 1
        doc_counts.append(counts)

    df = {}
    for counts in doc_counts:
        for term in counts:
            df[term] = df.get(term, 0) + 1

    values = {}
    for d, tokens in enumerate(token_lists):
        weights = {}
        for term, count in doc_counts[d].items():
            idf = math.log((1.0 + n_docs) / (1.0 + df[term])) + 1.0
            weights[term] = count * idf
        norm = math.sqrt(sum(w * w for w in weights.values()))
        for wid, text in enumerate(tokens):
            term = term_of(text)
            if term is None:
                values[(d, wid)] = 0.01 if text in ("a", "A", "I") \
                    else tfidf_error
            else:
                values[(d, wid)] = weights[term] / norm
    return values


def test_tfidf_two_document_example():
    corpus = make_corpus([["good", "morning"], ["good", "night"]])
    values = compute_tfidf(corpus)
    assert values[(0, 0)] == pytest.approx(0.580, abs=5e-4)
    assert values[(0, 1)] == pytest.approx(0.815, abs=5e-4)
    oracle = tfidf_oracle([["good", "morning"], ["good", "night"]])
    for key, want in oracle.items():
        assert values[key] == pytest.approx(want, abs=1e-12)


def test_tfidf_fallback_routing():
    corpus = make_corpus([["I", "a", "A", "7", "x", "well-known", "ok"]])
    values = compute_tfidf(corpus)
    assert values[(0, 0)] == 0.01  # "I"
    assert values[(0, 1)] == 0.01  # "a"
    assert values[(0, 2)] == 0.01  # "A"
    assert values[(0, 3)] == 0.1   # single digit
    assert values[(0, 4)] == 0.1   # single letter
    assert values[(0, 5)] == 0.1   # contains "-"
    assert values[(0, 6)] == 1.0   # only matched term, l2 norm of itself


def test_tfidf_error_hyperparameter():
    corpus = make_corpus([["7", "ok", "fine"]])
    values = compute_tfidf(corpus, tfidf_error=0.25)
    assert values[(0, 0)] == 0.25


def test_tfidf_matches_oracle_on_random_corpora():
    rng = np.random.default_rng(2024)
    words = ["good", "morning", "night", "The", "cat", "sat", "a", "I",
             "7", "well-known", "dogs", "bark", "2,500", "x", "Mat.",
             "reading", "morning"]
    for trial in range(30):
        n_sentences = int(rng.integers(1, 21))
        token_lists = []
        for _ in range(n_sentences):
            n_tokens = int(rng.integers(1, 16))
            token_lists.append(
                [words[int(rng.integers(0, len(words)))]
                 for _ in range(n_tokens)])
        corpus = make_corpus(token_lists)
        mine = compute_tfidf(corpus)
        want = tfidf_oracle(token_lists)
        assert mine.keys() == want.keys()
        for key in want:
            assert abs(mine[key] - want[key]) < 1e-9, (trial, key)


def test_tfidf_corpus_order_invariance():
    lists = [["good", "morning"], ["good", "night"], ["cats", "sleep"]]
    forward = compute_tfidf(make_corpus(lists))
    reordered = make_corpus(lists[::-1])
    backward = compute_tfidf(reordered)
    # sentence ids in the reordered corpus are renumbered 0,1,2 over the
    # reversed lists; compare by content position
    assert forward[(0, 0)] == pytest.approx(backward[(2, 0)], abs=1e-15)
    assert forward[(2, 1)] == pytest.approx(backward[(0, 1)], abs=1e-15)


# -- taggers / sidecars ------------------------------------------------------

def test_lexicon_tagger_basics():
    tagger = LexiconTagger()
    corpus = make_corpus([["The", "cats", "ran", "quickly", "to", "Paris",
                           "in", "1984", "today."]])
    tags = tagger.tag_sentence(corpus.sentences[0])
    assert tags[0] == "DT"
    assert tags[1] == "NNS"
    assert tags[3] == "RB"
    assert tags[5] == "NNP"  # capitalized, not sentence-initial
    assert tags[6] == "IN"
    assert tags[7] == "CD"


def test_sidecar_tagger_and_unknown_key(tmp_path):
    sidecar = tmp_path / "tags.csv"
    sidecar.write_text("sentence_id,word_id,tag\n0,0,DT\n0,1,NN\n")
    tagger = SidecarTagger.from_csv(sidecar)
    corpus = make_corpus([["The", "cat", "sat"]])
    with pytest.raises(ValidationError, match=r"\(0, 2\)"):
        tagger.tag_sentence(corpus.sentences[0])


def test_sidecar_lemmatizer(tmp_path):
    sidecar = tmp_path / "lemmas.csv"
    sidecar.write_text(
        "sentence_id,word_id,lemma\n0,0,the\n0,1,cat\n0,2,sit\n")
    lemmatizer = SidecarLemmatizer.from_csv(sidecar)
    corpus = make_corpus([["The", "cats", "sat"]])
    assert lemmatizer.lemma_sentence(corpus.sentences[0]) == \
        ["the", "cat", "sit"]


# -- assembly ----------------------------------------------------------------

def test_feature_matrix_shape_and_manifest():
    corpus = make_corpus([["The", "cat"]])
    features = build_feature_matrix(corpus)
    assert features.matrix.shape == (2, len(FEATURE_COLUMNS))
    assert features.columns == FEATURE_COLUMNS
    assert features.n_features == 14  # 5 scalars + 8 POS one-hot + tfidf


def test_feature_matrix_row_values():
    corpus = make_corpus([["The", "cat"]])
    features = build_feature_matrix(corpus)
    row = dict(zip(features.columns, features.matrix[0]))
    assert row["word_len"] == 3
    assert row["stopword"] == 1
    assert row["number"] == -1
    assert row["endword"] == -1
    assert row["pos_DT"] == 1
    pos = [v for k, v in row.items() if k.startswith("pos_")]
    assert sum(pos) == 1


def test_feature_subset_selection():
    corpus = make_corpus([["The", "cat"]])
    features = build_feature_matrix(corpus)
    only = features.select(["word_len"])
    assert only.matrix.shape == (2, 1)
    pos = features.select(["pos"])
    assert pos.matrix.shape == (2, 8)
    with pytest.raises(ConfigError):
        features.select(["no_such_feature"])


def test_feature_matrix_deterministic():
    corpus = make_corpus([["The", "cat", "sat."], ["Dogs", "bark"]])
    a = build_feature_matrix(corpus)
    b = build_feature_matrix(corpus)
    assert np.array_equal(a.matrix, b.matrix)


def test_feature_invariants_on_sample(sample_corpus):
    features = build_feature_matrix(sample_corpus)
    m = features.matrix
    cols = features.columns
    assert np.all(m[:, cols.index("word_len")] >= 1)
    for flag in ("stopword", "number", "endword"):
        assert set(np.unique(m[:, cols.index(flag)])) <= {-1.0, 1.0}
    pos_block = m[:, [i for i, c in enumerate(cols) if c.startswith("pos_")]]
    assert np.array_equal(pos_block.sum(axis=1), np.ones(m.shape[0]))
    assert np.all(m[:, cols.index("tfidf")] >= 0)
