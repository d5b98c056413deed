import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gazepred import (
    ConfigError,
    GazeTargets,
    ParseError,
    SchemaError,
    ValidationError,
    load_corpus,
    split_train_val,
    write_predictions,
)
from conftest import random_targets, write_corpus_csv


def test_eos_rows_are_dropped_with_their_targets(tmp_path):
    path = tmp_path / "c.csv"
    write_corpus_csv(path, [["The", "cat"]],
                     [np.array([[1, 2, 3, 4, 5], [6, 7, 8, 9, 10]])])
    corpus = load_corpus(path)
    assert len(corpus) == 1
    sentence = corpus.sentences[0]
    assert sentence.words() == ["The", "cat"]
    assert len(sentence.targets) == 2
    assert sentence.targets[0] == GazeTargets(1, 2, 3, 4, 5)


def test_eos_stripping_is_idempotent(tmp_path):
    path = tmp_path / "c.csv"
    write_corpus_csv(path, [["The", "cat"]],
                     [np.array([[1, 2, 3, 4, 5], [6, 7, 8, 9, 10]])],
                     eos=False)
    corpus = load_corpus(path)
    assert corpus.sentences[0].words() == ["The", "cat"]


def test_eos_detection_trims_whitespace(tmp_path):
    path = tmp_path / "c.csv"
    path.write_text("sentence_id,word_id,word\n0,0,cat\n0,1, <EOS> \n")
    corpus = load_corpus(path, expect_targets=False)
    assert corpus.sentences[0].words() == ["cat"]


def test_test_set_without_target_columns(tmp_path):
    path = tmp_path / "test.csv"
    write_corpus_csv(path, [["The", "cat"], ["Dogs", "bark"]])
    corpus = load_corpus(path, expect_targets=False)
    assert not corpus.has_targets
    assert corpus.n_tokens() == 4


def test_placeholder_empty_target_columns_count_as_absent(tmp_path):
    path = tmp_path / "test.csv"
    path.write_text(
        "sentence_id,word_id,word,nFix,FFD,GPT,TRT,fixProp\n"
        "0,0,cat,,,,,\n")
    corpus = load_corpus(path, expect_targets=False)
    assert not corpus.has_targets


def test_populated_target_columns_load_even_when_not_expected(tmp_path):
    path = tmp_path / "test.csv"
    write_corpus_csv(path, [["The", "cat"]],
                     [np.array([[1, 2, 3, 4, 5], [6, 7, 8, 9, 10]])])
    corpus = load_corpus(path, expect_targets=False)
    assert corpus.has_targets


def test_missing_column_names_the_column(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("sentence_id,word,nFix,FFD,GPT,TRT,fixProp\n0,cat,1,2,3,4,5\n")
    with pytest.raises(SchemaError, match="word_id"):
        load_corpus(path)


def test_missing_target_column_when_expected(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("sentence_id,word_id,word,nFix,FFD,GPT,TRT\n0,0,cat,1,2,3,4\n")
    with pytest.raises(SchemaError, match="fixProp"):
        load_corpus(path, expect_targets=True)


def test_non_numeric_target_reports_row_number(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text(
        "sentence_id,word_id,word,nFix,FFD,GPT,TRT,fixProp\n"
        "0,0,cat,1,2,3,4,5\n"
        "0,1,dog,oops,2,3,4,5\n")
    with pytest.raises(ParseError, match="row 3"):
        load_corpus(path)


def test_out_of_range_gold_target_rejected(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text(
        "sentence_id,word_id,word,nFix,FFD,GPT,TRT,fixProp\n"
        "0,0,cat,-1,2,3,4,5\n")
    with pytest.raises(ValidationError, match="nFix"):
        load_corpus(path)


def test_above_range_gold_target_rejected(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text(
        "sentence_id,word_id,word,nFix,FFD,GPT,TRT,fixProp\n"
        "0,0,cat,1,2,3,4,100.5\n")
    with pytest.raises(ValidationError, match="fixProp"):
        load_corpus(path)


def test_duplicate_key_rejected(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text(
        "sentence_id,word_id,word\n0,0,cat\n0,0,dog\n")
    with pytest.raises(ValidationError, match=r"\(0, 0\)"):
        load_corpus(path, expect_targets=False)


def test_rows_sorted_by_word_id_within_sentence(tmp_path):
    path = tmp_path / "c.csv"
    path.write_text(
        "sentence_id,word_id,word\n0,1,cat\n0,0,The\n1,0,Dogs\n")
    corpus = load_corpus(path, expect_targets=False)
    assert corpus.sentences[0].words() == ["The", "cat"]
    assert [s.sentence_id for s in corpus.sentences] == [0, 1]


# -- split_train_val --------------------------------------------------------

def _ten_sentence_corpus(tmp_path):
    rng = np.random.default_rng(0)
    sentences = [[f"w{i}a", f"w{i}b"] for i in range(10)]
    targets = [random_targets(rng, 2) for _ in sentences]
    path = tmp_path / "ten.csv"
    write_corpus_csv(path, sentences, targets)
    return load_corpus(path)


def test_split_counts(tmp_path):
    corpus = _ten_sentence_corpus(tmp_path)
    train, val = split_train_val(corpus, 0.8, seed=7)
    assert len(train) == 8
    assert len(val) == 2
    train_ids = {s.sentence_id for s in train.sentences}
    val_ids = {s.sentence_id for s in val.sentences}
    assert not train_ids & val_ids
    assert train_ids | val_ids == {s.sentence_id for s in corpus.sentences}


def test_split_deterministic(tmp_path):
    corpus = _ten_sentence_corpus(tmp_path)
    a = split_train_val(corpus, 0.8, seed=7)
    b = split_train_val(corpus, 0.8, seed=7)
    assert [s.sentence_id for s in a[0].sentences] == \
        [s.sentence_id for s in b[0].sentences]


def test_split_ratio_one_errors(tmp_path):
    corpus = _ten_sentence_corpus(tmp_path)
    with pytest.raises(ConfigError):
        split_train_val(corpus, 1.0, seed=0)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1),
       ratio=st.floats(0.2, 0.8))
def test_split_is_a_partition_for_all_seeds(seed, ratio, tmp_path_factory):
    corpus = _ten_sentence_corpus(tmp_path_factory.mktemp("split"))
    train, val = split_train_val(corpus, ratio, seed)
    train_ids = [s.sentence_id for s in train.sentences]
    val_ids = [s.sentence_id for s in val.sentences]
    assert len(train_ids) + len(val_ids) == len(corpus)
    assert not set(train_ids) & set(val_ids)
    assert set(train_ids) | set(val_ids) == \
        {s.sentence_id for s in corpus.sentences}


# -- write_predictions ------------------------------------------------------

def test_write_predictions_round_trip(tmp_path, small_corpus):
    rng = np.random.default_rng(5)
    predictions = [GazeTargets(*rng.uniform(0, 100, 5))
                   for _ in range(small_corpus.n_tokens())]
    out = tmp_path / "pred.csv"
    write_predictions(out, small_corpus, predictions)
    loaded = load_corpus(out)
    assert loaded.n_tokens() == small_corpus.n_tokens()
    for orig, back in zip(small_corpus.tokens(), loaded.tokens()):
        assert (orig.sentence_id, orig.word_id, orig.text) == \
            (back.sentence_id, back.word_id, back.text)
    got = loaded.targets_matrix()
    want = np.stack([p.as_array() for p in predictions])
    assert np.allclose(got, want, atol=5e-5)  # 4 printed decimals


def test_write_predictions_clips_and_formats(tmp_path, small_corpus):
    predictions = [GazeTargets(103.2, -5.0, 50.0, 50.0, 50.0)
                   for _ in range(small_corpus.n_tokens())]
    out = tmp_path / "pred.csv"
    write_predictions(out, small_corpus, predictions)
    first_row = out.read_text().splitlines()[1].split(",")
    assert first_row[3] == "100.0000"
    assert first_row[4] == "0.0000"


def test_write_predictions_alignment_error(tmp_path, small_corpus):
    predictions = [GazeTargets(1, 2, 3, 4, 5)] * (small_corpus.n_tokens() - 1)
    with pytest.raises(ValidationError, match="expected"):
        write_predictions(tmp_path / "pred.csv", small_corpus, predictions)
