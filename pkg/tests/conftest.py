import csv
from pathlib import Path

import numpy as np
import pytest

from gazepred import load_corpus

SAMPLE_CSV = Path(__file__).resolve().parent.parent / "demos" / "data" / "sample_train.csv"
MINI_EMBEDDINGS = Path(__file__).resolve().parent.parent / "demos" / "data" / "mini_embeddings.txt"


def write_corpus_csv(path, sentences, targets=None, eos=True):
    """sentences: list of token lists; targets: parallel (T, 5) arrays."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        header = ["sentence_id", "word_id", "word"]
        if targets is not None:
            header += ["nFix", "FFD", "GPT", "TRT", "fixProp"]
        writer.writerow(header)
        for sid, tokens in enumerate(sentences):
            for wid, token in enumerate(tokens):
                row = [sid, wid, token]
                if targets is not None:
                    row += [f"{v:.4f}" for v in targets[sid][wid]]
                writer.writerow(row)
            if eos:
                row = [sid, len(tokens), "<EOS>"]
                if targets is not None:
                    row += ["0", "0", "0", "0", "0"]
                writer.writerow(row)


def random_targets(rng, n_tokens):
    """Valid random gold rows: all five in [0, 100]."""
    return rng.uniform(0.0, 100.0, size=(n_tokens, 5))


@pytest.fixture
def small_corpus(tmp_path):
    """Six short sentences with EOS markers and valid targets."""
    rng = np.random.default_rng(123)
    sentences = [
        ["The", "cat", "sat."],
        ["Dogs", "bark", "loudly", "today."],
        ["A", "telescope", "revealed", "3", "galaxies."],
        ["She", "finished", "the", "report."],
        ["Storms", "interrupted", "the", "concert."],
        ["He", "bought", "2,500", "shares."],
    ]
    targets = [random_targets(rng, len(s)) for s in sentences]
    path = tmp_path / "small.csv"
    write_corpus_csv(path, sentences, targets)
    return load_corpus(path)


@pytest.fixture
def sample_corpus():
    return load_corpus(SAMPLE_CSV)


# ---------------------------------------------------------------------------
# Acceptance summary: one line per criterion at the end of the run
# ---------------------------------------------------------------------------

_ACCEPTANCE_RESULTS = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup"
                                      and report.skipped):
        return
    if "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.passed:
        outcome = "PASS"
    elif report.skipped:
        outcome = "SKIP"
    else:
        outcome = "FAIL"
    _ACCEPTANCE_RESULTS[name] = outcome


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE_RESULTS):
        outcome = _ACCEPTANCE_RESULTS[name]
        terminalreporter.write_line(f"{outcome:5s} {name}")
