"""Metrics (MAE, coefficient of determination), the ablation harness, and
the exploratory-statistics emitters (target correlations, flag-group means,
scatter data).

All metrics operate in original target units: predictions enter after the
GPT residual has been restored and values clipped to [0, 100].  R2 is pooled
over all tokens of the corpus, not averaged per sentence.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Corpus, GazeTargets, TARGET_NAMES
from .errors import ValidationError
from .features import (
    FEATURE_COLUMNS,
    build_feature_matrix,
    is_endword,
    is_stopword,
    resolve_feature_names,
)


def mae(pred, gold) -> float:
    """Mean absolute error between two equal-length vectors."""
    p = np.asarray(pred, dtype=np.float64).ravel()
    g = np.asarray(gold, dtype=np.float64).ravel()
    if p.shape != g.shape:
        raise ValidationError(f"length mismatch: {p.shape} vs {g.shape}")
    if p.size == 0:
        raise ValidationError("mae of empty vectors")
    return float(np.mean(np.abs(p - g)))


def r2(pred, gold) -> float:
    """Coefficient of determination, 1 - SS_res/SS_tot (upper bound 1)."""
    p = np.asarray(pred, dtype=np.float64).ravel()
    g = np.asarray(gold, dtype=np.float64).ravel()
    if p.shape != g.shape:
        raise ValidationError(f"length mismatch: {p.shape} vs {g.shape}")
    if p.size < 2:
        raise ValidationError("r2 needs at least 2 points")
    ss_tot = float(np.sum((g - g.mean()) ** 2))
    if ss_tot == 0.0:
        raise ValidationError("r2 undefined for constant gold values")
    ss_res = float(np.sum((g - p) ** 2))
    return 1.0 - ss_res / ss_tot


def r2_or_nan(pred, gold) -> float:
    """R2, or NaN where it is undefined (degenerate gold)."""
    try:
        return r2(pred, gold)
    except ValidationError:
        return float("nan")


@dataclass
class Metrics:
    """Per-target MAE and R2 plus the mean/std of R2 across targets."""

    per_target_mae: dict[str, float]
    per_target_r2: dict[str, float]
    mean_r2: float
    std_r2: float

    def to_csv(self, path: str | Path) -> None:
        lines = ["target,mae,r2"]
        for name in TARGET_NAMES:
            lines.append(f"{name},{repr(self.per_target_mae[name])},"
                         f"{repr(self.per_target_r2[name])}")
        lines.append(f"mean_R2,,{repr(self.mean_r2)}")
        lines.append(f"std_R2,,{repr(self.std_r2)}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def evaluate(predictions: list[GazeTargets], corpus: Corpus) -> Metrics:
    """Pool all tokens and compute per-target MAE and R2 in original units."""
    if not corpus.has_targets:
        raise ValidationError("evaluation corpus carries no targets")
    n_tokens = corpus.n_tokens()
    if len(predictions) != n_tokens:
        raise ValidationError(
            f"prediction/token alignment mismatch: expected {n_tokens}, "
            f"got {len(predictions)}")
    pred = np.stack([p.as_array() for p in predictions])
    gold = corpus.targets_matrix()
    per_mae = {}
    per_r2 = {}
    for j, name in enumerate(TARGET_NAMES):
        per_mae[name] = mae(pred[:, j], gold[:, j])
        per_r2[name] = r2(pred[:, j], gold[:, j])
    values = np.array([per_r2[n] for n in TARGET_NAMES])
    return Metrics(per_mae, per_r2, float(values.mean()),
                   float(values.std()))


@dataclass
class AblationReport:
    """One row per feature subset, all trained on the same split and seed."""

    rows: list[dict]
    seed: int

    def to_csv(self, path: str | Path) -> None:
        header = (["subset", "mean_r2", "std_r2"]
                  + [f"r2_{t}" for t in TARGET_NAMES] + ["seed"])
        lines = [",".join(header)]
        for row in self.rows:
            cells = [row["subset"], repr(row["mean_r2"]), repr(row["std_r2"])]
            cells += [repr(row["per_target_r2"][t]) for t in TARGET_NAMES]
            cells.append(str(self.seed))
            lines.append(",".join(cells))
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def run_ablation(corpus: Corpus, train_cfg, model_cfg, embeddings,
                 subsets: list[tuple[str, list[str]]], tagger=None,
                 lemmatizer=None) -> AblationReport:
    """Retrain per feature subset and evaluate each on the validation split.

    All subset names are validated against the feature manifest before any
    training starts; every row shares the same split, seed, and targets.
    """
    from .corpus import split_train_val
    from .model import predict
    from .training import train

    for _, names in subsets:
        resolve_feature_names(names)

    train_c, val_c = split_train_val(corpus, train_cfg.train_ratio,
                                     train_cfg.seed)
    rows = []
    for subset_name, names in subsets:
        result = train(train_c, train_cfg, model_cfg, embeddings,
                       tagger=tagger, lemmatizer=lemmatizer,
                       feature_names=names, val_corpus=val_c)
        metrics = evaluate(predict(val_c, result.pipeline), val_c)
        rows.append({
            "subset": subset_name,
            "mean_r2": metrics.mean_r2,
            "std_r2": metrics.std_r2,
            "per_target_r2": metrics.per_target_r2,
        })
    return AblationReport(rows, seed=train_cfg.seed)


def single_feature_subsets() -> list[tuple[str, list[str]]]:
    """The seven one-feature-group ablation rows."""
    groups = ["word_len", "lem_word_len", "stopword", "number", "endword",
              "tfidf", "pos"]
    return [(g, [g]) for g in groups]


def drop_one_subsets() -> list[tuple[str, list[str]]]:
    """Seven leave-one-group-out ablation rows."""
    groups = ["word_len", "lem_word_len", "stopword", "number", "endword",
              "tfidf", "pos"]
    return [(f"all_minus_{g}", [h for h in groups if h != g])
            for g in groups]


def target_correlations(corpus: Corpus) -> np.ndarray:
    """Pearson correlations between the five targets, shape (5, 5).

    Rows/columns of constant targets are set to NaN (undefined marker).
    """
    gold = corpus.targets_matrix()
    if gold.shape[0] < 2:
        raise ValidationError("correlations need at least 2 tokens")
    stds = gold.std(axis=0)
    matrix = np.full((5, 5), np.nan)
    valid = stds > 0.0
    if valid.any():
        sub = np.corrcoef(gold[:, valid].T)
        indices = np.flatnonzero(valid)
        for a, i in enumerate(indices):
            for b, j in enumerate(indices):
                matrix[i, j] = sub[a, b] if sub.ndim else float(sub)
    return matrix


def write_correlations_csv(path: str | Path, matrix: np.ndarray) -> None:
    lines = ["," + ",".join(TARGET_NAMES)]
    for i, name in enumerate(TARGET_NAMES):
        lines.append(name + "," + ",".join(repr(v) for v in matrix[i]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def group_stats(corpus: Corpus, flag_feature: str,
                target_name: str) -> dict[int, tuple[float, int]]:
    """Mean of a target within the +1/-1 groups of a flag feature.

    Returns {+1: (mean, count), -1: (mean, count)}; an empty group reports
    count 0 and a NaN mean.
    """
    if flag_feature not in ("stopword", "endword"):
        raise ValidationError(
            f"group_stats supports 'stopword' or 'endword', got "
            f"{flag_feature!r}")
    if target_name not in TARGET_NAMES:
        raise ValidationError(f"unknown target {target_name!r}")
    column = TARGET_NAMES.index(target_name)
    values = {1: [], -1: []}
    for sentence in corpus.sentences:
        gold = sentence.targets_matrix()
        for i, token in enumerate(sentence.tokens):
            if flag_feature == "stopword":
                flag = is_stopword(token.text)
            else:
                flag = is_endword(token, sentence)
            values[flag].append(gold[i, column])
    out = {}
    for flag, collected in values.items():
        if collected:
            out[flag] = (float(np.mean(collected)), len(collected))
        else:
            out[flag] = (float("nan"), 0)
    return out


def write_group_stats_csv(path: str | Path, corpus: Corpus) -> None:
    """All (flag, target) group means as one CSV."""
    lines = ["feature,target,group,mean,count"]
    for flag_feature in ("stopword", "endword"):
        for target_name in TARGET_NAMES:
            stats = group_stats(corpus, flag_feature, target_name)
            for group in (1, -1):
                mean_value, count = stats[group]
                lines.append(f"{flag_feature},{target_name},{group:+d},"
                             f"{repr(mean_value)},{count}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def scatter_data(corpus: Corpus, feature_name: str,
                 target_name: str) -> list[tuple[float, float]]:
    """Per-token (feature value, target value) pairs in corpus order."""
    if feature_name not in FEATURE_COLUMNS:
        raise ValidationError(f"unknown feature column {feature_name!r}")
    if target_name not in TARGET_NAMES:
        raise ValidationError(f"unknown target {target_name!r}")
    features = build_feature_matrix(corpus)
    x = features.matrix[:, FEATURE_COLUMNS.index(feature_name)]
    y = corpus.targets_matrix()[:, TARGET_NAMES.index(target_name)]
    return list(zip(x.tolist(), y.tolist()))


def write_scatter_csv(path: str | Path, pairs, feature_name: str,
                      target_name: str) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([feature_name, target_name])
        for x, y in pairs:
            writer.writerow([repr(x), repr(y)])
