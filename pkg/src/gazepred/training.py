"""The training loop: batching, loss, warmup plus AdamW, early stopping,
multi-target and single-target regimes, seeded reproducibility.

Batches are whole sentences.  Sentences are processed one at a time with the
per-sentence loss averaged over tokens and targets; gradients accumulate
across the batch with weight 1/batch, so one optimizer step sees the mean
gradient regardless of sentence lengths and no padding is ever needed.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict, replace
from pathlib import Path

import numpy as np

from .corpus import Corpus, TARGET_NAMES, split_train_val
from .errors import ConfigError, NumericalError, ValidationError
from .evaluation import mae, r2_or_nan
from .features import FEATURE_COLUMNS, build_feature_matrix
from .model import (
    ModelConfig,
    Pipeline,
    TwoPathModel,
    warn_if_sigmoid_mismatched,
)
from .nn.optim import AdamW
from .transforms import (
    SCALER_MODES,
    apply_scaler,
    fit_scaler,
    gpt_to_residual,
    invert_scaler,
    residual_to_gpt,
)

# The transformed-space name of each target's training column.  GPT is
# trained as the residual TRT - GPT.
TRANSFORMED_NAMES = ("nFix", "FFD", "GPT_residual", "TRT", "fixProp")


@dataclass
class TrainConfig:
    """Training-loop hyperparameters (defaults follow the published recipe)."""

    batch_size: int = 4
    warmup_steps: int = 4
    lr: float = 3e-5
    max_epochs: int = 120
    beta1: float = 0.91
    beta2: float = 0.998
    early_stop_delta: float = 1e-4
    early_stop_patience: int = 8
    weight_decay: float = 1e-5
    tfidf_error: float = 0.1
    val_ratio: float = 0.2
    train_ratio: float = 0.8
    loss: str = "mse"
    seed: int = 0
    scaling: str = "min_max"
    fusion_mode: str = "representation_mean"
    target_mode: str = "multi"

    def __post_init__(self):
        if self.loss not in ("mse", "mae"):
            raise ConfigError(f"loss must be 'mse' or 'mae', got {self.loss!r}")
        if self.scaling not in SCALER_MODES:
            raise ConfigError(f"scaling must be one of {SCALER_MODES}, "
                              f"got {self.scaling!r}")
        if abs(self.train_ratio + self.val_ratio - 1.0) > 1e-12:
            raise ConfigError(
                f"train_ratio + val_ratio must equal 1, got "
                f"{self.train_ratio} + {self.val_ratio}")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainHistory:
    """Per-epoch training records plus the per-step learning-rate trace."""

    epochs: list[int] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    lr_epoch: list[float] = field(default_factory=list)
    val_mae: dict[str, list[float]] = field(default_factory=dict)
    val_r2: dict[str, list[float]] = field(default_factory=dict)
    lr_steps: list[float] = field(default_factory=list)
    best_epoch: int = 0
    stopped_epoch: int = 0

    def to_csv(self, path: str | Path) -> None:
        targets = list(self.val_mae)
        header = (["epoch", "train_loss", "val_loss", "lr"]
                  + [f"mae_{t}" for t in targets]
                  + [f"r2_{t}" for t in targets])
        lines = [",".join(header)]
        for i, epoch in enumerate(self.epochs):
            row = [str(epoch), repr(self.train_loss[i]),
                   repr(self.val_loss[i]), repr(self.lr_epoch[i])]
            row += [repr(self.val_mae[t][i]) for t in targets]
            row += [repr(self.val_r2[t][i]) for t in targets]
            lines.append(",".join(row))
        lines.append(f"# best_epoch={self.best_epoch},"
                     f"stopped_epoch={self.stopped_epoch}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def make_batches(items, batch_size: int, seed: int, epoch: int) -> list[list]:
    """Shuffle items by (seed, epoch) and chunk into whole-item batches."""
    if batch_size < 1:
        raise ConfigError("batch_size must be >= 1")
    items = list(items)
    order = np.random.default_rng([seed, epoch]).permutation(len(items))
    return [[items[j] for j in order[i:i + batch_size]]
            for i in range(0, len(items), batch_size)]


def loss_and_grad(pred: np.ndarray, gold: np.ndarray,
                  kind: str) -> tuple[float, np.ndarray]:
    """Mean loss over all entries of (T, k) arrays, with its gradient."""
    if pred.shape != gold.shape:
        raise ValidationError(
            f"loss shape mismatch: {pred.shape} vs {gold.shape}")
    diff = pred - gold
    n = diff.size
    if kind == "mse":
        return float(np.mean(diff ** 2)), 2.0 * diff / n
    if kind == "mae":
        return float(np.mean(np.abs(diff))), np.sign(diff) / n
    raise ConfigError(f"unknown loss kind {kind!r}")


class EarlyStopper:
    """Stop after ``patience`` consecutive epochs without an improvement
    larger than ``delta``."""

    def __init__(self, patience: int, delta: float):
        self.patience = patience
        self.delta = delta
        self.best = np.inf
        self.bad_epochs = 0

    def update(self, val_loss: float) -> bool:
        if val_loss < self.best - self.delta:
            self.best = val_loss
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
        return self.bad_epochs >= self.patience


def restore_best(val_losses: list[float],
                 checkpoints: dict[int, dict[str, np.ndarray]]
                 ) -> dict[str, np.ndarray]:
    """Parameters of the epoch (1-based) with minimal validation loss; ties
    resolve to the earliest epoch."""
    if not val_losses:
        raise ValidationError("no completed epochs to restore from")
    best_epoch = int(np.argmin(val_losses)) + 1
    if best_epoch not in checkpoints:
        raise ValidationError(f"no checkpoint stored for epoch {best_epoch}")
    return checkpoints[best_epoch]


@dataclass
class _SentenceData:
    features: np.ndarray  # (T, F) scaled
    embedded: np.ndarray  # (T, d_emb) frozen
    gold_scaled: np.ndarray  # (T, k)
    gold_original: np.ndarray  # (T, 5)


@dataclass
class TrainResult:
    pipeline: Pipeline
    histories: dict[str, TrainHistory]

    @property
    def history(self) -> TrainHistory:
        if len(self.histories) != 1:
            raise ValidationError(
                "composite result has per-target histories; index "
                "`histories` by target name")
        return next(iter(self.histories.values()))


def _prepare_split(corpus, train_cfg, tagger, lemmatizer, feature_names,
                   val_corpus):
    if not corpus.has_targets:
        raise ValidationError("training corpus carries no targets")
    if val_corpus is not None:
        train_c, val_c = corpus, val_corpus
    else:
        train_c, val_c = split_train_val(corpus, train_cfg.train_ratio,
                                         train_cfg.seed)
    extract = lambda c: build_feature_matrix(
        c, tagger=tagger, lemmatizer=lemmatizer,
        tfidf_error=train_cfg.tfidf_error)
    feats_train = extract(train_c)
    feats_val = extract(val_c)
    if feature_names is not None:
        feats_train = feats_train.select(feature_names)
        feats_val = feats_val.select(feature_names)
    return train_c, val_c, feats_train, feats_val


def _sentence_data(corpus, features, embeddings, feature_scaler,
                   target_scaler, columns: list[int]) -> list[_SentenceData]:
    data = []
    for i, sentence in enumerate(corpus.sentences):
        rows = apply_scaler(features.sentence_rows(i), feature_scaler)
        gold = sentence.targets_matrix()
        scaled = apply_scaler(gpt_to_residual(gold), target_scaler)
        data.append(_SentenceData(
            features=rows,
            embedded=embeddings.embed_sentence(sentence),
            gold_scaled=scaled[:, columns],
            gold_original=gold,
        ))
    return data


def _epoch_val_metrics(model, val_data, target_scaler, columns,
                       target_names) -> tuple[dict, dict]:
    """Validation MAE/R2 per target in original units (multi-target mode) or
    in the model's own inverted column (single-target mode, where the GPT
    column stays in residual units because TRT is owned by another model)."""
    preds = []
    golds = []
    for item in val_data:
        out = model.forward(item.features, item.embedded, train=False)
        if len(columns) == 5:
            restored = residual_to_gpt(invert_scaler(out, target_scaler))
            preds.append(np.clip(restored, 0.0, 100.0))
            golds.append(item.gold_original)
        else:
            span = _column_scaler_span(target_scaler, columns[0])
            preds.append(out * span[1] + span[0])
            golds.append(gpt_to_residual(item.gold_original)[:, columns])
    pred = np.concatenate(preds)
    gold = np.concatenate(golds)
    maes = {}
    r2s = {}
    for j, name in enumerate(target_names):
        maes[name] = mae(pred[:, j], gold[:, j])
        r2s[name] = r2_or_nan(pred[:, j], gold[:, j])
    return maes, r2s


def _column_scaler_span(scaler, column: int) -> tuple[float, float]:
    """(offset, scale) mapping a scaled column back to its source units."""
    if scaler.mode == "none":
        return 0.0, 1.0
    a = scaler.stat_a[column]
    b = scaler.stat_b[column]
    if scaler.degenerate[column]:
        return a, 0.0
    if scaler.mode == "min_max":
        return a, b - a
    return a, b


def _train_one_model(model_cfg: ModelConfig, train_cfg: TrainConfig,
                     train_data: list[_SentenceData],
                     val_data: list[_SentenceData],
                     target_scaler, columns: list[int],
                     target_names) -> tuple[TwoPathModel, TrainHistory]:
    model = TwoPathModel(model_cfg, seed=train_cfg.seed)
    optimizer = AdamW(lr=train_cfg.lr, beta1=train_cfg.beta1,
                      beta2=train_cfg.beta2,
                      weight_decay=train_cfg.weight_decay,
                      warmup_steps=train_cfg.warmup_steps)
    history = TrainHistory(val_mae={t: [] for t in target_names},
                           val_r2={t: [] for t in target_names})
    stopper = EarlyStopper(train_cfg.early_stop_patience,
                           train_cfg.early_stop_delta)
    best_value = np.inf
    best_snapshot = model.snapshot()
    best_epoch = 0

    params = model.param_dict()
    for epoch in range(1, train_cfg.max_epochs + 1):
        batches = make_batches(range(len(train_data)), train_cfg.batch_size,
                               train_cfg.seed, epoch)
        epoch_losses = []
        lr_used = optimizer.current_lr()
        for batch_index, batch in enumerate(batches):
            model.zero_grad()
            batch_loss = 0.0
            for idx in batch:
                item = train_data[idx]
                out = model.forward(item.features, item.embedded, train=True)
                value, d_out = loss_and_grad(out, item.gold_scaled,
                                             train_cfg.loss)
                batch_loss += value / len(batch)
                model.backward(d_out / len(batch))
            if not np.isfinite(batch_loss):
                raise NumericalError(
                    f"non-finite training loss at epoch {epoch}, batch "
                    f"{batch_index}, lr {optimizer.current_lr()}")
            lr_used = optimizer.step(params, model.grad_dict())
            history.lr_steps.append(lr_used)
            epoch_losses.append(batch_loss)

        val_losses = [
            loss_and_grad(
                model.forward(item.features, item.embedded, train=False),
                item.gold_scaled, train_cfg.loss)[0]
            for item in val_data
        ]
        val_loss = float(np.mean(val_losses))
        if not np.isfinite(val_loss):
            raise NumericalError(
                f"non-finite validation loss at epoch {epoch}, lr {lr_used}")

        maes, r2s = _epoch_val_metrics(model, val_data, target_scaler,
                                       columns, target_names)
        history.epochs.append(epoch)
        history.train_loss.append(float(np.mean(epoch_losses)))
        history.val_loss.append(val_loss)
        history.lr_epoch.append(lr_used)
        for t in target_names:
            history.val_mae[t].append(maes[t])
            history.val_r2[t].append(r2s[t])

        if val_loss < best_value:
            best_value = val_loss
            best_epoch = epoch
            best_snapshot = model.snapshot()
        if stopper.update(val_loss):
            break

    history.best_epoch = best_epoch
    history.stopped_epoch = history.epochs[-1]
    model.load_snapshot(restore_best(history.val_loss,
                                     {best_epoch: best_snapshot}))
    return model, history


def train(corpus: Corpus, train_cfg: TrainConfig, model_cfg: ModelConfig,
          embeddings, tagger=None, lemmatizer=None,
          feature_names: list[str] | None = None,
          val_corpus: Corpus | None = None) -> TrainResult:
    """Train the two-path model end to end and return a ready pipeline.

    The full recipe: split at sentence level (unless ``val_corpus`` is given
    explicitly), fit scalers on the training split only, transform targets
    (GPT residual first, then scaling), extract and scale features, then run
    warmup-adjusted AdamW with early stopping and best-epoch restoration.
    ``target_mode='single'`` runs the loop once per target and assembles a
    composite pipeline.
    """
    warn_if_sigmoid_mismatched(train_cfg.scaling)
    train_c, val_c, feats_train, feats_val = _prepare_split(
        corpus, train_cfg, tagger, lemmatizer, feature_names, val_corpus)

    feature_scaler = fit_scaler(feats_train.matrix, train_cfg.scaling)
    target_scaler = fit_scaler(
        gpt_to_residual(train_c.targets_matrix()), train_cfg.scaling)

    model_cfg = replace(model_cfg,
                        feature_input_dim=feats_train.n_features,
                        embedding_dim=embeddings.dim,
                        fusion_mode=train_cfg.fusion_mode)

    def data_for(columns):
        train_data = _sentence_data(train_c, feats_train, embeddings,
                                    feature_scaler, target_scaler, columns)
        val_data = _sentence_data(val_c, feats_val, embeddings,
                                  feature_scaler, target_scaler, columns)
        return train_data, val_data

    models: dict[str, TwoPathModel] = {}
    histories: dict[str, TrainHistory] = {}
    if train_cfg.target_mode == "multi":
        cfg = replace(model_cfg, target_mode="multi", single_target=None)
        train_data, val_data = data_for(list(range(5)))
        model, history = _train_one_model(cfg, train_cfg, train_data,
                                          val_data, target_scaler,
                                          list(range(5)), TARGET_NAMES)
        models["multi"] = model
        histories["multi"] = history
    else:
        for index, name in enumerate(TARGET_NAMES):
            cfg = replace(model_cfg, target_mode="single",
                          single_target=name)
            train_data, val_data = data_for([index])
            model, history = _train_one_model(
                cfg, train_cfg, train_data, val_data, target_scaler,
                [index], (TRANSFORMED_NAMES[index],))
            models[name] = model
            histories[name] = history

    pipeline = Pipeline(
        models=models,
        feature_scaler=feature_scaler,
        target_scaler=target_scaler,
        feature_columns=feats_train.columns,
        model_config=replace(model_cfg,
                             target_mode=train_cfg.target_mode,
                             single_target=None),
        embeddings=embeddings,
        tagger=tagger,
        lemmatizer=lemmatizer,
        tfidf_error=train_cfg.tfidf_error,
    )
    return TrainResult(pipeline=pipeline, histories=histories)
