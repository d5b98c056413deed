"""The two-path per-token regression model.

One path encodes the engineered feature rows (dense stack, sinusoidal
positional encodings, one transformer encoder layer); the other encodes the
token sequence (frozen embedding lookup, BiLSTM, dense projection).  The two
(T, d_model) representations are fused per token and mapped through a dense
head with a sigmoid to scaled-space predictions.

Two fusion modes exist because the architecture can be read either way:
``representation_mean`` averages the path representations and applies one
shared head; ``prediction_mean`` gives each path its own head and averages
the two sigmoid outputs.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .corpus import Corpus, GazeTargets, Sentence, TARGET_NAMES
from .errors import ConfigError, ParseError, ValidationError
from .features import FeatureMatrix, build_feature_matrix
from .nn.layers import (
    BiLSTM,
    Dense,
    Dropout,
    MaskRng,
    Relu,
    Sigmoid,
    TransformerEncoderLayer,
    check_finite,
    mean_pool,
    sinusoidal_positions,
)
from .transforms import ScalerParams, apply_scaler, invert_scaler, residual_to_gpt

FUSION_MODES = ("representation_mean", "prediction_mean")


class SigmoidScalingWarning(UserWarning):
    """Raised when a sigmoid output head is paired with standard-scaled
    targets: the head cannot emit values below the training mean, so
    below-average targets saturate."""


@dataclass
class ModelConfig:
    """Architecture hyperparameters for both paths and the fused head."""

    feature_input_dim: int = 14
    feature_dense_widths: tuple[int, ...] = (128,)
    d_model: int = 128
    heads: int = 4
    ffn_ratio: int = 2
    embedding_dim: int = 200
    bilstm_hidden: int = 64
    head_widths: tuple[int, ...] = ()
    dropout: float = 0.0
    fusion_mode: str = "representation_mean"
    target_mode: str = "multi"
    single_target: str | None = None

    def __post_init__(self):
        self.feature_dense_widths = tuple(self.feature_dense_widths)
        self.head_widths = tuple(self.head_widths)
        if self.fusion_mode not in FUSION_MODES:
            raise ConfigError(f"fusion_mode must be one of {FUSION_MODES}, "
                              f"got {self.fusion_mode!r}")
        if self.target_mode not in ("multi", "single"):
            raise ConfigError(f"target_mode must be 'multi' or 'single', "
                              f"got {self.target_mode!r}")
        # single_target stays None on the composite (bundle-level) config;
        # each per-target model instance sets it.
        if self.single_target is not None \
                and self.single_target not in TARGET_NAMES:
            raise ConfigError(
                f"single_target must be one of {TARGET_NAMES}, got "
                f"{self.single_target!r}")
        if self.d_model % self.heads != 0:
            raise ConfigError(
                f"d_model {self.d_model} not divisible by heads {self.heads}")
        if not self.feature_dense_widths:
            raise ConfigError("feature_dense_widths must not be empty")
        if self.feature_dense_widths[-1] != self.d_model:
            raise ConfigError(
                "the last feature dense width must equal d_model "
                f"({self.feature_dense_widths[-1]} != {self.d_model})")

    @property
    def output_dim(self) -> int:
        return 1 if self.target_mode == "single" else 5

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        data = dict(data)
        data["feature_dense_widths"] = tuple(data["feature_dense_widths"])
        data["head_widths"] = tuple(data["head_widths"])
        return cls(**data)


# ---------------------------------------------------------------------------
# Embeddings
# ---------------------------------------------------------------------------

@dataclass
class EmbeddingTable:
    """Frozen token-vector lookup; unknown tokens map to the mean vector."""

    vocabulary: dict[str, int]
    vectors: np.ndarray
    unk_vector: np.ndarray
    case_fold: bool = True

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def lookup(self, token: str) -> np.ndarray:
        key = token.lower() if self.case_fold else token
        index = self.vocabulary.get(key)
        if index is None:
            return self.unk_vector
        return self.vectors[index]

    def embed_sentence(self, sentence: Sentence) -> np.ndarray:
        return np.stack([self.lookup(t.text) for t in sentence.tokens])


def load_embeddings(path: str | Path, case_fold: bool = True) -> EmbeddingTable:
    """Parse a text embedding file: one token plus d reals per line.

    Duplicate tokens keep their first occurrence; the unknown-token vector is
    the mean of all rows.
    """
    path = Path(path)
    vocabulary: dict[str, int] = {}
    rows: list[np.ndarray] = []
    width = None
    with path.open(encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) < 2 or parts[0] == "":
                raise ParseError(
                    f"{path}: line {line_number}: expected token followed by "
                    f"vector components")
            token, values = parts[0], parts[1:]
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise ParseError(
                    f"{path}: line {line_number}: expected {width} vector "
                    f"components, got {len(values)}")
            try:
                vector = np.array([float(v) for v in values])
            except ValueError:
                raise ParseError(
                    f"{path}: line {line_number}: non-numeric vector "
                    f"component") from None
            key = token.lower() if case_fold else token
            if key in vocabulary:
                continue
            vocabulary[key] = len(rows)
            rows.append(vector)
    if not rows:
        raise ParseError(f"{path}: no embedding rows")
    vectors = np.stack(rows)
    return EmbeddingTable(vocabulary, vectors, vectors.mean(axis=0),
                          case_fold=case_fold)


def random_embeddings(tokens, dim: int, seed: int = 0,
                      case_fold: bool = True) -> EmbeddingTable:
    """Seeded random table over a token collection, for embedding-free runs."""
    keys: list[str] = []
    seen = set()
    for token in tokens:
        key = token.lower() if case_fold else token
        if key not in seen:
            seen.add(key)
            keys.append(key)
    rng = np.random.default_rng(seed)
    vectors = rng.standard_normal((len(keys), dim)) / np.sqrt(dim)
    vocabulary = {k: i for i, k in enumerate(keys)}
    return EmbeddingTable(vocabulary, vectors, vectors.mean(axis=0),
                          case_fold=case_fold)


class SidecarEmbeddings:
    """Externally precomputed per-token vectors keyed by (sentence_id,
    word_id); stands in for table lookup when contextual embeddings are
    supplied from outside."""

    def __init__(self, table: dict[tuple[int, int], np.ndarray], dim: int):
        self._table = table
        self.dim = dim

    @classmethod
    def from_csv(cls, path: str | Path) -> "SidecarEmbeddings":
        import csv as _csv
        path = Path(path)
        table: dict[tuple[int, int], np.ndarray] = {}
        dim = None
        with path.open(newline="", encoding="utf-8") as fh:
            reader = _csv.reader(fh)
            header = next(reader, None)
            if header is None or header[:2] != ["sentence_id", "word_id"]:
                raise ParseError(
                    f"{path}: expected header starting with sentence_id,"
                    f"word_id")
            for row in reader:
                key = (int(row[0]), int(row[1]))
                vector = np.array([float(v) for v in row[2:]])
                if dim is None:
                    dim = vector.shape[0]
                elif vector.shape[0] != dim:
                    raise ParseError(f"{path}: ragged vector width for {key}")
                table[key] = vector
        if dim is None:
            raise ParseError(f"{path}: no embedding rows")
        return cls(table, dim)

    def embed_sentence(self, sentence: Sentence) -> np.ndarray:
        rows = []
        for token in sentence.tokens:
            key = (token.sentence_id, token.word_id)
            if key not in self._table:
                raise ValidationError(
                    f"contextual sidecar has no vector for (sentence_id, "
                    f"word_id) = {key}")
            rows.append(self._table[key])
        return np.stack(rows)


# ---------------------------------------------------------------------------
# The network
# ---------------------------------------------------------------------------

class _DenseStack:
    """Dense -> relu -> dropout blocks, with a linear final layer option.

    Every block owns its Dropout instance (masks are cached per layer for
    the backward pass) but all draw from the model's shared mask stream.
    """

    def __init__(self, widths, rng, dropout_rate: float, mask_rng: MaskRng,
                 final_linear: bool):
        self.layers: list[Dense] = []
        self.relus: list[Relu | None] = []
        self.dropouts: list[Dropout | None] = []
        for i in range(len(widths) - 1):
            self.layers.append(Dense(widths[i], widths[i + 1], rng))
            if final_linear and i == len(widths) - 2:
                self.relus.append(None)
                self.dropouts.append(None)
            else:
                self.relus.append(Relu())
                self.dropouts.append(Dropout(dropout_rate, mask_rng))

    def forward(self, x, train=False):
        for dense, relu, dropout in zip(self.layers, self.relus,
                                        self.dropouts):
            x = dense.forward(x)
            if relu is not None:
                x = dropout.forward(relu.forward(x), train=train)
        return x

    def backward(self, dy):
        for dense, relu, dropout in zip(reversed(self.layers),
                                        reversed(self.relus),
                                        reversed(self.dropouts)):
            if relu is not None:
                dy = relu.backward(dropout.backward(dy))
            dy = dense.backward(dy)
        return dy

    def sublayers(self):
        return {f"dense{i}": layer for i, layer in enumerate(self.layers)}


class TwoPathModel:
    """Feature path + language path, fused into per-token sigmoid outputs.

    ``forward`` takes the scaled feature rows (T, F) and the frozen token
    embeddings (T, d_emb) of one sentence and returns (T, k) values in
    (0, 1).  ``backward`` accumulates parameter gradients and returns the
    gradients with respect to both inputs (the embedding gradient is
    discarded by training, since the table is frozen, but is exposed for
    gradient checking).
    """

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        rng = np.random.default_rng(seed)
        self.mask_rng = MaskRng(seed)
        rate = config.dropout

        widths = (config.feature_input_dim,) + config.feature_dense_widths
        self.feature_stack = _DenseStack(widths, rng, rate, self.mask_rng,
                                         final_linear=False)
        self.encoder = TransformerEncoderLayer(
            config.d_model, config.heads,
            config.ffn_ratio * config.d_model, rng)

        self.bilstm = BiLSTM(config.embedding_dim, config.bilstm_hidden, rng)
        self.language_proj = Dense(2 * config.bilstm_hidden, config.d_model,
                                   rng)

        k = config.output_dim
        head_widths = (config.d_model,) + config.head_widths + (k,)
        if config.fusion_mode == "representation_mean":
            self.head = _DenseStack(head_widths, rng, rate, self.mask_rng,
                                    final_linear=True)
            self.head_sigmoid = Sigmoid()
        else:
            self.feature_head = _DenseStack(head_widths, rng, rate,
                                            self.mask_rng, final_linear=True)
            self.feature_sigmoid = Sigmoid()
            self.language_head = _DenseStack(head_widths, rng, rate,
                                             self.mask_rng, final_linear=True)
            self.language_sigmoid = Sigmoid()

    # -- plumbing ----------------------------------------------------------

    def _components(self) -> dict:
        parts = dict(self.feature_stack.sublayers())
        parts = {f"feature.{k}": v for k, v in parts.items()}
        parts["feature.encoder"] = self.encoder
        parts["language.bilstm"] = self.bilstm
        parts["language.proj"] = self.language_proj
        if self.config.fusion_mode == "representation_mean":
            for k, v in self.head.sublayers().items():
                parts[f"head.{k}"] = v
        else:
            for k, v in self.feature_head.sublayers().items():
                parts[f"feature_head.{k}"] = v
            for k, v in self.language_head.sublayers().items():
                parts[f"language_head.{k}"] = v
        return parts

    def named_params(self):
        for prefix, layer in self._components().items():
            yield from layer.named_params(prefix + ".")

    def named_grads(self):
        for prefix, layer in self._components().items():
            yield from layer.named_grads(prefix + ".")

    def zero_grad(self):
        for layer in self._components().values():
            layer.zero_grad()

    def param_dict(self) -> dict[str, np.ndarray]:
        return dict(self.named_params())

    def grad_dict(self) -> dict[str, np.ndarray]:
        return dict(self.named_grads())

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: value.copy() for name, value in self.named_params()}

    def load_snapshot(self, snapshot: dict[str, np.ndarray]) -> None:
        params = self.param_dict()
        if set(params) != set(snapshot):
            raise ValidationError("parameter snapshot does not match model")
        for name, value in snapshot.items():
            if params[name].shape != value.shape:
                raise ValidationError(
                    f"snapshot tensor {name} has shape {value.shape}, "
                    f"expected {params[name].shape}")
            params[name][...] = value

    # -- forward/backward --------------------------------------------------

    def feature_path(self, features: np.ndarray, train: bool = False
                     ) -> np.ndarray:
        """(T, F) scaled feature rows -> (T, d_model) representation."""
        h = self.feature_stack.forward(features, train=train)
        h = h + sinusoidal_positions(h.shape[0], h.shape[1])
        return self.encoder.forward(h)

    def _feature_path_backward(self, dy: np.ndarray) -> np.ndarray:
        dh = self.encoder.backward(dy)
        return self.feature_stack.backward(dh)

    def language_path(self, embedded: np.ndarray, train: bool = False
                      ) -> np.ndarray:
        """(T, d_emb) frozen embeddings -> (T, d_model) representation."""
        h = self.bilstm.forward(embedded)
        return self.language_proj.forward(h)

    def _language_path_backward(self, dy: np.ndarray) -> np.ndarray:
        dh = self.language_proj.backward(dy)
        return self.bilstm.backward(dh)

    def forward(self, features: np.ndarray, embedded: np.ndarray,
                train: bool = False) -> np.ndarray:
        if features.shape[0] != embedded.shape[0]:
            raise ConfigError(
                f"feature rows ({features.shape[0]}) and embedding rows "
                f"({embedded.shape[0]}) disagree")
        feat_repr = self.feature_path(features, train=train)
        lang_repr = self.language_path(embedded, train=train)
        if self.config.fusion_mode == "representation_mean":
            fused = mean_pool(feat_repr, lang_repr)
            out = self.head_sigmoid.forward(
                self.head.forward(fused, train=train))
        else:
            feat_out = self.feature_sigmoid.forward(
                self.feature_head.forward(feat_repr, train=train))
            lang_out = self.language_sigmoid.forward(
                self.language_head.forward(lang_repr, train=train))
            out = mean_pool(feat_out, lang_out)
        return check_finite(out, "model output")

    def backward(self, d_out: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if self.config.fusion_mode == "representation_mean":
            d_fused = self.head.backward(self.head_sigmoid.backward(d_out))
            d_feat_repr = d_fused / 2.0
            d_lang_repr = d_fused / 2.0
        else:
            d_feat_repr = self.feature_head.backward(
                self.feature_sigmoid.backward(d_out / 2.0))
            d_lang_repr = self.language_head.backward(
                self.language_sigmoid.backward(d_out / 2.0))
        d_features = self._feature_path_backward(d_feat_repr)
        d_embedded = self._language_path_backward(d_lang_repr)
        return d_features, d_embedded


# ---------------------------------------------------------------------------
# End-to-end prediction
# ---------------------------------------------------------------------------

def warn_if_sigmoid_mismatched(scaling_mode: str) -> None:
    """Emit the configuration warning for sigmoid heads over standard-scaled
    targets (the head's (0, 1) range cannot reach below-mean values)."""
    if scaling_mode == "standard":
        warnings.warn(
            "sigmoid output head with standard-scaled targets: predictions "
            "cannot fall below the per-target training mean; min_max scaling "
            "matches the head's (0, 1) range",
            SigmoidScalingWarning, stacklevel=2)


@dataclass
class Pipeline:
    """Everything needed to map a raw corpus to predictions.

    For ``target_mode='single'`` there are five models, one per target, each
    predicting its own component of the transformed target vector.
    """

    models: dict[str, TwoPathModel]
    feature_scaler: ScalerParams
    target_scaler: ScalerParams
    feature_columns: tuple[str, ...]
    model_config: ModelConfig
    embeddings: object  # EmbeddingTable or SidecarEmbeddings
    tagger: object = None
    lemmatizer: object = None
    tfidf_error: float = 0.1

    def extract_features(self, corpus: Corpus) -> FeatureMatrix:
        full = build_feature_matrix(corpus, tagger=self.tagger,
                                    lemmatizer=self.lemmatizer,
                                    tfidf_error=self.tfidf_error)
        return full.select(self.feature_columns)


def predict(corpus: Corpus, pipeline: Pipeline) -> list[GazeTargets]:
    """Per-token predictions in original units: forward, invert the target
    scaler, restore GPT from the residual, clip to [0, 100]."""
    features = pipeline.extract_features(corpus)
    if features.columns != pipeline.feature_columns:
        raise ValidationError(
            "model/features trained on different feature set")
    outputs = []
    for index, sentence in enumerate(corpus.sentences):
        rows = apply_scaler(features.sentence_rows(index),
                            pipeline.feature_scaler)
        embedded = pipeline.embeddings.embed_sentence(sentence)
        if pipeline.model_config.target_mode == "multi":
            scaled = pipeline.models["multi"].forward(rows, embedded)
        else:
            columns = [
                pipeline.models[name].forward(rows, embedded)[:, 0]
                for name in TARGET_NAMES
            ]
            scaled = np.stack(columns, axis=1)
        transformed = invert_scaler(scaled, pipeline.target_scaler)
        original = residual_to_gpt(transformed)
        original = np.clip(original, 0.0, 100.0)
        outputs.extend(GazeTargets.from_array(row) for row in original)
    return outputs
