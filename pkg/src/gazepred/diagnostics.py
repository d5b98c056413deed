"""Standard gradient-integrity report over every layer and the full model.

Each case pairs a fixed-seed instance with the finite-difference checker and
a pass threshold: 1e-6 for purely linear layers, 1e-4 elsewhere.  The
``inject_fault`` flag deliberately breaks one backward pass (drops the bias
gradient and halves the weight gradient) so the checker's own sensitivity
can be demonstrated; a faulty build must fail loudly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ModelConfig, TwoPathModel
from .nn.gradcheck import gradient_check
from .nn.layers import (
    BiLSTM,
    Dense,
    FeedForward,
    Layer,
    LayerNorm,
    MultiHeadSelfAttention,
    Sigmoid,
    TransformerEncoderLayer,
)

LINEAR_THRESHOLD = 1e-6
GENERAL_THRESHOLD = 1e-4


@dataclass(frozen=True)
class GradCheckCase:
    name: str
    error: float
    threshold: float

    @property
    def passed(self) -> bool:
        return self.error < self.threshold


class _BrokenDense(Dense):
    """Negative control: backward drops db and halves dW."""

    def backward(self, dy):
        self.grads["W"] += 0.5 * (self._x.T @ dy)
        return dy @ self.params["W"].T


class _SigmoidHead(Layer):
    """Dense projection followed by the sigmoid output activation."""

    def __init__(self, d_in, d_out, rng):
        super().__init__()
        self.dense = Dense(d_in, d_out, rng)
        self.sigmoid = Sigmoid()

    def sublayers(self):
        return {"dense": self.dense}

    def forward(self, x):
        return self.sigmoid.forward(self.dense.forward(x))

    def backward(self, dy):
        return self.dense.backward(self.sigmoid.backward(dy))


def _tiny_model() -> tuple[TwoPathModel, list[np.ndarray]]:
    config = ModelConfig(feature_input_dim=6, feature_dense_widths=(8,),
                         d_model=8, heads=2, ffn_ratio=2, embedding_dim=5,
                         bilstm_hidden=3, dropout=0.0)
    model = TwoPathModel(config, seed=7)
    rng = np.random.default_rng(11)
    features = rng.standard_normal((3, 6))
    embedded = rng.standard_normal((3, 5))
    return model, [features, embedded]


def standard_gradient_report(epsilon: float = 1e-5,
                             inject_fault: bool = False
                             ) -> list[GradCheckCase]:
    """Run the canonical per-layer and full-model checks."""
    rng = np.random.default_rng(5)
    dense_cls = _BrokenDense if inject_fault else Dense
    cases = []

    dense = dense_cls(4, 3, rng)
    cases.append(GradCheckCase(
        "dense", gradient_check(dense, [rng.standard_normal((4, 4))],
                                epsilon=epsilon, seed=1), LINEAR_THRESHOLD))

    ln = LayerNorm(6)
    cases.append(GradCheckCase(
        "layer_norm", gradient_check(ln, [rng.standard_normal((4, 6))],
                                     epsilon=epsilon, seed=2),
        GENERAL_THRESHOLD))

    attn = MultiHeadSelfAttention(8, 2, rng)
    cases.append(GradCheckCase(
        "attention", gradient_check(attn, [rng.standard_normal((3, 8))],
                                    epsilon=epsilon, seed=3),
        GENERAL_THRESHOLD))

    ffn = FeedForward(6, 12, rng)
    cases.append(GradCheckCase(
        "ffn", gradient_check(ffn, [rng.standard_normal((3, 6))],
                              epsilon=epsilon, seed=4), GENERAL_THRESHOLD))

    encoder = TransformerEncoderLayer(8, 2, 16, rng)
    cases.append(GradCheckCase(
        "transformer_encoder_layer",
        gradient_check(encoder, [rng.standard_normal((3, 8))],
                       epsilon=epsilon, seed=5), GENERAL_THRESHOLD))

    bilstm = BiLSTM(5, 3, rng)
    cases.append(GradCheckCase(
        "bilstm", gradient_check(bilstm, [rng.standard_normal((4, 5))],
                                 epsilon=epsilon, seed=6),
        GENERAL_THRESHOLD))

    head = _SigmoidHead(6, 5, rng)
    cases.append(GradCheckCase(
        "sigmoid_head", gradient_check(head, [rng.standard_normal((4, 6))],
                                       epsilon=epsilon, seed=7),
        GENERAL_THRESHOLD))

    model, inputs = _tiny_model()
    cases.append(GradCheckCase(
        "two_path_model", gradient_check(model, inputs, epsilon=epsilon,
                                         seed=8), GENERAL_THRESHOLD))
    return cases
