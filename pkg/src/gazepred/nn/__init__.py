from .layers import (
    BiLSTM,
    Dense,
    Dropout,
    FeedForward,
    Layer,
    LayerNorm,
    MaskRng,
    MultiHeadSelfAttention,
    Relu,
    Sigmoid,
    TransformerEncoderLayer,
    mean_pool,
    sigmoid,
    sinusoidal_positions,
    softmax,
)
from .optim import AdamW, lr_at_step
from .gradcheck import gradient_check, relative_error

__all__ = [
    "AdamW", "BiLSTM", "Dense", "Dropout", "FeedForward", "Layer",
    "LayerNorm", "MaskRng", "MultiHeadSelfAttention", "Relu", "Sigmoid",
    "TransformerEncoderLayer", "gradient_check", "lr_at_step", "mean_pool",
    "relative_error", "sigmoid", "sinusoidal_positions", "softmax",
]
