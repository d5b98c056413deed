"""Minimal float64 layer kernel with explicit forward and backward passes.

All layers operate on a single sentence at a time: inputs are (T, d) arrays.
``backward`` accumulates into the ``grads`` dict (call ``zero_grad`` between
optimizer steps) and returns the gradient with respect to the layer input, so
composite models chain calls in reverse order.  Gradients are hand-derived
per layer and verified against central finite differences in the test suite.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, NumericalError


def xavier_uniform(fan_in: int, fan_out: int, rng) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax along the given axis."""
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def sigmoid(x: np.ndarray) -> np.ndarray:
    """1/(1 + exp(-x)), stable for large |x|."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def mean_pool(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Elementwise mean of two equal-shape representations."""
    if a.shape != b.shape:
        raise ConfigError(f"mean_pool shape mismatch: {a.shape} vs {b.shape}")
    return (a + b) / 2.0


def sinusoidal_positions(n: int, d: int) -> np.ndarray:
    """Sinusoidal positional encodings, shape (n, d)."""
    pos = np.arange(n)[:, None]
    i = np.arange(d)[None, :]
    angle = pos / (10000.0 ** (2 * (i // 2) / d))
    enc = np.zeros((n, d))
    enc[:, 0::2] = np.sin(angle[:, 0::2])
    enc[:, 1::2] = np.cos(angle[:, 1::2])
    return enc


def check_finite(x: np.ndarray, where: str) -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NumericalError(f"non-finite values in {where}")
    return x


class Layer:
    """Base class: named parameter/gradient dicts, recursive over sublayers."""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def sublayers(self) -> dict[str, "Layer"]:
        return {}

    def _init_grads(self):
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}

    def named_params(self, prefix: str = ""):
        for name, value in self.params.items():
            yield prefix + name, value
        for sub_name, sub in self.sublayers().items():
            yield from sub.named_params(f"{prefix}{sub_name}.")

    def named_grads(self, prefix: str = ""):
        for name, value in self.grads.items():
            yield prefix + name, value
        for sub_name, sub in self.sublayers().items():
            yield from sub.named_grads(f"{prefix}{sub_name}.")

    def zero_grad(self):
        for g in self.grads.values():
            g[...] = 0.0
        for sub in self.sublayers().values():
            sub.zero_grad()


class Dense(Layer):
    """Affine map y = x W + b.  Shapes: (T, d_in) -> (T, d_out)."""

    def __init__(self, d_in: int, d_out: int, rng):
        super().__init__()
        self.params = {"W": xavier_uniform(d_in, d_out, rng),
                       "b": np.zeros(d_out)}
        self._init_grads()

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.shape[-1] != self.params["W"].shape[0]:
            raise ConfigError(
                f"dense input width {x.shape[-1]} != {self.params['W'].shape[0]}")
        self._x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dy: np.ndarray) -> np.ndarray:
        self.grads["W"] += self._x.T @ dy
        self.grads["b"] += dy.sum(axis=0)
        return dy @ self.params["W"].T


class Relu(Layer):
    def __init__(self):
        super().__init__()

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._mask = x > 0.0
        return np.where(self._mask, x, 0.0)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return dy * self._mask


class Sigmoid(Layer):
    def __init__(self):
        super().__init__()

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._y = sigmoid(x)
        return self._y

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return dy * self._y * (1.0 - self._y)


class LayerNorm(Layer):
    """Per-row normalization over the feature axis with learned gain/bias."""

    def __init__(self, d: int, eps: float = 1e-8):
        super().__init__()
        self.eps = eps
        self.params = {"gain": np.ones(d), "bias": np.zeros(d)}
        self._init_grads()

    def forward(self, x: np.ndarray) -> np.ndarray:
        mu = x.mean(axis=-1, keepdims=True)
        var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
        self._sigma = np.sqrt(var + self.eps)
        self._xhat = (x - mu) / self._sigma
        return self._xhat * self.params["gain"] + self.params["bias"]

    def backward(self, dy: np.ndarray) -> np.ndarray:
        xhat, sigma = self._xhat, self._sigma
        ghat = dy * self.params["gain"]
        m1 = ghat.mean(axis=-1, keepdims=True)
        m2 = (ghat * xhat).mean(axis=-1, keepdims=True)
        self.grads["gain"] += (dy * xhat).sum(axis=0)
        self.grads["bias"] += dy.sum(axis=0)
        return (ghat - m1 - xhat * m2) / sigma


class MultiHeadSelfAttention(Layer):
    """Bidirectional scaled dot-product self-attention over one sentence.

    No mask: every position attends to every position.  The Q/K/V
    projections carry no bias (a key bias cannot affect the row-wise
    softmax, so it would be an untrainable dead parameter); the output
    projection keeps one.  The post-softmax attention weights of the latest
    forward pass are kept on ``last_attention`` (H, T, T) for inspection.
    """

    def __init__(self, d: int, heads: int, rng):
        super().__init__()
        if d % heads != 0:
            raise ConfigError(f"model width {d} not divisible by {heads} heads")
        self.d = d
        self.heads = heads
        self.d_head = d // heads
        self.params = {name: xavier_uniform(d, d, rng)
                       for name in ("Wq", "Wk", "Wv", "Wo")}
        self.params["bo"] = np.zeros(d)
        self._init_grads()

    def _split(self, x: np.ndarray) -> np.ndarray:
        # (T, d) -> (H, T, d_head)
        t = x.shape[0]
        return x.reshape(t, self.heads, self.d_head).transpose(1, 0, 2)

    def _merge(self, x: np.ndarray) -> np.ndarray:
        # (H, T, d_head) -> (T, d)
        return x.transpose(1, 0, 2).reshape(-1, self.d)

    def forward(self, x: np.ndarray) -> np.ndarray:
        p = self.params
        q = self._split(x @ p["Wq"])
        k = self._split(x @ p["Wk"])
        v = self._split(x @ p["Wv"])
        scale = 1.0 / np.sqrt(self.d_head)
        scores = (q @ k.transpose(0, 2, 1)) * scale
        attn = softmax(scores, axis=-1)
        heads_out = attn @ v
        merged = self._merge(heads_out)
        self._cache = (x, q, k, v, attn, merged, scale)
        self.last_attention = attn
        return merged @ p["Wo"] + p["bo"]

    def backward(self, dy: np.ndarray) -> np.ndarray:
        x, q, k, v, attn, merged, scale = self._cache
        p = self.params
        self.grads["Wo"] += merged.T @ dy
        self.grads["bo"] += dy.sum(axis=0)
        d_merged = dy @ p["Wo"].T

        d_heads = self._split(d_merged)
        d_attn = d_heads @ v.transpose(0, 2, 1)
        dv = attn.transpose(0, 2, 1) @ d_heads
        # softmax backward per row
        row_dot = (d_attn * attn).sum(axis=-1, keepdims=True)
        d_scores = (d_attn - row_dot) * attn
        dq = (d_scores @ k) * scale
        dk = (d_scores.transpose(0, 2, 1) @ q) * scale

        dq, dk, dv = self._merge(dq), self._merge(dk), self._merge(dv)
        self.grads["Wq"] += x.T @ dq
        self.grads["Wk"] += x.T @ dk
        self.grads["Wv"] += x.T @ dv
        return dq @ p["Wq"].T + dk @ p["Wk"].T + dv @ p["Wv"].T


class FeedForward(Layer):
    """Position-wise FFN: relu(x W1 + b1) W2 + b2."""

    def __init__(self, d: int, d_ff: int, rng):
        super().__init__()
        self.params = {"W1": xavier_uniform(d, d_ff, rng),
                       "b1": np.zeros(d_ff),
                       "W2": xavier_uniform(d_ff, d, rng),
                       "b2": np.zeros(d)}
        self._init_grads()

    def forward(self, x: np.ndarray) -> np.ndarray:
        p = self.params
        self._x = x
        self._u = x @ p["W1"] + p["b1"]
        self._h = np.where(self._u > 0.0, self._u, 0.0)
        return self._h @ p["W2"] + p["b2"]

    def backward(self, dy: np.ndarray) -> np.ndarray:
        p = self.params
        self.grads["W2"] += self._h.T @ dy
        self.grads["b2"] += dy.sum(axis=0)
        dh = dy @ p["W2"].T
        du = dh * (self._u > 0.0)
        self.grads["W1"] += self._x.T @ du
        self.grads["b1"] += du.sum(axis=0)
        return du @ p["W1"].T


class TransformerEncoderLayer(Layer):
    """Pre-norm encoder block: x + MHA(LN(x)), then h + FFN(LN(h))."""

    def __init__(self, d: int, heads: int, d_ff: int, rng):
        super().__init__()
        self.ln1 = LayerNorm(d)
        self.attn = MultiHeadSelfAttention(d, heads, rng)
        self.ln2 = LayerNorm(d)
        self.ffn = FeedForward(d, d_ff, rng)

    def sublayers(self):
        return {"ln1": self.ln1, "attn": self.attn,
                "ln2": self.ln2, "ffn": self.ffn}

    def forward(self, x: np.ndarray) -> np.ndarray:
        h = x + self.attn.forward(self.ln1.forward(x))
        return h + self.ffn.forward(self.ln2.forward(h))

    def backward(self, dy: np.ndarray) -> np.ndarray:
        dh = dy + self.ln2.backward(self.ffn.backward(dy))
        return dh + self.ln1.backward(self.attn.backward(dh))


class _LstmDirection(Layer):
    """One direction of an LSTM, unrolled over the sentence.

    Gate order in the stacked weight matrices is (input, forget, candidate,
    output).  The forget-gate bias starts at 1.
    """

    def __init__(self, d_in: int, hidden: int, rng):
        super().__init__()
        self.hidden = hidden
        bias = np.zeros(4 * hidden)
        bias[hidden:2 * hidden] = 1.0
        self.params = {"Wx": xavier_uniform(d_in, 4 * hidden, rng),
                       "Wh": xavier_uniform(hidden, 4 * hidden, rng),
                       "b": bias}
        self._init_grads()

    def forward(self, x: np.ndarray) -> np.ndarray:
        p = self.params
        hidden = self.hidden
        n_steps = x.shape[0]
        h = np.zeros(hidden)
        c = np.zeros(hidden)
        self._steps = []
        outputs = np.zeros((n_steps, hidden))
        for t in range(n_steps):
            z = x[t] @ p["Wx"] + h @ p["Wh"] + p["b"]
            i = sigmoid(z[:hidden])
            f = sigmoid(z[hidden:2 * hidden])
            g = np.tanh(z[2 * hidden:3 * hidden])
            o = sigmoid(z[3 * hidden:])
            c_prev, h_prev = c, h
            c = f * c_prev + i * g
            tanh_c = np.tanh(c)
            h = o * tanh_c
            outputs[t] = h
            self._steps.append((x[t], h_prev, c_prev, i, f, g, o, tanh_c))
        return outputs

    def backward(self, dh_out: np.ndarray) -> np.ndarray:
        p = self.params
        hidden = self.hidden
        n_steps = dh_out.shape[0]
        dx = np.zeros((n_steps, p["Wx"].shape[0]))
        dh_next = np.zeros(hidden)
        dc_next = np.zeros(hidden)
        for t in range(n_steps - 1, -1, -1):
            x_t, h_prev, c_prev, i, f, g, o, tanh_c = self._steps[t]
            dh = dh_out[t] + dh_next
            do = dh * tanh_c
            dc = dh * o * (1.0 - tanh_c ** 2) + dc_next
            di = dc * g
            df = dc * c_prev
            dg = dc * i
            dz = np.concatenate([di * i * (1.0 - i),
                                 df * f * (1.0 - f),
                                 dg * (1.0 - g ** 2),
                                 do * o * (1.0 - o)])
            self.grads["Wx"] += np.outer(x_t, dz)
            self.grads["Wh"] += np.outer(h_prev, dz)
            self.grads["b"] += dz
            dx[t] = dz @ p["Wx"].T
            dh_next = dz @ p["Wh"].T
            dc_next = dc * f
        return dx


class BiLSTM(Layer):
    """Bidirectional LSTM: per-token concatenation of the two directions.

    Shapes: (T, d_in) -> (T, 2 * hidden).  Backward runs full
    backpropagation through time in both directions.
    """

    def __init__(self, d_in: int, hidden: int, rng):
        super().__init__()
        self.hidden = hidden
        self.fwd = _LstmDirection(d_in, hidden, rng)
        self.bwd = _LstmDirection(d_in, hidden, rng)

    def sublayers(self):
        return {"fwd": self.fwd, "bwd": self.bwd}

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.shape[0] == 0:
            raise ConfigError("BiLSTM requires a non-empty sequence")
        h_fwd = self.fwd.forward(x)
        h_bwd = self.bwd.forward(x[::-1])[::-1]
        return np.concatenate([h_fwd, h_bwd], axis=1)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        dx_fwd = self.fwd.backward(dy[:, :self.hidden])
        dx_bwd = self.bwd.backward(dy[::-1, self.hidden:])[::-1]
        return dx_fwd + dx_bwd


class MaskRng:
    """Counter-based dropout mask stream.

    Draw ``k`` is generated from a Philox state keyed by (seed, k), so a
    fixed seed reproduces the exact mask sequence regardless of when the
    generator object was built.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self.draw_index = 0

    def next_uniform(self, shape) -> np.ndarray:
        bitgen = np.random.Philox(key=self.seed,
                                  counter=self.draw_index << 64)
        self.draw_index += 1
        return np.random.Generator(bitgen).random(shape)

    def reset(self, seed: int | None = None):
        if seed is not None:
            self.seed = int(seed)
        self.draw_index = 0


class Dropout(Layer):
    """Inverted dropout; identity when ``train`` is false or rate is 0."""

    def __init__(self, rate: float, mask_rng: MaskRng | None = None):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ConfigError(f"dropout rate must lie in [0, 1), got {rate}")
        self.rate = rate
        self.mask_rng = mask_rng

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        if not train or self.rate == 0.0:
            self._mask = None
            return x
        if self.mask_rng is None:
            raise ConfigError("dropout in training mode needs a MaskRng")
        keep = self.mask_rng.next_uniform(x.shape) >= self.rate
        self._mask = keep / (1.0 - self.rate)
        return x * self._mask

    def backward(self, dy: np.ndarray) -> np.ndarray:
        if self._mask is None:
            return dy
        return dy * self._mask
