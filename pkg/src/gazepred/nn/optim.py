"""AdamW with decoupled weight decay and a linear warmup schedule."""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError


def lr_at_step(step: int, base_lr: float, warmup_steps: int) -> float:
    """Learning rate at optimizer step ``step`` (1-based).

    Rises linearly from base_lr/warmup_steps to base_lr over the first
    ``warmup_steps`` steps, constant afterwards.
    """
    if step < 1:
        raise ConfigError(f"optimizer steps are 1-based, got {step}")
    if warmup_steps <= 0:
        return base_lr
    return base_lr * min(1.0, step / warmup_steps)


class AdamW:
    """Decoupled-weight-decay Adam over a named parameter dict.

    Update: w <- w - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * w),
    with bias-corrected moments.  Parameters are updated in place so layers
    keep their references.
    """

    def __init__(self, lr: float = 3e-5, beta1: float = 0.91,
                 beta2: float = 0.998, eps: float = 1e-8,
                 weight_decay: float = 1e-5, warmup_steps: int = 0):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.warmup_steps = warmup_steps
        self.step_count = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def current_lr(self) -> float:
        """The learning rate that the next step will use."""
        return lr_at_step(self.step_count + 1, self.lr, self.warmup_steps)

    def step(self, params: dict[str, np.ndarray],
             grads: dict[str, np.ndarray]) -> float:
        """Apply one update; returns the learning rate used."""
        self.step_count += 1
        lr_t = lr_at_step(self.step_count, self.lr, self.warmup_steps)
        bc1 = 1.0 - self.beta1 ** self.step_count
        bc2 = 1.0 - self.beta2 ** self.step_count
        for name, w in params.items():
            g = grads[name]
            if name not in self._m:
                self._m[name] = np.zeros_like(w)
                self._v[name] = np.zeros_like(w)
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / bc1
            v_hat = v / bc2
            w -= lr_t * (m_hat / (np.sqrt(v_hat) + self.eps)
                         + self.weight_decay * w)
        return lr_t
