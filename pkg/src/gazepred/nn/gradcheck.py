"""Finite-difference verification of analytic gradients.

The check projects the layer output onto a fixed random direction to get a
scalar objective, runs one analytic backward pass, then perturbs every
parameter and input element by +/- epsilon and compares the central
difference against the analytic value.  Requires float64 and a deterministic
forward (dropout off).
"""

from __future__ import annotations

import numpy as np

from ..errors import NumericalError


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)


def _objective(module, inputs, projection) -> float:
    out = module.forward(*inputs)
    return float(np.sum(out * projection))


def _sweep(module, inputs, projection, values: np.ndarray,
           analytic: np.ndarray, epsilon: float) -> float:
    worst = 0.0
    flat = values.reshape(-1)
    flat_grad = analytic.reshape(-1)
    for idx in range(flat.size):
        original = flat[idx]
        flat[idx] = original + epsilon
        plus = _objective(module, inputs, projection)
        flat[idx] = original - epsilon
        minus = _objective(module, inputs, projection)
        flat[idx] = original
        numeric = (plus - minus) / (2.0 * epsilon)
        if not np.isfinite(numeric) or not np.isfinite(flat_grad[idx]):
            raise NumericalError("non-finite value during gradient check")
        worst = max(worst, relative_error(flat_grad[idx], numeric))
    return worst


def gradient_check(module, inputs, epsilon: float = 1e-5, seed: int = 0,
                   check_inputs: bool = True) -> float:
    """Max relative error between analytic and finite-difference gradients.

    ``module`` must expose ``forward(*inputs)``, ``backward(d_out)``
    returning input gradients (one array, or a tuple matching ``inputs``),
    ``named_params``, ``named_grads``, and ``zero_grad``.
    """
    inputs = [np.array(x, dtype=np.float64) for x in inputs]
    rng = np.random.default_rng(seed)

    module.zero_grad()
    out = module.forward(*inputs)
    projection = rng.standard_normal(out.shape)
    d_inputs = module.backward(projection)
    if not isinstance(d_inputs, tuple):
        d_inputs = (d_inputs,)

    grads = dict(module.named_grads())
    worst = 0.0
    for name, values in module.named_params():
        worst = max(worst, _sweep(module, inputs, projection, values,
                                  grads[name], epsilon))
    if check_inputs:
        for x, dx in zip(inputs, d_inputs):
            if dx is None:
                continue
            worst = max(worst, _sweep(module, inputs, projection, x, dx,
                                      epsilon))
    return worst
