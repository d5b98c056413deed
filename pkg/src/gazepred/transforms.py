"""Target-space transforms: the go-past-time residual substitution and
fit/apply/invert scalers for features and targets.

Training replaces the GPT component of each target vector with the residual
``TRT - GPT``; the substitution is inverted before any metric is computed.
Scalers come in two modes, ``min_max`` ((x - min)/(max - min)) and
``standard`` ((x - mean)/std with population std), plus ``none`` (identity).
Statistics are always fit on training data only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ValidationError

SCALER_MODES = ("min_max", "standard", "none")

# Index of the GPT component within (nFix, FFD, GPT, TRT, fixProp).
_GPT = 2
_TRT = 3


def gpt_to_residual(targets) -> np.ndarray:
    """Replace the GPT slot of a 5-vector (or (N, 5) matrix) with TRT - GPT."""
    arr = np.asarray(targets, dtype=np.float64).copy()
    arr[..., _GPT] = arr[..., _TRT] - arr[..., _GPT]
    return arr


def residual_to_gpt(values) -> np.ndarray:
    """Inverse of :func:`gpt_to_residual`: restore GPT = TRT - residual."""
    arr = np.asarray(values, dtype=np.float64).copy()
    arr[..., _GPT] = arr[..., _TRT] - arr[..., _GPT]
    return arr


@dataclass(frozen=True)
class ScalerParams:
    """Per-column scaling statistics, fit once on training data.

    For ``min_max`` mode, ``stat_a``/``stat_b`` hold per-column min/max; for
    ``standard`` mode they hold mean/std (population convention, divide by N).
    Columns flagged degenerate (max == min, or std == 0) scale everything to 0
    and invert back to the constant.
    """

    mode: str
    stat_a: np.ndarray
    stat_b: np.ndarray
    degenerate: np.ndarray

    def n_dims(self) -> int:
        return 0 if self.mode == "none" else self.stat_a.shape[0]

    def to_dict(self) -> dict:
        if self.mode == "none":
            return {"mode": "none"}
        a_key, b_key = _STAT_KEYS[self.mode]
        return {
            "mode": self.mode,
            a_key: self.stat_a.tolist(),
            b_key: self.stat_b.tolist(),
            "degenerate": self.degenerate.astype(int).tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScalerParams":
        mode = data["mode"]
        if mode == "none":
            return identity_scaler()
        a_key, b_key = _STAT_KEYS[mode]
        return cls(
            mode=mode,
            stat_a=np.asarray(data[a_key], dtype=np.float64),
            stat_b=np.asarray(data[b_key], dtype=np.float64),
            degenerate=np.asarray(data["degenerate"], dtype=bool),
        )


_STAT_KEYS = {"min_max": ("min", "max"), "standard": ("mean", "std")}


def identity_scaler() -> ScalerParams:
    empty = np.zeros(0)
    return ScalerParams("none", empty, empty, empty.astype(bool))


def fit_scaler(data, mode: str) -> ScalerParams:
    """Compute per-column statistics of a (N, D) matrix for the given mode."""
    if mode not in SCALER_MODES:
        raise ConfigError(f"unknown scaler mode {mode!r}, expected one of "
                          f"{SCALER_MODES}")
    if mode == "none":
        return identity_scaler()
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.size == 0:
        raise ValidationError("cannot fit a scaler on empty data")
    if mode == "min_max":
        a = arr.min(axis=0)
        b = arr.max(axis=0)
        degenerate = b == a
    else:
        a = arr.mean(axis=0)
        b = arr.std(axis=0)  # population std, no correction term
        degenerate = b == 0.0
    return ScalerParams(mode, a, b, degenerate)


def _check_dims(x: np.ndarray, p: ScalerParams) -> None:
    if x.shape[-1] != p.stat_a.shape[0]:
        raise ValidationError(
            f"dimension mismatch: data has {x.shape[-1]} columns, scaler was "
            f"fit on {p.stat_a.shape[0]}")


def apply_scaler(x, p: ScalerParams) -> np.ndarray:
    """Scale a vector or matrix column-wise per the fitted statistics."""
    arr = np.asarray(x, dtype=np.float64)
    if p.mode == "none":
        return arr.copy()
    _check_dims(arr, p)
    if p.mode == "min_max":
        span = np.where(p.degenerate, 1.0, p.stat_b - p.stat_a)
        out = (arr - p.stat_a) / span
    else:
        std = np.where(p.degenerate, 1.0, p.stat_b)
        out = (arr - p.stat_a) / std
    return np.where(p.degenerate, 0.0, out)


def invert_scaler(x, p: ScalerParams) -> np.ndarray:
    """Algebraic inverse of :func:`apply_scaler`.

    Degenerate columns return the constant the scaler was fit on.
    """
    arr = np.asarray(x, dtype=np.float64)
    if p.mode == "none":
        return arr.copy()
    _check_dims(arr, p)
    if p.mode == "min_max":
        out = arr * (p.stat_b - p.stat_a) + p.stat_a
    else:
        out = arr * p.stat_b + p.stat_a
    return np.where(p.degenerate, p.stat_a, out)
