"""Training objectives: task MSE, derivative MSE, and the soft TDI regulariser."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import value_of
from .metrics import penalty_matrix, soft_dtw_batch, soft_dtw_hvp

LOSS_MODES = ("task-only", "task+delta", "task+tdi")


class LossConfigError(ValueError):
    pass


@dataclass(frozen=True)
class LossConfig:
    alpha: float = 0.9
    beta: float = 0.1
    mode: str = "task+delta"
    gamma: float = 0.01

    def __post_init__(self):
        if self.mode not in LOSS_MODES:
            raise LossConfigError(f"mode must be one of {LOSS_MODES}, got {self.mode!r}")
        if self.alpha < 0 or self.beta < 0:
            raise LossConfigError("alpha and beta must be non-negative")
        if not self.alpha + self.beta > 0:
            raise LossConfigError("alpha + beta must be positive")
        if not self.gamma > 0:
            raise LossConfigError(f"gamma must be positive, got {self.gamma}")


def _mse(a, b):
    if np.shape(value_of(a)) != np.shape(value_of(b)):
        raise LossConfigError(f"shape mismatch: {np.shape(value_of(a))} vs {np.shape(value_of(b))}")
    return ad.mean(ad.square(a - b))


def loss_task(y_hat, y):
    return _mse(y_hat, y)


def loss_delta_t(y_hat_dt, y_dt):
    return _mse(y_hat_dt, y_dt)


def loss_total(cfg: LossConfig, task, aux):
    if cfg.mode == "task-only":
        return cfg.alpha * task
    return cfg.alpha * task + cfg.beta * aux


def _alignment_vjp(g, vals, out, gamma, needs):
    return [soft_dtw_hvp(vals[0], gamma, g)]


ad.register_primitive("soft_alignment", _alignment_vjp)


def soft_alignment(delta, gamma: float):
    """Expected soft-DTW alignment of cost matrices (..., P, P)."""
    if not gamma > 0:
        raise LossConfigError(f"gamma must be positive, got {gamma}")
    _, path = soft_dtw_batch(value_of(delta), gamma)
    return ad.apply("soft_alignment", (delta,), path, cache=gamma)


def loss_tdi_soft(y_hat, y, gamma: float):
    """Soft temporal distortion index, averaged over channels and samples.

    Inputs are (P,), (P, F) or (B, P, F); the time axis is second to last
    when a feature axis is present.
    """
    if not gamma > 0:
        raise LossConfigError(f"gamma must be positive, got {gamma}")
    shape = np.shape(value_of(y_hat))
    if shape != np.shape(value_of(y)):
        raise LossConfigError(f"shape mismatch: {shape} vs {np.shape(value_of(y))}")
    if len(shape) == 1:
        shape = (1, shape[0], 1)
    elif len(shape) == 2:
        shape = (1,) + shape
    B, P, F = shape
    pred = ad.transpose(ad.reshape(y_hat, shape), (0, 2, 1))  # (B, F, P)
    true = ad.transpose(ad.reshape(y, shape), (0, 2, 1))
    delta = ad.square(ad.reshape(pred, (B, F, P, 1)) - ad.reshape(true, (B, F, 1, P)))
    align = soft_alignment(delta, gamma)
    per_pair = ad.sum(align * penalty_matrix(P), axis=(2, 3))
    return ad.mean(per_pair)
