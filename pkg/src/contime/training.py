"""Adam optimisation and the train / validate / keep-best loop."""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import value_of
from .data import WindowSet
from .integrate import DivergenceError
from .losses import LossConfig, loss_delta_t, loss_task, loss_tdi_soft, loss_total
from .model import ContimeParams, ModelConfig, apply_shift, forward_batch, target_differences

log = logging.getLogger(__name__)


class TrainingConfigError(ValueError):
    pass


class TrainingDivergence(ArithmeticError):
    def __init__(self, message: str, epoch: int):
        super().__init__(message)
        self.epoch = epoch


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.005
    epochs: int = 100
    batch_size: int = 32
    seed: int = 0
    clip_norm: float | None = 10.0
    eval_batch_size: int = 512
    log_wall_time: bool = False

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise TrainingConfigError("learning_rate must be positive")
        if self.epochs < 0:
            raise TrainingConfigError("epochs must be non-negative")
        if self.batch_size < 1 or self.eval_batch_size < 1:
            raise TrainingConfigError("batch sizes must be positive")
        if self.clip_norm is not None and not self.clip_norm > 0:
            raise TrainingConfigError("clip_norm must be positive")


# --------------------------------------------------------------------------
# Adam

@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls({k: np.zeros_like(v) for k, v in params.items()}, {k: np.zeros_like(v) for k, v in params.items()})


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[dict[str, np.ndarray], AdamState]:
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
    t = state.step + 1
    m, v, new = {}, {}, {}
    for name, p in params.items():
        g = grads[name]
        m[name] = beta1 * state.m[name] + (1.0 - beta1) * g
        v[name] = beta2 * state.v[name] + (1.0 - beta2) * g * g
        m_hat = m[name] / (1.0 - beta1**t)
        v_hat = v[name] / (1.0 - beta2**t)
        new[name] = p - lr * m_hat / (np.sqrt(v_hat) + eps)
    return new, AdamState(m, v, t)


def clip_by_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> dict[str, np.ndarray]:
    total = float(np.sqrt(np.sum([np.sum(g * g) for g in grads.values()])))
    if total <= max_norm:
        return grads
    factor = max_norm / total
    return {k: g * factor for k, g in grads.items()}


# --------------------------------------------------------------------------
# objective

def batch_losses(
    params: ContimeParams,
    batch: WindowSet,
    model_cfg: ModelConfig,
    loss_cfg: LossConfig,
    *,
    use_backward: bool = True,
):
    """(total, task, delta_t) for one batch; Vars when params live on a tape."""
    out = forward_batch(params, batch.inputs, model_cfg, use_backward=use_backward)
    y_hat = apply_shift(out.y_hat, batch.last_obs) if model_cfg.shift else out.y_hat
    task = loss_task(y_hat, batch.targets)
    delta = loss_delta_t(out.y_hat_dt, target_differences(batch.targets, batch.last_obs))
    if loss_cfg.mode == "task+tdi":
        aux = loss_tdi_soft(y_hat, batch.targets, loss_cfg.gamma)
    else:
        aux = delta
    return loss_total(loss_cfg, task, aux), task, delta


def loss_and_grads(
    params: ContimeParams,
    batch: WindowSet,
    model_cfg: ModelConfig,
    loss_cfg: LossConfig,
    *,
    use_backward: bool = True,
) -> tuple[float, float, float, dict[str, np.ndarray]]:
    tape = ad.Tape()
    total, task, delta = batch_losses(params.on_tape(tape), batch, model_cfg, loss_cfg, use_backward=use_backward)
    grads = tape.backward(total)
    return float(value_of(total)), float(value_of(task)), float(value_of(delta)), grads


def evaluate_losses(
    params: ContimeParams,
    windows: WindowSet,
    model_cfg: ModelConfig,
    loss_cfg: LossConfig,
    batch_size: int = 512,
) -> tuple[float, float, float]:
    """Sample-weighted mean (total, task, delta_t) over a window set."""
    sums = np.zeros(3)
    for lo in range(0, len(windows), batch_size):
        batch = windows.subset(slice(lo, lo + batch_size))
        vals = batch_losses(params, batch, model_cfg, loss_cfg)
        sums += len(batch) * np.array([float(value_of(v)) for v in vals])
    return tuple(sums / len(windows))


def predict(params: ContimeParams, windows: WindowSet, model_cfg: ModelConfig, batch_size: int = 512) -> np.ndarray:
    """Forecasts (N, P, F) on the model's scale, shifted if the config says so."""
    outs = []
    for lo in range(0, len(windows), batch_size):
        batch = windows.subset(slice(lo, lo + batch_size))
        y_hat = forward_batch(params, batch.inputs, model_cfg).y_hat
        if model_cfg.shift:
            y_hat = apply_shift(y_hat, batch.last_obs)
        outs.append(np.asarray(y_hat))
    return np.concatenate(outs)


# --------------------------------------------------------------------------
# loop

def train(
    train_data: WindowSet,
    val_data: WindowSet,
    params: ContimeParams,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    loss_cfg: LossConfig,
    *,
    history_path: str | Path | None = None,
) -> tuple[ContimeParams, list[dict]]:
    """Mini-batch Adam; returns the parameters of the best validation epoch.

    History records are ``{epoch, train_loss, val_loss, task, delta_t,
    wall_ms}``; ``wall_ms`` is null unless ``log_wall_time`` is set, which keeps
    reruns byte-identical.
    """
    if len(train_data) == 0 or len(val_data) == 0:
        raise TrainingConfigError("training and validation sets must be non-empty")
    params.validate(model_cfg)
    rng = np.random.default_rng(train_cfg.seed)
    current = {k: np.array(value_of(v), dtype=float) for k, v in params.to_dict().items()}
    state = AdamState.zeros_like(current)
    best = ContimeParams.from_dict({k: v.copy() for k, v in current.items()})
    best_val = np.inf
    history: list[dict] = []
    sink = Path(history_path).open("w") if history_path is not None else None
    try:
        for epoch in range(train_cfg.epochs):
            started = time.perf_counter()
            order = rng.permutation(len(train_data))
            sums = np.zeros(3)
            for lo in range(0, len(order), train_cfg.batch_size):
                batch = train_data.subset(order[lo:lo + train_cfg.batch_size])
                model = ContimeParams.from_dict(current)
                try:
                    total, task, delta, grads = loss_and_grads(model, batch, model_cfg, loss_cfg)
                    if train_cfg.clip_norm is not None:
                        grads = clip_by_global_norm(grads, train_cfg.clip_norm)
                    current, state = adam_step(current, grads, state, train_cfg.learning_rate)
                except (DivergenceError, ad.NumericError, FloatingPointError) as exc:
                    raise TrainingDivergence(f"epoch {epoch}: {exc}", epoch) from exc
                sums += len(batch) * np.array([total, task, delta])
            train_loss, task, delta = sums / len(train_data)
            model = ContimeParams.from_dict(current)
            try:
                val_loss = evaluate_losses(model, val_data, model_cfg, loss_cfg, train_cfg.eval_batch_size)[0]
            except DivergenceError as exc:
                raise TrainingDivergence(f"epoch {epoch}: validation diverged: {exc}", epoch) from exc
            if not np.isfinite(val_loss):
                raise TrainingDivergence(f"epoch {epoch}: validation loss is {val_loss}", epoch)
            if val_loss < best_val:
                best_val = val_loss
                best = model.copy()
            wall = round((time.perf_counter() - started) * 1000.0, 3) if train_cfg.log_wall_time else None
            record = {
                "epoch": epoch,
                "train_loss": float(train_loss),
                "val_loss": float(val_loss),
                "task": float(task),
                "delta_t": float(delta),
                "wall_ms": wall,
            }
            history.append(record)
            log.info("epoch %d train %.6f val %.6f", epoch, train_loss, val_loss)
            if sink is not None:
                sink.write(json.dumps(record) + "\n")
                sink.flush()
    finally:
        if sink is not None:
            sink.close()
    return best, history


def config_dict(*configs) -> dict:
    out = {}
    for c in configs:
        out.update(asdict(c))
    return out
