"""Bi-directional continuous GRU forecaster.

Forward pass: fit the control path, integrate one cell forward over the
window and an independent cell backward, add the two terminal states and map
the sum to a P x F forecast with a single affine head.  The time derivative of
the forecast is the head weight applied to the forward cell's terminal
derivative; the head bias does not contribute.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import autodiff as ad
from .autodiff import matvec, value_of
from .gru import GruCellParams
from .integrate import IntegrationConfig, integrate_hidden
from .spline import TimeSeriesSample, fit_hermite

CHECKPOINT_FORMAT = "contime-checkpoint/1"


class ModelConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    input_len: int
    pred_len: int
    n_features: int
    hidden_dim: int = 16
    step: float = 1.0
    delay: float = 1.0
    shift: bool = True

    def __post_init__(self):
        for name in ("input_len", "pred_len", "n_features", "hidden_dim"):
            if getattr(self, name) < 1:
                raise ModelConfigError(f"{name} must be positive")
        if self.input_len < 2:
            raise ModelConfigError("input_len must be at least 2")
        self.forward_integration()  # validates the grid

    def forward_integration(self) -> IntegrationConfig:
        return IntegrationConfig(self.step, "forward", 0.0, float(self.input_len - 1), self.delay)

    def backward_integration(self) -> IntegrationConfig:
        return self.forward_integration().reversed()


@dataclass
class ContimeParams:
    phi1_W: Any
    phi1_b: Any
    phi2_W: Any
    phi2_b: Any
    cell1: GruCellParams
    cell2: GruCellParams
    head_W: Any
    head_b: Any

    @classmethod
    def init(cls, cfg: ModelConfig, rng: np.random.Generator) -> "ContimeParams":
        H, F, PF = cfg.hidden_dim, cfg.n_features, cfg.pred_len * cfg.n_features
        kf, kh = 1.0 / np.sqrt(F), 1.0 / np.sqrt(H)
        return cls(
            phi1_W=rng.uniform(-kf, kf, (H, F)),
            phi1_b=np.zeros(H),
            phi2_W=rng.uniform(-kf, kf, (H, F)),
            phi2_b=np.zeros(H),
            cell1=GruCellParams.init(H, F, rng),
            cell2=GruCellParams.init(H, F, rng),
            head_W=rng.uniform(-kh, kh, (PF, H)),
            head_b=np.zeros(PF),
        )

    def to_dict(self) -> dict[str, Any]:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, GruCellParams):
                out.update({f"{f.name}.{g.name}": getattr(v, g.name) for g in fields(v)})
            else:
                out[f.name] = v
        return out

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ContimeParams":
        cells = {
            c: GruCellParams(**{g.name: d[f"{c}.{g.name}"] for g in fields(GruCellParams)})
            for c in ("cell1", "cell2")
        }
        flat = {k: d[k] for k in ("phi1_W", "phi1_b", "phi2_W", "phi2_b", "head_W", "head_b")}
        return cls(**flat, **cells)

    def map(self, fn: Callable[[str, Any], Any]) -> "ContimeParams":
        return ContimeParams.from_dict({k: fn(k, v) for k, v in self.to_dict().items()})

    def on_tape(self, tape: ad.Tape) -> "ContimeParams":
        """Register every tensor as a named leaf of ``tape``."""
        return self.map(lambda name, v: tape.leaf(v, name))

    def copy(self) -> "ContimeParams":
        return self.map(lambda _, v: np.array(value_of(v), dtype=float))

    def validate(self, cfg: ModelConfig) -> None:
        H, F, PF = cfg.hidden_dim, cfg.n_features, cfg.pred_len * cfg.n_features
        expected = {
            "phi1_W": (H, F), "phi1_b": (H,), "phi2_W": (H, F), "phi2_b": (H,),
            "head_W": (PF, H), "head_b": (PF,),
        }
        for name, shape in expected.items():
            if np.shape(value_of(getattr(self, name))) != shape:
                raise ModelConfigError(f"{name} has shape {np.shape(value_of(getattr(self, name)))}, expected {shape}")
        for cell in (self.cell1, self.cell2):
            cell.validate()
            if cell.hidden_dim != H or cell.input_dim != F:
                raise ModelConfigError("cell dimensions disagree with the model config")


@dataclass
class ForecastOutput:
    y_hat: Any
    y_hat_dt: Any
    h_terminal: Any
    dh_terminal: Any


def forward_batch(
    params: ContimeParams,
    windows: np.ndarray,
    cfg: ModelConfig,
    *,
    use_backward: bool = True,
) -> ForecastOutput:
    """Forecast a batch of windows shaped (B, T, F) on the grid 0..T-1.

    ``use_backward=False`` drops the backward branch from h(T); it exists for
    diagnostics only.
    """
    windows = np.asarray(windows, dtype=float)
    if windows.ndim != 3 or windows.shape[1:] != (cfg.input_len, cfg.n_features):
        raise ModelConfigError(
            f"windows must be (B, {cfg.input_len}, {cfg.n_features}), got {windows.shape}"
        )
    B = windows.shape[0]
    path = fit_hermite(TimeSeriesSample.regular(np.swapaxes(windows, 0, 1)))

    h1_start = matvec(params.phi1_W, windows[:, 0]) + params.phi1_b
    fwd = integrate_hidden(params.cell1, path, h1_start, cfg.forward_integration())
    h_T = fwd.terminal
    if use_backward:
        h2_end = matvec(params.phi2_W, windows[:, -1]) + params.phi2_b
        bwd = integrate_hidden(params.cell2, path, h2_end, cfg.backward_integration())
        # reverse layer: the backward terminal h2(s) is read at position T - s
        h_T = h_T + bwd.terminal
    dh_T = fwd.terminal_deriv

    shape = (B, cfg.pred_len, cfg.n_features)
    y_hat = ad.reshape(matvec(params.head_W, h_T) + params.head_b, shape)
    y_hat_dt = ad.reshape(matvec(params.head_W, dh_T), shape)
    return ForecastOutput(y_hat, y_hat_dt, h_T, dh_T)


def forward(params: ContimeParams, sample: TimeSeriesSample | np.ndarray, cfg: ModelConfig) -> ForecastOutput:
    """Single-window forecast; arrays in the result drop the batch axis."""
    values = sample.values if isinstance(sample, TimeSeriesSample) else np.asarray(sample, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    if len(values) != cfg.input_len:
        raise ModelConfigError(f"sample length {len(values)} != configured input_len {cfg.input_len}")
    out = forward_batch(params, values[None], cfg)
    return ForecastOutput(*(value_of(v)[0] for v in (out.y_hat, out.y_hat_dt, out.h_terminal, out.dh_terminal)))


def apply_shift(y_hat, last_obs):
    """Offset a forecast so its first row equals the last observation.

    Works on (P, F) or batched (B, P, F) forecasts with matching ``last_obs``.
    """
    yv, ov = value_of(y_hat), value_of(last_obs)
    if yv.shape[:-2] + yv.shape[-1:] != np.shape(ov):
        raise ModelConfigError(f"shift shapes disagree: y_hat {yv.shape}, last_obs {np.shape(ov)}")
    first = y_hat[..., 0:1, :]
    anchor = ad.reshape(last_obs, np.shape(ov)[:-1] + (1, np.shape(ov)[-1]))
    # differencing first makes row 0 exactly the anchor
    return (y_hat - first) + anchor


def target_differences(y: np.ndarray, last_obs: np.ndarray) -> np.ndarray:
    """First differences of the target, anchored on the last input row."""
    y = np.asarray(y, dtype=float)
    last_obs = np.asarray(last_obs, dtype=float)
    if y.shape[:-2] + y.shape[-1:] != last_obs.shape:
        raise ModelConfigError(f"shapes disagree: y {y.shape}, last_obs {last_obs.shape}")
    prev = np.concatenate([last_obs[..., None, :], y[..., :-1, :]], axis=-2)
    return y - prev


# --------------------------------------------------------------------------
# checkpoints

def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def save_checkpoint(
    path: str | Path,
    params: ContimeParams,
    cfg: ModelConfig,
    *,
    norm_stats: dict | None = None,
    train_config: dict | None = None,
) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "model": asdict(cfg),
        "params": {k: np.asarray(value_of(v)).tolist() for k, v in params.to_dict().items()},
        "norm_stats": norm_stats,
        "train_config": train_config,
        "train_config_hash": config_hash(train_config) if train_config is not None else None,
    }
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path: str | Path) -> tuple[ContimeParams, ModelConfig, dict]:
    """Returns (params, model config, full document)."""
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ModelConfigError(f"{path}: not a checkpoint ({doc.get('format')!r})")
    cfg = ModelConfig(**doc["model"])
    params = ContimeParams.from_dict({k: np.array(v, dtype=float) for k, v in doc["params"].items()})
    params.validate(cfg)
    return params, cfg, doc
