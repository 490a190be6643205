"""Continuous-time bi-directional GRU forecaster with time-derivative supervision."""
from .data import Dataset, WindowSet, load_csv, split_70_10_20, standardize, synth_lagged_regime, window
from .gru import GruCellParams, LagState, gate_derivatives, gate_states, hidden_derivative
from .integrate import HiddenTrajectory, IntegrationConfig, integrate_hidden, rk4_step
from .losses import LossConfig, loss_delta_t, loss_task, loss_tdi_soft, loss_total
from .metrics import MetricReport, dtw, evaluate, soft_dtw, tdi
from .model import (
    ContimeParams,
    ForecastOutput,
    ModelConfig,
    apply_shift,
    forward,
    forward_batch,
    load_checkpoint,
    save_checkpoint,
    target_differences,
)
from .spline import ContinuousPath, TimeSeriesSample, fit_hermite, path_derivative, path_value
from .training import TrainConfig, adam_step, train

__version__ = "0.1.0"
