"""Continuous GRU gates and their closed-form time derivatives.

The cell reads the control path ``x`` and the delayed hidden state
``h_lag = h(t - tau)``; ``dh/dt`` is assembled from the gate derivatives by the
chain rule.  All functions accept numpy arrays or tape variables and broadcast
over leading batch axes.
"""
from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Any, NamedTuple

import numpy as np

from . import autodiff as ad
from .autodiff import matvec, sigmoid, tanh, value_of


class ShapeError(ValueError):
    pass


@dataclass
class GruCellParams:
    W_z: Any
    W_r: Any
    W_g: Any
    U_z: Any
    U_r: Any
    U_g: Any
    b_z: Any
    b_r: Any
    b_g: Any

    @property
    def hidden_dim(self) -> int:
        return value_of(self.U_z).shape[0]

    @property
    def input_dim(self) -> int:
        return value_of(self.W_z).shape[1]

    @classmethod
    def init(cls, hidden_dim: int, input_dim: int, rng: np.random.Generator) -> "GruCellParams":
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
        kw = 1.0 / np.sqrt(input_dim)
        ku = 1.0 / np.sqrt(hidden_dim)
        return cls(
            W_z=rng.uniform(-kw, kw, (hidden_dim, input_dim)),
            W_r=rng.uniform(-kw, kw, (hidden_dim, input_dim)),
            W_g=rng.uniform(-kw, kw, (hidden_dim, input_dim)),
            U_z=rng.uniform(-ku, ku, (hidden_dim, hidden_dim)),
            U_r=rng.uniform(-ku, ku, (hidden_dim, hidden_dim)),
            U_g=rng.uniform(-ku, ku, (hidden_dim, hidden_dim)),
            b_z=np.zeros(hidden_dim),
            b_r=np.zeros(hidden_dim),
            b_g=np.zeros(hidden_dim),
        )

    @classmethod
    def zeros(cls, hidden_dim: int, input_dim: int) -> "GruCellParams":
        return cls(
            *(np.zeros((hidden_dim, input_dim)) for _ in range(3)),
            *(np.zeros((hidden_dim, hidden_dim)) for _ in range(3)),
            *(np.zeros(hidden_dim) for _ in range(3)),
        )

    def validate(self) -> None:
        h, f = self.hidden_dim, self.input_dim
        expected = {"W": (h, f), "U": (h, h), "b": (h,)}
        for fld in fields(self):
            arr = value_of(getattr(self, fld.name))
            if arr.shape != expected[fld.name[0]]:
                raise ShapeError(f"{fld.name} has shape {arr.shape}, expected {expected[fld.name[0]]}")
            if not np.all(np.isfinite(arr)):
                raise ShapeError(f"{fld.name} has non-finite entries")


class LagState(NamedTuple):
    h_lag: Any
    dh_lag: Any


class GateState(NamedTuple):
    A: Any
    B: Any
    C: Any
    z: Any
    r: Any
    g: Any
    zeta: Any


class GateDerivatives(NamedTuple):
    dz_dt: Any
    dg_dt: Any
    dr_dt: Any


def _check(params: GruCellParams, x, lag: LagState) -> None:
    if np.shape(value_of(x))[-1] != params.input_dim:
        raise ShapeError(f"x has {np.shape(value_of(x))[-1]} features, cell expects {params.input_dim}")
    for name, v in zip(("h_lag", "dh_lag"), lag):
        if np.shape(value_of(v))[-1] != params.hidden_dim:
            raise ShapeError(f"{name} has size {np.shape(value_of(v))[-1]}, cell expects {params.hidden_dim}")


def gate_states(params: GruCellParams, x, lag: LagState) -> GateState:
    _check(params, x, lag)
    p, h_lag = params, lag.h_lag
    A = matvec(p.W_z, x) + matvec(p.U_z, h_lag) + p.b_z
    C = matvec(p.W_r, x) + matvec(p.U_r, h_lag) + p.b_r
    r = sigmoid(C)
    B = matvec(p.W_g, x) + matvec(p.U_g, r * h_lag) + p.b_g
    z = sigmoid(A)
    g = tanh(B)
    return GateState(A, B, C, z, r, g, h_lag - g)


def gate_derivatives(
    params: GruCellParams, x, dx_dt, lag: LagState, gates: GateState
) -> GateDerivatives:
    # dr/dt feeds dB/dt, so the reset gate goes first
    _check(params, x, lag)
    p = params
    h_lag, dh_lag = lag
    dC = matvec(p.W_r, dx_dt) + matvec(p.U_r, dh_lag)
    dr = gates.r * (1.0 - gates.r) * dC
    dA = matvec(p.W_z, dx_dt) + matvec(p.U_z, dh_lag)
    dz = gates.z * (1.0 - gates.z) * dA
    dB = matvec(p.W_g, dx_dt) + matvec(p.U_g, dr * h_lag) + matvec(p.U_g, gates.r * dh_lag)
    dg = (1.0 - ad.square(gates.g)) * dB
    return GateDerivatives(dz, dg, dr)


def hidden_derivative(gates: GateState, derivs: GateDerivatives, lag: LagState):
    """dh/dt = dz * zeta + z * (dh_lag - dg) + dg."""
    return derivs.dz_dt * gates.zeta + gates.z * (lag.dh_lag - derivs.dg_dt) + derivs.dg_dt


def hidden_state(gates: GateState, lag: LagState):
    """Discrete GRU composition h = z * h_lag + (1 - z) * g."""
    return gates.z * lag.h_lag + (1.0 - gates.z) * gates.g


def vector_field(params: GruCellParams, x, dx_dt, lag: LagState):
    gates = gate_states(params, x, lag)
    derivs = gate_derivatives(params, x, dx_dt, lag, gates)
    return hidden_derivative(gates, derivs, lag)
