"""Fixed-step RK4 integration of the continuous GRU hidden state.

The delayed state ``h(t - tau)`` and its derivative are read from the
trajectory already computed.  Each completed step is summarised by its end
states and end derivatives, and the lag at an intermediate stage time is the
cubic Hermite interpolant of that step.  Before ``t_start`` the history is the
constant initial state with zero derivative.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .autodiff import value_of
from .gru import GruCellParams, LagState, vector_field
from .spline import ContinuousPath, OutOfSpanError, path_derivative, path_value


class DivergenceError(ArithmeticError):
    def __init__(self, message: str, t: float):
        super().__init__(message)
        self.t = t


class IntegrationConfigError(ValueError):
    pass


@dataclass(frozen=True)
class IntegrationConfig:
    """Solver grid. ``delay`` (tau) defaults to one step and must be a whole
    number of steps."""

    step: float = 1.0
    direction: str = "forward"
    t_start: float = 0.0
    t_end: float = 1.0
    delay: float | None = None

    def __post_init__(self):
        if self.direction not in ("forward", "backward"):
            raise IntegrationConfigError(f"direction must be forward or backward, got {self.direction!r}")
        if not self.step > 0:
            raise IntegrationConfigError(f"step must be positive, got {self.step}")
        span = self.t_end - self.t_start
        if self.direction == "forward" and not span > 0:
            raise IntegrationConfigError("forward integration needs t_start < t_end")
        if self.direction == "backward" and not span < 0:
            raise IntegrationConfigError("backward integration needs t_start > t_end")
        _whole(abs(span) / self.step, "span / step")
        _whole(self.tau / self.step, "delay / step")

    @property
    def tau(self) -> float:
        return self.step if self.delay is None else self.delay

    @property
    def n_steps(self) -> int:
        return _whole(abs(self.t_end - self.t_start) / self.step, "span / step")

    @property
    def lag_steps(self) -> int:
        return _whole(self.tau / self.step, "delay / step")

    @property
    def signed_step(self) -> float:
        return self.step if self.direction == "forward" else -self.step

    def reversed(self) -> "IntegrationConfig":
        direction = "backward" if self.direction == "forward" else "forward"
        return IntegrationConfig(self.step, direction, self.t_end, self.t_start, self.delay)


def _whole(ratio: float, what: str) -> int:
    n = round(ratio)
    if n < 1 or not math.isclose(ratio, n, rel_tol=1e-9, abs_tol=1e-9):
        raise IntegrationConfigError(f"{what} must be a positive integer, got {ratio}")
    return n


@dataclass
class HiddenTrajectory:
    """States on the solver grid.

    ``state_derivs[n]`` is the field value leaving grid point n (the final
    entry is the field at ``t_end``).  ``end_derivs[n]`` is the field value
    arriving at grid point n + 1; it differs from ``state_derivs[n + 1]``
    only where the delayed derivative jumps.
    """

    times: np.ndarray
    states: list = field(default_factory=list)
    state_derivs: list = field(default_factory=list)
    end_derivs: list = field(default_factory=list)

    @property
    def terminal(self):
        return self.states[-1]

    @property
    def terminal_deriv(self):
        return self.state_derivs[-1]


def _check_finite(x, t: float) -> None:
    if not np.all(np.isfinite(value_of(x))):
        raise DivergenceError(f"non-finite solver stage at t={t}", t)


def rk4_stages(field_fn: Callable, t: float, h, step: float, *, state_free: bool = False):
    """One classical RK4 step; returns (new_state, k1, k4).

    ``state_free`` declares that ``field_fn`` ignores its state argument, so
    the intermediate stage states are not formed.
    """
    half = 0.5 * step
    k1 = field_fn(t, h)
    _check_finite(k1, t)
    k2 = field_fn(t + half, h if state_free else h + half * k1)
    _check_finite(k2, t + half)
    k3 = field_fn(t + half, h if state_free else h + half * k2)
    _check_finite(k3, t + half)
    k4 = field_fn(t + step, h if state_free else h + step * k3)
    _check_finite(k4, t + step)
    if state_free and k2 is k3:
        return h + (step / 6.0) * (k1 + 4.0 * k2 + k4), k1, k4
    new_h = h + (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return new_h, k1, k4


def rk4_step(field_fn: Callable, t: float, h, step: float):
    return rk4_stages(field_fn, t, h, step)[0]


def hermite_lag(h_a, h_b, d_a, d_b, step: float, c: float) -> LagState:
    """State and time derivative at fraction ``c`` of a step from its ends."""
    if c == 0.0:
        return LagState(h_a, d_a)
    if c == 1.0:
        return LagState(h_b, d_b)
    c2, c3 = c * c, c * c * c
    h00, h10 = 2 * c3 - 3 * c2 + 1, c3 - 2 * c2 + c
    h01, h11 = -2 * c3 + 3 * c2, c3 - c2
    value = h00 * h_a + (h10 * step) * d_a + h01 * h_b + (h11 * step) * d_b
    e00, e10 = (6 * c2 - 6 * c) / step, 3 * c2 - 4 * c + 1
    e01, e11 = (-6 * c2 + 6 * c) / step, 3 * c2 - 2 * c
    deriv = e00 * h_a + e10 * d_a + e01 * h_b + e11 * d_b
    return LagState(value, deriv)


def integrate_hidden(
    params: GruCellParams, path: ContinuousPath, h0, cfg: IntegrationConfig
) -> HiddenTrajectory:
    lo, hi = path.span
    t_min, t_max = sorted((cfg.t_start, cfg.t_end))
    if t_min < lo - 1e-12 or t_max > hi + 1e-12:
        raise OutOfSpanError(f"integration range [{t_min}, {t_max}] exceeds path span [{lo}, {hi}]")

    step, n_steps, m = cfg.signed_step, cfg.n_steps, cfg.lag_steps
    times = cfg.t_start + step * np.arange(n_steps + 1)
    times[-1] = cfg.t_end
    zero = 0.0 * value_of(h0)
    traj = HiddenTrajectory(times=times, states=[h0])

    def lag_at(n: int, c: float) -> LagState:
        j = n - m
        if j < 0:
            return LagState(h0, zero)
        return hermite_lag(
            traj.states[j], traj.states[j + 1], traj.state_derivs[j], traj.end_derivs[j], step, c
        )

    def clamp(t: float) -> float:
        return min(max(t, lo), hi)

    h = h0
    for n in range(n_steps):
        t_n = times[n]
        t_next = times[n + 1]
        cache: dict[float, Any] = {}

        # the field depends on t only through the path and the lag history
        def field_fn(t, _h, n=n, t_n=t_n, t_next=t_next, cache=cache):
            # RK4 only probes the fractions 0, 1/2 and 1 of a step
            c = round(2.0 * (t - t_n) / step) / 2.0
            if c not in cache:
                tc = clamp(t_next if c == 1.0 else t)
                cache[c] = vector_field(
                    params, path_value(path, tc), path_derivative(path, tc), lag_at(n, c)
                )
            return cache[c]

        h, k1, k4 = rk4_stages(field_fn, t_n, h, step, state_free=True)
        traj.state_derivs.append(k1)
        traj.end_derivs.append(k4)
        traj.states.append(h)
    traj.state_derivs.append(traj.end_derivs[-1])
    return traj
