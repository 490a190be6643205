"""Cubic Hermite control paths with backward-difference knot tangents.

Each segment only depends on its two end knots and the knot before them, so
appending an observation never changes earlier segments.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class InvalidSampleError(ValueError):
    pass


class InsufficientDataError(ValueError):
    pass


class OutOfSpanError(ValueError):
    pass


@dataclass(frozen=True)
class TimeSeriesSample:
    """Observation window. ``values`` has the time axis first: (L, ...)."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        if times.ndim != 1 or len(times) != len(values):
            raise InvalidSampleError(
                f"times ({times.shape}) and values ({values.shape}) disagree in length"
            )
        if len(times) < 2:
            raise InsufficientDataError(f"need at least 2 observations, got {len(times)}")
        if np.any(np.diff(times) <= 0):
            raise InvalidSampleError("times must be strictly increasing")
        if not np.all(np.isfinite(values)):
            raise InvalidSampleError("values contain missing or non-finite entries")

    @classmethod
    def regular(cls, values) -> "TimeSeriesSample":
        """Sample on the normalized grid 0, 1, ..., L-1."""
        values = np.asarray(values, dtype=float)
        return cls(np.arange(len(values), dtype=float), values)

    @property
    def length(self) -> int:
        return len(self.times)

    @property
    def n_features(self) -> int:
        return self.values.shape[-1]


@dataclass(frozen=True)
class ContinuousPath:
    """Piecewise cubic in local coordinate s = (t - t_i) / (t_{i+1} - t_i).

    ``segment_coeffs[i, k]`` multiplies s**k on segment i; trailing axes are
    the feature (and optionally batch) axes of the fitted values.
    """

    knot_times: np.ndarray
    segment_coeffs: np.ndarray
    knot_values: np.ndarray

    @property
    def span(self) -> tuple[float, float]:
        return float(self.knot_times[0]), float(self.knot_times[-1])

    def value(self, t: float) -> np.ndarray:
        return path_value(self, t)

    def derivative(self, t: float) -> np.ndarray:
        return path_derivative(self, t)


def hermite_tangents(times: np.ndarray, values: np.ndarray) -> np.ndarray:
    tangents = np.zeros_like(values)
    dt = np.diff(times).reshape((-1,) + (1,) * (values.ndim - 1))
    tangents[1:] = (values[1:] - values[:-1]) / dt
    return tangents


def fit_hermite(sample: TimeSeriesSample) -> ContinuousPath:
    times, y = sample.times, sample.values
    m = hermite_tangents(times, y)
    dt = np.diff(times).reshape((-1,) + (1,) * (y.ndim - 1))
    y0, y1 = y[:-1], y[1:]
    m0, m1 = m[:-1] * dt, m[1:] * dt
    coeffs = np.stack(
        [
            y0,
            m0,
            -3.0 * y0 - 2.0 * m0 + 3.0 * y1 - m1,
            2.0 * y0 + m0 - 2.0 * y1 + m1,
        ],
        axis=1,
    )
    coeffs.setflags(write=False)
    return ContinuousPath(times.copy(), coeffs, y.copy())


def _locate(path: ContinuousPath, t: float) -> tuple[int, float, float]:
    lo, hi = path.span
    if not lo <= t <= hi:
        raise OutOfSpanError(f"t={t} outside path span [{lo}, {hi}]")
    knots = path.knot_times
    i = int(np.searchsorted(knots, t, side="right")) - 1
    i = min(max(i, 0), len(knots) - 2)
    width = knots[i + 1] - knots[i]
    return i, (t - knots[i]) / width, width


def path_value(path: ContinuousPath, t: float) -> np.ndarray:
    i, s, _ = _locate(path, t)
    if s == 0.0:
        return path.knot_values[i].copy()
    if s == 1.0:
        return path.knot_values[i + 1].copy()
    a, b, c, d = path.segment_coeffs[i]
    return a + s * (b + s * (c + s * d))


def path_derivative(path: ContinuousPath, t: float) -> np.ndarray:
    i, s, width = _locate(path, t)
    _, b, c, d = path.segment_coeffs[i]
    return (b + s * (2.0 * c + s * 3.0 * d)) / width
