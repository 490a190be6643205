"""Shape and delay metrics: MSE, DTW, TDI and soft-DTW.

DTW and TDI follow the squared-difference cost matrix
``Delta[h, j] = (a_h - b_j)**2`` and the delay penalty
``Omega[h, j] = (h - j)**2 / P**2``.  Multivariate series are scored per
feature channel and averaged; MSE is taken over all entries jointly.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class MetricError(ValueError):
    pass


@dataclass
class WarpingPath:
    matrix: np.ndarray
    steps: list[tuple[int, int]]


def penalty_matrix(P: int) -> np.ndarray:
    idx = np.arange(P, dtype=float)
    return (idx[:, None] - idx[None, :]) ** 2 / float(P * P)


def cost_matrix(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return (a[..., :, None] - b[..., None, :]) ** 2


def _check_pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise MetricError(f"sequence shapes differ: {a.shape} vs {b.shape}")
    if a.shape[-1] == 0:
        raise MetricError("empty sequence")
    return a, b


# --------------------------------------------------------------------------
# hard DTW

def _accumulate(delta: np.ndarray) -> np.ndarray:
    """Cumulative-cost table R with R[..., i, j] the best path cost to (i, j)."""
    P, Q = delta.shape[-2:]
    R = np.full(delta.shape, np.inf)
    for i in range(P):
        for j in range(Q):
            if i == 0 and j == 0:
                best = 0.0
            else:
                cands = []
                if i > 0 and j > 0:
                    cands.append(R[..., i - 1, j - 1])
                if i > 0:
                    cands.append(R[..., i - 1, j])
                if j > 0:
                    cands.append(R[..., i, j - 1])
                best = cands[0]
                for c in cands[1:]:
                    best = np.minimum(best, c)
            R[..., i, j] = best + delta[..., i, j]
    return R


def _backtrack(R: np.ndarray) -> list[tuple[int, int]]:
    # ties resolved diagonal > vertical > horizontal
    i, j = R.shape[0] - 1, R.shape[1] - 1
    steps = [(i, j)]
    while (i, j) != (0, 0):
        if i == 0:
            j -= 1
        elif j == 0:
            i -= 1
        else:
            moves = ((i - 1, j - 1), (i - 1, j), (i, j - 1))
            i, j = min(moves, key=lambda m: R[m])
        steps.append((i, j))
    steps.reverse()
    return steps


def dtw_cost_batch(a, b) -> np.ndarray:
    """DTW cost of many sequence pairs at once (leading axes are batch)."""
    a, b = _check_pair(a, b)
    return _accumulate(cost_matrix(a, b))[..., -1, -1]


def dtw_paths_batch(a, b) -> tuple[np.ndarray, np.ndarray]:
    """Costs (...,) and binary optimal-path matrices (..., P, P)."""
    a, b = _check_pair(a, b)
    R = _accumulate(cost_matrix(a, b))
    P = a.shape[-1]
    flat = R.reshape(-1, P, P)
    paths = np.zeros_like(flat)
    for k in range(flat.shape[0]):
        for i, j in _backtrack(flat[k]):
            paths[k, i, j] = 1.0
    return R[..., -1, -1], paths.reshape(R.shape)


def dtw(a, b) -> tuple[float, WarpingPath]:
    a, b = _check_pair(np.ravel(a), np.ravel(b))
    R = _accumulate(cost_matrix(a, b))
    steps = _backtrack(R)
    A = np.zeros_like(R)
    for i, j in steps:
        A[i, j] = 1.0
    return float(R[-1, -1]), WarpingPath(A, steps)


def tdi(a, b) -> float:
    _, path = dtw(a, b)
    return float(np.sum(path.matrix * penalty_matrix(len(path.matrix))))


def tdi_batch(a, b) -> np.ndarray:
    _, paths = dtw_paths_batch(a, b)
    return np.sum(paths * penalty_matrix(np.shape(a)[-1]), axis=(-2, -1))


# --------------------------------------------------------------------------
# soft DTW

def _check_gamma(gamma: float) -> None:
    if not gamma > 0:
        raise MetricError(f"gamma must be positive, got {gamma}")


def _softmin(cands: list[np.ndarray], gamma: float) -> np.ndarray:
    stack = np.stack(cands)
    m = np.min(stack, axis=0)
    safe = np.where(np.isfinite(m), m, 0.0)
    return safe - gamma * np.log(np.sum(np.exp(-(stack - safe) / gamma), axis=0))


def _soft_forward(delta: np.ndarray, gamma: float) -> np.ndarray:
    """Padded table R of shape (..., P+1, Q+1); R[..., 0, 0] = 0, borders inf."""
    P, Q = delta.shape[-2:]
    R = np.full(delta.shape[:-2] + (P + 1, Q + 1), np.inf)
    R[..., 0, 0] = 0.0
    for i in range(1, P + 1):
        for j in range(1, Q + 1):
            cands = [R[..., i - 1, j - 1], R[..., i - 1, j], R[..., i, j - 1]]
            R[..., i, j] = delta[..., i - 1, j - 1] + _softmin(cands, gamma)
    return R


def _weight(R, delta, gamma, succ, cur):
    """d R[succ] / d R[cur] for neighbouring cells of the padded table."""
    si, sj = succ
    w = np.exp((R[..., si, sj] - delta[..., si - 1, sj - 1] - R[..., cur[0], cur[1]]) / gamma)
    return np.where(np.isfinite(R[..., cur[0], cur[1]]), w, 0.0)


def _successors(i, j, P, Q):
    for di, dj in ((1, 1), (1, 0), (0, 1)):
        if i + di <= P and j + dj <= Q:
            yield i + di, j + dj


def _soft_backward(delta: np.ndarray, R: np.ndarray, gamma: float) -> np.ndarray:
    P, Q = delta.shape[-2:]
    E = np.zeros(R.shape)
    E[..., P, Q] = 1.0
    for i in range(P, 0, -1):
        for j in range(Q, 0, -1):
            if i == P and j == Q:
                continue
            acc = 0.0
            for s in _successors(i, j, P, Q):
                acc = acc + E[..., s[0], s[1]] * _weight(R, delta, gamma, s, (i, j))
            E[..., i, j] = acc
    return E[..., 1:, 1:]


def soft_dtw_batch(delta: np.ndarray, gamma: float) -> tuple[np.ndarray, np.ndarray]:
    """Soft-DTW value and expected alignment for cost matrices (..., P, Q)."""
    _check_gamma(gamma)
    delta = np.asarray(delta, dtype=float)
    R = _soft_forward(delta, gamma)
    return R[..., -1, -1], _soft_backward(delta, R, gamma)


def soft_dtw_hvp(delta: np.ndarray, gamma: float, direction: np.ndarray) -> np.ndarray:
    """Hessian of soft-DTW w.r.t. the cost matrix applied to ``direction``.

    Forward-mode differentiation of the alignment recursion; this is the
    gradient of <alignment(delta), direction> with respect to delta.
    """
    _check_gamma(gamma)
    delta = np.asarray(delta, dtype=float)
    V = np.asarray(direction, dtype=float)
    P, Q = delta.shape[-2:]
    R = _soft_forward(delta, gamma)
    Rd = np.zeros(R.shape)
    for i in range(1, P + 1):
        for j in range(1, Q + 1):
            acc = V[..., i - 1, j - 1]
            for p in ((i - 1, j - 1), (i - 1, j), (i, j - 1)):
                acc = acc + _weight(R, delta, gamma, (i, j), p) * Rd[..., p[0], p[1]]
            Rd[..., i, j] = acc
    E = np.zeros(R.shape)
    Ed = np.zeros(R.shape)
    E[..., P, Q] = 1.0
    for i in range(P, 0, -1):
        for j in range(Q, 0, -1):
            if i == P and j == Q:
                continue
            e = 0.0
            ed = 0.0
            for s in _successors(i, j, P, Q):
                w = _weight(R, delta, gamma, s, (i, j))
                wd = w * ((Rd[..., s[0], s[1]] - V[..., s[0] - 1, s[1] - 1]) - Rd[..., i, j]) / gamma
                e = e + E[..., s[0], s[1]] * w
                ed = ed + Ed[..., s[0], s[1]] * w + E[..., s[0], s[1]] * wd
            E[..., i, j] = e
            Ed[..., i, j] = ed
    return Ed[..., 1:, 1:]


def soft_dtw(a, b, gamma: float) -> tuple[float, np.ndarray]:
    """Soft-DTW between two scalar sequences and its soft alignment matrix."""
    a, b = _check_pair(np.ravel(a), np.ravel(b))
    value, path = soft_dtw_batch(cost_matrix(a, b), gamma)
    return float(value), path


# --------------------------------------------------------------------------
# evaluation

def sample_metrics(pred: np.ndarray, truth: np.ndarray) -> dict[str, np.ndarray]:
    """Per-sample MSE, DTW and TDI for forecasts shaped (N, P, F)."""
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise MetricError(f"prediction shape {pred.shape} != truth shape {truth.shape}")
    if pred.ndim == 2:
        pred, truth = pred[None], truth[None]
    if pred.ndim != 3 or pred.shape[1] == 0:
        raise MetricError(f"expected (N, P, F) forecasts, got {pred.shape}")
    mse = np.mean((pred - truth) ** 2, axis=(1, 2))
    # channels first so that each (sample, feature) pair is one sequence
    a, b = np.swapaxes(pred, 1, 2), np.swapaxes(truth, 1, 2)
    cost, paths = dtw_paths_batch(a, b)
    tdi_val = np.sum(paths * penalty_matrix(pred.shape[1]), axis=(-2, -1))
    return {"mse": mse, "dtw": cost.mean(axis=1), "tdi": tdi_val.mean(axis=1)}


@dataclass
class MetricReport:
    dataset: str
    P: int
    seeds: list
    per_metric: dict[str, dict[str, float]]
    per_sample: dict[str, list] | None = field(default=None)

    def mean(self, metric: str) -> float:
        return self.per_metric[metric]["mean"]

    def to_json(self) -> dict:
        doc = {"dataset": self.dataset, "P": self.P, "seeds": list(self.seeds), "per_metric": self.per_metric}
        if self.per_sample is not None:
            doc["per_sample"] = self.per_sample
        return doc

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2))

    @classmethod
    def from_json(cls, doc: dict) -> "MetricReport":
        for key in ("dataset", "P", "seeds", "per_metric"):
            if key not in doc:
                raise MetricError(f"report is missing {key!r}")
        return cls(doc["dataset"], int(doc["P"]), list(doc["seeds"]), doc["per_metric"], doc.get("per_sample"))

    @classmethod
    def load(cls, path: str | Path) -> "MetricReport":
        return cls.from_json(json.loads(Path(path).read_text()))


METRICS = ("tdi", "dtw", "mse")


def evaluate(
    predictions,
    truths,
    *,
    dataset: str = "unnamed",
    seeds: list | None = None,
    keep_samples: bool = False,
) -> MetricReport:
    """Score one run, or several runs (one per seed) given as lists.

    Each run is averaged over features and then samples; the report carries
    the mean and standard deviation of those run scores.
    """
    runs_pred = predictions if isinstance(predictions, (list, tuple)) else [predictions]
    runs_true = truths if isinstance(truths, (list, tuple)) else [truths]
    if len(runs_pred) != len(runs_true) or not runs_pred:
        raise MetricError("predictions and truths must pair up run by run")
    scores = {m: [] for m in METRICS}
    samples = None
    for pred, truth in zip(runs_pred, runs_true):
        per = sample_metrics(pred, truth)
        for m in METRICS:
            scores[m].append(float(np.mean(per[m])))
        if keep_samples and samples is None:
            samples = {m: per[m].tolist() for m in METRICS}
    P = int(np.shape(runs_pred[0])[-2])
    per_metric = {m: {"mean": float(np.mean(v)), "std": float(np.std(v))} for m, v in scores.items()}
    seeds = list(seeds) if seeds is not None else list(range(len(runs_pred)))
    return MetricReport(dataset, P, seeds, per_metric, samples)
