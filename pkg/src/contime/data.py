"""CSV ingestion, chronological splits, train-only standardisation and windowing."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np


class IngestionError(ValueError):
    pass


class DataConfigError(ValueError):
    pass


class ConstantFeatureError(DataConfigError):
    pass


def load_csv(path: str | Path, columns: list[str] | None = None) -> tuple[np.ndarray, list[str], list[str]]:
    """Read ``date, feature...`` rows.

    Returns (values N x F, feature names, date strings).  ``columns`` picks a
    subset of feature columns by name.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError(f"{path}: empty file") from None
        if len(header) < 2:
            raise IngestionError(f"{path}: need a date column and at least one feature column")
        names = [h.strip() for h in header[1:]]
        if columns is None:
            picks = list(range(len(names)))
        else:
            missing = [c for c in columns if c not in names]
            if missing:
                raise IngestionError(f"{path}: missing column(s) {missing}")
            picks = [names.index(c) for c in columns]
        dates, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise IngestionError(f"{path}: row {lineno} has {len(row)} cells, expected {len(header)}")
            vals = []
            for k in picks:
                cell = row[k + 1].strip()
                if not cell:
                    raise IngestionError(f"{path}: row {lineno}, column {names[k]!r} is blank")
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise IngestionError(
                        f"{path}: row {lineno}, column {names[k]!r}: non-numeric value {cell!r}"
                    ) from None
            dates.append(row[0].strip())
            rows.append(vals)
    if not rows:
        raise IngestionError(f"{path}: no data rows")
    return np.array(rows, dtype=float), [names[k] for k in picks], dates


def split_70_10_20(n_rows: int, min_len: int | None = None) -> tuple[range, range, range]:
    """Contiguous chronological train/val/test ranges.

    ``min_len`` (typically T + P) is the shortest acceptable split.
    """
    if n_rows < 10:
        raise DataConfigError(f"need at least 10 rows to split, got {n_rows}")
    n_train = (7 * n_rows) // 10
    n_val = n_rows // 10
    splits = (range(0, n_train), range(n_train, n_train + n_val), range(n_train + n_val, n_rows))
    if min_len is not None:
        for name, r in zip(("train", "val", "test"), splits):
            if len(r) < min_len:
                raise DataConfigError(f"{name} split has {len(r)} rows, fewer than one window ({min_len})")
    return splits


@dataclass
class Dataset:
    name: str
    feature_names: list[str]
    splits: dict[str, np.ndarray]
    norm_stats: dict[str, np.ndarray] | None = None
    dates: list[str] | None = field(default=None, repr=False)

    @classmethod
    def from_array(cls, name: str, values: np.ndarray, feature_names=None, dates=None, min_len=None) -> "Dataset":
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        tr, va, te = split_70_10_20(len(values), min_len)
        names = list(feature_names) if feature_names is not None else [f"x{i}" for i in range(values.shape[1])]
        return cls(name, names, {"train": values[tr], "val": values[va], "test": values[te]}, dates=dates)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def inverse_transform(self, x: np.ndarray) -> np.ndarray:
        if self.norm_stats is None:
            return np.asarray(x, dtype=float)
        return inverse_standardize(x, self.norm_stats)


def standardize(dataset: Dataset, stats: dict | None = None) -> Dataset:
    """Z-score every split with train statistics.

    ``stats`` (``{"mean", "std"}``) reuses statistics fitted earlier, e.g. the
    ones stored in a checkpoint, instead of refitting on this train split.
    """
    if dataset.norm_stats is not None:
        raise DataConfigError("dataset is already standardized")
    if stats is None:
        train = dataset.splits["train"]
        mean, std = train.mean(axis=0), train.std(axis=0)
    else:
        mean, std = np.asarray(stats["mean"], dtype=float), np.asarray(stats["std"], dtype=float)
        if mean.shape != (dataset.n_features,) or std.shape != (dataset.n_features,):
            raise DataConfigError(f"stored statistics cover {mean.shape} features, data has {dataset.n_features}")
    flat = np.flatnonzero(~(std > 0))
    if flat.size:
        raise ConstantFeatureError(
            f"constant feature(s) in train split: {[dataset.feature_names[i] for i in flat]}"
        )
    splits = {k: (v - mean) / std for k, v in dataset.splits.items()}
    return replace(dataset, splits=splits, norm_stats={"mean": mean, "std": std})


def inverse_standardize(x, stats: dict) -> np.ndarray:
    return np.asarray(x, dtype=float) * np.asarray(stats["std"]) + np.asarray(stats["mean"])


@dataclass
class WindowSet:
    inputs: np.ndarray  # (N, T, F)
    targets: np.ndarray  # (N, P, F)
    last_obs: np.ndarray  # (N, F)
    starts: np.ndarray  # index of each window's first input row in its split

    def __len__(self) -> int:
        return len(self.inputs)

    def subset(self, idx) -> "WindowSet":
        return WindowSet(self.inputs[idx], self.targets[idx], self.last_obs[idx], self.starts[idx])


def window(split: np.ndarray, T: int, P: int, stride: int = 1) -> WindowSet:
    split = np.asarray(split, dtype=float)
    if split.ndim == 1:
        split = split[:, None]
    if T < 2 or P < 1 or stride < 1:
        raise DataConfigError(f"invalid window geometry T={T}, P={P}, stride={stride}")
    if len(split) < T + P:
        raise DataConfigError(f"split of length {len(split)} is shorter than T + P = {T + P}")
    starts = np.arange(0, len(split) - T - P + 1, stride)
    inputs = np.stack([split[s:s + T] for s in starts])
    targets = np.stack([split[s + T:s + T + P] for s in starts])
    return WindowSet(inputs, targets, inputs[:, -1].copy(), starts)


def dump_windows(windows: WindowSet, path: str | Path) -> None:
    """One CSV row per window: start index, then flattened inputs and targets."""
    N, T, F = windows.inputs.shape
    P = windows.targets.shape[1]
    header = ["start"] + [f"in_{t}_{f}" for t in range(T) for f in range(F)] + [
        f"out_{p}_{f}" for p in range(P) for f in range(F)
    ]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k in range(N):
            w.writerow([int(windows.starts[k])] + [repr(float(v)) for v in windows.inputs[k].ravel()]
                       + [repr(float(v)) for v in windows.targets[k].ravel()])


def synth_lagged_regime(
    length: int,
    period: int = 24,
    seed: int = 0,
    *,
    flip_prob: float = 0.3,
    amp_range: tuple[float, float] = (0.5, 1.5),
    noise: float = 0.0,
) -> Dataset:
    """Sinusoid whose sign and amplitude may change at every zero crossing.

    The changes keep the series continuous but make the turning points
    unpredictable from the recent past, so copying the last value gives a
    small squared error and a visibly delayed forecast.  ``flip_prob=0``
    gives a pure sinusoid.
    """
    if length < 10 * period:
        raise DataConfigError(f"length must be at least 10 * period = {10 * period}")
    rng = np.random.default_rng(seed)
    t = np.arange(length, dtype=float)
    base = np.sin(2.0 * np.pi * t / period)
    half = period / 2.0
    regime = np.floor(t / half).astype(int)
    n_regimes = regime[-1] + 1
    sign = np.ones(n_regimes)
    amp = np.ones(n_regimes)
    for k in range(1, n_regimes):
        sign[k], amp[k] = sign[k - 1], amp[k - 1]
        if rng.random() < flip_prob:
            sign[k] = -sign[k]
            amp[k] = rng.uniform(*amp_range)
    series = sign[regime] * amp[regime] * base
    if noise > 0:
        series = series + noise * rng.standard_normal(length)
    return Dataset.from_array(f"synth_lagged_regime_p{period}_s{seed}", series, ["value"])
