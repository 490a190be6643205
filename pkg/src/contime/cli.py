"""Batch command line: ``contime train | eval | compare | forecast``.

Every option can also come from a JSON file given with ``--config``; flags
given on the command line override the file.  Outputs go under ``--out`` and
their names embed the dataset, horizon and seed.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .data import Dataset, load_csv, split_70_10_20, standardize, synth_lagged_regime, window
from .losses import LOSS_MODES, LossConfig
from .metrics import METRICS, MetricError, MetricReport, evaluate
from .model import ContimeParams, ModelConfig, ModelConfigError, apply_shift, forward, load_checkpoint, save_checkpoint
from .training import TrainConfig, predict, train

log = logging.getLogger("contime")

# resolved defaults for every run option; ``None`` means "not set"
RUN_DEFAULTS = {
    "data": None,
    "columns": None,
    "input_len": 36,
    "pred_len": 12,
    "hidden_dim": 16,
    "solver_step": 1.0,
    "delay": 1.0,
    "shift": True,
    "alpha": 0.9,
    "beta": 0.1,
    "loss_mode": "task+delta",
    "gamma": 0.01,
    "lr": 0.005,
    "epochs": 100,
    "batch_size": 32,
    "stride": 1,
    "seed": 0,
    "clip_norm": 10.0,
    "log_wall_time": False,
}


class CliError(Exception):
    pass


# --------------------------------------------------------------------------
# config resolution

def resolve_config(args: argparse.Namespace) -> dict:
    cfg = dict(RUN_DEFAULTS)
    if args.config is not None:
        try:
            doc = json.loads(Path(args.config).read_text())
        except FileNotFoundError:
            raise CliError(f"config file not found: {args.config}") from None
        except json.JSONDecodeError as exc:
            raise CliError(f"{args.config}: invalid JSON ({exc})") from None
        unknown = set(doc) - set(RUN_DEFAULTS)
        if unknown:
            raise CliError(f"{args.config}: unknown keys {sorted(unknown)}")
        cfg.update(doc)
    for key in RUN_DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    if isinstance(cfg["columns"], str):
        cfg["columns"] = [c.strip() for c in cfg["columns"].split(",") if c.strip()]
    if cfg["data"] is None:
        raise CliError("no data source: pass --data or set 'data' in the config file")
    return cfg


def build_configs(cfg: dict, n_features: int) -> tuple[ModelConfig, TrainConfig, LossConfig]:
    model = ModelConfig(
        input_len=int(cfg["input_len"]),
        pred_len=int(cfg["pred_len"]),
        n_features=n_features,
        hidden_dim=int(cfg["hidden_dim"]),
        step=float(cfg["solver_step"]),
        delay=float(cfg["delay"]),
        shift=bool(cfg["shift"]),
    )
    training = TrainConfig(
        learning_rate=float(cfg["lr"]),
        epochs=int(cfg["epochs"]),
        batch_size=int(cfg["batch_size"]),
        seed=int(cfg["seed"]),
        clip_norm=None if cfg["clip_norm"] is None else float(cfg["clip_norm"]),
        log_wall_time=bool(cfg["log_wall_time"]),
    )
    loss = LossConfig(alpha=float(cfg["alpha"]), beta=float(cfg["beta"]), mode=cfg["loss_mode"], gamma=float(cfg["gamma"]))
    return model, training, loss


def load_dataset(source: str, columns=None, min_len: int | None = None) -> Dataset:
    """A CSV path, or ``synth:LENGTH[:PERIOD[:SEED]]`` for the synthetic series."""
    if source.startswith("synth:"):
        parts = source.split(":")[1:]
        try:
            nums = [int(p) for p in parts]
        except ValueError:
            raise CliError(f"bad synthetic source {source!r}; expected synth:LENGTH[:PERIOD[:SEED]]") from None
        if not 1 <= len(nums) <= 3:
            raise CliError(f"bad synthetic source {source!r}; expected synth:LENGTH[:PERIOD[:SEED]]")
        ds = synth_lagged_regime(*nums)
        split_70_10_20(nums[0], min_len)
        return ds
    path = Path(source)
    if not path.is_file():
        raise CliError(f"data file not found: {source}")
    values, names, dates = load_csv(path, columns)
    return Dataset.from_array(path.stem, values, names, dates, min_len=min_len)


def run_stem(dataset: str, P: int, seed: int) -> str:
    return f"{dataset}_P{P}_s{seed}"


def _out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --------------------------------------------------------------------------
# commands

def cmd_train(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    T, P = int(cfg["input_len"]), int(cfg["pred_len"])
    ds = standardize(load_dataset(cfg["data"], cfg["columns"], min_len=T + P))
    model_cfg, train_cfg, loss_cfg = build_configs(cfg, ds.n_features)
    out = _out_dir(args.out)
    stem = run_stem(ds.name, P, train_cfg.seed)

    train_w = window(ds.splits["train"], T, P, int(cfg["stride"]))
    val_w = window(ds.splits["val"], T, P)
    init = ContimeParams.init(model_cfg, np.random.default_rng(train_cfg.seed))
    log.info("training %s: %d train / %d val windows", stem, len(train_w), len(val_w))
    best, history = train(
        train_w, val_w, init, model_cfg, train_cfg, loss_cfg, history_path=out / f"{stem}_history.jsonl"
    )

    resolved = dict(cfg, dataset=ds.name, feature_names=ds.feature_names)
    (out / f"{stem}_config.json").write_text(json.dumps(resolved, indent=2, sort_keys=True))
    stats = {k: v.tolist() for k, v in ds.norm_stats.items()}
    save_checkpoint(out / f"{stem}_checkpoint.json", best, model_cfg, norm_stats=stats, train_config=resolved)
    _check_written(out / f"{stem}_config.json", out / f"{stem}_checkpoint.json")
    if not (out / f"{stem}_history.jsonl").is_file():
        raise CliError(f"output was not written: {out / f'{stem}_history.jsonl'}")
    if len(history) != train_cfg.epochs:
        raise CliError(f"history has {len(history)} records, expected {train_cfg.epochs}")
    print(out / f"{stem}_checkpoint.json")
    return 0


def _check_written(*paths: Path) -> None:
    for p in paths:
        if not p.is_file() or p.stat().st_size == 0:
            raise CliError(f"output was not written: {p}")


def _open_checkpoint(path: str):
    if not Path(path).is_file():
        raise CliError(f"checkpoint not found: {path}")
    try:
        return load_checkpoint(path)
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise CliError(f"{path}: unreadable checkpoint ({exc})") from None


def cmd_eval(args: argparse.Namespace) -> int:
    params, model_cfg, doc = _open_checkpoint(args.checkpoint)
    run = doc.get("train_config") or {}
    if args.pred_len is not None and args.pred_len != model_cfg.pred_len:
        raise CliError(f"checkpoint forecasts P={model_cfg.pred_len}, asked for P={args.pred_len}")
    source = args.data or run.get("data")
    if source is None:
        raise CliError("no data source: pass --data")
    T, P = model_cfg.input_len, model_cfg.pred_len
    raw = load_dataset(source, run.get("columns"), min_len=T + P)
    if raw.n_features != model_cfg.n_features:
        raise CliError(f"checkpoint expects {model_cfg.n_features} features, data has {raw.n_features}")
    ds = standardize(raw, doc.get("norm_stats"))
    windows = window(ds.splits[args.split], T, P)
    preds = predict(params, windows, model_cfg)

    seed = int(run.get("seed", 0))
    name = run.get("dataset", ds.name)
    report = evaluate(preds, windows.targets, dataset=name, seeds=[seed], keep_samples=args.per_sample)
    out = _out_dir(args.out)
    stem = run_stem(name, P, seed) + (f"_{args.tag}" if args.tag else "")
    report.save(out / f"{stem}_report.json")
    write_trace(out / f"{stem}_trace.csv", preds, windows.targets, ds.feature_names)
    _check_written(out / f"{stem}_report.json", out / f"{stem}_trace.csv")
    print(json.dumps({m: report.mean(m) for m in METRICS}))
    return 0


def write_trace(path: Path, preds: np.ndarray, truths: np.ndarray, names: list[str]) -> None:
    """One row per (window, step); truth and prediction columns per feature."""
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["window", "step"] + [f"truth_{n}" for n in names] + [f"prediction_{n}" for n in names])
        for k in range(len(preds)):
            for p in range(preds.shape[1]):
                w.writerow([k, p] + [repr(float(v)) for v in truths[k, p]] + [repr(float(v)) for v in preds[k, p]])


def compare_reports(reports: list[MetricReport], labels: list[str]) -> dict:
    """Rows of metric means with the best (lowest) entry of each column marked."""
    first = reports[0]
    for r, label in zip(reports[1:], labels[1:]):
        if (r.dataset, r.P) != (first.dataset, first.P):
            raise CliError(f"{label}: report is for {r.dataset} P={r.P}, expected {first.dataset} P={first.P}")
    best = {m: min(r.mean(m) for r in reports) for m in METRICS}
    rows = [
        {
            "run": label,
            **{m: {"mean": r.mean(m), "std": r.per_metric[m]["std"], "best": r.mean(m) == best[m]} for m in METRICS},
        }
        for r, label in zip(reports, labels)
    ]
    return {"dataset": first.dataset, "P": first.P, "metrics": list(METRICS), "rows": rows}


def format_table(table: dict) -> str:
    width = max(len("run"), *(len(r["run"]) for r in table["rows"]))
    head = f"{'run':<{width}}  " + "  ".join(f"{m.upper():>18}" for m in table["metrics"])
    lines = [f"dataset {table['dataset']}, P={table['P']} (* = best)", head, "-" * len(head)]
    for row in table["rows"]:
        cells = []
        for m in table["metrics"]:
            c = row[m]
            cells.append(f"{c['mean']:.4f}±{c['std']:.4f}{'*' if c['best'] else ' '}".rjust(18))
        lines.append(f"{row['run']:<{width}}  " + "  ".join(cells))
    return "\n".join(lines)


def cmd_compare(args: argparse.Namespace) -> int:
    if len(args.reports) < 2:
        raise CliError("compare needs at least two reports")
    reports = []
    for path in args.reports:
        if not Path(path).is_file():
            raise CliError(f"report not found: {path}")
        try:
            reports.append(MetricReport.load(path))
        except json.JSONDecodeError as exc:
            raise CliError(f"{path}: invalid JSON ({exc})") from None
    labels = args.labels.split(",") if args.labels else [Path(p).stem.removesuffix("_report") for p in args.reports]
    if len(labels) != len(reports):
        raise CliError(f"{len(labels)} labels for {len(reports)} reports")
    table = compare_reports(reports, labels)
    text = format_table(table)
    print(text)
    if args.out:
        out = _out_dir(args.out)
        stem = f"compare_{table['dataset']}_P{table['P']}"
        (out / f"{stem}.txt").write_text(text + "\n")
        (out / f"{stem}.json").write_text(json.dumps(table, indent=2))
        _check_written(out / f"{stem}.txt", out / f"{stem}.json")
    return 0


def cmd_forecast(args: argparse.Namespace) -> int:
    params, model_cfg, doc = _open_checkpoint(args.checkpoint)
    run = doc.get("train_config") or {}
    stats = doc.get("norm_stats")
    if stats is None:
        raise CliError("checkpoint carries no normalisation statistics")
    mean, std = np.asarray(stats["mean"]), np.asarray(stats["std"])
    names = run.get("feature_names")
    values, file_names, _ = load_csv(args.input, names)
    if len(values) != model_cfg.input_len:
        raise CliError(f"input window has {len(values)} rows, the model needs T={model_cfg.input_len}")
    if values.shape[1] != model_cfg.n_features:
        raise CliError(f"input has {values.shape[1]} features, the model needs {model_cfg.n_features}")
    if args.shift is not None:
        model_cfg = ModelConfig(**dict(asdict(model_cfg), shift=args.shift))

    z = (values - mean) / std
    y = forward(params, z, model_cfg).y_hat
    if model_cfg.shift:
        y = apply_shift(y, z[-1])
    y = y * std + mean

    seed = int(run.get("seed", 0))
    stem = run_stem(run.get("dataset", "data"), model_cfg.pred_len, seed)
    out = _out_dir(args.out) / f"{stem}_forecast.csv"
    with out.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step"] + file_names)
        for p, row in enumerate(y):
            w.writerow([p + 1] + [repr(float(v)) for v in row])
    _check_written(out)
    print(out)
    return 0


# --------------------------------------------------------------------------
# parser

def _add_run_options(p: argparse.ArgumentParser) -> None:
    """Run options default to None so unset flags fall through to the config file."""
    p.add_argument("--config", help="JSON file of run options; flags override it")
    p.add_argument("--data", help="CSV file (date column first) or synth:LENGTH[:PERIOD[:SEED]]")
    p.add_argument("--columns", help="comma-separated feature columns to use")
    p.add_argument("--input-len", type=int, help="input window length T")
    p.add_argument("--pred-len", type=int, help="forecast horizon P")
    p.add_argument("--hidden-dim", type=int, help="hidden state size")
    p.add_argument("--solver-step", type=float, help="RK4 step in observation units")
    p.add_argument("--delay", type=float, help="delay tau, a whole number of solver steps")
    p.add_argument("--shift", action=argparse.BooleanOptionalAction, help="anchor forecasts on the last observation")
    p.add_argument("--alpha", type=float, help="weight of the task loss")
    p.add_argument("--beta", type=float, help="weight of the auxiliary loss")
    p.add_argument("--loss-mode", choices=LOSS_MODES)
    p.add_argument("--gamma", type=float, help="soft-DTW temperature for task+tdi")
    p.add_argument("--lr", type=float, help="Adam learning rate")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--stride", type=int, help="stride between training windows")
    p.add_argument("--seed", type=int)
    p.add_argument("--clip-norm", type=float)
    p.add_argument("--log-wall-time", action="store_true", default=None, help="record epoch wall time in the history")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="contime", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train and keep the best-validation checkpoint")
    _add_run_options(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint and write a report and trace")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", help="defaults to the data the checkpoint was trained on")
    p.add_argument("--pred-len", type=int, help="assert the checkpoint horizon")
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--tag", help="suffix for output names")
    p.add_argument("--per-sample", action="store_true", help="keep per-sample scores in the report")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="tabulate reports side by side")
    p.add_argument("reports", nargs="+")
    p.add_argument("--labels", help="comma-separated row labels")
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("forecast", help="forecast P steps after a CSV window")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="CSV window of exactly T rows")
    p.add_argument("--shift", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_forecast)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (CliError, ValueError, ArithmeticError, OSError, MetricError, ModelConfigError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
