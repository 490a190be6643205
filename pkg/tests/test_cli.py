import csv
import json

import numpy as np
import pytest

from contime.cli import main
from contime.data import synth_lagged_regime

STEM = "synth_lagged_regime_p24_s0_P12_s0"
FAST = ["--data", "synth:600:24:0", "--input-len", "36", "--pred-len", "12", "--hidden-dim", "4", "--stride", "8"]


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert main(["train", *FAST, "--epochs", "50", "--out", str(out)]) == 0
    return out


def test_train_writes_outputs(trained):
    assert (trained / f"{STEM}_checkpoint.json").is_file()
    lines = (trained / f"{STEM}_history.jsonl").read_text().splitlines()
    assert len(lines) == 50
    resolved = json.loads((trained / f"{STEM}_config.json").read_text())
    assert resolved["epochs"] == 50 and resolved["seed"] == 0 and resolved["loss_mode"] == "task+delta"


def test_rerun_gives_identical_history(tmp_path):
    for k in range(2):
        assert main(["train", *FAST, "--epochs", "3", "--out", str(tmp_path / str(k))]) == 0
    a = (tmp_path / "0" / f"{STEM}_history.jsonl").read_bytes()
    assert a == (tmp_path / "1" / f"{STEM}_history.jsonl").read_bytes()


def test_config_snapshot_reproduces_run(tmp_path):
    assert main(["train", *FAST, "--epochs", "2", "--out", str(tmp_path / "a")]) == 0
    snapshot = json.loads((tmp_path / "a" / f"{STEM}_config.json").read_text())
    cfg = {k: v for k, v in snapshot.items() if k not in ("dataset", "feature_names")}
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    assert main(["train", "--config", str(tmp_path / "cfg.json"), "--out", str(tmp_path / "b")]) == 0
    for name in ("history.jsonl", "checkpoint.json"):
        assert (tmp_path / "a" / f"{STEM}_{name}").read_bytes() == (tmp_path / "b" / f"{STEM}_{name}").read_bytes()


def test_flags_override_config_file(tmp_path):
    (tmp_path / "cfg.json").write_text(json.dumps({"data": "synth:600:24:0", "epochs": 1, "seed": 3, "hidden_dim": 4}))
    assert main(["train", "--config", str(tmp_path / "cfg.json"), "--seed", "5", "--stride", "8", "--out", str(tmp_path)]) == 0
    resolved = json.loads((tmp_path / "synth_lagged_regime_p24_s0_P12_s5_config.json").read_text())
    assert resolved["seed"] == 5 and resolved["epochs"] == 1


def test_bad_config_exits_nonzero(tmp_path, capsys):
    assert main(["train", *FAST, "--alpha", "0", "--beta", "0", "--out", str(tmp_path)]) != 0
    assert "alpha + beta" in capsys.readouterr().err
    (tmp_path / "cfg.json").write_text(json.dumps({"learning_rate": 0.1}))
    assert main(["train", "--config", str(tmp_path / "cfg.json"), "--out", str(tmp_path)]) != 0
    assert main(["train", "--data", str(tmp_path / "missing.csv"), "--out", str(tmp_path)]) != 0


def test_eval_beats_untrained_model(trained, tmp_path):
    assert main(["train", *FAST, "--epochs", "0", "--out", str(tmp_path / "init")]) == 0
    for ck, out in ((trained, tmp_path / "trained"), (tmp_path / "init", tmp_path / "init")):
        assert main(["eval", "--checkpoint", str(ck / f"{STEM}_checkpoint.json"), "--split", "train", "--out", str(out)]) == 0
    trained_rep = json.loads((tmp_path / "trained" / f"{STEM}_report.json").read_text())
    init_rep = json.loads((tmp_path / "init" / f"{STEM}_report.json").read_text())
    for m in ("mse", "dtw", "tdi"):
        assert np.isfinite(trained_rep["per_metric"][m]["mean"])
    assert trained_rep["per_metric"]["mse"]["mean"] < init_rep["per_metric"]["mse"]["mean"]
    assert trained_rep["dataset"] == "synth_lagged_regime_p24_s0" and trained_rep["P"] == 12


def test_eval_trace_rows(trained, tmp_path):
    assert main(["eval", "--checkpoint", str(trained / f"{STEM}_checkpoint.json"), "--out", str(tmp_path)]) == 0
    with (tmp_path / f"{STEM}_trace.csv").open() as fh:
        rows = list(csv.reader(fh))
    n_windows = 120 - 36 - 12 + 1  # test split of 600 rows
    assert rows[0] == ["window", "step", "truth_value", "prediction_value"]
    assert len(rows) - 1 == n_windows * 12


def test_eval_errors(trained, tmp_path):
    assert main(["eval", "--checkpoint", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) != 0
    ck = str(trained / f"{STEM}_checkpoint.json")
    assert main(["eval", "--checkpoint", ck, "--pred-len", "24", "--out", str(tmp_path)]) != 0


def _report(path, dataset, tdi, dtw, mse, P=12):
    doc = {"dataset": dataset, "P": P, "seeds": [0],
           "per_metric": {"tdi": {"mean": tdi, "std": 0.0}, "dtw": {"mean": dtw, "std": 0.0}, "mse": {"mean": mse, "std": 0.0}}}
    path.write_text(json.dumps(doc))
    return str(path)


def test_compare_with_itself_ties(tmp_path):
    r = _report(tmp_path / "a.json", "demo", 1.0, 2.0, 3.0)
    assert main(["compare", r, r, "--labels", "x,y", "--out", str(tmp_path)]) == 0
    table = json.loads((tmp_path / "compare_demo_P12.json").read_text())
    assert all(row[m]["best"] for row in table["rows"] for m in ("tdi", "dtw", "mse"))
    body = (tmp_path / "compare_demo_P12.txt").read_text().splitlines()[3:]
    assert sum(line.count("*") for line in body) == 6


def test_compare_marks_dominant_run(tmp_path, capsys):
    a = _report(tmp_path / "a.json", "demo", 1.0, 2.0, 3.0)
    b = _report(tmp_path / "b.json", "demo", 0.5, 1.5, 2.5)
    assert main(["compare", a, b, "--out", str(tmp_path)]) == 0
    rows = json.loads((tmp_path / "compare_demo_P12.json").read_text())["rows"]
    assert [r["run"] for r in rows] == ["a", "b"]
    assert all(rows[1][m]["best"] and not rows[0][m]["best"] for m in ("tdi", "dtw", "mse"))
    assert "TDI" in capsys.readouterr().out


def test_compare_rejects_mismatch(tmp_path):
    a = _report(tmp_path / "a.json", "demo", 1.0, 2.0, 3.0)
    b = _report(tmp_path / "b.json", "other", 1.0, 2.0, 3.0)
    c = _report(tmp_path / "c.json", "demo", 1.0, 2.0, 3.0, P=24)
    assert main(["compare", a, b]) != 0
    assert main(["compare", a, c]) != 0
    assert main(["compare", a]) != 0


@pytest.fixture()
def raw_window(tmp_path):
    ds = synth_lagged_regime(600, 24, 0)
    values = 10.0 + 3.0 * ds.splits["test"][:36, 0]
    path = tmp_path / "window.csv"
    path.write_text("date,value\n" + "".join(f"t{i},{float(v)!r}\n" for i, v in enumerate(values)))
    return path, values


def _read_forecast(path):
    with path.open() as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array([[float(c) for c in r[1:]] for r in rows[1:]])


def test_forecast_is_anchored_and_denormalised(trained, raw_window, tmp_path):
    path, values = raw_window
    before = path.read_bytes()
    ck = str(trained / f"{STEM}_checkpoint.json")
    assert main(["forecast", "--checkpoint", ck, "--input", str(path), "--out", str(tmp_path / "on")]) == 0
    header, y = _read_forecast(tmp_path / "on" / f"{STEM}_forecast.csv")
    assert header == ["step", "value"] and y.shape == (12, 1)
    assert y[0, 0] == pytest.approx(values[-1], rel=1e-12)
    assert path.read_bytes() == before

    assert main(["forecast", "--checkpoint", ck, "--input", str(path), "--no-shift", "--out", str(tmp_path / "off")]) == 0
    _, y_off = _read_forecast(tmp_path / "off" / f"{STEM}_forecast.csv")
    assert abs(y_off[0, 0] - values[-1]) > 1e-6


def test_forecast_wrong_length(trained, tmp_path):
    path = tmp_path / "short.csv"
    path.write_text("date,value\n" + "".join(f"t{i},{i}\n" for i in range(10)))
    ck = str(trained / f"{STEM}_checkpoint.json")
    assert main(["forecast", "--checkpoint", ck, "--input", str(path), "--out", str(tmp_path)]) != 0
