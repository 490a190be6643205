# %% [markdown]
# # Command line workflow
#
# The `contime` entry point trains, evaluates, compares and forecasts. Here it
# is driven from Python through `main`, with the same arguments a shell would
# pass.

# %%
import json
import tempfile
from pathlib import Path

from contime.cli import main

out = Path(tempfile.mkdtemp())
common = ["--data", "synth:600:24:0", "--input-len", "36", "--pred-len", "12", "--hidden-dim", "4", "--stride", "8"]

# %%
main(["train", *common, "--epochs", "10", "--out", str(out / "delta")])
main(["train", *common, "--epochs", "10", "--loss-mode", "task-only", "--beta", "0", "--out", str(out / "task")])
stem = "synth_lagged_regime_p24_s0_P12_s0"

# %%
for run in ("delta", "task"):
    main(["eval", "--checkpoint", str(out / run / f"{stem}_checkpoint.json"), "--out", str(out / run)])
main(["compare", str(out / "task" / f"{stem}_report.json"), str(out / "delta" / f"{stem}_report.json"),
      "--labels", "task-only,task+delta", "--out", str(out)])

# %%
print(json.loads((out / "delta" / f"{stem}_report.json").read_text())["per_metric"])
