# %% [markdown]
# # Gradients on a tape
#
# Parameters are registered as leaves, the forward pass records primitives,
# and one reverse sweep gives every gradient. A finite-difference check on a
# few entries confirms the result.

# %%
import numpy as np

from contime import ContimeParams, LossConfig, ModelConfig, WindowSet, dtw, loss_tdi_soft, soft_dtw
from contime.training import batch_losses, loss_and_grads

# %%
rng = np.random.default_rng(0)
cfg = ModelConfig(8, 4, 1, hidden_dim=4)
params = ContimeParams.init(cfg, rng)
x = np.cumsum(rng.normal(scale=0.5, size=(3, 12, 1)), axis=1)
batch = WindowSet(x[:, :8], x[:, 8:], x[:, 7].copy(), np.arange(3))
loss_cfg = LossConfig(0.9, 0.1, "task+delta")
total, task, delta, grads = loss_and_grads(params, batch, cfg, loss_cfg)
print(f"total {total:.5f}  task {task:.5f}  delta {delta:.5f}")

base = params.to_dict()
for name in ("head_W", "cell1.W_z"):
    idx = (0,) * base[name].ndim
    vals = []
    for sign in (1, -1):
        d = {k: v.copy() for k, v in base.items()}
        d[name][idx] += sign * 1e-6
        vals.append(float(batch_losses(ContimeParams.from_dict(d), batch, cfg, loss_cfg)[0]))
    print(name, "tape", grads[name][idx], "finite difference", (vals[0] - vals[1]) / 2e-6)

# %% [markdown]
# ## Soft DTW
#
# The smoothed alignment cost sits below the hard one and approaches it as
# gamma shrinks. The soft delay loss builds on its expected alignment.

# %%
a, b = rng.normal(size=10), rng.normal(size=10)
print("hard:", dtw(a, b)[0])
for gamma in (1.0, 0.1, 1e-3):
    print(f"soft gamma={gamma:g}:", soft_dtw(a, b, gamma)[0])
print("soft delay loss:", float(loss_tdi_soft(a[:, None], b[:, None], 0.01)))
