# %% [markdown]
# # The bi-directional model
#
# A forward and a backward cell read the same path. Their terminal states are
# summed and a linear head maps them to P future values. The same head applied
# to the forward derivative gives a forecast of the first differences.

# %%
import numpy as np

from contime import ContimeParams, ModelConfig, apply_shift, forward_batch, target_differences

# %%
cfg = ModelConfig(input_len=24, pred_len=6, n_features=2, hidden_dim=8)
params = ContimeParams.init(cfg, np.random.default_rng(0))
t = np.arange(24.0)
windows = np.stack([np.sin(0.4 * t), np.cos(0.2 * t)], 1)[None]
out = forward_batch(params, windows, cfg)
print("y_hat shape:", out.y_hat.shape, " y_hat_dt shape:", out.y_hat_dt.shape)
print("head identity holds:", np.array_equal(out.y_hat_dt[0], (params.head_W @ out.dh_terminal[0]).reshape(6, 2)))

# %% [markdown]
# The shift moves the forecast so that its first row equals the last observed
# value. Differences within the forecast are unchanged.

# %%
last = windows[:, -1]
shifted = apply_shift(out.y_hat, last)
print("first row:", shifted[0, 0], " last observation:", last[0])
print("differences kept:", np.allclose(np.diff(shifted, axis=1), np.diff(out.y_hat, axis=1)))

# %% [markdown]
# Targets for the derivative head are differences anchored on the last
# observation, so they telescope back to the target values.

# %%
y = np.cumsum(np.random.default_rng(1).normal(size=(1, 6, 2)), axis=1)
d = target_differences(y, last)
print("telescopes:", np.allclose(last[:, None] + np.cumsum(d, axis=1), y))
