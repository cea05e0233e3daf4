# %% [markdown]
# # Loss kernels and gradient checks

# %%
import math

import numpy as np

from expograph.losses import (
    ContrastiveBatch,
    LossConfig,
    finite_diff_check,
    infonce_flat,
    infonce_loss,
    sample_contrastive_pairs,
    td_loss,
    td_target,
    total_loss,
)

# %% [markdown]
# Temporal-difference pieces.

# %%
y = td_target(reward=0.5, gamma=0.99, q_next_max=1.2)
print("target:", y, " loss:", td_loss([y], [1.0]), " total:", total_loss(1.0, 2.0, alpha=0.1))

# %% [markdown]
# InfoNCE on unit-normalized vectors. When every candidate equals the
# anchor the loss is ln(M + 1).

# %%
v = np.array([0.2, -0.5, 1.0])
print(infonce_loss(ContrastiveBatch(v, v, np.tile(v, (20, 1))), tau=0.07), math.log(21))

# %% [markdown]
# Pairs come from a message log: the positive is another agent at the same
# step, negatives are at least one diameter away in time.

# %%
log = np.random.default_rng(1).standard_normal((10, 4, 3))
batch = sample_contrastive_pairs(log, diameter=3, cfg=LossConfig(m_negatives=5), seed=0)
print("anchor", batch.anchor_index, "positive", batch.positive_index, "negatives", batch.negative_index)

# %% [markdown]
# Analytic gradients against central differences.

# %%
loss, grad = infonce_flat((20, 8), tau=0.07)
x = np.random.default_rng(2).standard_normal(22 * 8)
print("max relative error:", finite_diff_check(loss, grad, x, epsilon=1e-6))
