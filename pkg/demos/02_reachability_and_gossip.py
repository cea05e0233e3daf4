# %% [markdown]
# # Reachability and averaging on time-varying graphs
#
# Multiplying the adjacency matrices of consecutive steps (over AND/OR) tells
# us who can have heard from whom. For the one-peer exponential schedule the
# window of ceil(log2 n) steps already connects everyone.

# %%
import numpy as np

from expograph.analysis import (
    boolean_window_product,
    ceil_log2,
    gossip_consensus,
    mixing_window_product,
    one_peer_window_table,
    time_to_full_reach,
)
from expograph.topology import make_schedule

# %%
sched = make_schedule("one_peer_exponential", 8)
for w in range(1, 4):
    reach = boolean_window_product(sched, 0, w)
    print(f"window {w}: each agent reached by {reach.sum(axis=0)[0]} agents")
print("time to full reach:", time_to_full_reach(sched))

# %% [markdown]
# The minimal window per agent count. ceil(log2(n - 1)) is one step short
# exactly when n - 1 is a power of two.

# %%
table = one_peer_window_table(range(2, 20))
short = sorted({r.n for r in table if not r.log2_n_minus_1_suffices})
print("ceil(log2(n-1)) falls short at n =", short)

# %% [markdown]
# Averaging with column-normalized weights. When n is a power of two the
# one-peer product over log2 n steps is exactly the uniform average.

# %%
n = 16
sched_16 = make_schedule("one_peer_exponential", n)
prod = mixing_window_product(sched_16, 0, ceil_log2(n))
print("max deviation from 1/n:", np.abs(prod - 1 / n).max())

x0 = np.random.default_rng(0).standard_normal(n)
trace = gossip_consensus(sched_16, x0, 6)
print("consensus error per step:", np.array2string(trace.consensus_error, precision=3))

# %% [markdown]
# A ring with the same one-message budget is far slower.

# %%
ring = gossip_consensus(make_schedule("ring", n), x0, 6)
print("ring error per step:     ", np.array2string(ring.consensus_error, precision=3))
