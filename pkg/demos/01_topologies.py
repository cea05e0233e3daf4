# %% [markdown]
# # Communication topologies
#
# Every graph here is a boolean adjacency matrix: `adj[i, j]` is True when
# agent i sends to agent j. Self-loops are always present and never counted
# as communication.

# %%
import numpy as np

from expograph.analysis import graph_size
from expograph.topology import make_schedule, out_edges, random_positions, distance_top_k, to_adjacency_list

# %% [markdown]
# The static exponential graph links i to i + 2^k (mod n) for every feasible k.

# %%
static = make_schedule("static_exponential", 8)
print(to_adjacency_list(static.at(0)))
print("edges per step:", graph_size(static.at(0)))

# %% [markdown]
# The one-peer variant keeps a single hop per step and cycles through the
# powers of two, so each agent sends exactly one message per step.

# %%
one_peer = make_schedule("one_peer_exponential", 8)
print("period:", one_peer.period)
for t in range(one_peer.period):
    print(f"t={t}:", [out_edges(one_peer.at(t), i) for i in range(8)])

# %% [markdown]
# Random baselines with the same budget: every agent receives from exactly k
# uniformly chosen peers, redrawn each step by default.

# %%
er = make_schedule("er_k_in_regular", 8, k=1, seed=3)
print("in-degrees:", er.at(0).sum(axis=0) - 1)
print("out-degrees:", er.at(0).sum(axis=1) - 1)

# %% [markdown]
# Proximity graphs send to the k nearest agents in the unit square.

# %%
pos = random_positions(8, seed=0)
adj = distance_top_k(pos, 2)
print(np.round(pos, 2))
print([out_edges(adj, i) for i in range(8)])
