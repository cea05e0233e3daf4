# %% [markdown]
# # How fast does one message spread?
#
# Each agent starts knowing only its own message and forwards everything it
# knows along the current graph. Coverage is the number of agents holding a
# given source's message.

# %%
import numpy as np

from expograph.dissemination import SpreadConfig, fig2_experiment, mean_curves, simulate_spread
from expograph.topology import make_schedule

# %%
trace = simulate_spread(make_schedule("one_peer_exponential", 64), source=0, max_t=6)
print("one-peer coverage:", trace.coverage)

# %% [markdown]
# Compare families at two budgets: one peer per step, and ceil(log2 n) peers.
# Every agent acts as a source; curves are averaged over seeds.

# %%
rows = fig2_experiment(SpreadConfig(n=64, seeds=tuple(range(5))))
for (kind, k), curve in sorted(mean_curves(rows).items(), key=lambda kv: (-kv[0][1], kv[0][0])):
    print(f"k={k} {kind:22s}", np.array2string(curve, precision=1))

# %% [markdown]
# With a single peer, the exponential schedule doubles every step and wins.
# With ceil(log2 n) peers the static exponential graph is not the fastest:
# from any source it reaches only the offsets whose binary expansion has at
# most t ones, while random in-regular graphs expand faster.
