# %% [markdown]
# # Communication on a majority vote task
#
# Every agent sees one private bit; at the last step each should announce the
# team's majority bit. Without messages the best rule just repeats your own
# bit.

# %%
from expograph.envlab import (
    EnvConfig,
    OwnBitPolicy,
    ScriptedCountPolicy,
    TrainConfig,
    evaluate,
    no_comm_ceiling,
    train_iql,
    zero_shot_transfer,
)
from expograph.topology import make_schedule

# %%
print("best reward without messages at n=8:", no_comm_ceiling(8))
print("own bit, no links:", evaluate(OwnBitPolicy(), EnvConfig(8), make_schedule("none", 8), episodes=500).mean)

# %% [markdown]
# A scripted controller waits until messages have reached everyone, then
# votes the majority of what it heard.

# %%
for n in (8, 32):
    for kind in ("one_peer_exponential", "ring"):
        res = evaluate(ScriptedCountPolicy(), EnvConfig(n), make_schedule(kind, n), episodes=200)
        print(f"n={n:3d} {kind:22s} reward {res.mean:.3f}")

# %% [markdown]
# Learn a tabular policy with a shared table and additive team value.

# %%
sched = make_schedule("one_peer_exponential", 8)
policy, curve = train_iql(EnvConfig(8), sched, TrainConfig(episodes=3000, eps_anneal=2000, checkpoints=3), seed=0)
for p in curve:
    print(f"episode {p.episode:5d}  eval {p.eval_reward:.3f}  td {p.td_loss:.4f}  eps {p.epsilon:.2f}")

# %% [markdown]
# Features use fractions, not counts, so the same table runs at other team
# sizes with a regenerated schedule.

# %%
for to_n in (32, 64):
    print(zero_shot_transfer(policy, 8, to_n, "one_peer_exponential", episodes=100))
