import itertools
from fractions import Fraction

import numpy as np
import pytest

from expograph.envlab import (
    NOOP,
    EnvConfig,
    EnvState,
    MajorityBitEnv,
    OwnBitPolicy,
    RandomPolicy,
    ScriptedCountPolicy,
    TabularPolicy,
    TrainConfig,
    bucket,
    default_horizon,
    env_step,
    evaluate,
    features,
    majority_aggregator,
    majority_bit,
    message_counts,
    no_comm_ceiling,
    scripted_count_policy,
    state_summary,
    terminal_reward,
    train_iql,
    zero_shot_transfer,
)
from expograph.runtime import run_episode
from expograph.topology import make_schedule


def enumerated_ceiling(n):
    # best of the four own-bit-only response maps, by brute force over all bit strings
    best = Fraction(0)
    for on0, on1 in itertools.product((0, 1), repeat=2):
        total = Fraction(0)
        for bits in itertools.product((0, 1), repeat=n):
            maj = 1 if 2 * sum(bits) >= n else 0
            total += Fraction(sum((on1 if b else on0) == maj for b in bits), n)
        best = max(best, total / 2**n)
    return best


def test_reward_examples():
    # four ones out of eight is a tie, which counts as majority 1
    bits = (1, 1, 1, 1, 0, 0, 0, 0)
    assert majority_bit(bits) == 1
    assert terminal_reward(bits, [1, 1, 1, 1, 1, 0, 0, 0]) == 5 / 8
    assert terminal_reward((0, 0, 1), [0, NOOP, 0]) == 2 / 3


def test_env_step_semantics():
    s = EnvState((1, 0, 1), 0, 2)
    s1, r1, d1 = env_step(s, [NOOP, NOOP, NOOP])
    assert (r1, d1) == (0.0, False)
    s2, r2, d2 = env_step(s1, [1, 1, 0])
    assert d2 and r2 == pytest.approx(2 / 3)
    with pytest.raises(RuntimeError):
        env_step(s2, [1, 1, 1])
    with pytest.raises(ValueError):
        env_step(s, [1, 1])
    with pytest.raises(ValueError):
        env_step(s, [1, 1, 3])


def test_env_reset_and_obs():
    env = MajorityBitEnv(8)
    assert env.horizon == default_horizon(8) == 4
    state, obs = env.reset(3)
    assert [o[0] for o in obs] == list(state.bits)
    assert all(o[1] == 0 for o in obs)
    _, obs, _, _ = env.step([NOOP] * 8)
    assert all(o[1] == 1 for o in obs)
    state2, _ = MajorityBitEnv(8).reset(3)
    assert state2.bits == state.bits
    np.testing.assert_allclose(state_summary(state), [sum(state.bits) / 8])
    with pytest.raises(RuntimeError):
        MajorityBitEnv(4).step([0] * 4)
    assert EnvConfig(16).T == 5 and EnvConfig(16, 9).T == 9


@pytest.mark.parametrize("n", [1, 2, 3, 5, 8, 9])
def test_no_comm_ceiling_matches_enumeration(n):
    assert no_comm_ceiling(n) == pytest.approx(float(enumerated_ceiling(n)), abs=1e-15)


def test_no_comm_ceiling_n8():
    assert enumerated_ceiling(8) == Fraction(163, 256)
    assert no_comm_ceiling(8) == 0.63671875


def test_message_counts_and_bucket():
    msg = (1 << 1) | (1 << 2) | (1 << 5)  # agent 0 saw 1, agent 1 saw 0, agent 2 saw 1
    assert message_counts(msg, 3) == (2, 3)
    assert message_counts(0, 3) == (0, 0)
    assert bucket(0.0, 8) == 0 and bucket(1.0, 8) == 7
    # 0.5 sits on a bucket edge so ties and majorities separate cleanly
    assert bucket(0.5, 8) == 4 and bucket(0.49, 8) == 3


def test_majority_aggregator_item():
    agg = majority_aggregator(4)
    assert agg.update(0, [], (1, 0), 2) == 1 << 5
    assert agg.update(0, [], (0, 0), 2) == 1 << 4


def test_features_modes():
    msg = (1 << 1) | (1 << 3) | (1 << 4)  # three agents heard, two saw 1
    assert features((1, 0), msg, 0, 4, 8) == (1, bucket(2 / 3, 8), bucket(3 / 8, 8), 0)
    assert features((0, 3), msg, 3, 4, 8, mode="count") == (0, 2, 3, 1)


def test_scripted_rule():
    assert scripted_count_policy(3, 4, 0, 4, 3) == NOOP
    assert scripted_count_policy(3, 4, 3, 4, 3) == 1
    assert scripted_count_policy(2, 4, 3, 4, 3) == 1
    assert scripted_count_policy(1, 4, 3, 4, 3) == 0
    # infinite diameter still acts on the final step
    assert scripted_count_policy(1, 1, 3, 4, float("inf")) == 1


@pytest.mark.parametrize("n", [8, 16, 32])
def test_scripted_is_perfect_on_one_peer(n):
    sched = make_schedule("one_peer_exponential", n)
    res = evaluate(ScriptedCountPolicy(), EnvConfig(n), sched, episodes=100, seed=1)
    assert res.mean == 1.0


def test_scripted_without_links_reduces_to_own_bit():
    sched = make_schedule("none", 8)
    a = evaluate(ScriptedCountPolicy(), EnvConfig(8), sched, episodes=300, seed=2)
    b = evaluate(OwnBitPolicy(), EnvConfig(8), sched, episodes=300, seed=2)
    assert a.mean == b.mean
    assert abs(a.mean - 163 / 256) <= 4 * a.stderr + 1e-12


def test_ring_is_worse_at_n32():
    res = evaluate(ScriptedCountPolicy(), EnvConfig(32), make_schedule("ring", 32), episodes=200, seed=0)
    assert res.mean < 0.9


@pytest.mark.parametrize("n", [16, 32, 64])
def test_one_peer_beats_ring_at_equal_budget(n):
    one = evaluate(ScriptedCountPolicy(), EnvConfig(n), make_schedule("one_peer_exponential", n), episodes=100, seed=n)
    ring = evaluate(ScriptedCountPolicy(), EnvConfig(n), make_schedule("ring", n), episodes=100, seed=n)
    assert one.mean > ring.mean


def test_random_policy_near_half():
    res = evaluate(RandomPolicy(), EnvConfig(8), make_schedule("one_peer_exponential", 8), episodes=400, seed=0)
    assert abs(res.mean - 0.5) <= 4 * res.stderr


def test_evaluate_is_deterministic():
    sched = make_schedule("er_k_in_regular", 8, k=1, seed=0)
    a = evaluate(RandomPolicy(), EnvConfig(8), sched, episodes=50, seed=5)
    b = evaluate(RandomPolicy(), EnvConfig(8), sched, episodes=50, seed=5)
    assert a == b


def test_union_counts_track_reach_inside_episode():
    n = 8
    sched = make_schedule("one_peer_exponential", n)
    env = MajorityBitEnv(n)
    buf, _ = run_episode(env, lambda h, m, t, rng: [NOOP] * n, sched, majority_aggregator(n), env.horizon, 0)
    ones = sum(buf.transitions[0].state.bits)
    for t, msgs in enumerate(buf.messages):
        for m in msgs:
            assert message_counts(m, n)[1] == 2**t
    assert all(message_counts(m, n) == (ones, n) for m in buf.messages[-1])


def test_tabular_policy_basics():
    pol = TabularPolicy()
    assert pol.transferable
    assert not TabularPolicy(mode="count").transferable
    assert not TabularPolicy(shared=False).transferable
    key = pol.key(0, (1, 0), 0b10, 0, 4, 8)
    assert pol.greedy(key) == 0
    pol.q[key] = np.array([0.0, 0.0, 1.0])
    assert pol.greedy(key) == NOOP
    cp = pol.copy()
    cp.q[key][0] = 5.0
    assert pol.q[key][0] == 0.0
    assert TabularPolicy(shared=False).key(3, (1, 0), 0b10, 0, 4, 8)[0] == 3


def test_train_config_validation_and_schedule():
    cfg = TrainConfig(eps_start=1.0, eps_end=0.1, eps_anneal=100)
    assert cfg.epsilon(0) == 1.0 and cfg.epsilon(50) == pytest.approx(0.55) and cfg.epsilon(10**6) == pytest.approx(0.1)
    assert TrainConfig(eps_anneal=0, eps_end=0.2).epsilon(0) == 0.2
    with pytest.raises(ValueError):
        TrainConfig(mode="raw")
    with pytest.raises(ValueError):
        TrainConfig(lr=-1)


def test_train_with_zero_lr_learns_nothing():
    sched = make_schedule("one_peer_exponential", 4)
    pol, curve = train_iql(EnvConfig(4), sched, TrainConfig(episodes=30, lr=0.0, eval_episodes=5, checkpoints=3), seed=0)
    assert pol.q == {}
    assert [p.episode for p in curve] == [0, 10, 20, 30]


def test_training_is_deterministic():
    sched = make_schedule("one_peer_exponential", 4)
    cfg = TrainConfig(episodes=60, eval_episodes=5, checkpoints=2, eps_anneal=40)
    a, ca = train_iql(EnvConfig(4), sched, cfg, seed=3)
    b, cb = train_iql(EnvConfig(4), sched, cfg, seed=3)
    assert ca == cb
    assert a.q.keys() == b.q.keys()
    assert all(np.array_equal(a.q[k], b.q[k]) for k in a.q)


def test_short_training_run_learns_n8():
    sched = make_schedule("one_peer_exponential", 8)
    cfg = TrainConfig(episodes=1500, eps_anneal=1000, eval_episodes=100, checkpoints=3)
    pol, curve = train_iql(EnvConfig(8), sched, cfg, seed=0)
    assert curve[-1].eval_reward >= 0.95
    assert curve[-1].td_loss >= 0 and curve[-1].aux_loss >= 0


def test_transfer_rejects_count_features():
    with pytest.raises(ValueError):
        zero_shot_transfer(TabularPolicy(mode="count"), 8, 32, "one_peer_exponential")
    with pytest.raises(ValueError):
        zero_shot_transfer(TabularPolicy(shared=False), 8, 32, "one_peer_exponential")


def test_transfer_to_same_n_matches_evaluate():
    pol = ScriptedCountPolicy()
    tr = zero_shot_transfer(pol, 8, 8, "ring", episodes=40, seed=4)
    ev = evaluate(pol, EnvConfig(8), make_schedule("ring", 8), episodes=40, seed=4)
    assert (tr.reward, tr.stderr) == (ev.mean, ev.stderr)
    assert (tr.from_n, tr.to_n, tr.topology) == (8, 8, "ring")


def test_scripted_transfer_regenerates_schedule():
    tr = zero_shot_transfer(ScriptedCountPolicy(), 8, 64, "one_peer_exponential", episodes=30)
    assert tr.reward == 1.0
