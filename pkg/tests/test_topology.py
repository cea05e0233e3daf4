import itertools
import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from expograph.topology import (
    distance_top_k,
    er_k_in_regular,
    exponential_hops,
    fully_connected,
    in_edges,
    make_schedule,
    one_peer_exponential,
    one_peer_period,
    out_edges,
    ring,
    self_loops,
    static_exponential,
    to_adjacency_list,
    to_dot,
)


def is_power_hop(i, j, n):
    # literal reading of the membership rule: log2((j - i) mod n) is an integer
    d = (j - i) % n
    return d > 0 and math.log2(d).is_integer()


def static_oracle(n):
    return np.array([[i == j or is_power_hop(i, j, n) for j in range(n)] for i in range(n)])


def one_peer_oracle(n, t):
    period = math.floor(math.log2(n - 1)) + 1
    return np.array(
        [[i == j or ((j - i) % n > 0 and math.log2((j - i) % n) == t % period) for j in range(n)] for i in range(n)]
    )


@pytest.mark.parametrize("n", range(2, 65))
def test_static_exponential_matches_membership_rule(n):
    adj = static_exponential(n)
    np.testing.assert_array_equal(adj, static_oracle(n))
    assert np.diagonal(adj).all()
    assert all(len(out_edges(adj, i)) == math.floor(math.log2(n - 1)) + 1 for i in range(n))


def test_static_exponential_n8_neighbours():
    adj = static_exponential(8)
    assert out_edges(adj, 0) == [1, 2, 4]
    for i in range(8):
        assert set(out_edges(adj, i)) == {(i + 1) % 8, (i + 2) % 8, (i + 4) % 8}


def test_static_exponential_small_cases():
    np.testing.assert_array_equal(static_exponential(1), [[True]])
    assert set(out_edges(static_exponential(5), 3)) == {4, 0, 2}


@pytest.mark.parametrize("n", range(2, 65))
def test_one_peer_matches_membership_rule(n):
    period = one_peer_period(n)
    assert period == math.floor(math.log2(n - 1)) + 1
    for t in range(3 * period):
        np.testing.assert_array_equal(one_peer_exponential(n, t), one_peer_oracle(n, t))


@pytest.mark.parametrize("n", range(2, 65))
def test_one_peer_hop_map_is_a_bijection(n):
    for t in range(3 * one_peer_period(n)):
        adj = one_peer_exponential(n, t)
        targets = [out_edges(adj, i) for i in range(n)]
        assert all(len(x) == 1 for x in targets)
        assert sorted(x[0] for x in targets) == list(range(n))
        assert all(len(in_edges(adj, j)) == 1 for j in range(n))


def test_one_peer_n8_phases():
    for t in range(9):
        adj = one_peer_exponential(8, t)
        hop = {0: 1, 1: 2, 2: 4}[t % 3]
        assert [out_edges(adj, i) for i in range(8)] == [[(i + hop) % 8] for i in range(8)]


def test_one_peer_two_agents():
    for t in range(5):
        np.testing.assert_array_equal(one_peer_exponential(2, t), np.ones((2, 2), bool))


def test_single_agent_graphs_are_self_loops():
    for adj in (static_exponential(1), one_peer_exponential(1, 7), ring(1), er_k_in_regular(1, 0, 0)):
        np.testing.assert_array_equal(adj, [[True]])
    assert exponential_hops(1) == []


def test_generators_reject_bad_n():
    with pytest.raises(ValueError):
        static_exponential(0)
    with pytest.raises(ValueError):
        one_peer_exponential(4, -1)


def test_er_complete_when_k_is_n_minus_1():
    np.testing.assert_array_equal(er_k_in_regular(5, 4, 3), np.ones((5, 5), bool))


def test_er_in_regular_at_n256_k1():
    adj = er_k_in_regular(256, 1, 0)
    assert (adj.sum(axis=0) - 1 == 1).all()
    assert np.diagonal(adj).all()


def test_er_deterministic_under_seed():
    np.testing.assert_array_equal(er_k_in_regular(8, 3, 7), er_k_in_regular(8, 3, 7))
    assert not np.array_equal(er_k_in_regular(8, 3, 7), er_k_in_regular(8, 3, 8))


def test_er_rejects_impossible_degree():
    with pytest.raises(ValueError):
        er_k_in_regular(5, 5, 0)
    with pytest.raises(ValueError):
        er_k_in_regular(5, -1, 0)


def test_er_in_neighbourhoods_are_uniform_subsets():
    n, k = 5, 2
    subsets = list(itertools.combinations([i for i in range(n) if i != 0], k))
    counts = Counter()
    for seed in range(3000):
        adj = er_k_in_regular(n, k, seed)
        counts[tuple(in_edges(adj, 0))] += 1
    assert set(counts) == set(subsets)
    assert chisquare([counts[s] for s in subsets]).pvalue > 1e-3


@settings(max_examples=60, deadline=None)
@given(n=st.integers(2, 40), data=st.data())
def test_er_column_sums_equal_k(n, data):
    k = data.draw(st.integers(0, n - 1))
    seed = data.draw(st.integers(0, 2**32))
    adj = er_k_in_regular(n, k, seed)
    assert ((adj.sum(axis=0) - 1) == k).all()


def test_distance_collinear_example():
    adj = distance_top_k([[0.0, 0.0], [0.1, 0.0], [0.9, 0.0]], 1)
    assert [out_edges(adj, i) for i in range(3)] == [[1], [0], [1]]


def test_distance_k0_is_self_loops_only():
    pos = np.random.default_rng(1).random((6, 2))
    np.testing.assert_array_equal(distance_top_k(pos, 0), np.eye(6, dtype=bool))


def test_distance_out_degree_n256_k8():
    pos = np.random.default_rng(0).random((256, 2))
    adj = distance_top_k(pos, 8)
    assert (adj.sum(axis=1) - 1 == 8).all()


def test_distance_ties_prefer_lower_index():
    # agents 1 and 2 are equidistant from agent 0
    adj = distance_top_k([[0.5, 0.5], [0.4, 0.5], [0.6, 0.5], [0.9, 0.9]], 1)
    assert out_edges(adj, 0) == [1]


def test_distance_matches_brute_force():
    pos = np.random.default_rng(5).random((30, 2))
    k = 4
    adj = distance_top_k(pos, k)
    for i in range(30):
        order = sorted((j for j in range(30) if j != i), key=lambda j: (math.dist(pos[i], pos[j]), j))
        assert out_edges(adj, i) == sorted(order[:k])


def test_distance_rejects_bad_input():
    with pytest.raises(ValueError):
        distance_top_k([[0, 0], [np.nan, 1]], 1)
    with pytest.raises(ValueError):
        distance_top_k([[0, 0], [1, 1]], 2)


def test_make_schedule_periods():
    assert make_schedule("one_peer_exponential", 8).period == 3
    assert make_schedule("static_exponential", 8).period == 1
    assert make_schedule("er_k_in_regular", 8, k=2, seed=0).period is None
    assert make_schedule("er_k_in_regular", 8, k=2, seed=0, er_mode="fixed").period == 1


def test_ring_schedule():
    sched = make_schedule("ring", 5)
    for t in range(4):
        assert [out_edges(sched.at(t), i) for i in range(5)] == [[(i + 1) % 5] for i in range(5)]


def test_make_schedule_errors():
    with pytest.raises(ValueError, match="unknown"):
        make_schedule("hypercube", 8)
    with pytest.raises(ValueError, match="missing"):
        make_schedule("er_k_in_regular", 8, k=2)
    with pytest.raises(ValueError, match="missing"):
        make_schedule("distance_top_k", 8, position_seed=1)
    with pytest.raises(ValueError):
        make_schedule("er_k_in_regular", 8, k=2, seed=0, er_mode="sometimes")
    with pytest.raises(ValueError):
        make_schedule("distance_top_k", 8, k=8, position_seed=0)


def test_er_schedule_modes():
    per_step = make_schedule("er_k_in_regular", 16, k=2, seed=3)
    assert not np.array_equal(per_step.at(0), per_step.at(1))
    np.testing.assert_array_equal(per_step.at(4), per_step.at(4))
    fixed = make_schedule("er_k_in_regular", 16, k=2, seed=3, er_mode="fixed")
    np.testing.assert_array_equal(fixed.at(0), fixed.at(9))


@pytest.mark.parametrize(
    "kind,params",
    [
        ("static_exponential", {}),
        ("one_peer_exponential", {}),
        ("er_k_in_regular", {"k": 3, "seed": 11}),
        ("distance_top_k", {"k": 3, "position_seed": 2}),
        ("ring", {}),
        ("fully_connected", {}),
        ("none", {}),
    ],
)
def test_schedules_are_pure_and_sized(kind, params):
    sched = make_schedule(kind, 12, **params)
    for t in range(10):
        a, b = sched.at(t), sched.at(t)
        assert a.shape == (12, 12)
        np.testing.assert_array_equal(a, b)
        assert np.diagonal(a).all()
    if kind == "static_exponential":
        assert all(np.array_equal(sched.at(0), sched.at(t)) for t in range(10))
    if kind == "one_peer_exponential":
        assert all(np.array_equal(sched.at(t), sched.at(t + sched.period)) for t in range(10))


def test_generated_matrices_are_read_only():
    adj = static_exponential(8)
    with pytest.raises(ValueError):
        adj[0, 3] = True


def test_out_edges_examples():
    assert out_edges(fully_connected(3), 1) == [0, 2]
    assert out_edges(ring(4), 3) == [0]
    assert out_edges(self_loops(3), 2) == []
    with pytest.raises(IndexError):
        out_edges(ring(4), 4)


def test_dot_export_omits_self_loops():
    text = to_dot(ring(3), name="t0")
    assert text.startswith("digraph t0 {")
    assert "0 -> 1;" in text and "2 -> 0;" in text
    assert "0 -> 0" not in text


def test_adjacency_list_export():
    assert to_adjacency_list(static_exponential(4)) == "0: 1 2\n1: 2 3\n2: 0 3\n3: 0 1\n"
    assert to_adjacency_list(self_loops(2)) == "0:\n1:\n"
