"""Decentralized execution loop with one-step-delayed message passing.

Per step ``t`` every agent updates its history from the current observation,
updates its message from its own previous message plus whatever arrived over
``at(t - 1)``, dispatches the new message over ``at(t)``, and acts on
``(history, message)``. Dispatch and acting are independent, so acting never
waits on delivery.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Callable, Protocol, Sequence

import numpy as np

from .analysis import graph_size
from .topology import TopologySchedule, in_edges


# -- aggregators --------------------------------------------------------------


class Aggregator(Protocol):
    def initial(self) -> Any: ...

    def update(self, prev: Any, received: Sequence[Any], obs: Any, agent_id: int) -> Any: ...


def union_aggregator_update(prev: int, received: Sequence[int], self_id: int, universe: int | None = None) -> int:
    """Lossless merge of bitset messages: ``prev | received... | {self_id}``."""
    if universe is not None:
        limit = 1 << universe
        if prev >= limit or any(r >= limit for r in received) or not 0 <= self_id < universe:
            raise ValueError(f"message outside the {universe}-element universe")
    out = prev | (1 << self_id)
    for r in received:
        out |= r
    return out


class UnionAggregator:
    """Idealized processor that never forgets anything it has received.

    ``item_fn(agent_id, obs)`` picks the element an agent contributes about
    itself; by default that is its own id.
    """

    def __init__(self, universe: int, item_fn: Callable[[int, Any], int] | None = None):
        self.universe = universe
        self.item_fn = item_fn or (lambda agent_id, obs: agent_id)

    def initial(self) -> int:
        return 0

    def update(self, prev: int, received: Sequence[int], obs: Any, agent_id: int) -> int:
        return union_aggregator_update(prev, received, self.item_fn(agent_id, obs), self.universe)

    @staticmethod
    def coverage(message: int) -> int:
        return message.bit_count()


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _vector(x, name: str, dim: int | None = None) -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.ndim != 1 or (dim is not None and v.shape[0] != dim):
        raise ValueError(f"{name} must be a vector of length {dim}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} has non-finite entries")
    return v


def _pool_mean(prev: np.ndarray, received: Sequence) -> np.ndarray:
    # mean over received and the agent's own previous message
    return (prev + sum(received, np.zeros_like(prev))) / (len(received) + 1)


@dataclass
class RecurrentParams:
    """Weights of the gated recurrent merge.

    Gate and candidate each read ``prev`` (d x d), the pooled mean (d x d) and
    the observation encoding (d x e), plus a bias (d).
    """

    gate_prev: np.ndarray
    gate_pool: np.ndarray
    gate_obs: np.ndarray
    gate_bias: np.ndarray
    cand_prev: np.ndarray
    cand_pool: np.ndarray
    cand_obs: np.ndarray
    cand_bias: np.ndarray

    @property
    def dim(self) -> int:
        return self.gate_prev.shape[0]

    @property
    def obs_dim(self) -> int:
        return self.gate_obs.shape[1]

    @classmethod
    def zeros(cls, d: int, e: int) -> "RecurrentParams":
        return cls(*(np.zeros(s) for s in [(d, d), (d, d), (d, e), d] * 2))

    @classmethod
    def random(cls, d: int, e: int, rng, scale: float = 0.5) -> "RecurrentParams":
        rng = np.random.default_rng(rng)
        return cls(*(scale * rng.standard_normal(s) for s in [(d, d), (d, d), (d, e), d] * 2))


def _recurrent_parts(prev, received, obs_enc, params: RecurrentParams):
    d, e = params.dim, params.obs_dim
    prev = _vector(prev, "prev", d)
    obs_enc = _vector(obs_enc, "obs_enc", e)
    received = [_vector(r, "received message", d) for r in received]
    pooled = _pool_mean(prev, received)
    z = _sigmoid(params.gate_prev @ prev + params.gate_pool @ pooled + params.gate_obs @ obs_enc + params.gate_bias)
    cand = np.tanh(params.cand_prev @ prev + params.cand_pool @ pooled + params.cand_obs @ obs_enc + params.cand_bias)
    return prev, received, z, cand


def recurrent_aggregator_update(prev, received, obs_enc, params: RecurrentParams) -> np.ndarray:
    """``z * prev + (1 - z) * cand`` with sigmoid gate ``z`` and tanh candidate."""
    prev, _, z, cand = _recurrent_parts(prev, received, obs_enc, params)
    return z * prev + (1.0 - z) * cand


def recurrent_jacobian_prev(prev, received, obs_enc, params: RecurrentParams) -> np.ndarray:
    """d(output)/d(prev), shape (d, d)."""
    prev, received, z, cand = _recurrent_parts(prev, received, obs_enc, params)
    share = 1.0 / (len(received) + 1)
    dz = (z * (1 - z))[:, None] * (params.gate_prev + share * params.gate_pool)
    dc = (1 - cand**2)[:, None] * (params.cand_prev + share * params.cand_pool)
    return np.diag(z) + (prev - cand)[:, None] * dz + (1 - z)[:, None] * dc


@dataclass
class AttentionParams:
    """Single-head attention weights: query from ``(prev, obs)``; keys and values from messages."""

    query_prev: np.ndarray  # (d, d)
    query_obs: np.ndarray  # (d, e)
    key: np.ndarray  # (d, d)
    value: np.ndarray  # (d, d)

    @property
    def dim(self) -> int:
        return self.query_prev.shape[0]

    @property
    def obs_dim(self) -> int:
        return self.query_obs.shape[1]

    @classmethod
    def identity(cls, d: int, e: int) -> "AttentionParams":
        return cls(np.eye(d), np.zeros((d, e)), np.eye(d), np.eye(d))

    @classmethod
    def random(cls, d: int, e: int, rng, scale: float = 0.5) -> "AttentionParams":
        rng = np.random.default_rng(rng)
        return cls(*(scale * rng.standard_normal(s) for s in [(d, d), (d, e), (d, d), (d, d)]))


def _attention_parts(prev, received, obs_enc, params: AttentionParams):
    d, e = params.dim, params.obs_dim
    prev = _vector(prev, "prev", d)
    obs_enc = _vector(obs_enc, "obs_enc", e)
    # the agent's own previous message is always one of the pooled items
    items = np.array([_vector(r, "received message", d) for r in received] + [prev])
    query = params.query_prev @ prev + params.query_obs @ obs_enc
    keys = items @ params.key.T
    values = items @ params.value.T
    scores = keys @ query / np.sqrt(d)
    weights = np.exp(scores - scores.max())
    weights /= weights.sum()
    return prev, items, query, keys, values, weights


def attention_aggregator_update(prev, received, obs_enc, params: AttentionParams) -> np.ndarray:
    """``prev + sum_l softmax(q.k_l / sqrt(d)) v_l`` over ``received + [prev]``."""
    prev, _, _, _, values, weights = _attention_parts(prev, received, obs_enc, params)
    return prev + weights @ values


def attention_jacobian_prev(prev, received, obs_enc, params: AttentionParams) -> np.ndarray:
    """d(output)/d(prev), shape (d, d)."""
    prev, items, query, keys, values, weights = _attention_parts(prev, received, obs_enc, params)
    d = params.dim
    # d(score_l)/d(prev): through the query for every item, plus the key of the last item
    dscores = keys @ params.query_prev / np.sqrt(d)
    dscores[-1] += query @ params.key / np.sqrt(d)
    dweights = weights[:, None] * (dscores - weights @ dscores)
    return np.eye(d) + values.T @ dweights + weights[-1] * params.value


class RecurrentAggregator:
    def __init__(self, params: RecurrentParams, obs_fn: Callable[[Any], np.ndarray] | None = None):
        self.params = params
        self.obs_fn = obs_fn or (lambda obs: np.asarray(obs, dtype=float))

    def initial(self) -> np.ndarray:
        return np.zeros(self.params.dim)

    def update(self, prev, received, obs, agent_id):
        return recurrent_aggregator_update(prev, received, self.obs_fn(obs), self.params)


class AttentionAggregator:
    def __init__(self, params: AttentionParams, obs_fn: Callable[[Any], np.ndarray] | None = None):
        self.params = params
        self.obs_fn = obs_fn or (lambda obs: np.asarray(obs, dtype=float))

    def initial(self) -> np.ndarray:
        return np.zeros(self.params.dim)

    def update(self, prev, received, obs, agent_id):
        return attention_aggregator_update(prev, received, self.obs_fn(obs), self.params)


# -- episode loop -------------------------------------------------------------


class Env(Protocol):
    n: int

    def reset(self, seed) -> tuple[Any, list]: ...

    def step(self, actions) -> tuple[Any, list, float, bool]: ...


Policy = Callable[[list, list, int, np.random.Generator], Sequence[int]]


@dataclass
class Transition:
    t: int
    state: Any
    observations: list
    actions: list[int]
    reward: float
    next_state: Any
    next_observations: list
    done: bool


@dataclass
class EpisodeBuffer:
    capacity: int | None = None
    transitions: list[Transition] = field(default_factory=list)
    messages: list[list] = field(default_factory=list)  # per-step snapshot, one entry per agent

    def add(self, transition: Transition, messages: list) -> None:
        expected = len(self.transitions)
        if transition.t != expected:
            raise ValueError(f"transition t={transition.t} breaks contiguity (expected {expected})")
        if self.messages and len(messages) != len(self.messages[0]):
            raise ValueError("message snapshot size changed within the episode")
        if self.capacity is not None and expected >= self.capacity:
            raise OverflowError("episode buffer is full")
        self.transitions.append(transition)
        self.messages.append(list(messages))

    def __len__(self) -> int:
        return len(self.transitions)

    @property
    def total_reward(self) -> float:
        return float(sum(tr.reward for tr in self.transitions))


@dataclass
class BudgetReport:
    per_step: list[int] = field(default_factory=list)

    @property
    def total(self) -> int:
        return int(sum(self.per_step))


def budget_per_step(schedule: TopologySchedule, t: int) -> int:
    return graph_size(schedule.at(t))


def _keep_obs(prev_history, obs):
    return obs


def run_episode(
    env: Env,
    policy: Policy,
    schedule: TopologySchedule,
    aggregator: Aggregator,
    horizon: int,
    seed,
    history_fn: Callable[[Any, Any], Any] = _keep_obs,
) -> tuple[EpisodeBuffer, BudgetReport]:
    """Run one episode; stops at ``horizon`` steps or when the environment is done.

    ``seed`` is split into independent environment and policy streams.
    """
    if env.n != schedule.n:
        raise ValueError(f"environment has {env.n} agents but schedule has {schedule.n}")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    n = env.n
    env_seed, policy_seed = np.random.SeedSequence(seed).spawn(2)
    rng = np.random.default_rng(policy_seed)
    state, obs = env.reset(env_seed)
    histories = [None] * n
    messages = [aggregator.initial() for _ in range(n)]
    buffer, budget = EpisodeBuffer(capacity=horizon), BudgetReport()
    for t in range(horizon):
        histories = [history_fn(histories[i], obs[i]) for i in range(n)]
        if t == 0:
            received = [[] for _ in range(n)]
        else:
            sent = schedule.at(t - 1)
            received = [[messages[i] for i in in_edges(sent, j)] for j in range(n)]
        messages = [aggregator.update(messages[i], received[i], obs[i], i) for i in range(n)]
        budget.per_step.append(budget_per_step(schedule, t))
        actions = [int(a) for a in policy(histories, messages, t, rng)]
        next_state, next_obs, reward, done = env.step(actions)
        buffer.add(Transition(t, state, obs, actions, float(reward), next_state, next_obs, bool(done)), messages)
        state, obs = next_state, next_obs
        if done:
            break
    return buffer, budget


def episode_trace_records(buffer: EpisodeBuffer, budget: BudgetReport, n: int, coverage_fn=None) -> list[dict]:
    """One JSON-ready record per step: t, actions, reward, cumulative budget and (union mode) coverage."""
    records, spent = [], 0
    for tr, msgs, cost in zip(buffer.transitions, buffer.messages, budget.per_step):
        spent += cost
        rec = {"t": tr.t, "actions": tr.actions, "reward": tr.reward, "budget": spent}
        if coverage_fn is not None:
            rec["coverage"] = float(np.mean([coverage_fn(m) for m in msgs]) / n)
        records.append(rec)
    return records


def dumps_jsonl(records: Sequence[dict]) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)
