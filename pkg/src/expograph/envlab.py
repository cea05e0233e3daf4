"""MajorityBit: a small cooperative task where communication is necessary.

Each agent privately observes one random bit. Only the action taken at the
final step is scored: the team reward is the fraction of agents whose final
action equals the majority bit (a tie counts as majority 1). Without
messages an agent can do no better than guess from its own bit.

Messages use the lossless union aggregator over a ``2n``-element universe:
element ``2 i + b`` records "agent ``i`` observed bit ``b``", so a message
yields both how many agents it has heard from and how many of those saw a 1.
"""
from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .analysis import NotReached, ceil_log2, time_to_full_reach
from .losses import LossConfig, aux_pred_loss, aux_pred_loss_grad, td_loss, td_target
from .runtime import EpisodeBuffer, UnionAggregator, run_episode
from .topology import TopologySchedule, make_schedule

NOOP = 2
N_ACTIONS = 3


# -- environment ----------------------------------------------------------------


@dataclass(frozen=True)
class EnvState:
    bits: tuple[int, ...]
    t: int
    horizon: int

    @property
    def done(self) -> bool:
        return self.t >= self.horizon


def majority_bit(bits: Sequence[int]) -> int:
    return int(2 * sum(bits) >= len(bits))


def terminal_reward(bits: Sequence[int], actions: Sequence[int]) -> float:
    target = majority_bit(bits)
    return sum(int(a) == target for a in actions) / len(bits)


def env_step(state: EnvState, joint_action: Sequence[int]) -> tuple[EnvState, float, bool]:
    if state.done:
        raise RuntimeError("episode already finished")
    if len(joint_action) != len(state.bits) or any(a not in (0, 1, NOOP) for a in joint_action):
        raise ValueError("invalid joint action")
    nxt = EnvState(state.bits, state.t + 1, state.horizon)
    reward = terminal_reward(state.bits, joint_action) if nxt.done else 0.0
    return nxt, reward, nxt.done


def default_horizon(n: int) -> int:
    return ceil_log2(n) + 1


@dataclass(frozen=True)
class EnvConfig:
    n: int
    horizon: int | None = None  # default ceil(log2 n) + 1

    @property
    def T(self) -> int:
        return default_horizon(self.n) if self.horizon is None else self.horizon


class MajorityBitEnv:
    def __init__(self, n: int, horizon: int | None = None):
        if n < 1:
            raise ValueError("n must be >= 1")
        self.n = n
        self.horizon = default_horizon(n) if horizon is None else horizon
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        self.state: EnvState | None = None

    def _obs(self) -> list[tuple[int, int]]:
        return [(b, self.state.t) for b in self.state.bits]

    def reset(self, seed):
        bits = np.random.default_rng(seed).integers(0, 2, size=self.n)
        self.state = EnvState(tuple(int(b) for b in bits), 0, self.horizon)
        return self.state, self._obs()

    def step(self, actions):
        if self.state is None:
            raise RuntimeError("call reset() first")
        self.state, reward, done = env_step(self.state, actions)
        return self.state, self._obs(), reward, done


def state_summary(state: EnvState) -> np.ndarray:
    """Global-state target for the auxiliary predictor: the ones fraction."""
    return np.array([sum(state.bits) / len(state.bits)])


# -- messages ---------------------------------------------------------------------


def majority_aggregator(n: int) -> UnionAggregator:
    return UnionAggregator(2 * n, item_fn=lambda agent_id, obs: 2 * agent_id + obs[0])


def _odd_mask(n: int) -> int:
    return int("10" * n, 2) if n else 0


def message_counts(message: int, n: int) -> tuple[int, int]:
    """``(ones_count, total_count)`` carried by a union message."""
    return (message & _odd_mask(n)).bit_count(), message.bit_count()


def bucket(fraction: float, buckets: int) -> int:
    return min(int(fraction * buckets), buckets - 1)


# -- policies ---------------------------------------------------------------------


def no_comm_ceiling(n: int) -> float:
    """Best expected reward for any policy that only sees its own bit (exact)."""
    best = 0.0
    for act0, act1 in itertools.product((0, 1), repeat=2):
        total = 0.0
        for ones in range(n + 1):
            maj = int(2 * ones >= n)
            right = ones * (act1 == maj) + (n - ones) * (act0 == maj)
            total += math.comb(n, ones) * right / n
        best = max(best, total / 2**n)
    return best


def scripted_count_policy(ones: int, total: int, t: int, T: int, diameter: float) -> int:
    """No-op until information has had time to spread, then vote the observed majority.

    Acts from ``min(diameter, T - 1)`` so the final scored step is never a no-op.
    """
    if t < min(diameter, T - 1):
        return NOOP
    return int(2 * ones >= total)


class ScriptedCountPolicy:
    transferable = True

    def __init__(self, diameter: float | None = None):
        self.diameter = diameter

    def bind(self, n: int, horizon: int, schedule: TopologySchedule | None = None):
        diameter = self.diameter
        if diameter is None:
            try:
                diameter = time_to_full_reach(schedule, 0) if schedule is not None else horizon - 1
            except NotReached:
                diameter = math.inf

        def act(histories, messages, t, rng):
            return [scripted_count_policy(*message_counts(m, n), t, horizon, diameter) for m in messages]

        return act


class OwnBitPolicy:
    transferable = True

    def bind(self, n, horizon, schedule=None):
        return lambda histories, messages, t, rng: [h[0] for h in histories]


class RandomPolicy:
    transferable = True

    def bind(self, n, horizon, schedule=None):
        return lambda histories, messages, t, rng: rng.integers(0, 2, size=n).tolist()


def features(obs, message: int, t: int, horizon: int, n: int, buckets: int = 8, mode: str = "fraction") -> tuple:
    """Discretized agent state.

    ``"fraction"``: (own bit, ones-fraction bucket, coverage-fraction bucket,
    final-step flag); agent-count agnostic. ``"count"``: raw (own bit, ones,
    total, final-step flag); tied to the training ``n``.
    """
    ones, total = message_counts(message, n)
    last = int(t == horizon - 1)
    if mode == "count":
        return (obs[0], ones, total, last)
    return (obs[0], bucket(ones / total, buckets), bucket(total / n, buckets), last)


@dataclass
class TabularPolicy:
    buckets: int = 8
    mode: str = "fraction"
    shared: bool = True
    q: dict = field(default_factory=dict)

    @property
    def transferable(self) -> bool:
        return self.mode == "fraction" and self.shared

    def key(self, agent_id: int, obs, message, t, horizon, n) -> tuple:
        f = features(obs, message, t, horizon, n, self.buckets, self.mode)
        return f if self.shared else (agent_id,) + f

    def values(self, key) -> np.ndarray:
        return self.q.get(key, _ZEROS)

    def greedy(self, key) -> int:
        return int(np.argmax(self.values(key)))  # argmax keeps the lowest index on ties

    def copy(self) -> "TabularPolicy":
        return TabularPolicy(self.buckets, self.mode, self.shared, {k: v.copy() for k, v in self.q.items()})

    def bind(self, n, horizon, schedule=None, epsilon: float = 0.0):
        def act(histories, messages, t, rng):
            out = []
            for i, (h, m) in enumerate(zip(histories, messages)):
                if epsilon and rng.random() < epsilon:
                    out.append(int(rng.integers(N_ACTIONS)))
                else:
                    out.append(self.greedy(self.key(i, h, m, t, horizon, n)))
            return out

        return act


_ZEROS = np.zeros(N_ACTIONS)
_ZEROS.setflags(write=False)


# -- evaluation ---------------------------------------------------------------------


@dataclass(frozen=True)
class EvalResult:
    mean: float
    stderr: float
    episodes: int


def evaluate(policy, env_cfg: EnvConfig, schedule: TopologySchedule, aggregator=None, episodes: int = 100, seed=0) -> EvalResult:
    """Mean final-step team reward of ``policy`` (greedy) over seeded episodes."""
    env = MajorityBitEnv(env_cfg.n, env_cfg.T)
    aggregator = aggregator or majority_aggregator(env_cfg.n)
    act = policy.bind(env.n, env.horizon, schedule)
    rewards = np.array(
        [run_episode(env, act, schedule, aggregator, env.horizon, [seed, e])[0].total_reward for e in range(episodes)]
    )
    stderr = rewards.std(ddof=1) / np.sqrt(episodes) if episodes > 1 else 0.0
    return EvalResult(float(rewards.mean()), float(stderr), episodes)


@dataclass(frozen=True)
class TransferResult:
    from_n: int
    to_n: int
    topology: str
    reward: float
    stderr: float


def zero_shot_transfer(policy, from_n: int, to_n: int, schedule_kind: str, episodes: int = 200, seed=0, **schedule_params) -> TransferResult:
    """Evaluate an unchanged policy at ``to_n`` agents with a regenerated schedule and horizon."""
    if not getattr(policy, "transferable", False):
        raise ValueError("policy depends on the training agent count (raw counts or per-agent tables); cannot transfer")
    schedule = make_schedule(schedule_kind, to_n, **schedule_params)
    res = evaluate(policy, EnvConfig(to_n), schedule, episodes=episodes, seed=seed)
    return TransferResult(from_n, to_n, schedule_kind, res.mean, res.stderr)


# -- training -----------------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    loss: LossConfig = LossConfig(gamma=0.99)
    episodes: int = 20000
    lr: float = 0.05
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_anneal: int = 10000  # episodes
    target_interval: int = 200  # episodes between target-table copies
    eval_episodes: int = 100
    checkpoints: int = 10
    buckets: int = 8
    mode: str = "fraction"
    shared: bool = True

    def __post_init__(self):
        if self.episodes < 0 or self.eval_episodes < 1 or self.checkpoints < 1:
            raise ValueError("episodes >= 0, eval_episodes >= 1 and checkpoints >= 1 required")
        if self.lr < 0:
            raise ValueError("lr must be >= 0")
        if not (0 <= self.eps_end <= 1 and 0 <= self.eps_start <= 1):
            raise ValueError("exploration rates must lie in [0, 1]")
        if self.eps_anneal < 0 or self.target_interval < 1:
            raise ValueError("eps_anneal >= 0 and target_interval >= 1 required")
        if self.buckets < 2 or self.mode not in ("fraction", "count"):
            raise ValueError("buckets >= 2 and mode in {fraction, count} required")

    def epsilon(self, episode: int) -> float:
        if self.eps_anneal == 0:
            return self.eps_end
        frac = min(episode / self.eps_anneal, 1.0)
        return self.eps_start + frac * (self.eps_end - self.eps_start)


@dataclass
class CurvePoint:
    episode: int
    eval_reward: float
    td_loss: float
    aux_loss: float
    epsilon: float


def _episode_keys(policy: TabularPolicy, buffer: EpisodeBuffer, n: int, horizon: int) -> list[list[tuple]]:
    return [
        [policy.key(i, tr.observations[i], msgs[i], tr.t, horizon, n) for i in range(n)]
        for tr, msgs in zip(buffer.transitions, buffer.messages)
    ]


def _aux_inputs(buffer: EpisodeBuffer, n: int) -> np.ndarray:
    rows = []
    for msgs in buffer.messages:
        for m in msgs:
            ones, total = message_counts(m, n)
            rows.append((ones / total, total / n, 1.0))
    return np.array(rows)


def train_iql(env_cfg: EnvConfig, schedule: TopologySchedule, cfg: TrainConfig = TrainConfig(), seed=0, aggregator=None):
    """Tabular Q-learning with additively mixed team value.

    Every agent reads one shared table (unless ``cfg.shared`` is off). The
    team estimate is the sum of the chosen per-agent values and is regressed
    on ``r + gamma * sum_i max_a Q_target`` with a normalized least-mean-squares
    step, so ``Q_tot`` moves by ``lr * (y_tot - Q_tot)`` even when many agents
    share one cell. An affine probe predicting the global ones
    fraction from message statistics is fitted alongside and its loss logged.
    Returns the greedy policy and evaluation checkpoints.
    """
    n, horizon = env_cfg.n, env_cfg.T
    env = MajorityBitEnv(n, horizon)
    aggregator = aggregator or majority_aggregator(n)
    policy = TabularPolicy(cfg.buckets, cfg.mode, cfg.shared)
    target = policy.copy()
    probe = np.zeros((3, 1))
    gamma = cfg.loss.gamma
    ss = np.random.SeedSequence(seed)
    train_seed, eval_seed = (int(s.generate_state(1)[0]) for s in ss.spawn(2))
    every = max(cfg.episodes // cfg.checkpoints, 1)
    curve: list[CurvePoint] = []
    td_hist, aux_hist = [], []

    def checkpoint(episode: int):
        res = evaluate(policy, env_cfg, schedule, aggregator, cfg.eval_episodes, eval_seed)
        curve.append(
            CurvePoint(
                episode,
                res.mean,
                float(np.mean(td_hist)) if td_hist else 0.0,
                float(np.mean(aux_hist)) if aux_hist else 0.0,
                cfg.epsilon(episode),
            )
        )
        td_hist.clear()
        aux_hist.clear()

    checkpoint(0)
    for ep in range(cfg.episodes):
        act = policy.bind(n, horizon, epsilon=cfg.epsilon(ep))
        buffer, _ = run_episode(env, act, schedule, aggregator, horizon, [train_seed, ep])
        keys = _episode_keys(policy, buffer, n, horizon)
        deltas = []
        for t, tr in enumerate(buffer.transitions):
            if tr.done:
                y_tot = tr.reward
            else:
                y_tot = td_target(tr.reward, gamma, sum(target.values(k).max() for k in keys[t + 1]))
            q_tot = sum(policy.values(k)[a] for k, a in zip(keys[t], tr.actions))
            delta = y_tot - q_tot
            deltas.append(delta)
            if cfg.lr:
                # normalized step: a cell chosen by c agents moves by lr * delta * c / sum(c^2),
                # so Q_tot moves by exactly lr * delta however many agents share a cell
                counts = Counter(zip(keys[t], tr.actions))
                norm = sum(c * c for c in counts.values())
                for (k, a), c in counts.items():
                    if k not in policy.q:
                        policy.q[k] = np.zeros(N_ACTIONS)
                    policy.q[k][a] += cfg.lr * delta * c / norm
        td_hist.append(td_loss(deltas, np.zeros(len(deltas))))
        # auxiliary probe: message statistics -> global ones fraction
        x = _aux_inputs(buffer, n)
        s = np.repeat([state_summary(tr.state) for tr in buffer.transitions], n, axis=0)
        pred = x @ probe
        aux_hist.append(aux_pred_loss(s, pred))
        probe -= cfg.lr * x.T @ aux_pred_loss_grad(s, pred)
        if (ep + 1) % cfg.target_interval == 0:
            target = policy.copy()
        if (ep + 1) % every == 0 or ep + 1 == cfg.episodes:
            if not curve or curve[-1].episode != ep + 1:
                checkpoint(ep + 1)
    return policy, curve
