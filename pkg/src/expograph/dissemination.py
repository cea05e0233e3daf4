"""Information spread over topology schedules with a one-step message delay.

Knowledge is tracked as one Python ``int`` bitset per agent: bit ``s`` of
``knowledge[j]`` is set once agent ``j`` carries information that originated
at agent ``s``. At step ``t`` an agent merges what its in-neighbours held at
``t - 1`` over the graph ``at(t - 1)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .analysis import ceil_log2
from .topology import TopologySchedule, budget_class_schedule


def initial_knowledge(n: int) -> list[int]:
    return [1 << j for j in range(n)]


def spread_step(knowledge: Sequence[int], adj: np.ndarray) -> list[int]:
    """One delivery round: every agent ORs in the sets its in-neighbours held."""
    new = list(knowledge)
    senders, receivers = np.nonzero(adj)
    for i, j in zip(senders.tolist(), receivers.tolist()):
        if i != j:
            new[j] |= knowledge[i]
    return new


def propagate(schedule: TopologySchedule, max_t: int, t0: int = 0) -> list[list[int]]:
    """Knowledge states for ``t = 0 .. max_t`` (index 0 is the singleton start)."""
    if max_t < 0:
        raise ValueError("max_t must be >= 0")
    states = [initial_knowledge(schedule.n)]
    for t in range(1, max_t + 1):
        states.append(spread_step(states[-1], schedule.at(t0 + t - 1)))
    return states


def knowledge_matrix(knowledge: Sequence[int]) -> np.ndarray:
    """Boolean ``(origin, holder)`` matrix for a knowledge state."""
    n = len(knowledge)
    nbytes = (n + 7) // 8
    raw = b"".join(k.to_bytes(nbytes, "little") for k in knowledge)
    bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8).reshape(n, nbytes), axis=1, bitorder="little")
    return bits[:, :n].astype(bool).T


@dataclass
class DisseminationTrace:
    source: int
    coverage: list[int]
    params: dict = field(default_factory=dict)
    frames: np.ndarray | None = None  # (max_t + 1, n) covered flags


def simulate_spread(schedule: TopologySchedule, source: int, max_t: int, frames: bool = False) -> DisseminationTrace:
    n = schedule.n
    if not 0 <= source < n:
        raise IndexError(f"source {source} out of range for n={n}")
    bit = 1 << source
    covered = [[bool(k & bit) for k in state] for state in propagate(schedule, max_t)]
    return DisseminationTrace(
        source=source,
        coverage=[sum(row) for row in covered],
        params={"topology": schedule.kind, "n": n, **schedule.params},
        frames=np.array(covered) if frames else None,
    )


def spread_all_sources(schedule: TopologySchedule, max_t: int) -> np.ndarray:
    """Coverage for every source at once, shape ``(max_t + 1, n)``."""
    return np.array([knowledge_matrix(s).sum(axis=1) for s in propagate(schedule, max_t)])


def sample_sources(n: int, count: int | None, seed) -> np.ndarray:
    """``count`` distinct uniform sources; ``None`` (or ``count >= n``) means every agent."""
    if count is not None and count < 1:
        raise ValueError("need at least one source")
    if count is None or count >= n:
        return np.arange(n)
    return np.sort(np.random.default_rng(seed).choice(n, size=count, replace=False))


@dataclass
class CoverageCurve:
    mean: np.ndarray
    min: np.ndarray
    max: np.ndarray
    samples: np.ndarray  # (runs, max_t + 1)


def coverage_curve(
    schedule_factory: Callable[[int], TopologySchedule],
    sources: int | None,
    seeds: Iterable[int],
    max_t: int,
) -> CoverageCurve:
    """Coverage statistics over sampled sources and seeds.

    ``schedule_factory(seed)`` builds the schedule for one seed; sources for
    that seed are drawn with :func:`sample_sources`.
    """
    runs = []
    for seed in seeds:
        sched = schedule_factory(seed)
        cov = spread_all_sources(sched, max_t)
        runs.append(cov[:, sample_sources(sched.n, sources, [seed, 0x5EED])].T)
    samples = np.concatenate(runs, axis=0)
    return CoverageCurve(samples.mean(axis=0), samples.min(axis=0), samples.max(axis=0), samples)


FAMILIES = ("distance", "er", "exponential")


@dataclass
class SpreadConfig:
    n: int = 256
    budgets: tuple[int, ...] | None = None  # default (ceil(log2 n), 1)
    families: tuple[str, ...] = FAMILIES
    seeds: tuple[int, ...] = tuple(range(20))
    sources: int | None = None  # None: every agent is a source
    max_t: int | None = None  # default ceil(log2 n)
    er_mode: str = "per_step"

    def resolved(self) -> "SpreadConfig":
        if self.n < 2:
            raise ValueError("n must be >= 2")
        budgets = self.budgets or (ceil_log2(self.n), 1)
        for k in budgets:
            if not 1 <= k <= self.n - 1:
                raise ValueError(f"budget k={k} outside [1, n-1]")
        for fam in self.families:
            if fam not in FAMILIES + ("ring",):
                raise ValueError(f"unknown family {fam!r}")
        if not self.seeds:
            raise ValueError("need at least one seed")
        max_t = ceil_log2(self.n) if self.max_t is None else self.max_t
        if max_t < 0:
            raise ValueError("max_t must be >= 0")
        return SpreadConfig(self.n, tuple(budgets), tuple(self.families), tuple(self.seeds), self.sources, max_t, self.er_mode)


SPREAD_COLUMNS = ("topology", "n", "k", "seed", "source", "t", "coverage")


def fig2_experiment(config: SpreadConfig | None = None) -> list[tuple]:
    """Rows ``(topology, n, k, seed, source, t, coverage)`` for every family x budget."""
    cfg = (config or SpreadConfig()).resolved()
    rows = []
    for k in cfg.budgets:
        for family in cfg.families:
            for seed in cfg.seeds:
                sched = budget_class_schedule(family, cfg.n, k, seed, er_mode=cfg.er_mode)
                cov = spread_all_sources(sched, cfg.max_t)
                for s in sample_sources(cfg.n, cfg.sources, [seed, 0x5EED]).tolist():
                    for t in range(cfg.max_t + 1):
                        rows.append((sched.kind, cfg.n, k, seed, s, t, int(cov[t, s])))
    return rows


def mean_curves(rows: Sequence[tuple]) -> dict[tuple[str, int], np.ndarray]:
    """Mean coverage per ``(topology, k)`` indexed by ``t``."""
    acc: dict[tuple[str, int], dict[int, list[int]]] = {}
    for topo, _n, k, _seed, _src, t, cov in rows:
        acc.setdefault((topo, k), {}).setdefault(t, []).append(cov)
    return {key: np.array([np.mean(by_t[t]) for t in sorted(by_t)]) for key, by_t in acc.items()}
