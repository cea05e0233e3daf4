"""Exact metrics on static and time-varying communication graphs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csgraph

from .topology import TopologySchedule, make_schedule, static_exponential


class NotReached(RuntimeError):
    """All-pairs reachability was not attained within the search bound."""


@dataclass(frozen=True)
class GraphMetrics:
    diameter: int | None  # None when some ordered pair is unreachable
    size: int
    per_node_out_degree: list[int]


def ceil_log2(n: int) -> int:
    """Smallest integer k with 2**k >= n (0 for n <= 1)."""
    return max(int(n) - 1, 0).bit_length()


def graph_size(adj: np.ndarray) -> int:
    """Number of directed non-self edges."""
    adj = np.asarray(adj, dtype=bool)
    return int(adj.sum() - np.trace(adj))


def out_degrees(adj: np.ndarray) -> np.ndarray:
    adj = np.asarray(adj, dtype=bool)
    return adj.sum(axis=1) - np.diagonal(adj)


def diameter(adj: np.ndarray) -> int | None:
    """Longest shortest directed path in hops, or None if not strongly connected."""
    adj = np.asarray(adj, dtype=bool)
    if adj.shape[0] == 1:
        return 0
    off = adj & ~np.eye(adj.shape[0], dtype=bool)
    dist = csgraph.shortest_path(off.astype(float), method="D", directed=True, unweighted=True)
    if np.isinf(dist).any():
        return None
    return int(dist.max())


def graph_metrics(adj: np.ndarray) -> GraphMetrics:
    return GraphMetrics(diameter(adj), graph_size(adj), [int(d) for d in out_degrees(adj)])


def boolean_window_product(schedule: TopologySchedule, t0: int, w: int) -> np.ndarray:
    """``at(t0) x_b at(t0+1) x_b ... x_b at(t0+w-1)``, in step order.

    Entry ``(i, j)`` is True iff information held by ``i`` at ``t0`` can reach
    ``j`` taking one edge (or self-loop) per step.
    """
    if w < 1:
        raise ValueError("window length must be >= 1")
    reach = np.array(schedule.at(t0), dtype=bool)
    for t in range(t0 + 1, t0 + w):
        reach = reach @ schedule.at(t)  # bool matmul is OR-of-ANDs
    return reach


def numeric_window_product(schedule: TopologySchedule, t0: int, w: int) -> np.ndarray:
    """Ordinary integer product of ``w`` consecutive adjacency matrices."""
    if w < 1:
        raise ValueError("window length must be >= 1")
    prod = schedule.at(t0).astype(np.int64)
    for t in range(t0 + 1, t0 + w):
        prod = prod @ schedule.at(t).astype(np.int64)
    return prod


def time_to_full_reach(schedule: TopologySchedule, t0: int = 0, bound: int | None = None) -> int:
    """Smallest window ``w`` for which the Boolean product from ``t0`` is all-ones."""
    n = schedule.n
    bound = 4 * n if bound is None else bound
    reach = np.array(schedule.at(t0), dtype=bool)
    for w in range(1, bound + 1):
        if w > 1:
            reach = reach @ schedule.at(t0 + w - 1)
        if reach.all():
            return w
    raise NotReached(f"{schedule.kind} n={n} from t0={t0} not fully reached within {bound} steps")


def mixing_matrix(adj: np.ndarray) -> np.ndarray:
    """Uniform in-neighbour averaging weights.

    Column ``j`` spreads weight ``1 / indeg(j)`` (self included) over ``j``
    and its in-neighbours; the update is ``x_new = W.T @ x``.
    """
    adj = np.asarray(adj, dtype=bool)
    if not np.diagonal(adj).all():
        raise ValueError("mixing matrix requires self-loops on every node")
    return adj / adj.sum(axis=0, keepdims=True)


def is_doubly_stochastic(w: np.ndarray, tol: float = 1e-12) -> bool:
    return bool(np.allclose(w.sum(axis=0), 1, rtol=0, atol=tol) and np.allclose(w.sum(axis=1), 1, rtol=0, atol=tol))


@dataclass
class GossipTrace:
    values: np.ndarray  # (steps + 1, n)
    consensus_error: np.ndarray  # (steps + 1,), max-norm distance to mean(x0)
    mean_drift: np.ndarray  # (steps + 1,), |mean(x_t) - mean(x0)|


def gossip_consensus(schedule: TopologySchedule, x0, steps: int) -> GossipTrace:
    if steps < 0:
        raise ValueError("steps must be >= 0")
    x = np.asarray(x0, dtype=float).copy()
    if x.shape != (schedule.n,):
        raise ValueError(f"x0 must have shape ({schedule.n},)")
    target = x.mean()
    values = [x.copy()]
    for t in range(steps):
        x = mixing_matrix(schedule.at(t)).T @ x
        values.append(x.copy())
    values = np.array(values)
    return GossipTrace(
        values=values,
        consensus_error=np.abs(values - target).max(axis=1),
        mean_drift=np.abs(values.mean(axis=1) - target),
    )


def mixing_window_product(schedule: TopologySchedule, t0: int, w: int) -> np.ndarray:
    prod = mixing_matrix(schedule.at(t0))
    for t in range(t0 + 1, t0 + w):
        prod = prod @ mixing_matrix(schedule.at(t))
    return prod


@dataclass(frozen=True)
class WindowRow:
    n: int
    phase: int
    min_window: int
    ceil_log2_n: int
    ceil_log2_n_minus_1: int

    @property
    def log2_n_window_full(self) -> bool:
        return self.min_window <= self.ceil_log2_n

    @property
    def log2_n_minus_1_suffices(self) -> bool:
        return self.min_window <= self.ceil_log2_n_minus_1


def one_peer_window_table(ns) -> list[WindowRow]:
    """Minimal all-pairs window for the one-peer schedule at every phase."""
    rows = []
    for n in ns:
        sched = make_schedule("one_peer_exponential", n)
        for phase in range(sched.period):
            rows.append(WindowRow(n, phase, time_to_full_reach(sched, phase), ceil_log2(n), ceil_log2(n - 1)))
    return rows


def static_size_report(n: int) -> dict:
    """Static exponential size as generated versus the closed form N*floor(log2(N-1))."""
    stated = n * max((n - 1).bit_length() - 1, 0)
    return {"n": n, "generated": graph_size(static_exponential(n)), "stated": stated}
