"""Directed communication topologies as boolean adjacency matrices.

Convention: ``adj[i, j]`` is True when agent ``i`` sends to agent ``j``.
Every generator stores self-loops on the diagonal; they never count towards
graph size or communication budget.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any

import numpy as np

KINDS = (
    "static_exponential",
    "one_peer_exponential",
    "er_k_in_regular",
    "distance_top_k",
    "ring",
    "fully_connected",
    "none",
)
ER_MODES = ("per_step", "fixed")


def _frozen(adj: np.ndarray) -> np.ndarray:
    adj.setflags(write=False)
    return adj


def _check_n(n: int) -> int:
    if int(n) != n or n < 1:
        raise ValueError(f"agent count must be a positive integer, got {n!r}")
    return int(n)


def exponential_hops(n: int) -> list[int]:
    """Hop distances 2^0 .. 2^floor(log2(n-1)); empty for n == 1."""
    n = _check_n(n)
    if n == 1:
        return []
    return [1 << k for k in range((n - 1).bit_length())]


def one_peer_period(n: int) -> int:
    """Steps before the one-peer schedule repeats: floor(log2(n-1)) + 1."""
    return max(len(exponential_hops(n)), 1)


def self_loops(n: int) -> np.ndarray:
    return _frozen(np.eye(_check_n(n), dtype=bool))


def _shift_graph(n: int, hops) -> np.ndarray:
    adj = np.eye(n, dtype=bool)
    idx = np.arange(n)
    for h in hops:
        adj[idx, (idx + h) % n] = True
    return adj


@lru_cache(maxsize=256)
def static_exponential(n: int) -> np.ndarray:
    n = _check_n(n)
    return _frozen(_shift_graph(n, exponential_hops(n)))


def one_peer_exponential(n: int, t: int) -> np.ndarray:
    n = _check_n(n)
    if t < 0:
        raise ValueError("t must be non-negative")
    return _one_peer_phase(n, t % one_peer_period(n))


@lru_cache(maxsize=1024)
def _one_peer_phase(n: int, phase: int) -> np.ndarray:
    hops = exponential_hops(n)
    return _frozen(_shift_graph(n, [hops[phase]] if hops else []))


def ring(n: int) -> np.ndarray:
    n = _check_n(n)
    return _frozen(_shift_graph(n, [1] if n > 1 else []))


def fully_connected(n: int) -> np.ndarray:
    return _frozen(np.ones((_check_n(n),) * 2, dtype=bool))


def er_k_in_regular(n: int, k: int, seed) -> np.ndarray:
    """Random digraph where every node receives from exactly ``k`` others.

    Each node's in-neighbourhood is an independent uniform ``k``-subset of the
    remaining ``n - 1`` nodes. ``seed`` is anything accepted by
    ``np.random.default_rng``.
    """
    n = _check_n(n)
    if not 0 <= k <= n - 1:
        raise ValueError(f"in-degree k={k} impossible for n={n} (need 0 <= k <= n-1)")
    adj = np.eye(n, dtype=bool)
    if k:
        rng = np.random.default_rng(seed)
        # random keys per (sender, receiver); the k smallest in each column win
        keys = rng.random((n, n))
        np.fill_diagonal(keys, np.inf)
        senders = np.argpartition(keys, k - 1, axis=0)[:k]
        adj[senders, np.arange(n)[None, :]] = True
    return _frozen(adj)


def random_positions(n: int, seed) -> np.ndarray:
    """Uniform points in the unit square, shape ``(n, 2)``."""
    return np.random.default_rng(seed).random((_check_n(n), 2))


def distance_top_k(positions, k: int) -> np.ndarray:
    """Each agent sends to its ``k`` nearest others; ties go to the lower index."""
    pos = np.asarray(positions, dtype=float)
    if pos.ndim != 2 or pos.shape[0] < 1:
        raise ValueError("positions must have shape (n, dim)")
    if not np.all(np.isfinite(pos)):
        raise ValueError("positions must be finite")
    n = pos.shape[0]
    if not 0 <= k <= n - 1:
        raise ValueError(f"k={k} nearest neighbours impossible for n={n}")
    adj = np.eye(n, dtype=bool)
    if k:
        dist = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
        np.fill_diagonal(dist, np.inf)
        # stable sort keeps the lower index first among equal distances
        nearest = np.argsort(dist, axis=1, kind="stable")[:, :k]
        adj[np.arange(n)[:, None], nearest] = True
    return _frozen(adj)


def out_edges(adj: np.ndarray, i: int) -> list[int]:
    n = adj.shape[0]
    if not 0 <= i < n:
        raise IndexError(f"agent {i} out of range for n={n}")
    return [int(j) for j in np.flatnonzero(adj[i]) if j != i]


def in_edges(adj: np.ndarray, j: int) -> list[int]:
    n = adj.shape[0]
    if not 0 <= j < n:
        raise IndexError(f"agent {j} out of range for n={n}")
    return [int(i) for i in np.flatnonzero(adj[:, j]) if i != j]


@dataclass(frozen=True)
class TopologySchedule:
    """Time-indexed adjacency generator; ``at(t)`` is pure in ``t``."""

    kind: str
    n: int
    period: int | None
    params: dict[str, Any] = field(default_factory=dict)

    def at(self, t: int) -> np.ndarray:
        if t < 0:
            raise ValueError("t must be non-negative")
        kind, n, p = self.kind, self.n, self.params
        if kind == "static_exponential":
            return static_exponential(n)
        if kind == "one_peer_exponential":
            return one_peer_exponential(n, t)
        if kind == "ring":
            return ring(n)
        if kind == "fully_connected":
            return fully_connected(n)
        if kind == "none":
            return self_loops(n)
        if kind == "er_k_in_regular":
            if p["er_mode"] == "fixed":
                return er_k_in_regular(n, p["k"], p["seed"])
            return er_k_in_regular(n, p["k"], [p["seed"], t])
        if kind == "distance_top_k":
            return _cached_distance_graph(n, p["position_seed"], p["k"])
        raise ValueError(f"unknown topology kind {kind!r}")



@lru_cache(maxsize=64)
def _cached_distance_graph(n: int, position_seed: int, k: int) -> np.ndarray:
    return distance_top_k(random_positions(n, position_seed), k)


_REQUIRED = {
    "er_k_in_regular": ("k", "seed"),
    "distance_top_k": ("k", "position_seed"),
}


def make_schedule(kind: str, n: int, **params) -> TopologySchedule:
    """Build a :class:`TopologySchedule`.

    ``er_k_in_regular`` needs ``k`` and ``seed`` (``er_mode`` defaults to
    ``"per_step"``, which redraws the graph every step from ``(seed, t)``);
    ``distance_top_k`` needs ``k`` and ``position_seed``.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown topology kind {kind!r}; expected one of {KINDS}")
    n = _check_n(n)
    missing = [key for key in _REQUIRED.get(kind, ()) if params.get(key) is None]
    if missing:
        raise ValueError(f"{kind} schedule missing params: {', '.join(missing)}")
    if "k" in _REQUIRED.get(kind, ()) and not 0 <= params["k"] <= n - 1:
        raise ValueError(f"k={params['k']} impossible for n={n}")
    period = 1
    if kind == "one_peer_exponential":
        period = one_peer_period(n)
    elif kind == "er_k_in_regular":
        params.setdefault("er_mode", "per_step")
        if params["er_mode"] not in ER_MODES:
            raise ValueError(f"er_mode must be one of {ER_MODES}")
        # a per-step ER schedule never repeats
        period = None if params["er_mode"] == "per_step" else 1
    return TopologySchedule(kind, n, period, dict(params))


def budget_class_schedule(family: str, n: int, k: int, seed: int = 0, **extra) -> TopologySchedule:
    """Schedule for a topology family at per-agent budget ``k``.

    ``family`` is ``"exponential"`` (static when ``k > 1``, one-peer when
    ``k == 1``), ``"er"``, ``"distance"``, ``"ring"`` or ``"none"``.
    """
    if family == "exponential":
        return make_schedule("one_peer_exponential" if k == 1 else "static_exponential", n)
    if family == "er":
        return make_schedule("er_k_in_regular", n, k=k, seed=seed, er_mode=extra.get("er_mode", "per_step"))
    if family == "distance":
        return make_schedule("distance_top_k", n, k=k, position_seed=seed)
    if family == "ring":
        return make_schedule("ring", n)
    if family == "none":
        return make_schedule("none", n)
    raise ValueError(f"unknown topology family {family!r}")


def to_dot(adj: np.ndarray, name: str = "G") -> str:
    """Graphviz digraph; self-loops omitted."""
    lines = [f"digraph {name} {{"]
    n = adj.shape[0]
    lines += [f"  {i};" for i in range(n)]
    for i in range(n):
        for j in out_edges(adj, i):
            lines.append(f"  {i} -> {j};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def to_adjacency_list(adj: np.ndarray) -> str:
    rows = []
    for i in range(adj.shape[0]):
        rows.append(f"{i}: " + " ".join(map(str, out_edges(adj, i))))
    return "\n".join(r.rstrip() for r in rows) + "\n"
