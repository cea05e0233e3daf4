"""Exponential-graph communication topologies for many-agent systems.

Topology generators, exact reachability and gossip analysis, dissemination
simulation, loss kernels, and a small cooperative benchmark.
"""
from .analysis import (
    NotReached,
    boolean_window_product,
    diameter,
    gossip_consensus,
    graph_size,
    mixing_matrix,
    time_to_full_reach,
)
from .topology import (
    TopologySchedule,
    distance_top_k,
    er_k_in_regular,
    make_schedule,
    one_peer_exponential,
    out_edges,
    static_exponential,
)

__version__ = "0.1.0"

__all__ = [
    "NotReached",
    "TopologySchedule",
    "boolean_window_product",
    "diameter",
    "distance_top_k",
    "er_k_in_regular",
    "gossip_consensus",
    "graph_size",
    "make_schedule",
    "mixing_matrix",
    "one_peer_exponential",
    "out_edges",
    "static_exponential",
    "time_to_full_reach",
]
