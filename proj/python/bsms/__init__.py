"""Bi-stride multi-scale graph hierarchies and message passing."""

from ._bsms import (
    Adjacency,
    BsmsError,
    Hierarchy,
    Model,
    bfs_distances,
    bistride_pool,
    build_hierarchy,
    build_hierarchy_from_mesh,
    determine_clusters,
    eval_metrics,
    heat1d,
    seed_close_center,
    seed_min_ave,
    suggest_depth,
    two_hop,
)

__all__ = [
    "Adjacency",
    "BsmsError",
    "Hierarchy",
    "Model",
    "bfs_distances",
    "bistride_pool",
    "build_hierarchy",
    "build_hierarchy_from_mesh",
    "determine_clusters",
    "eval_metrics",
    "heat1d",
    "seed_close_center",
    "seed_min_ave",
    "suggest_depth",
    "two_hop",
]
