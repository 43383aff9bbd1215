"""Differential maintenance of recursive graph queries on dynamic graphs."""

from deltagraph.graph import Graph, UpdateBatch, load_edge_list
from deltagraph.queries import QuerySpec, build_operator
from deltagraph.engine import VdcEngine, JodEngine

__all__ = [
    "Graph",
    "UpdateBatch",
    "load_edge_list",
    "QuerySpec",
    "build_operator",
    "VdcEngine",
    "JodEngine",
]
