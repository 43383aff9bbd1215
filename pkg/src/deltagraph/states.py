"""Vertex state values shared by all query kinds.

States are plain scalars: int for distances/hops/component ids, float for
ranks, and INF for "no finite distance".  INF is math.inf, so arithmetic on
it is total (INF + w == INF) and it is never confused with an integer state.
A missing state (vertex not reached / no entry) is represented as None at
API boundaries, never stored.
"""

import math

INF = math.inf


def is_inf(state) -> bool:
    return state == INF


def fmt_state(state) -> str:
    """Render a state for trace dumps: 'inf', bare ints, repr floats."""
    if state == INF:
        return "inf"
    if isinstance(state, float):
        return repr(state)
    return str(state)
