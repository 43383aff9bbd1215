"""Pluggable iterative computations: initial states, per-edge propagation,
aggregation, and stop conditions for SPSP, K-hop, RPQ, WCC, and PageRank.

Each operator describes one frontier-expansion computation over keys.  For
most queries a key is a vertex id; for RPQ it is a packed (vertex,
automaton-state) pair.  Operators are immutable after construction and are
shared freely between engines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from deltagraph.errors import QueryCompilationError, ValidationError
from deltagraph.graph import Graph
from deltagraph.states import INF


@dataclass(frozen=True)
class LabelAutomaton:
    """Small NFA over edge-label codes."""

    n_states: int
    start: int
    accepting: frozenset
    transitions: dict  # (state, label) -> frozenset of states

    def __post_init__(self):
        if not 0 <= self.start < self.n_states:
            raise ValidationError(f"start state {self.start} out of range")
        for (q, _label), targets in self.transitions.items():
            if not 0 <= q < self.n_states:
                raise ValidationError(f"transition source {q} out of range")
            for q2 in targets:
                if not 0 <= q2 < self.n_states:
                    raise ValidationError(f"transition target {q2} out of range")
        for q in self.accepting:
            if not 0 <= q < self.n_states:
                raise ValidationError(f"accepting state {q} out of range")

    def labels_used(self):
        return {label for (_q, label) in self.transitions}


def automaton_star(label: int) -> LabelAutomaton:
    """a*: one accepting start state with a self-loop."""
    return LabelAutomaton(1, 0, frozenset({0}), {(0, label): frozenset({0})})


def automaton_concat_star(first: int, rest: int) -> LabelAutomaton:
    """a . b*: one a-step, then any number of b-steps."""
    return LabelAutomaton(
        2,
        0,
        frozenset({1}),
        {(0, first): frozenset({1}), (1, rest): frozenset({1})},
    )


def automaton_chain(labels) -> LabelAutomaton:
    """a . b . c ...: a fixed label sequence."""
    labels = list(labels)
    trans = {(i, lab): frozenset({i + 1}) for i, lab in enumerate(labels)}
    return LabelAutomaton(len(labels) + 1, 0, frozenset({len(labels)}), trans)


RPQ_TEMPLATES = {"Q1": 1, "Q2": 2, "Q3": 5}


def automaton_from_template(template: str, labels) -> LabelAutomaton:
    labels = list(labels)
    want = RPQ_TEMPLATES.get(template)
    if want is None:
        raise ValidationError(f"unknown RPQ template {template!r}")
    if len(labels) != want:
        raise ValidationError(f"{template} takes {want} label(s), got {len(labels)}")
    if template == "Q1":
        return automaton_star(labels[0])
    if template == "Q2":
        return automaton_concat_star(labels[0], labels[1])
    return automaton_chain(labels)


@dataclass
class QuerySpec:
    """One registered query; fields depend on the kind."""

    kind: str  # spsp | khop | rpq | wcc | pagerank
    source: object = None
    target: object = None
    k_max: int | None = None
    automaton: LabelAutomaton | None = None
    fixed_iterations: int = 10
    damping: float = 0.85

    def __post_init__(self):
        kind = self.kind
        if kind == "spsp":
            if self.source is None or self.target is None:
                raise ValidationError("spsp requires source and target")
        elif kind == "khop":
            if self.source is None or self.k_max is None:
                raise ValidationError("khop requires source and k_max")
            if self.k_max < 1:
                raise ValidationError("khop requires k_max >= 1")
        elif kind == "rpq":
            if self.source is None or self.automaton is None:
                raise ValidationError("rpq requires source and automaton")
        elif kind not in ("wcc", "pagerank"):
            raise ValidationError(f"unknown query kind {self.kind!r}")


def parse_query_line(line: str) -> QuerySpec:
    """Parse `spsp src dst | khop src k | rpq src TEMPLATE label... | wcc | pagerank`."""
    parts = line.split()
    if not parts:
        raise ValidationError("empty query line")
    kind = parts[0].lower()
    if kind == "spsp":
        if len(parts) != 3:
            raise ValidationError(f"spsp takes 2 arguments: {line!r}")
        return QuerySpec("spsp", source=parts[1], target=parts[2])
    if kind == "khop":
        if len(parts) != 3:
            raise ValidationError(f"khop takes 2 arguments: {line!r}")
        return QuerySpec("khop", source=parts[1], k_max=int(parts[2]))
    if kind == "rpq":
        if len(parts) < 4:
            raise ValidationError(f"rpq takes source, template, labels: {line!r}")
        automaton = automaton_from_template(parts[2], [int(x) for x in parts[3:]])
        return QuerySpec("rpq", source=parts[1], automaton=automaton)
    if kind == "wcc":
        return QuerySpec("wcc")
    if kind == "pagerank":
        return QuerySpec("pagerank")
    raise ValidationError(f"unknown query kind {kind!r}")


def load_query_file(path) -> list[QuerySpec]:
    specs = []
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if line and not line.startswith("#"):
                specs.append(parse_query_line(line))
    return specs


# -- operators ---------------------------------------------------------


class Operator:
    """Base frontier-expansion operator; subclasses fill in the pieces.

    `contributions(key, graph, read)` rebuilds key's incoming contribution
    multiset from its upstream keys' states at the previous iteration
    (`read` returns a state or None).  `aggregate` must be deterministic
    and order-insensitive over that multiset.
    """

    init_depends_on_graph = False
    limit_is_stop = False
    # True when aggregate(init, []) != init, i.e. states move at iteration 1
    # even for keys with no incoming contributions (PageRank's teleport term).
    aggregate_differs_from_init = False

    def initial_states(self, graph: Graph):
        for key in self.key_universe(graph):
            state = self.init(key, graph)
            if state is not None:
                yield key, state

    def key_universe(self, graph: Graph):
        return graph.vertices()

    def init(self, key, graph: Graph):
        raise NotImplementedError

    def upstream_keys(self, key, graph: Graph):
        raise NotImplementedError

    def downstream_keys(self, key, graph: Graph):
        raise NotImplementedError

    def contributions(self, key, graph: Graph, read) -> list:
        raise NotImplementedError

    def edge_touched_keys(self, edge, graph: Graph):
        """Target keys whose contribution multiset depends on this edge."""
        raise NotImplementedError

    def edge_contribution_pairs(self, edge, graph: Graph):
        """(source key, target key) pairs this edge carries contributions on."""
        raise NotImplementedError

    def aggregate(self, init_state, contribs: list, graph: Graph):
        raise NotImplementedError

    def iteration_limit(self, graph: Graph) -> int:
        raise NotImplementedError

    def key_vertex(self, key) -> int:
        return key


class MinOperator(Operator):
    """Shared min-aggregation: min over init and all contributions."""

    def aggregate(self, init_state, contribs: list, graph: Graph):
        best = init_state
        for c in contribs:
            if best is None or c < best:
                best = c
        return best


class SpspOperator(MinOperator):
    """Single-source shortest distances; answers extracted at a target."""

    def __init__(self, source: int):
        self.source = source

    def init(self, key, graph):
        return 0 if key == self.source else INF

    def upstream_keys(self, key, graph):
        return {u for u, _l, _w in graph.backward[key]}

    def downstream_keys(self, key, graph):
        return {d for d, _l, _w in graph.forward[key]}

    def contributions(self, key, graph, read):
        out = []
        for u, _label, w in graph.backward[key]:
            s = read(u)
            if s is not None and s != INF:
                out.append(s + w)
        return out

    def edge_touched_keys(self, edge, graph):
        return {edge.dst}

    def edge_contribution_pairs(self, edge, graph):
        return [(edge.src, edge.dst)]

    def iteration_limit(self, graph):
        return max(1, graph.num_vertices)


class KhopOperator(MinOperator):
    """Hop counts from a source, capped at k_max iterations."""

    limit_is_stop = True

    def __init__(self, source: int, k_max: int):
        self.source = source
        self.k_max = k_max

    def init(self, key, graph):
        return 0 if key == self.source else None

    def upstream_keys(self, key, graph):
        return {u for u, _l, _w in graph.backward[key]}

    def downstream_keys(self, key, graph):
        return {d for d, _l, _w in graph.forward[key]}

    def contributions(self, key, graph, read):
        out = []
        for u, _label, _w in graph.backward[key]:
            s = read(u)
            if s is not None:
                out.append(s + 1)
        return out

    def edge_touched_keys(self, edge, graph):
        return {edge.dst}

    def edge_contribution_pairs(self, edge, graph):
        return [(edge.src, edge.dst)]

    def iteration_limit(self, graph):
        return self.k_max


class RpqOperator(MinOperator):
    """Regular path query over the product of the graph and an NFA.

    Keys pack (vertex, automaton state) as vertex * n_states + state, so
    the trace machinery works on plain integers.  States are the iteration
    of first reach; a vertex answers the query when any accepting key for
    it is reached.
    """

    def __init__(self, source: int, automaton: LabelAutomaton):
        self.source = source
        self.automaton = automaton
        self.ns = automaton.n_states
        self.inverse = {}  # (label, q') -> [q]
        for (q, label), targets in automaton.transitions.items():
            for q2 in targets:
                self.inverse.setdefault((label, q2), []).append(q)

    def pack(self, vertex: int, q: int) -> int:
        return vertex * self.ns + q

    def key_vertex(self, key) -> int:
        return key // self.ns

    def initial_states(self, graph):
        yield self.pack(self.source, self.automaton.start), 0

    def init(self, key, graph):
        if key == self.pack(self.source, self.automaton.start):
            return 0
        return None

    def upstream_keys(self, key, graph):
        v, q2 = divmod(key, self.ns)
        out = set()
        for u, label, _w in graph.backward[v]:
            for q in self.inverse.get((label, q2), ()):
                out.add(self.pack(u, q))
        return out

    def downstream_keys(self, key, graph):
        u, q = divmod(key, self.ns)
        out = set()
        for v, label, _w in graph.forward[u]:
            for q2 in self.automaton.transitions.get((q, label), ()):
                out.add(self.pack(v, q2))
        return out

    def contributions(self, key, graph, read):
        v, q2 = divmod(key, self.ns)
        out = []
        for u, label, _w in graph.backward[v]:
            for q in self.inverse.get((label, q2), ()):
                s = read(self.pack(u, q))
                if s is not None:
                    out.append(s + 1)
        return out

    def edge_touched_keys(self, edge, graph):
        out = set()
        for (q, label), targets in self.automaton.transitions.items():
            if label == edge.label:
                for q2 in targets:
                    out.add(self.pack(edge.dst, q2))
        return out

    def edge_contribution_pairs(self, edge, graph):
        pairs = []
        for (q, label), targets in self.automaton.transitions.items():
            if label == edge.label:
                for q2 in targets:
                    pairs.append((self.pack(edge.src, q), self.pack(edge.dst, q2)))
        return pairs

    def iteration_limit(self, graph):
        return max(1, graph.num_vertices * self.ns)

    def answer_vertices(self, states) -> set:
        out = set()
        for key in states:
            v, q = divmod(key, self.ns)
            if q in self.automaton.accepting:
                out.add(v)
        return out


class WccOperator(MinOperator):
    """Minimum-id label propagation over edges treated as undirected."""

    def init(self, key, graph):
        return key

    def _neighbors(self, key, graph):
        out = {u for u, _l, _w in graph.backward[key]}
        out.update(d for d, _l, _w in graph.forward[key])
        return out

    upstream_keys = _neighbors
    downstream_keys = _neighbors

    def contributions(self, key, graph, read):
        out = []
        for u in sorted(self._neighbors(key, graph)):
            s = read(u)
            if s is not None:
                out.append(s)
        return out

    def edge_touched_keys(self, edge, graph):
        return {edge.src, edge.dst}

    def edge_contribution_pairs(self, edge, graph):
        return [(edge.src, edge.dst), (edge.dst, edge.src)]

    def iteration_limit(self, graph):
        return max(1, graph.num_vertices)


class PagerankOperator(Operator):
    """Fixed-iteration PageRank; dangling mass is not redistributed."""

    init_depends_on_graph = True
    limit_is_stop = True
    aggregate_differs_from_init = True

    def __init__(self, iterations: int = 10, damping: float = 0.85):
        self.iterations = iterations
        self.damping = damping

    def init(self, key, graph):
        return 1.0 / graph.num_vertices

    def upstream_keys(self, key, graph):
        return {u for u, _l, _w in graph.backward[key]}

    def downstream_keys(self, key, graph):
        return {d for d, _l, _w in graph.forward[key]}

    def contributions(self, key, graph, read):
        out = []
        for u, _label, _w in graph.backward[key]:
            s = read(u)
            if s is not None:
                out.append(s / graph.out_degree[u])
        return out

    def edge_touched_keys(self, edge, graph):
        # The edge changes out_degree(src), rescaling src's contribution on
        # every outgoing edge, not just this one.
        out = {edge.dst}
        out.update(d for d, _l, _w in graph.forward[edge.src])
        return out

    def edge_contribution_pairs(self, edge, graph):
        return [(edge.src, t) for t in self.edge_touched_keys(edge, graph)]

    def aggregate(self, init_state, contribs, graph):
        # fsum is exactly rounded, hence permutation-invariant: recomputing
        # a retracted value bit-matches the original.
        n = graph.num_vertices
        return (1.0 - self.damping) / n + self.damping * math.fsum(contribs)

    def iteration_limit(self, graph):
        return self.iterations


def build_operator(spec: QuerySpec, graph: Graph) -> Operator:
    """Resolve a QuerySpec against a graph into an operator instance."""

    def vid(token):
        return token if isinstance(token, int) else graph.resolve_vertex(token)

    if spec.kind == "spsp":
        return SpspOperator(vid(spec.source))
    if spec.kind == "khop":
        return KhopOperator(vid(spec.source), spec.k_max)
    if spec.kind == "rpq":
        missing = spec.automaton.labels_used() - graph.labels
        if missing:
            raise QueryCompilationError(
                f"labels {sorted(missing)} absent from the graph's label dictionary"
            )
        return RpqOperator(vid(spec.source), spec.automaton)
    if spec.kind == "wcc":
        return WccOperator()
    if spec.kind == "pagerank":
        return PagerankOperator(spec.fixed_iterations, spec.damping)
    raise ValidationError(f"unknown query kind {spec.kind!r}")
