"""Mutable dynamic property graph with adjacency indexing and batch updates.

Vertices are dense internal integer ids assigned in first-seen order; the
external name of a vertex (whatever token the input file used) is kept for
reporting.  Edges are directed, carry a small-integer label code (0 when
unlabeled) and a positive integer weight (1 when unweighted).  Parallel
edges are kept as distinct multiset members: difference arithmetic downstream
is multiset-based and deduplication would silently change multiplicities.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import NamedTuple

from deltagraph.errors import (
    ParseError,
    SequencingError,
    UpdateError,
    ValidationError,
    WorkloadError,
)

INSERT = 1
DELETE = -1


class Edge(NamedTuple):
    src: int
    dst: int
    label: int
    weight: int


class UpdateEntry(NamedTuple):
    sign: int  # INSERT or DELETE
    src: int
    dst: int
    label: int
    weight: int

    @property
    def edge(self) -> Edge:
        return Edge(self.src, self.dst, self.label, self.weight)


@dataclass
class UpdateBatch:
    version: int
    entries: list[UpdateEntry] = field(default_factory=list)


class Graph:
    """Adjacency-indexed multigraph with forward/backward edge lists."""

    def __init__(self):
        self._intern: dict = {}
        self.names: list = []
        self.forward: list[list[tuple[int, int, int]]] = []  # per src: (dst, label, weight)
        self.backward: list[list[tuple[int, int, int]]] = []  # per dst: (src, label, weight)
        self.out_degree: list[int] = []
        self.in_degree: list[int] = []
        self.version = 0
        self.num_edges = 0
        self.labels: set[int] = set()

    # -- vertices ------------------------------------------------------

    def intern(self, name) -> int:
        """Return the internal id for an external vertex name, creating it."""
        vid = self._intern.get(name)
        if vid is None:
            vid = len(self.names)
            self._intern[name] = vid
            self.names.append(name)
            self.forward.append([])
            self.backward.append([])
            self.out_degree.append(0)
            self.in_degree.append(0)
        return vid

    def vertex_id(self, name) -> int:
        try:
            return self._intern[name]
        except KeyError:
            raise ValidationError(f"unknown vertex {name!r}") from None

    def resolve_vertex(self, token) -> int:
        """vertex_id that also accepts numeric strings for integer names."""
        if token in self._intern:
            return self._intern[token]
        if isinstance(token, str):
            try:
                return self.vertex_id(int(token))
            except (ValueError, ValidationError):
                pass
        raise ValidationError(f"unknown vertex {token!r}")

    @property
    def num_vertices(self) -> int:
        return len(self.names)

    def vertices(self):
        return range(len(self.names))

    # -- edges ---------------------------------------------------------

    def add_edge(self, src: int, dst: int, label: int = 0, weight: int = 1):
        if weight < 1:
            raise ValidationError(f"edge weight must be >= 1, got {weight}")
        self.forward[src].append((dst, label, weight))
        self.backward[dst].append((src, label, weight))
        self.out_degree[src] += 1
        self.in_degree[dst] += 1
        self.num_edges += 1
        self.labels.add(label)

    def remove_edge(self, src: int, dst: int, label: int, weight: int):
        try:
            self.forward[src].remove((dst, label, weight))
            self.backward[dst].remove((src, label, weight))
        except (ValueError, IndexError):
            raise UpdateError(
                f"cannot delete absent edge ({self.names[src] if src < len(self.names) else src}"
                f" -> {self.names[dst] if dst < len(self.names) else dst},"
                f" label={label}, weight={weight})"
            ) from None
        self.out_degree[src] -= 1
        self.in_degree[dst] -= 1
        self.num_edges -= 1

    def has_edge(self, src: int, dst: int, label: int, weight: int) -> bool:
        if src >= len(self.forward):
            return False
        return (dst, label, weight) in self.forward[src]

    def edges(self):
        for src, lst in enumerate(self.forward):
            for dst, label, weight in lst:
                yield Edge(src, dst, label, weight)

    def total_degree(self, v: int) -> int:
        return self.out_degree[v] + self.in_degree[v]

    # -- batches -------------------------------------------------------

    def apply_batch(self, batch: UpdateBatch):
        """Apply a batch; deletions must refer to present edges."""
        if batch.version != self.version + 1:
            raise SequencingError(
                f"batch version {batch.version} does not follow graph version {self.version}"
            )
        for entry in batch.entries:
            # Interning here lets insertions introduce brand-new vertices.
            src, dst = entry.src, entry.dst
            if entry.sign == INSERT:
                while max(src, dst) >= len(self.names):
                    self.intern(len(self.names))
                self.add_edge(src, dst, entry.label, entry.weight)
            elif entry.sign == DELETE:
                if max(src, dst) >= len(self.names) or not self.has_edge(
                    src, dst, entry.label, entry.weight
                ):
                    raise UpdateError(f"cannot delete absent edge {entry}")
                self.remove_edge(src, dst, entry.label, entry.weight)
            else:
                raise ValidationError(f"bad entry sign {entry.sign}")
        self.version = batch.version

    def check_degree_invariant(self):
        for v in self.vertices():
            assert self.out_degree[v] == len(self.forward[v])
            assert self.in_degree[v] == len(self.backward[v])
        assert sum(self.out_degree) == sum(self.in_degree) == self.num_edges

    def reversed_copy(self) -> "Graph":
        """Independent copy with every edge direction flipped."""
        rev = Graph()
        rev._intern = dict(self._intern)
        rev.names = list(self.names)
        rev.forward = [list(lst) for lst in self.backward]
        rev.backward = [list(lst) for lst in self.forward]
        rev.out_degree = list(self.in_degree)
        rev.in_degree = list(self.out_degree)
        rev.version = self.version
        rev.num_edges = self.num_edges
        rev.labels = set(self.labels)
        return rev

    @classmethod
    def from_edges(cls, edges, names=None) -> "Graph":
        """Build a graph from (src, dst[, label[, weight]]) tuples of names."""
        g = cls()
        if names:
            for name in names:
                g.intern(name)
        for e in edges:
            src, dst = g.intern(e[0]), g.intern(e[1])
            label = e[2] if len(e) > 2 else 0
            weight = e[3] if len(e) > 3 else 1
            g.add_edge(src, dst, label, weight)
        return g


def reverse_batch(batch: UpdateBatch) -> UpdateBatch:
    entries = [
        UpdateEntry(e.sign, e.dst, e.src, e.label, e.weight) for e in batch.entries
    ]
    return UpdateBatch(batch.version, entries)


# -- loading -----------------------------------------------------------


def load_edge_list(path, weighted: bool = False, labeled: bool = False):
    """Load a whitespace-separated edge list: ``src dst [weight] [label]``.

    Lines starting with ``#`` are comments.  External ids map to dense
    internal ids in first-seen order; duplicate lines become parallel edges.
    Returns (graph, edges) with edges in file order as internal Edge tuples.
    """
    g = Graph()
    edges: list[Edge] = []
    with open(path) as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            expected = 2 + (1 if weighted else 0) + (1 if labeled else 0)
            if len(parts) != expected:
                raise ParseError(
                    f"expected {expected} fields, got {len(parts)}: {line!r}", line_no
                )
            src = g.intern(parts[0])
            dst = g.intern(parts[1])
            weight, label = 1, 0
            idx = 2
            if weighted:
                try:
                    weight = int(parts[idx])
                except ValueError:
                    raise ParseError(f"bad weight {parts[idx]!r}", line_no) from None
                if weight < 0:
                    raise ValidationError(f"line {line_no}: negative weight {weight}")
                idx += 1
            if labeled:
                try:
                    label = int(parts[idx])
                except ValueError:
                    raise ParseError(f"bad label {parts[idx]!r}", line_no) from None
            edge = Edge(src, dst, label, weight)
            g.add_edge(*edge)
            edges.append(edge)
    return g, edges


def attach_random_weights(edges, seed: int, low: int = 1, high: int = 10):
    """Fix integer weights on an unweighted edge list, drawn once per seed."""
    rng = random.Random(seed)
    return [Edge(e.src, e.dst, e.label, rng.randint(low, high)) for e in edges]


# -- workload generation ----------------------------------------------


def split_for_dynamism(edges, seed: int, initial_fraction: float = 0.9):
    """Shuffle edges by seed; the first floor(fraction*|E|) form the initial
    graph, the rest become an insertion stream in shuffle order."""
    if not 0 < initial_fraction < 1:
        raise ValidationError(f"initial_fraction must be in (0, 1), got {initial_fraction}")
    shuffled = list(edges)
    random.Random(seed).shuffle(shuffled)
    cut = int(initial_fraction * len(shuffled))
    return shuffled[:cut], shuffled[cut:]


def batches_from_stream(stream, batch_size: int = 1, start_version: int = 1):
    """Group an insertion stream into UpdateBatches of the given size."""
    batches = []
    version = start_version
    for i in range(0, len(stream), batch_size):
        entries = [UpdateEntry(INSERT, *e) for e in stream[i : i + batch_size]]
        batches.append(UpdateBatch(version, entries))
        version += 1
    return batches


def make_deletion_workload(initial_edges, batches, deletion_fraction: float, seed: int):
    """Turn a seeded fraction of the batches into single-edge deletions.

    A deletion batch removes one uniformly random edge present at that point
    (initial edges plus applied insertions minus earlier deletions); the
    remaining batches keep their insertion entries.
    """
    if not 0 <= deletion_fraction <= 1:
        raise ValidationError(f"deletion_fraction must be in [0, 1], got {deletion_fraction}")
    if deletion_fraction == 0:
        return [UpdateBatch(b.version, list(b.entries)) for b in batches]
    rng = random.Random(seed)
    n_delete = round(deletion_fraction * len(batches))
    delete_at = set(rng.sample(range(len(batches)), n_delete))
    present = list(initial_edges)
    out = []
    for idx, batch in enumerate(batches):
        if idx in delete_at:
            if not present:
                raise WorkloadError("deletion requested on an empty graph")
            pick = rng.randrange(len(present))
            edge = present[pick]
            present[pick] = present[-1]
            present.pop()
            out.append(UpdateBatch(batch.version, [UpdateEntry(DELETE, *edge)]))
        else:
            out.append(UpdateBatch(batch.version, list(batch.entries)))
            for entry in batch.entries:
                if entry.sign == INSERT:
                    present.append(entry.edge)
    return out


# -- update-stream files ----------------------------------------------
# One entry per line: `+|- src dst weight label`; blank line separates batches.


def write_update_stream(path, batches, names=None):
    def name_of(v):
        return names[v] if names else v

    with open(path, "w") as fh:
        for bi, batch in enumerate(batches):
            if bi:
                fh.write("\n")
            for e in batch.entries:
                sign = "+" if e.sign == INSERT else "-"
                fh.write(f"{sign} {name_of(e.src)} {name_of(e.dst)} {e.weight} {e.label}\n")


def read_update_stream(path, graph: Graph, start_version: int | None = None):
    """Parse an update-stream file against a graph's vertex names."""
    version = graph.version + 1 if start_version is None else start_version
    batches = []
    current: list[UpdateEntry] = []
    with open(path) as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                if current:
                    batches.append(UpdateBatch(version, current))
                    version += 1
                    current = []
                continue
            parts = line.split()
            if len(parts) != 5 or parts[0] not in "+-":
                raise ParseError(f"expected '+|- src dst weight label': {line!r}", line_no)
            sign = INSERT if parts[0] == "+" else DELETE
            src = graph.intern(parts[1])
            dst = graph.intern(parts[2])
            try:
                weight, label = int(parts[3]), int(parts[4])
            except ValueError:
                raise ParseError(f"bad weight/label: {line!r}", line_no) from None
            current.append(UpdateEntry(sign, src, dst, label, weight))
    if current:
        batches.append(UpdateBatch(version, current))
    return batches
