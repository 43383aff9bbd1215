"""Differential maintenance drivers.

VdcEngine keeps the full 2-D difference traces for the join output (J) and
the aggregated states (D) and reruns operators at exactly the timestamps
the direct and upper-bound rules mandate.  JodEngine never materialises J:
it reconstructs each key's contribution multiset on demand from in-neighbour
states, keeps a single eagerly-merged 1-D trace for D with negative
multiplicities elided, and optionally drops a subset of produced differences
behind a dropped-VT store, recomputing them on access.

Both engines expect the shared graph to be advanced to the batch's version
before ``maintain`` is called (one graph, many registered engines).
"""

from __future__ import annotations

from dataclasses import dataclass

from deltagraph.diffs import DiffTrace2D, Frontier, MergedTrace
from deltagraph.errors import (
    InternalConsistencyError,
    NonterminationError,
    SequencingError,
)
from deltagraph.graph import Graph, UpdateBatch

INIT_TAG = "i"
CONTRIB_TAG = "c"
_MISSING = object()


@dataclass
class EngineCounters:
    aggregate_reruns: int = 0
    join_reconstructions: int = 0
    diffs_written: int = 0
    diffs_retracted: int = 0
    recomputations: int = 0
    drops: int = 0

    def snapshot(self) -> dict:
        return dict(self.__dict__)


@dataclass
class OutputDiff:
    key: int
    state: object
    sign: int  # +1 added / -1 removed

    def as_tuple(self):
        return (self.key, self.state, "+" if self.sign > 0 else "-")


class _EngineBase:
    def __init__(self, graph: Graph, operator, track_reruns: bool = False):
        self.graph = graph
        self.op = operator
        self.counters = EngineCounters()
        self.converged: dict = {}
        self.max_iteration = 0
        self.version: int | None = None
        self.track_reruns = track_reruns
        self.rerun_log: set = set()
        self._known_vertices = 0

    def _check_sequence(self, batch: UpdateBatch):
        if self.version is None:
            raise SequencingError("initial_run must precede maintain")
        if batch.version != self.version + 1:
            raise SequencingError(
                f"batch version {batch.version} does not follow {self.version}"
            )
        if self.graph.version != batch.version:
            raise SequencingError(
                f"graph at version {self.graph.version}, batch is {batch.version};"
                " apply the batch to the graph first"
            )

    def _count_delta(self, delta: dict):
        for mult in delta.values():
            if mult > 0:
                self.counters.diffs_written += 1
            else:
                self.counters.diffs_retracted += 1

    def _changed_init_keys(self) -> list:
        """Keys whose iteration-0 state may differ from the recorded one."""
        if self.op.init_depends_on_graph:
            if self.graph.num_vertices != self._known_vertices:
                return [key for key, _state in self.op.initial_states(self.graph)]
            return []
        keys = []
        for v in range(self._known_vertices, self.graph.num_vertices):
            for key in self._vertex_keys(v):
                if self.op.init(key, self.graph) is not None:
                    keys.append(key)
        return keys

    def _vertex_keys(self, vertex: int):
        ns = getattr(self.op, "ns", None)
        if ns is None:
            return (vertex,)
        return tuple(vertex * ns + q for q in range(ns))

    def _emit_output(self, touched) -> list[OutputDiff]:
        out = []
        for key in sorted(touched):
            new = self._final_state(key)
            old = self.converged.get(key)
            if new == old:
                continue
            if old is not None:
                out.append(OutputDiff(key, old, -1))
            if new is not None:
                out.append(OutputDiff(key, new, +1))
                self.converged[key] = new
            else:
                self.converged.pop(key, None)
        return out

    def current_states(self) -> dict:
        return dict(self.converged)


class VdcEngine(_EngineBase):
    """Vanilla differential maintenance over unmerged 2-D traces."""

    def __init__(self, graph: Graph, operator, track_reruns: bool = False):
        super().__init__(graph, operator, track_reruns)
        self.trace_e = DiffTrace2D("E")
        self.trace_j = DiffTrace2D("J")
        self.trace_d = DiffTrace2D("D")

    # -- reads ----------------------------------------------------------

    def _state_at(self, key, ts):
        content = self.trace_d.reassemble(key, ts)
        if not content:
            return None
        if len(content) != 1 or next(iter(content.values())) != 1:
            raise InternalConsistencyError(
                f"D^{key} at {ts} reassembles to {content!r}, not a single state"
            )
        return next(iter(content))

    def _final_state(self, key):
        return self._state_at(key, (self.version, self.max_iteration))

    # -- operator reruns --------------------------------------------------

    def _rerun_join(self, key, version, i, min_front):
        self.counters.join_reconstructions += 1
        init_val = self.op.init(key, self.graph)
        content: dict = {}
        if init_val is not None:
            content[(INIT_TAG, init_val)] = 1
        if i > 0:
            read = lambda k2: self._state_at(k2, (version, i - 1))
            for c in self.op.contributions(key, self.graph, read):
                tag = (CONTRIB_TAG, c)
                content[tag] = content.get(tag, 0) + 1
        delta = self.trace_j.record_delta(key, (version, i), content)
        if delta:
            self._count_delta(delta)
            self.max_iteration = max(self.max_iteration, i)
            min_front.schedule(key, i)
            # Upper bound: pair the fresh input diff with older-version J
            # diffs of this key at later iterations.
            for j in self.trace_j.iterations_before_version(key, version):
                if j > i:
                    min_front.schedule(key, j)

    def _rerun_min(self, key, version, i, join_front, limit):
        self.counters.aggregate_reruns += 1
        if self.track_reruns:
            self.rerun_log.add((key, version, i))
        assembled = self.trace_j.reassemble(key, (version, i))
        init_val = None
        contribs: list = []
        for (tag, value), mult in assembled.items():
            if mult < 0:
                raise InternalConsistencyError(
                    f"negative multiplicity in J^{key} at {(version, i)}"
                )
            if tag == INIT_TAG:
                if init_val is not None or mult != 1:
                    raise InternalConsistencyError(f"multiple init entries for {key}")
                init_val = value
            else:
                contribs.extend([value] * mult)
        if i == 0:
            state = init_val
        elif init_val is None and not contribs:
            state = None
        else:
            state = self.op.aggregate(init_val, contribs, self.graph)
        content = {state: 1} if state is not None else {}
        delta = self.trace_d.record_delta(key, (version, i), content)
        if delta:
            self._count_delta(delta)
            self.max_iteration = max(self.max_iteration, i)
            self._touched.add(key)
            if i + 1 <= limit:
                for dkey in self.op.downstream_keys(key, self.graph):
                    join_front.schedule(dkey, i + 1)
            elif not self.op.limit_is_stop:
                raise NonterminationError(
                    f"differences still produced at the iteration cap {limit}"
                )

    def _schedule(self, key, iteration, front):
        front.schedule(key, iteration)

    def _run(self, version, join_front, min_front):
        limit = self.op.iteration_limit(self.graph)
        while join_front or min_front:
            pending = [
                p
                for p in (join_front.lowest_pending(), min_front.lowest_pending())
                if p is not None
            ]
            i = min(pending)
            for key in sorted(join_front.pop_at(i)):
                self._rerun_join(key, version, i, min_front)
            for key in sorted(min_front.pop_at(i)):
                self._rerun_min(key, version, i, join_front, limit)

    # -- lifecycle --------------------------------------------------------

    def initial_run(self):
        if self.version is not None:
            raise SequencingError("initial_run called twice")
        version = self.graph.version
        self._touched = set()
        self._record_edges(version)
        join_front = Frontier(0)
        min_front = Frontier(0)
        for key, _state in self.op.initial_states(self.graph):
            join_front.schedule(key, 0)
            if self.op.aggregate_differs_from_init:
                min_front.schedule(key, 1)
        self._run(version, join_front, min_front)
        self.version = version
        self._known_vertices = self.graph.num_vertices
        self._emit_output(self._touched)
        return self

    def _record_edges(self, version):
        per_src: dict = {}
        for src in self.graph.vertices():
            content: dict = {}
            for entry in self.graph.forward[src]:
                content[entry] = content.get(entry, 0) + 1
            if content:
                per_src[src] = content
        for src, content in per_src.items():
            self.trace_e.record_delta(src, (version, 0), content)

    def maintain(self, batch: UpdateBatch) -> list[OutputDiff]:
        self._check_sequence(batch)
        version = batch.version
        self._touched = set()
        # Record the edge deltas at iteration 0 of the new column.
        for src in sorted({e.src for e in batch.entries}):
            content: dict = {}
            for entry in self.graph.forward[src]:
                content[entry] = content.get(entry, 0) + 1
            self.trace_e.record_delta(src, (version, 0), content)
        join_front = Frontier(self.max_iteration)
        min_front = Frontier(self.max_iteration)
        limit = self.op.iteration_limit(self.graph)
        for key in self._changed_init_keys():
            join_front.schedule(key, 0)
            if self.op.aggregate_differs_from_init:
                min_front.schedule(key, 1)
        # Edge diffs join against every recorded state diff of the source
        # key; the least upper bounds land in this column, one iteration
        # after the source state they pair with.
        for e in batch.entries:
            for skey, tkey in self.op.edge_contribution_pairs(e.edge, self.graph):
                for j in self.trace_d.iterations_before_version(skey, version):
                    if j + 1 <= limit:
                        join_front.schedule(tkey, j + 1)
        self._run(version, join_front, min_front)
        self.version = version
        self._known_vertices = self.graph.num_vertices
        return self._emit_output(self._touched)

    # -- accounting -------------------------------------------------------

    def difference_counts(self) -> dict:
        return {
            "E": self.trace_e.entry_count(),
            "J": self.trace_j.entry_count(),
            "D": self.trace_d.entry_count(),
        }

    def modeled_bytes(self, d: int = 8, s: int = 8) -> int:
        counts = self.difference_counts()
        return (counts["J"] + counts["D"]) * (d + s)

    def dump_j_trace(self, key_fmt=str) -> list[str]:
        """Dump J with init/contribution tags stripped."""
        plain = DiffTrace2D("J")
        for key, cells in self.trace_j.cells.items():
            for ts, diffset in cells.items():
                plain.cells.setdefault(key, {})[ts] = {
                    value: mult for (_tag, value), mult in diffset.items()
                }
        return plain.dump(key_fmt)

    def dump_d_trace(self, key_fmt=str) -> list[str]:
        return self.trace_d.dump(key_fmt)


class JodEngine(_EngineBase):
    """Join-on-demand maintenance over an eagerly merged 1-D trace.

    With a policy and dropped-VT store attached, produced differences at
    iteration >= 1 may be dropped and are then recomputed on access,
    cascading through in-neighbour reads as needed.
    """

    def __init__(
        self,
        graph: Graph,
        operator,
        policy=None,
        store=None,
        track_reruns: bool = False,
    ):
        super().__init__(graph, operator, track_reruns)
        self.merged = MergedTrace()
        self.policy = policy
        self.store = store
        if policy is not None and store is None:
            raise InternalConsistencyError("a drop policy requires a dropped-VT store")
        if policy is not None:
            policy.resolve(graph)
        self._access_memo: dict = {}
        self._ub_scanned: set = set()

    # -- drop-aware reads -------------------------------------------------

    def access_state(self, key, iteration: int, _depth: int = 0):
        """State of `key` at `iteration`: stored row, or recomputed if the
        latest difference at or before `iteration` was dropped."""
        if iteration < 0:
            return None
        memo = self._access_memo.get((key, iteration), _MISSING)
        if memo is not _MISSING:
            return memo
        g_star = self.merged.latest_iteration_at_or_before(key, iteration)
        value = self.merged.lookup(key, iteration)
        if self.store is not None:
            d_star = self.store.latest_dropped_at_or_before(
                key, iteration, floor=g_star or 0
            )
            if d_star is not None and (g_star is None or d_star > g_star):
                if _depth > self.max_iteration + 1:
                    raise InternalConsistencyError(
                        f"recompute recursion exceeded {self.max_iteration} levels"
                    )
                value = self._recompute(key, d_star, _depth)
        self._access_memo[(key, iteration)] = value
        return value

    def _recompute(self, key, iteration: int, depth: int):
        self.counters.recomputations += 1
        read = lambda k2: self.access_state(k2, iteration - 1, depth + 1)
        contribs = self.op.contributions(key, self.graph, read)
        init_val = self.op.init(key, self.graph)
        if init_val is None and not contribs:
            return None
        return self.op.aggregate(init_val, contribs, self.graph)

    def _final_state(self, key):
        return self.access_state(key, self.max_iteration)

    # -- scheduling ---------------------------------------------------------

    def _schedule(self, key, iteration, front, limit=None):
        if limit is None:
            limit = self.op.iteration_limit(self.graph)
        if iteration > limit:
            if self.op.limit_is_stop:
                return
            raise NonterminationError(
                f"work scheduled past the iteration cap {limit}"
            )
        if self.version is not None and key not in self._ub_scanned:
            self._ub_scanned.add(key)
            front.schedule(key, iteration)
            self._upper_bound_scan(key, iteration, front, limit)
        else:
            front.schedule(key, iteration)

    def _upper_bound_scan(self, key, iteration, front, limit):
        """Pair this first schedule with surviving previous-version diffs.

        Condition (i): the key's own stored or dropped diffs at later
        iterations.  Condition (ii): an in-neighbour's stored or dropped
        diff at iteration j, whose contribution lands at j+1; both j and
        j+1 are scheduled (the shifted slot is where the join feedback
        actually delivers the change).
        """
        for j in self._old_diff_iterations(key):
            if j > iteration:
                self._schedule_gated(key, j, front, limit)
        for ukey in self.op.upstream_keys(key, self.graph):
            for j in self._old_diff_iterations(ukey):
                if j > iteration:
                    self._schedule_gated(key, j, front, limit)
                if j + 1 > iteration:
                    self._schedule_gated(key, j + 1, front, limit)

    def _schedule_gated(self, key, iteration, front, limit):
        if iteration > limit:
            return
        front.schedule(key, iteration)

    def _old_diff_iterations(self, key):
        its = list(self.merged.iterations(key))
        if self.store is not None:
            its.extend(self.store.candidate_iterations(key, 0, self.max_iteration))
        return its

    # -- aggregate rerun ------------------------------------------------------

    def _rerun_min(self, key, version, i, front, limit):
        self.counters.aggregate_reruns += 1
        if self.track_reruns:
            self.rerun_log.add((key, version, i))
        if i == 0:
            content = self.op.init(key, self.graph)
        else:
            self.counters.join_reconstructions += 1
            read = lambda k2: self.access_state(k2, i - 1)
            contribs = self.op.contributions(key, self.graph, read)
            init_val = self.op.init(key, self.graph)
            if init_val is None and not contribs:
                content = None
            else:
                content = self.op.aggregate(init_val, contribs, self.graph)

        g_star = self.merged.latest_iteration_at_or_before(key, i)
        prev = self.merged.lookup(key, i)
        final_prev = self.merged.lookup(key, i - 1) if i >= 1 else None
        shadowed = False
        if self.store is not None and i >= 1:
            d_star = self.store.latest_dropped_at_or_before(key, i, floor=g_star or 0)
            shadowed = d_star is not None and (g_star is None or d_star > g_star)
            # Rows below i are final for this version, so the drop-aware
            # read gives the true previous-iteration value even when the
            # plain row lookup is hollowed out by drops.
            final_prev = self.access_state(key, i - 1)
        if shadowed:
            # The previous value was dropped and is unknowable under the
            # current graph; conservatively propagate.  The change is
            # material only where the current trajectory has a change point.
            changed = True
            material = content != final_prev
        else:
            changed = material = content != prev

        if changed:
            if prev is not None and not shadowed:
                self.counters.diffs_retracted += 1
            if content is None:
                if final_prev is not None:
                    raise InternalConsistencyError(
                        f"state of {key} vanished at iteration {i} "
                        f"while present at {i - 1}"
                    )
                self.merged.set_row(key, i, None)
            elif content != final_prev:
                self.counters.diffs_written += 1
                vertex = self.op.key_vertex(key)
                if (
                    i >= 1
                    and self.policy is not None
                    and self.policy.should_drop(
                        vertex, self.policy.degree_of(self.graph, vertex)
                    )
                ):
                    self.counters.drops += 1
                    self.store.record(key, i)
                    self.merged.set_row(key, i, None)
                else:
                    self.merged.set_row(key, i, content)
            else:
                # The state no longer changes at this iteration: the merge
                # cancels the old row entirely, nothing positive remains.
                self.merged.set_row(key, i, None)
            self.max_iteration = max(self.max_iteration, i)
            self._touched.add(key)
            if i + 1 <= limit:
                for dkey in self.op.downstream_keys(key, self.graph):
                    self._schedule(dkey, i + 1, front, limit)
            elif material and not self.op.limit_is_stop:
                raise NonterminationError(
                    f"differences still produced at the iteration cap {limit}"
                )

    def _run(self, version, front, pause_after_iteration=None):
        limit = self.op.iteration_limit(self.graph)
        while front:
            i, keys = front.drain_next()
            self._access_memo.clear()
            for key in sorted(keys):
                self._rerun_min(key, version, i, front, limit)
            if pause_after_iteration is not None and i >= pause_after_iteration:
                break
        self._access_memo.clear()

    # -- lifecycle ----------------------------------------------------------

    def initial_run(self):
        if self.version is not None:
            raise SequencingError("initial_run called twice")
        version = self.graph.version
        self._touched = set()
        self._ub_scanned = set()
        front = Frontier(0)
        for key, _state in self.op.initial_states(self.graph):
            front.schedule(key, 0)
            if self.op.aggregate_differs_from_init:
                front.schedule(key, 1)
        self._run(version, front)
        self.version = version
        self._known_vertices = self.graph.num_vertices
        self._emit_output(self._touched)
        return self

    def maintain(
        self, batch: UpdateBatch, pause_after_iteration: int | None = None
    ) -> list[OutputDiff] | None:
        """Maintain one batch; returns the net output diffs.

        `pause_after_iteration` stops the driver once that iteration has been
        maintained and merged, leaving the engine mid-batch for inspection
        (used by trace tests); the batch must then not be resumed.
        """
        self._check_sequence(batch)
        version = batch.version
        self._touched = set()
        self._ub_scanned = set()
        self._access_memo.clear()
        front = Frontier(self.max_iteration)
        limit = self.op.iteration_limit(self.graph)
        for key in self._changed_init_keys():
            self._schedule(key, 0, front, limit)
            if self.op.aggregate_differs_from_init:
                self._schedule(key, 1, front, limit)
        for e in batch.entries:
            for tkey in self.op.edge_touched_keys(e.edge, self.graph):
                self._schedule(tkey, 0, front, limit)
        self._run(version, front, pause_after_iteration)
        if pause_after_iteration is not None:
            return None
        self.version = version
        self._known_vertices = self.graph.num_vertices
        return self._emit_output(self._touched)

    # -- accounting -----------------------------------------------------------

    def difference_counts(self) -> dict:
        return {"E": self.graph.num_edges, "J": 0, "D": self.merged.entry_count()}

    def modeled_bytes(self, d: int = 8, s: int = 8) -> int:
        bytes_ = self.merged.entry_count() * (d + s)
        if self.store is not None:
            bytes_ += self.store.memory_footprint(d)
        return bytes_
