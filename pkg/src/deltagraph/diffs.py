"""Difference sets, 2-D timestamps, traces, and the merged 1-D trace.

A difference set is a multiset of values with signed multiplicities,
stored as ``{value: mult}`` with zero-sum entries pruned.  The 2-D trace
keyed by (vertex key, timestamp) supports reassembly by summing all
difference sets at timestamps at or below a point of the product partial
order.  The merged trace is the 1-D structure left after eager merging
and negative-multiplicity elision: per key, a sorted list of
(iteration, state) pairs holding only positive entries, answered by
binary search instead of summation.
"""

from __future__ import annotations

from bisect import bisect_right, insort

from deltagraph.errors import InternalConsistencyError
from deltagraph.states import fmt_state

Timestamp = tuple  # (version, iteration)


def ts_leq(a: Timestamp, b: Timestamp) -> bool:
    return a[0] <= b[0] and a[1] <= b[1]


def ts_lt(a: Timestamp, b: Timestamp) -> bool:
    return ts_leq(a, b) and a != b


def ts_lub(a: Timestamp, b: Timestamp) -> Timestamp:
    return (max(a[0], b[0]), max(a[1], b[1]))


# -- difference-set arithmetic ----------------------------------------


def diffset_sum(sets) -> dict:
    """Sum difference sets: multiplicities of equal values add, zeros drop."""
    out: dict = {}
    for s in sets:
        for value, mult in s.items():
            new = out.get(value, 0) + mult
            if new == 0:
                out.pop(value, None)
            else:
                out[value] = new
    return out


def diffset_diff(new: dict, old: dict) -> dict:
    """new - old, pruning zero entries."""
    out = dict(new)
    for value, mult in old.items():
        rem = out.get(value, 0) - mult
        if rem == 0:
            out.pop(value, None)
        else:
            out[value] = rem
    return out


class DiffTrace2D:
    """Per-key, per-timestamp store of difference sets for one collection."""

    def __init__(self, name: str = ""):
        self.name = name
        self.cells: dict = {}  # key -> {timestamp: diffset}

    def record_delta(self, key, ts: Timestamp, new_content: dict) -> dict:
        """Store new_content minus the strictly-before sum; return the delta."""
        prior = self.reassemble(key, ts, strict=True)
        delta = diffset_diff(new_content, prior)
        if delta:
            self.cells.setdefault(key, {})[ts] = delta
        return delta

    def reassemble(self, key, ts: Timestamp, strict: bool = False) -> dict:
        """Sum all stored difference sets at timestamps <= ts (or < ts)."""
        cells = self.cells.get(key)
        if not cells:
            return {}
        cmp = ts_lt if strict else ts_leq
        return diffset_sum(d for t, d in cells.items() if cmp(t, ts))

    def timestamps(self, key):
        return self.cells.get(key, {}).keys()

    def iterations_before_version(self, key, version: int) -> set:
        """Iterations where this key has any diff at a version < `version`."""
        return {t[1] for t in self.cells.get(key, ()) if t[0] < version}

    def entry_count(self) -> int:
        return sum(len(d) for cells in self.cells.values() for d in cells.values())

    def dump(self, key_fmt=str) -> list[str]:
        """Text lines `collection version iteration sign key state multiplicity`,
        sorted lexicographically."""
        lines = []
        for key, cells in self.cells.items():
            for (version, iteration), diffset in cells.items():
                for value, mult in diffset.items():
                    sign = "+" if mult > 0 else "-"
                    lines.append(
                        f"{self.name} {version} {iteration} {sign} "
                        f"{key_fmt(key)} {fmt_state(value)} {abs(mult)}"
                    )
        return sorted(lines)


# -- merged (1-D) trace ------------------------------------------------


class MergedTrace:
    """Per-key sorted (iteration, state) rows; only positive entries.

    A state change s -> s' at iteration i is stored as the single pair
    (i, s'); the retraction of s is implied.  Lookups take the latest
    stored iteration <= i by binary search, no summation.
    """

    def __init__(self):
        self.rows: dict = {}  # key -> sorted list of (iteration, state)

    def lookup(self, key, iteration: int):
        """State at the largest stored iteration <= `iteration`, or None."""
        lst = self.rows.get(key)
        if not lst:
            return None
        pos = bisect_right(lst, (iteration, float("inf")))
        if pos == 0:
            return None
        return lst[pos - 1][1]

    def latest_iteration_at_or_before(self, key, iteration: int):
        lst = self.rows.get(key)
        if not lst:
            return None
        pos = bisect_right(lst, (iteration, float("inf")))
        if pos == 0:
            return None
        return lst[pos - 1][0]

    def row_state(self, key, iteration: int):
        """State stored exactly at `iteration`, or None."""
        lst = self.rows.get(key)
        if not lst:
            return None
        pos = bisect_right(lst, (iteration, float("inf")))
        if pos and lst[pos - 1][0] == iteration:
            return lst[pos - 1][1]
        return None

    def set_row(self, key, iteration: int, state):
        """Insert/replace the row at `iteration`; state=None removes it."""
        lst = self.rows.setdefault(key, [])
        pos = bisect_right(lst, (iteration, float("inf")))
        if pos and lst[pos - 1][0] == iteration:
            if state is None:
                lst.pop(pos - 1)
                if not lst:
                    del self.rows[key]
            else:
                lst[pos - 1] = (iteration, state)
        elif state is not None:
            insort(lst, (iteration, state))

    def iterations(self, key) -> list[int]:
        return [i for i, _ in self.rows.get(key, ())]

    def keys(self):
        return self.rows.keys()

    def entry_count(self) -> int:
        return sum(len(lst) for lst in self.rows.values())

    def max_iteration(self) -> int:
        return max((lst[-1][0] for lst in self.rows.values() if lst), default=0)


def elide_negatives(diffs) -> list:
    """Collapse (iteration, state, mult) diffs of one key to positive rows.

    Requires the one-unique-state property: after summing multiplicities,
    at most one state per iteration may remain positive.
    """
    net: dict = {}
    for iteration, state, mult in diffs:
        pair = (iteration, state)
        net[pair] = net.get(pair, 0) + mult
    rows: dict = {}
    for (iteration, state), mult in net.items():
        if mult <= 0:
            continue
        if iteration in rows:
            raise InternalConsistencyError(
                f"two positive states at iteration {iteration}: "
                f"{rows[iteration]!r} and {state!r}"
            )
        rows[iteration] = state
    return sorted(rows.items())


# -- frontier ----------------------------------------------------------


class Frontier:
    """Array of per-iteration key sets with duplicate-free scheduling.

    Draining returns the lowest nonempty iteration at or after the last
    drained one; scheduling below that point is an engine bug.
    """

    def __init__(self, max_bound: int = 0):
        self.buckets: dict[int, set] = {}
        self.max_bound = max_bound
        self.cursor = 0

    def schedule(self, key, iteration: int):
        if iteration < self.cursor:
            raise InternalConsistencyError(
                f"schedule at iteration {iteration} below drain cursor {self.cursor}"
            )
        if iteration > self.max_bound + 1:
            raise InternalConsistencyError(
                f"schedule at iteration {iteration} beyond bound {self.max_bound}+1"
            )
        self.max_bound = max(self.max_bound, iteration)
        self.buckets.setdefault(iteration, set()).add(key)

    def grow_bound(self, bound: int):
        self.max_bound = max(self.max_bound, bound)

    def drain_next(self):
        """Return (iteration, keys) for the lowest nonempty bucket, or None."""
        if not self.buckets:
            return None
        iteration = min(self.buckets)
        keys = self.buckets.pop(iteration)
        self.cursor = iteration
        return iteration, keys

    def pop_at(self, iteration: int) -> set:
        """Remove and return the bucket at exactly `iteration` (may be empty)."""
        self.cursor = max(self.cursor, iteration)
        return self.buckets.pop(iteration, set())

    def lowest_pending(self):
        return min(self.buckets) if self.buckets else None

    def __bool__(self):
        return bool(self.buckets)
