"""Partial difference dropping: drop policies and dropped-VT bookkeeping.

A dropped difference is identified by its (vertex key, iteration) pair.
The deterministic store keeps exact per-key sorted iteration lists; the
probabilistic store is a single global Bloom filter over packed 64-bit
(key, iteration) objects, which never returns false negatives.  Iteration-0
differences are never dropped: recomputing a dropped value at iteration d
rebuilds the contribution multiset from states at d-1, so iteration 0
anchors the recursion.
"""

from __future__ import annotations

import random
from bisect import bisect_right, insort
from dataclasses import dataclass, field
from hashlib import blake2b

from deltagraph.errors import ValidationError

ITERATION_BITS = 24  # packed keys reserve the low 24 bits for the iteration


def degree_percentile(degrees, pct: float) -> int:
    """Nearest-rank percentile of a degree multiset."""
    ordered = sorted(degrees)
    if not ordered:
        return 0
    rank = max(1, -(-len(ordered) * pct // 100))  # ceil without floats
    return ordered[int(rank) - 1]


@dataclass
class DropPolicy:
    """Selects which freshly produced differences to drop.

    RANDOM drops each with probability p.  DEGREE always drops below
    tau_min, never above tau_max, and with probability p in between;
    tau_max resolves from a degree percentile of the graph at registration.
    """

    mode: str = "random"  # random | degree
    p: float = 0.0
    tau_min: int = 2
    tau_max: int | None = None
    tau_max_pct: float = 80.0
    seed: int = 0
    degree_mode: str = "out"  # out | in | total
    rng: random.Random = field(init=False, repr=False)

    def __post_init__(self):
        if self.mode not in ("random", "degree"):
            raise ValidationError(f"unknown drop mode {self.mode!r}")
        if not 0.0 <= self.p <= 1.0:
            raise ValidationError(f"drop probability must be in [0, 1], got {self.p}")
        if self.degree_mode not in ("out", "in", "total"):
            raise ValidationError(f"unknown degree mode {self.degree_mode!r}")
        self.rng = random.Random(self.seed)

    def resolve(self, graph):
        """Pin tau_max against the current degree distribution, once."""
        if self.mode == "degree" and self.tau_max is None:
            degrees = [self.degree_of(graph, v) for v in graph.vertices()]
            self.tau_max = degree_percentile(degrees, self.tau_max_pct)
        if self.tau_max is not None and self.tau_min > self.tau_max:
            raise ValidationError(
                f"tau_min {self.tau_min} exceeds tau_max {self.tau_max}"
            )

    def degree_of(self, graph, vertex: int) -> int:
        if self.degree_mode == "out":
            return graph.out_degree[vertex]
        if self.degree_mode == "in":
            return graph.in_degree[vertex]
        return graph.out_degree[vertex] + graph.in_degree[vertex]

    def should_drop(self, vertex: int, degree: int) -> bool:
        if self.mode == "degree":
            if degree < self.tau_min:
                return True
            if self.tau_max is not None and degree > self.tau_max:
                return False
        return self.rng.random() < self.p


def should_drop(policy: DropPolicy, vertex: int, degree: int) -> bool:
    return policy.should_drop(vertex, degree)


def parse_policy(text: str, seed: int = 0) -> DropPolicy:
    """Parse `random:p=0.5` or `degree:p=0.5,tau_min=2,tau_max_pct=80`."""
    mode, _, rest = text.partition(":")
    kwargs = {"mode": mode.strip().lower(), "seed": seed}
    if rest:
        for item in rest.split(","):
            k, _, v = item.partition("=")
            k = k.strip()
            if k == "p":
                kwargs["p"] = float(v)
            elif k == "tau_min":
                kwargs["tau_min"] = int(v)
            elif k == "tau_max":
                kwargs["tau_max"] = int(v)
            elif k == "tau_max_pct":
                kwargs["tau_max_pct"] = float(v)
            elif k == "degree_mode":
                kwargs["degree_mode"] = v.strip()
            else:
                raise ValidationError(f"unknown policy field {k!r}")
    return DropPolicy(**kwargs)


# -- dropped-VT stores --------------------------------------------------


class DroppedVtDet:
    """Exact dropped-VT store: per-key sorted lists of dropped iterations."""

    exact = True

    def __init__(self):
        self.by_key: dict = {}
        self.pair_count = 0

    def record(self, key, iteration: int):
        if iteration < 1:
            raise ValidationError("iteration-0 differences are never dropped")
        lst = self.by_key.setdefault(key, [])
        pos = bisect_right(lst, iteration)
        if pos and lst[pos - 1] == iteration:
            return
        insort(lst, iteration)
        self.pair_count += 1

    def contains(self, key, iteration: int) -> bool:
        lst = self.by_key.get(key)
        if not lst:
            return False
        pos = bisect_right(lst, iteration)
        return bool(pos) and lst[pos - 1] == iteration

    def latest_dropped_at_or_before(self, key, iteration: int, floor: int = 0):
        lst = self.by_key.get(key)
        if not lst:
            return None
        pos = bisect_right(lst, iteration)
        if pos == 0:
            return None
        found = lst[pos - 1]
        return found if found > floor else None

    def candidate_iterations(self, key, lo: int, hi: int) -> list[int]:
        """Dropped iterations in (lo, hi], ascending."""
        lst = self.by_key.get(key, [])
        return [j for j in lst[bisect_right(lst, lo) : bisect_right(lst, hi)]]

    def memory_footprint(self, pair_bytes: int = 8) -> int:
        return self.pair_count * pair_bytes


class DroppedVtBloom:
    """Bloom filter over packed (key, iteration) pairs; no false negatives.

    Probe positions come from double hashing two independent 64-bit halves
    of a blake2b digest of the 8-byte packed object.
    """

    exact = False

    def __init__(self, bits: int, hashes: int = 7):
        if bits < 8:
            bits = 8
        self.m = bits
        self.hashes = hashes
        self.bits = bytearray((bits + 7) // 8)
        self.inserted = 0

    @classmethod
    def sized_for(cls, expected_entries: int, bits_per_entry: int = 10, hashes: int = 7):
        return cls(max(1, expected_entries) * bits_per_entry, hashes)

    @staticmethod
    def pack(key: int, iteration: int) -> int:
        if iteration >= 1 << ITERATION_BITS:
            raise ValidationError(f"iteration {iteration} exceeds 2^{ITERATION_BITS}")
        if key >= 1 << (64 - ITERATION_BITS):
            raise ValidationError(f"key {key} too large for an 8-byte packed object")
        return (key << ITERATION_BITS) | iteration

    def _positions(self, packed: int):
        digest = blake2b(packed.to_bytes(8, "little"), digest_size=16).digest()
        h1 = int.from_bytes(digest[:8], "little")
        h2 = int.from_bytes(digest[8:], "little") | 1
        m = self.m
        return [(h1 + i * h2) % m for i in range(self.hashes)]

    def record(self, key, iteration: int):
        if iteration < 1:
            raise ValidationError("iteration-0 differences are never dropped")
        for pos in self._positions(self.pack(key, iteration)):
            self.bits[pos >> 3] |= 1 << (pos & 7)
        self.inserted += 1

    def contains(self, key, iteration: int) -> bool:
        for pos in self._positions(self.pack(key, iteration)):
            if not self.bits[pos >> 3] & (1 << (pos & 7)):
                return False
        return True

    def latest_dropped_at_or_before(self, key, iteration: int, floor: int = 0):
        for d in range(iteration, max(floor, 0), -1):
            if self.contains(key, d):
                return d
        return None

    def candidate_iterations(self, key, lo: int, hi: int) -> list[int]:
        return [j for j in range(max(lo, 0) + 1, hi + 1) if self.contains(key, j)]

    def memory_footprint(self, pair_bytes: int = 8) -> int:
        return len(self.bits)


def record_drop(store, key, iteration: int):
    store.record(key, iteration)


def latest_dropped_at_or_before(store, key, iteration: int):
    return store.latest_dropped_at_or_before(key, iteration)


def memory_footprint(store, pair_bytes: int = 8) -> int:
    return store.memory_footprint(pair_bytes)
