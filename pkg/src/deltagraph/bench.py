"""End-to-end benchmark harness.

A run loads a dataset, splits it into an initial graph plus an update
stream, registers one engine per query, replays the batches, and appends
one metrics record per batch to a self-describing text file.  Memory
budgets are enforced against the modeled byte count (stored differences
times (d+s), plus dropped-VT store footprints), never against process
RSS, so out-of-memory decisions reproduce across machines.  A budget hit
flags the record and halts the run; it is a result, not an error.
"""

from __future__ import annotations

import json
import random
import time
from dataclasses import dataclass, field, asdict

from deltagraph.baselines import (
    LandmarkSet,
    ScratchEngine,
    ScratchLandmarkEngine,
)
from deltagraph.dropping import DropPolicy, DroppedVtBloom, DroppedVtDet, parse_policy
from deltagraph.engine import JodEngine, VdcEngine
from deltagraph.errors import ValidationError
from deltagraph.graph import (
    Graph,
    attach_random_weights,
    batches_from_stream,
    load_edge_list,
    make_deletion_workload,
    split_for_dynamism,
)
from deltagraph.queries import QuerySpec, build_operator, load_query_file, parse_query_line

ENGINES = ("scratch", "scratch-landmark", "vdc", "jod", "det-drop", "prob-drop")


@dataclass
class RunConfig:
    dataset: str | None = None
    edges: list | None = None  # inline alternative to a dataset file
    weighted: bool = False
    labeled: bool = False
    add_random_weights: bool = False
    queries: list[str] = field(default_factory=list)
    query_file: str | None = None
    generate_kind: str | None = None  # spsp | khop | rpq | wcc | pagerank
    generate_count: int = 0
    engine: str = "jod"
    policy: str | None = None
    batch_size: int = 1
    batch_count: int = 100
    deletion_fraction: float = 0.0
    budget_bytes: int | None = None
    seed: int = 0
    out: str | None = None
    initial_fraction: float = 0.9
    landmark_count: int = 10
    khop_k: int = 5
    rpq_template: str = "Q1"
    rpq_labels: list[int] = field(default_factory=lambda: [0])
    bloom_bits_per_entry: int = 10
    bloom_hashes: int = 7
    bloom_expected_entries: int | None = None
    d_bytes: int = 8
    s_bytes: int = 8

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise ValidationError(f"unknown engine {self.engine!r}; pick from {ENGINES}")
        if self.engine in ("det-drop", "prob-drop") and self.budget_bytes is not None:
            if self.budget_bytes <= 0:
                raise ValidationError("memory budget must be positive")


@dataclass
class MetricsRecord:
    batch: int
    wall_ms: float
    cum_ms: float
    d_count: int
    j_count: int
    bytes: int
    recomputations: int
    aggregate_reruns: int
    join_reconstructions: int
    drops: int
    oom: int

    FIELDS = (
        "batch wall_ms cum_ms d_count j_count bytes "
        "recomputations aggregate_reruns join_reconstructions drops oom"
    )
    WALL_FIELDS = ("wall_ms", "cum_ms")

    def line(self) -> str:
        return (
            f"{self.batch} {self.wall_ms:.3f} {self.cum_ms:.3f} {self.d_count} "
            f"{self.j_count} {self.bytes} {self.recomputations} "
            f"{self.aggregate_reruns} {self.join_reconstructions} {self.drops} {self.oom}"
        )


def write_metrics(path, engine_name: str, records: list[MetricsRecord], config_note: str = ""):
    with open(path, "w") as fh:
        fh.write("# deltagraph-metrics v1\n")
        fh.write(f"# engine {engine_name}\n")
        if config_note:
            fh.write(f"# config {config_note}\n")
        fh.write(f"# fields {MetricsRecord.FIELDS}\n")
        for rec in records:
            fh.write(rec.line() + "\n")


def read_metrics(path):
    engine_name = "?"
    records = []
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if parts and parts[0] == "engine":
                    engine_name = parts[1]
                continue
            vals = line.split()
            records.append(
                MetricsRecord(
                    batch=int(vals[0]),
                    wall_ms=float(vals[1]),
                    cum_ms=float(vals[2]),
                    d_count=int(vals[3]),
                    j_count=int(vals[4]),
                    bytes=int(vals[5]),
                    recomputations=int(vals[6]),
                    aggregate_reruns=int(vals[7]),
                    join_reconstructions=int(vals[8]),
                    drops=int(vals[9]),
                    oom=int(vals[10]),
                )
            )
    return engine_name, records


def generate_queries(kind: str, count: int, graph: Graph, seed: int, config: RunConfig):
    """Seeded query generation: random (s,d) pairs for spsp, random sources
    for khop/rpq; wcc and pagerank are single batch computations."""
    rng = random.Random(seed)
    names = graph.names
    specs = []
    for _ in range(count):
        if kind == "spsp":
            s, d = rng.randrange(len(names)), rng.randrange(len(names))
            specs.append(QuerySpec("spsp", source=s, target=d))
        elif kind == "khop":
            specs.append(QuerySpec("khop", source=rng.randrange(len(names)), k_max=config.khop_k))
        elif kind == "rpq":
            from deltagraph.queries import automaton_from_template

            auto = automaton_from_template(config.rpq_template, config.rpq_labels)
            specs.append(QuerySpec("rpq", source=rng.randrange(len(names)), automaton=auto))
        elif kind in ("wcc", "pagerank"):
            specs.append(QuerySpec(kind))
        else:
            raise ValidationError(f"cannot generate {kind!r} queries")
    return specs


class BenchRun:
    """One configured run: graph, workload, engines, and metric collection."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.records: list[MetricsRecord] = []
        self.oom = False
        self._load()
        self._build_workload()
        self._build_queries()
        self._build_engines()

    # -- setup ----------------------------------------------------------

    def _load(self):
        cfg = self.config
        if cfg.dataset is not None:
            full, edges = load_edge_list(cfg.dataset, cfg.weighted, cfg.labeled)
            self._names = full.names
        elif cfg.edges is not None:
            full = Graph.from_edges(cfg.edges)
            edges = list(full.edges())
            self._names = full.names
        else:
            raise ValidationError("config needs a dataset path or inline edges")
        if cfg.add_random_weights:
            edges = attach_random_weights(edges, cfg.seed)
        self._all_edges = edges

    def _build_workload(self):
        cfg = self.config
        initial, stream = split_for_dynamism(self._all_edges, cfg.seed, cfg.initial_fraction)
        self.graph = Graph()
        for name in self._names:
            self.graph.intern(name)
        for e in initial:
            self.graph.add_edge(e.src, e.dst, e.label, e.weight)
        batches = batches_from_stream(stream, cfg.batch_size)
        batches = batches[: cfg.batch_count]
        if cfg.deletion_fraction > 0:
            batches = make_deletion_workload(
                [tuple(e) for e in initial], batches, cfg.deletion_fraction, cfg.seed + 1
            )
        self.batches = batches

    def _build_queries(self):
        cfg = self.config
        specs = [parse_query_line(q) for q in cfg.queries]
        if cfg.query_file:
            specs.extend(load_query_file(cfg.query_file))
        if cfg.generate_kind:
            specs.extend(
                generate_queries(cfg.generate_kind, cfg.generate_count, self.graph, cfg.seed, cfg)
            )
        if not specs:
            raise ValidationError("no queries configured")
        self.specs = specs

    def _estimate_expected_drops(self, op, p: float) -> int:
        # Warm-up sizing rule: expected drops = p * (differences an undropped
        # engine stores on the initial graph).
        warm = JodEngine(self.graph, op).initial_run()
        return max(64, int(p * warm.difference_counts()["D"]))

    def _build_engines(self):
        cfg = self.config
        self.landmarks = None
        if cfg.engine == "scratch-landmark":
            count = min(cfg.landmark_count, self.graph.num_vertices)
            self.landmarks = LandmarkSet(self.graph, count)
        self.engines = []
        for idx, spec in enumerate(self.specs):
            op = build_operator(spec, self.graph)
            if cfg.engine == "scratch":
                eng = ScratchEngine(self.graph, op)
            elif cfg.engine == "scratch-landmark":
                if spec.kind == "spsp":
                    target = (
                        spec.target
                        if isinstance(spec.target, int)
                        else self.graph.resolve_vertex(spec.target)
                    )
                    eng = ScratchLandmarkEngine(self.graph, op, self.landmarks, target)
                else:
                    eng = ScratchEngine(self.graph, op)
            elif cfg.engine == "vdc":
                eng = VdcEngine(self.graph, op)
            elif cfg.engine == "jod":
                eng = JodEngine(self.graph, op)
            else:
                policy = (
                    parse_policy(cfg.policy, seed=cfg.seed + 10 + idx)
                    if cfg.policy
                    else DropPolicy(mode="random", p=0.5, seed=cfg.seed + 10 + idx)
                )
                if cfg.engine == "det-drop":
                    store = DroppedVtDet()
                else:
                    expected = cfg.bloom_expected_entries or self._estimate_expected_drops(
                        op, policy.p
                    )
                    store = DroppedVtBloom.sized_for(
                        expected, cfg.bloom_bits_per_entry, cfg.bloom_hashes
                    )
                eng = JodEngine(self.graph, op, policy=policy, store=store)
            self.engines.append(eng)

    # -- measuring --------------------------------------------------------

    def total_bytes(self) -> int:
        cfg = self.config
        total = sum(e.modeled_bytes(cfg.d_bytes, cfg.s_bytes) for e in self.engines)
        if self.landmarks is not None:
            total += self.landmarks.modeled_bytes(cfg.d_bytes, cfg.s_bytes)
        return total

    def _counter_totals(self) -> dict:
        totals = {"recomputations": 0, "aggregate_reruns": 0, "join_reconstructions": 0, "drops": 0}
        for eng in self.engines:
            snap = eng.counters.snapshot()
            for k in totals:
                totals[k] += snap.get(k, 0)
        return totals

    def _difference_totals(self) -> tuple[int, int]:
        d = j = 0
        for eng in self.engines:
            counts = eng.difference_counts()
            d += counts["D"]
            j += counts["J"]
        if self.landmarks is not None:
            d += self.landmarks.difference_count()
        return d, j

    def _record(self, batch_idx: int, wall_ms: float, prev_counters: dict) -> MetricsRecord:
        now = self._counter_totals()
        d_count, j_count = self._difference_totals()
        total_bytes = self.total_bytes()
        oom = 0
        if self.config.budget_bytes is not None and total_bytes > self.config.budget_bytes:
            oom = 1
            self.oom = True
        cum = (self.records[-1].cum_ms if self.records else 0.0) + wall_ms
        rec = MetricsRecord(
            batch=batch_idx,
            wall_ms=wall_ms,
            cum_ms=cum,
            d_count=d_count,
            j_count=j_count,
            bytes=total_bytes,
            recomputations=now["recomputations"] - prev_counters["recomputations"],
            aggregate_reruns=now["aggregate_reruns"] - prev_counters["aggregate_reruns"],
            join_reconstructions=now["join_reconstructions"]
            - prev_counters["join_reconstructions"],
            drops=now["drops"] - prev_counters["drops"],
            oom=oom,
        )
        self.records.append(rec)
        return rec

    # -- execution ----------------------------------------------------------

    def execute(self) -> list[MetricsRecord]:
        prev = self._counter_totals()
        start = time.perf_counter()
        for eng in self.engines:
            eng.initial_run()
        self._record(0, (time.perf_counter() - start) * 1000.0, prev)
        if self.oom:
            return self.records
        for batch in self.batches:
            prev = self._counter_totals()
            start = time.perf_counter()
            self.graph.apply_batch(batch)
            if self.landmarks is not None:
                self.landmarks.maintain(batch)
            for eng in self.engines:
                eng.maintain(batch)
            self._record(batch.version, (time.perf_counter() - start) * 1000.0, prev)
            if self.oom:
                break
        return self.records


def run_experiment(config: RunConfig) -> list[MetricsRecord]:
    run = BenchRun(config)
    records = run.execute()
    if config.out:
        note = json.dumps(
            {k: v for k, v in asdict(config).items() if k not in ("edges",) and v not in (None, [])},
            sort_keys=True,
        )
        write_metrics(config.out, config.engine, records, note)
    return records


# -- capacity sweep ------------------------------------------------------


@dataclass
class SweepRow:
    engine: str
    query_count: int
    p: float | None  # None: no feasible p in the grid
    cum_ms: float | None
    bytes: int | None

    def line(self) -> str:
        p = "-" if self.p is None else f"{self.p:g}"
        cum = "-" if self.cum_ms is None else f"{self.cum_ms:.3f}"
        b = "-" if self.bytes is None else str(self.bytes)
        return f"{self.engine} {self.query_count} {p} {cum} {b}"


def capacity_sweep(template: RunConfig, query_counts, p_grid) -> list[SweepRow]:
    """For each query count, the smallest grid p that fits the budget.

    Engines without a drop knob (vdc, jod) run once at p=0 and simply pass
    or fail the budget.
    """
    from dataclasses import replace

    rows = []
    grid = [0.0] if template.engine in ("vdc", "jod", "scratch", "scratch-landmark") else list(p_grid)
    for q in query_counts:
        found = None
        for p in grid:
            cfg = replace(
                template,
                generate_count=q,
                policy=_policy_at(template.policy, p),
                out=None,
            )
            records = run_experiment(cfg)
            if not records[-1].oom:
                found = SweepRow(template.engine, q, p, records[-1].cum_ms, records[-1].bytes)
                break
        if found is None:
            found = SweepRow(template.engine, q, None, None, None)
        rows.append(found)
    return rows


def _policy_at(policy_text: str | None, p: float) -> str:
    if not policy_text:
        return f"random:p={p}"
    mode, _, rest = policy_text.partition(":")
    fields = [f for f in rest.split(",") if f and not f.startswith("p=")]
    fields.insert(0, f"p={p}")
    return mode + ":" + ",".join(fields)


def write_sweep(path, rows: list[SweepRow]):
    with open(path, "w") as fh:
        fh.write("# deltagraph-sweep v1\n")
        fh.write("# fields engine query_count p cum_ms bytes\n")
        for row in rows:
            fh.write(row.line() + "\n")


# -- reporting -------------------------------------------------------------


def emit_report(metrics_paths) -> tuple[str, str]:
    """Aggregate runs into a text table and a CSV string.

    Columns: run name, total batch time, peak bytes, total recomputations,
    total aggregate reruns, OOM flag, plus time and byte ratios against the
    first run.
    """
    if not metrics_paths:
        raise ValidationError("emit_report needs at least one metrics file")
    rows = []
    for path in metrics_paths:
        engine_name, records = read_metrics(path)
        if not records:
            raise ValidationError(f"no records in {path}")
        rows.append(
            {
                "run": str(path),
                "engine": engine_name,
                "total_ms": records[-1].cum_ms,
                "peak_bytes": max(r.bytes for r in records),
                "recomputations": sum(r.recomputations for r in records),
                "aggregate_reruns": sum(r.aggregate_reruns for r in records),
                "oom": int(any(r.oom for r in records)),
            }
        )
    base = rows[0]
    for row in rows:
        row["time_ratio"] = row["total_ms"] / base["total_ms"] if base["total_ms"] else 1.0
        row["bytes_ratio"] = (
            row["peak_bytes"] / base["peak_bytes"] if base["peak_bytes"] else 1.0
        )
    columns = [
        "run",
        "engine",
        "total_ms",
        "peak_bytes",
        "recomputations",
        "aggregate_reruns",
        "oom",
        "time_ratio",
        "bytes_ratio",
    ]

    def fmt(value):
        if isinstance(value, float):
            return f"{value:.3f}"
        return str(value)

    widths = {
        c: max(len(c), max(len(fmt(r[c])) for r in rows)) for c in columns
    }
    lines = ["  ".join(c.ljust(widths[c]) for c in columns)]
    for row in rows:
        lines.append("  ".join(fmt(row[c]).ljust(widths[c]) for c in columns))
    text = "\n".join(lines)
    csv_lines = [",".join(columns)]
    for row in rows:
        csv_lines.append(",".join(fmt(row[c]) for c in columns))
    return text, "\n".join(csv_lines) + "\n"
