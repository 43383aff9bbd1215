"""Pydantic request/response models for the service.

States travel as JSON-safe values: finite numbers stay numbers, an
unreachable/unbounded state is the string "inf", an absent state is null.
"""

from __future__ import annotations

from pydantic import BaseModel, Field

from deltagraph.states import INF


def state_to_wire(state):
    if state is None:
        return None
    if state == INF:
        return "inf"
    return state


class EdgeIn(BaseModel):
    src: int | str
    dst: int | str
    label: int = 0
    weight: int = 1


class CreateSessionRequest(BaseModel):
    edges: list[EdgeIn] | None = None
    dataset_path: str | None = None
    weighted: bool = False
    labeled: bool = False


class SessionInfo(BaseModel):
    session_id: str
    num_vertices: int
    num_edges: int
    version: int
    queries: list[str] = Field(default_factory=list)


class RegisterQueryRequest(BaseModel):
    query: str  # `spsp a b | khop a 5 | rpq a Q1 0 | wcc | pagerank`
    engine: str = "jod"  # scratch | vdc | jod | det-drop | prob-drop
    policy: str | None = None
    seed: int = 0
    bloom_bits_per_entry: int = 10
    bloom_hashes: int = 7
    bloom_expected_entries: int | None = None


class QueryInfo(BaseModel):
    query_id: str
    query: str
    engine: str


class UpdateEntryIn(BaseModel):
    sign: str  # "+" or "-"
    src: int | str
    dst: int | str
    label: int = 0
    weight: int = 1


class ApplyBatchRequest(BaseModel):
    entries: list[UpdateEntryIn]


class OutputDiffOut(BaseModel):
    key: int | str
    state: float | int | str | None
    sign: str


class BatchResult(BaseModel):
    version: int
    diffs: dict[str, list[OutputDiffOut]]  # query id -> net output diffs


class StatesResponse(BaseModel):
    query_id: str
    states: dict[str, float | int | str | None]
    answer: object = None


class QueryMetrics(BaseModel):
    query_id: str
    engine: str
    difference_counts: dict[str, int]
    modeled_bytes: int
    counters: dict[str, int]


class SessionMetrics(BaseModel):
    session_id: str
    version: int
    total_bytes: int
    queries: list[QueryMetrics]


class BenchRunRequest(BaseModel):
    dataset: str | None = None
    edges: list[EdgeIn] | None = None
    weighted: bool = False
    labeled: bool = False
    add_random_weights: bool = False
    queries: list[str] = Field(default_factory=list)
    generate_kind: str | None = None
    generate_count: int = 0
    engine: str = "jod"
    policy: str | None = None
    batch_size: int = 1
    batch_count: int = 100
    deletion_fraction: float = 0.0
    budget_bytes: int | None = None
    seed: int = 0
    initial_fraction: float = 0.9
    landmark_count: int = 10
    khop_k: int = 5


class MetricsRecordOut(BaseModel):
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


class BenchRunResponse(BaseModel):
    engine: str
    records: list[MetricsRecordOut]
    oom: bool


class ReportRequest(BaseModel):
    metrics_paths: list[str]


class ReportResponse(BaseModel):
    table: str
    csv: str
