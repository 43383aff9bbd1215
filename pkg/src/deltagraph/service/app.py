"""FastAPI app wrapping the engine as a continuous-query service.

A session owns one dynamic graph and any number of registered queries,
each maintained by its own engine instance.  Batches apply to the session
graph once and every engine maintains against it, mirroring the harness
flow.  Sessions are in-memory and single-writer: mutating endpoints take
the session lock.
"""

from __future__ import annotations

import itertools
import threading
from dataclasses import asdict

from fastapi import FastAPI, HTTPException

from deltagraph.bench import RunConfig, run_experiment, emit_report
from deltagraph.dropping import DropPolicy, DroppedVtBloom, DroppedVtDet, parse_policy
from deltagraph.engine import JodEngine, VdcEngine
from deltagraph.errors import DeltagraphError
from deltagraph.baselines import ScratchEngine
from deltagraph.graph import DELETE, INSERT, Graph, UpdateBatch, UpdateEntry, load_edge_list
from deltagraph.queries import build_operator, parse_query_line
from deltagraph.service import models as m
from deltagraph.states import INF


class _Query:
    def __init__(self, query_id: str, text: str, engine_name: str, engine, operator, spec):
        self.query_id = query_id
        self.text = text
        self.engine_name = engine_name
        self.engine = engine
        self.operator = operator
        self.spec = spec


class _Session:
    def __init__(self, session_id: str, graph: Graph):
        self.session_id = session_id
        self.graph = graph
        self.queries: dict[str, _Query] = {}
        self.lock = threading.Lock()
        self._query_counter = itertools.count(1)

    def next_query_id(self) -> str:
        return f"q{next(self._query_counter)}"


def _key_label(query: _Query, graph: Graph, key: int) -> str:
    op = query.operator
    if hasattr(op, "ns"):
        v, q = divmod(key, op.ns)
        return f"{graph.names[v]}@q{q}"
    return str(graph.names[key])


def _answer_of(query: _Query, graph: Graph):
    states = query.engine.current_states()
    spec = query.spec
    if spec.kind == "spsp":
        target = spec.target if isinstance(spec.target, int) else graph.resolve_vertex(spec.target)
        return m.state_to_wire(states.get(target, INF))
    if spec.kind == "khop":
        return sorted(str(graph.names[k]) for k in states)
    if spec.kind == "rpq":
        return sorted(str(graph.names[v]) for v in query.operator.answer_vertices(states))
    return None  # wcc / pagerank: the full state map is the answer


def create_app() -> FastAPI:
    app = FastAPI(title="deltagraph", version="0.1.0")
    sessions: dict[str, _Session] = {}
    session_counter = itertools.count(1)

    def get_session(session_id: str) -> _Session:
        try:
            return sessions[session_id]
        except KeyError:
            raise HTTPException(status_code=404, detail=f"no session {session_id}") from None

    @app.exception_handler(DeltagraphError)
    async def _domain_error(_request, exc: DeltagraphError):
        from fastapi.responses import JSONResponse

        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/sessions", response_model=m.SessionInfo)
    def create_session(req: m.CreateSessionRequest):
        if req.dataset_path:
            graph, _edges = load_edge_list(req.dataset_path, req.weighted, req.labeled)
        elif req.edges is not None:
            graph = Graph.from_edges([(e.src, e.dst, e.label, e.weight) for e in req.edges])
        else:
            raise HTTPException(status_code=422, detail="edges or dataset_path required")
        session = _Session(f"s{next(session_counter)}", graph)
        sessions[session.session_id] = session
        return _session_info(session)

    def _session_info(session: _Session) -> m.SessionInfo:
        return m.SessionInfo(
            session_id=session.session_id,
            num_vertices=session.graph.num_vertices,
            num_edges=session.graph.num_edges,
            version=session.graph.version,
            queries=sorted(session.queries),
        )

    @app.get("/sessions", response_model=list[m.SessionInfo])
    def list_sessions():
        return [_session_info(s) for s in sessions.values()]

    @app.get("/sessions/{session_id}", response_model=m.SessionInfo)
    def get_session_info(session_id: str):
        return _session_info(get_session(session_id))

    @app.delete("/sessions/{session_id}")
    def delete_session(session_id: str):
        get_session(session_id)
        del sessions[session_id]
        return {"deleted": session_id}

    @app.post("/sessions/{session_id}/queries", response_model=m.QueryInfo)
    def register_query(session_id: str, req: m.RegisterQueryRequest):
        session = get_session(session_id)
        with session.lock:
            spec = parse_query_line(req.query)
            operator = build_operator(spec, session.graph)
            if req.engine == "scratch":
                engine = ScratchEngine(session.graph, operator)
            elif req.engine == "vdc":
                engine = VdcEngine(session.graph, operator)
            elif req.engine == "jod":
                engine = JodEngine(session.graph, operator)
            elif req.engine in ("det-drop", "prob-drop"):
                policy = (
                    parse_policy(req.policy, seed=req.seed)
                    if req.policy
                    else DropPolicy(mode="random", p=0.5, seed=req.seed)
                )
                if req.engine == "det-drop":
                    store = DroppedVtDet()
                else:
                    expected = req.bloom_expected_entries or max(
                        64, session.graph.num_vertices
                    )
                    store = DroppedVtBloom.sized_for(
                        expected, req.bloom_bits_per_entry, req.bloom_hashes
                    )
                engine = JodEngine(session.graph, operator, policy=policy, store=store)
            else:
                raise HTTPException(
                    status_code=422,
                    detail=f"unknown engine {req.engine!r} (scratch-landmark is bench-only)",
                )
            engine.initial_run()
            query = _Query(session.next_query_id(), req.query, req.engine, engine, operator, spec)
            session.queries[query.query_id] = query
        return m.QueryInfo(query_id=query.query_id, query=query.text, engine=query.engine_name)

    @app.get("/sessions/{session_id}/queries", response_model=list[m.QueryInfo])
    def list_queries(session_id: str):
        session = get_session(session_id)
        return [
            m.QueryInfo(query_id=q.query_id, query=q.text, engine=q.engine_name)
            for q in session.queries.values()
        ]

    @app.post("/sessions/{session_id}/batches", response_model=m.BatchResult)
    def apply_batch(session_id: str, req: m.ApplyBatchRequest):
        session = get_session(session_id)
        with session.lock:
            graph = session.graph
            entries = []
            for e in req.entries:
                sign = INSERT if e.sign == "+" else DELETE
                src = graph.intern(e.src) if sign == INSERT else graph.resolve_vertex(e.src)
                dst = graph.intern(e.dst) if sign == INSERT else graph.resolve_vertex(e.dst)
                entries.append(UpdateEntry(sign, src, dst, e.label, e.weight))
            batch = UpdateBatch(graph.version + 1, entries)
            graph.apply_batch(batch)
            diffs = {}
            for query in session.queries.values():
                out = query.engine.maintain(batch)
                diffs[query.query_id] = [
                    m.OutputDiffOut(
                        key=str(graph.names[query.operator.key_vertex(o.key)]),
                        state=m.state_to_wire(o.state),
                        sign="+" if o.sign > 0 else "-",
                    )
                    for o in out
                ]
        return m.BatchResult(version=graph.version, diffs=diffs)

    @app.get("/sessions/{session_id}/queries/{query_id}/states", response_model=m.StatesResponse)
    def query_states(session_id: str, query_id: str):
        session = get_session(session_id)
        query = session.queries.get(query_id)
        if query is None:
            raise HTTPException(status_code=404, detail=f"no query {query_id}")
        states = query.engine.current_states()
        return m.StatesResponse(
            query_id=query_id,
            states={
                _key_label(query, session.graph, k): m.state_to_wire(s)
                for k, s in states.items()
            },
            answer=_answer_of(query, session.graph),
        )

    @app.get("/sessions/{session_id}/metrics", response_model=m.SessionMetrics)
    def session_metrics(session_id: str):
        session = get_session(session_id)
        per_query = []
        total = 0
        for query in session.queries.values():
            bytes_ = query.engine.modeled_bytes()
            total += bytes_
            per_query.append(
                m.QueryMetrics(
                    query_id=query.query_id,
                    engine=query.engine_name,
                    difference_counts=query.engine.difference_counts(),
                    modeled_bytes=bytes_,
                    counters=query.engine.counters.snapshot(),
                )
            )
        return m.SessionMetrics(
            session_id=session_id,
            version=session.graph.version,
            total_bytes=total,
            queries=per_query,
        )

    @app.post("/bench/run", response_model=m.BenchRunResponse)
    def bench_run(req: m.BenchRunRequest):
        kwargs = req.model_dump()
        edges = kwargs.pop("edges")
        if edges is not None:
            kwargs["edges"] = [(e["src"], e["dst"], e["label"], e["weight"]) for e in edges]
        config = RunConfig(**kwargs)
        records = run_experiment(config)
        return m.BenchRunResponse(
            engine=req.engine,
            records=[m.MetricsRecordOut(**asdict(r)) for r in records],
            oom=any(r.oom for r in records),
        )

    @app.post("/bench/report", response_model=m.ReportResponse)
    def bench_report(req: m.ReportRequest):
        table, csv = emit_report(req.metrics_paths)
        return m.ReportResponse(table=table, csv=csv)

    return app


app = create_app()
