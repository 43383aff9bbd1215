from __future__ import annotations

import pytest
from fastapi.testclient import TestClient

from deltagraph.service.app import create_app

from test_graph import RUNNING_EXAMPLE


@pytest.fixture()
def client():
    with TestClient(create_app()) as c:
        yield c


def make_session(client):
    resp = client.post(
        "/sessions",
        json={"edges": [{"src": s, "dst": d, "label": l, "weight": w}
                        for s, d, l, w in RUNNING_EXAMPLE]},
    )
    assert resp.status_code == 200, resp.text
    return resp.json()["session_id"]


def test_health(client):
    assert client.get("/healthz").json() == {"status": "ok"}


def test_session_lifecycle(client):
    sid = make_session(client)
    info = client.get(f"/sessions/{sid}").json()
    assert info["num_vertices"] == 5 and info["num_edges"] == 7
    assert client.get("/sessions").json()[0]["session_id"] == sid
    assert client.delete(f"/sessions/{sid}").json() == {"deleted": sid}
    assert client.get(f"/sessions/{sid}").status_code == 404


def test_register_and_read_spsp(client):
    sid = make_session(client)
    resp = client.post(
        f"/sessions/{sid}/queries", json={"query": "spsp a d", "engine": "jod"}
    )
    assert resp.status_code == 200, resp.text
    qid = resp.json()["query_id"]
    states = client.get(f"/sessions/{sid}/queries/{qid}/states").json()
    assert states["answer"] == 20
    assert states["states"]["b"] == 30
    assert states["states"]["c"] == 40


def test_batch_maintenance_running_example(client):
    sid = make_session(client)
    qid = client.post(
        f"/sessions/{sid}/queries", json={"query": "spsp a d", "engine": "vdc"}
    ).json()["query_id"]
    # First scripted update: a->d from 20 to 100.
    resp = client.post(
        f"/sessions/{sid}/batches",
        json={"entries": [
            {"sign": "-", "src": "a", "dst": "d", "weight": 20},
            {"sign": "+", "src": "a", "dst": "d", "weight": 100},
        ]},
    )
    assert resp.status_code == 200, resp.text
    body = resp.json()
    assert body["version"] == 1
    diffs = {(d["key"], d["state"], d["sign"]) for d in body["diffs"][qid]}
    assert diffs == {("d", 20, "-"), ("d", 50, "+")}
    answer = client.get(f"/sessions/{sid}/queries/{qid}/states").json()["answer"]
    assert answer == 50


def test_unreachable_state_serialises_as_inf(client):
    sid = make_session(client)
    qid = client.post(
        f"/sessions/{sid}/queries", json={"query": "spsp e a", "engine": "jod"}
    ).json()["query_id"]
    states = client.get(f"/sessions/{sid}/queries/{qid}/states").json()
    assert states["answer"] == "inf"


def test_multiple_engines_one_session(client):
    sid = make_session(client)
    qids = {}
    for engine in ("scratch", "vdc", "jod", "det-drop", "prob-drop"):
        resp = client.post(
            f"/sessions/{sid}/queries",
            json={"query": "spsp a c", "engine": engine, "policy": "random:p=0.5"},
        )
        assert resp.status_code == 200, resp.text
        qids[engine] = resp.json()["query_id"]
    client.post(
        f"/sessions/{sid}/batches",
        json={"entries": [
            {"sign": "-", "src": "b", "dst": "c", "weight": 10},
            {"sign": "+", "src": "b", "dst": "c", "weight": 100},
        ]},
    )
    answers = {
        engine: client.get(f"/sessions/{sid}/queries/{qid}/states").json()["answer"]
        for engine, qid in qids.items()
    }
    assert set(answers.values()) == {40}  # a->d->c after the update


def test_rpq_khop_wcc_pagerank_register(client):
    sid = make_session(client)
    for query in ("khop a 2", "rpq a Q1 0", "wcc", "pagerank"):
        resp = client.post(f"/sessions/{sid}/queries", json={"query": query})
        assert resp.status_code == 200, (query, resp.text)
    khop = client.post(f"/sessions/{sid}/queries", json={"query": "khop a 1"}).json()
    states = client.get(f"/sessions/{sid}/queries/{khop['query_id']}/states").json()
    assert states["answer"] == ["a", "b", "d", "e"]


def test_metrics_endpoint(client):
    sid = make_session(client)
    client.post(f"/sessions/{sid}/queries", json={"query": "spsp a d", "engine": "vdc"})
    client.post(f"/sessions/{sid}/queries", json={"query": "spsp a d", "engine": "jod"})
    metrics = client.get(f"/sessions/{sid}/metrics").json()
    assert metrics["total_bytes"] > 0
    by_engine = {q["engine"]: q for q in metrics["queries"]}
    assert by_engine["jod"]["difference_counts"]["J"] == 0
    assert by_engine["vdc"]["difference_counts"]["J"] > 0


def test_bad_inputs_are_422(client):
    sid = make_session(client)
    resp = client.post(f"/sessions/{sid}/queries", json={"query": "spsp a"})
    assert resp.status_code == 422
    resp = client.post(f"/sessions/{sid}/queries", json={"query": "spsp a d", "engine": "bogus"})
    assert resp.status_code == 422
    resp = client.post(
        f"/sessions/{sid}/batches",
        json={"entries": [{"sign": "-", "src": "a", "dst": "zz", "weight": 1}]},
    )
    assert resp.status_code == 422


def test_bench_run_endpoint(client):
    resp = client.post(
        "/bench/run",
        json={
            "edges": [{"src": s, "dst": d, "label": l, "weight": w}
                      for s, d, l, w in RUNNING_EXAMPLE],
            "queries": ["spsp a e"],
            "engine": "jod",
            "batch_count": 1,
            "initial_fraction": 0.8,
            "seed": 4,
        },
    )
    assert resp.status_code == 200, resp.text
    body = resp.json()
    assert body["engine"] == "jod"
    assert len(body["records"]) == 2
    assert body["oom"] is False


def test_bench_report_endpoint(client, tmp_path):
    from deltagraph.bench import MetricsRecord, write_metrics

    p = tmp_path / "m.txt"
    write_metrics(p, "jod", [MetricsRecord(0, 1.0, 1.0, 5, 0, 80, 0, 2, 2, 0, 0)])
    resp = client.post("/bench/report", json={"metrics_paths": [str(p)]})
    assert resp.status_code == 200
    assert "jod" in resp.json()["table"]
