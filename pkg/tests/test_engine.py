from __future__ import annotations

import random

import pytest

from deltagraph.engine import JodEngine, VdcEngine
from deltagraph.errors import SequencingError
from deltagraph.graph import (
    DELETE,
    INSERT,
    Graph,
    UpdateBatch,
    UpdateEntry,
)
from deltagraph.queries import (
    KhopOperator,
    PagerankOperator,
    SpspOperator,
    WccOperator,
)
from deltagraph.states import INF

from oracles import bfs_hops, random_graph, reference_ife, sssp_states
from test_graph import running_example_graph

A, B, C, D, E = 0, 1, 2, 3, 4


def running_batches():
    """The two scripted weight updates: a->d 20->100, then b->c 10->100."""
    return [
        UpdateBatch(1, [UpdateEntry(DELETE, A, D, 0, 20), UpdateEntry(INSERT, A, D, 0, 100)]),
        UpdateBatch(2, [UpdateEntry(DELETE, B, C, 0, 10), UpdateEntry(INSERT, B, C, 0, 100)]),
    ]


# The full hand-derived difference trace of the running example (the paper's
# +(d,10) at iteration 1 is a typo; Bellman-Ford gives +(d,20)).
GOLDEN_D = {
    (0, 0): {A: {0: 1}, B: {INF: 1}, C: {INF: 1}, D: {INF: 1}, E: {INF: 1}},
    (0, 1): {B: {INF: -1, 30: 1}, D: {INF: -1, 20: 1}, E: {INF: -1, 10: 1}},
    (0, 2): {C: {INF: -1, 40: 1}},
    (1, 1): {D: {20: -1, 100: 1}},
    (1, 3): {D: {100: -1, 50: 1}},
    (2, 2): {C: {40: -1, 120: 1}},
    (2, 3): {D: {50: -1, 100: 1}},
}

GOLDEN_J = {
    (0, 0): {A: {0: 1}, B: {INF: 1}, C: {INF: 1}, D: {INF: 1}, E: {INF: 1}},
    (0, 1): {B: {30: 1}, D: {20: 1}, E: {10: 1}},
    (0, 2): {C: {40: 2}, E: {30: 1}},
    (0, 3): {D: {50: 1}},
    (1, 1): {D: {20: -1, 100: 1}},
    (1, 2): {C: {40: -1, 120: 1}, E: {30: -1, 110: 1}},
    (1, 4): {C: {120: -1, 70: 1}, E: {110: -1, 60: 1}},
    (2, 2): {C: {40: -1, 130: 1}},
    (2, 3): {D: {50: -1, 130: 1}},
    (2, 4): {C: {70: -1, 120: 1}, E: {60: -1, 110: 1}},
}


def cells_by_timestamp(trace, untag=False):
    out = {}
    for key, cells in trace.cells.items():
        for ts, diffset in cells.items():
            if untag:
                diffset = {value: mult for (_tag, value), mult in diffset.items()}
            out.setdefault(ts, {})[key] = diffset
    return out


def vdc_on_running_example():
    g = running_example_graph()
    eng = VdcEngine(g, SpspOperator(A), track_reruns=True).initial_run()
    for batch in running_batches():
        g.apply_batch(batch)
        eng.maintain(batch)
    return g, eng


def test_vdc_golden_trace_matches_table():
    _g, eng = vdc_on_running_example()
    assert cells_by_timestamp(eng.trace_d) == GOLDEN_D
    assert cells_by_timestamp(eng.trace_j, untag=True) == GOLDEN_J


def test_vdc_initial_column_only():
    g = running_example_graph()
    eng = VdcEngine(g, SpspOperator(A)).initial_run()
    got = cells_by_timestamp(eng.trace_d)
    assert got == {ts: cells for ts, cells in GOLDEN_D.items() if ts[0] == 0}
    assert eng.current_states() == {A: 0, B: 30, C: 40, D: 20, E: 10}


def test_vdc_empty_graph_wcc():
    g = Graph()
    eng = VdcEngine(g, WccOperator()).initial_run()
    assert eng.current_states() == {}
    assert eng.difference_counts()["D"] == 0


def test_vdc_maintain_g1_column():
    g = running_example_graph()
    eng = VdcEngine(g, SpspOperator(A)).initial_run()
    batch = running_batches()[0]
    g.apply_batch(batch)
    out = eng.maintain(batch)
    got = cells_by_timestamp(eng.trace_d)
    for ts, cells in GOLDEN_D.items():
        if ts[0] <= 1:
            assert got[ts] == cells, ts
    assert {(o.key, o.state, o.sign) for o in out} == {(D, 20, -1), (D, 50, 1)}


def test_vdc_difference_counts_match_golden_tally():
    _g, eng = vdc_on_running_example()
    expect_d = sum(len(d) for cells in GOLDEN_D.values() for d in cells.values())
    expect_j = sum(len(d) for cells in GOLDEN_J.values() for d in cells.values())
    counts = eng.difference_counts()
    assert counts["D"] == expect_d == 21
    assert counts["J"] == expect_j == 29
    assert eng.modeled_bytes(8, 8) == (21 + 29) * 16


def test_vdc_trace_dump_format():
    g = running_example_graph()
    eng = VdcEngine(g, SpspOperator(A)).initial_run()
    lines = eng.dump_d_trace(key_fmt=lambda k: g.names[k])
    assert lines == sorted(lines)
    assert "D 0 0 + a 0 1" in lines
    assert "D 0 1 - b inf 1" in lines
    assert "D 0 2 + c 40 1" in lines


def test_jod_golden_merged_rows_after_both_batches():
    g = running_example_graph()
    eng = JodEngine(g, SpspOperator(A)).initial_run()
    for batch in running_batches():
        g.apply_batch(batch)
        eng.maintain(batch)
    assert eng.merged.rows[A] == [(0, 0)]
    assert eng.merged.rows[B] == [(0, INF), (1, 30)]
    assert eng.merged.rows[C] == [(0, INF), (2, 120)]
    assert eng.merged.rows[D] == [(0, INF), (1, 100)]
    assert eng.merged.rows[E] == [(0, INF), (1, 10)]


def test_jod_table4_pause_after_g2_iteration1():
    g = running_example_graph()
    eng = JodEngine(g, SpspOperator(A)).initial_run()
    batches = running_batches()
    g.apply_batch(batches[0])
    eng.maintain(batches[0])
    # Row 3 of the merged trace holds +(d,50) before the second update.
    assert eng.merged.rows[D] == [(0, INF), (1, 100), (3, 50)]
    g.apply_batch(batches[1])
    eng.maintain(batches[1], pause_after_iteration=1)
    row1 = {
        key: state
        for key in eng.merged.keys()
        for it, state in eng.merged.rows[key]
        if it == 1
    }
    assert row1 == {B: 30, D: 100, E: 10}
    row0 = {
        key: state
        for key in eng.merged.keys()
        for it, state in eng.merged.rows[key]
        if it == 0
    }
    assert row0 == {A: 0, B: INF, C: INF, D: INF, E: INF}


def test_jod_initial_run_equals_elided_vdc():
    g1 = running_example_graph()
    vdc = VdcEngine(g1, SpspOperator(A)).initial_run()
    g2 = running_example_graph()
    jod = JodEngine(g2, SpspOperator(A)).initial_run()
    from deltagraph.diffs import elide_negatives

    for key in range(5):
        diffs = []
        for (v, i), dset in vdc.trace_d.cells.get(key, {}).items():
            assert v == 0
            diffs.extend((i, state, mult) for state, mult in dset.items())
        assert jod.merged.rows.get(key, []) == elide_negatives(diffs)


def test_jod_edgeless_graph_holds_inits_only():
    g = Graph.from_edges([], names=range(3))
    eng = JodEngine(g, WccOperator()).initial_run()
    assert eng.merged.rows == {0: [(0, 0)], 1: [(0, 1)], 2: [(0, 2)]}


def test_jod_running_example_rerun_schedule():
    g = running_example_graph()
    eng = JodEngine(g, SpspOperator(A), track_reruns=True).initial_run()
    eng.rerun_log.clear()
    batch = running_batches()[0]
    g.apply_batch(batch)
    eng.maintain(batch)
    d_reruns = {i for (k, _v, i) in eng.rerun_log if k == D}
    # The edge-delta rule fires d at iteration 0; the upper-bound pairings
    # with c's surviving diff at iteration 2 land d at 2 and 3.
    assert {0, 1, 2, 3} <= d_reruns
    assert {i for (k, _v, i) in eng.rerun_log if k == C} >= {2}
    assert eng.current_states() == {A: 0, B: 30, C: 40, D: 50, E: 10}


def test_jod_rerun_superset_of_vdc():
    # Every VDC aggregate execution that wrote a difference (exactly the
    # recorded D cells) must appear among JOD's executions.  VDC's further
    # spurious reruns pair against historical 2-D cells whose merged sum is
    # zero; eager merging forgets those on purpose, so they are compared
    # only on the short running-example trace below.
    rng = random.Random(17)
    for _trial in range(15):
        edges = random_graph(rng, 12, 30)
        batches = _random_batches(rng, edges, 12, n_batches=6)
        g1 = Graph.from_edges(edges, names=range(12))
        g2 = Graph.from_edges(edges, names=range(12))
        src = rng.randrange(12)
        vdc = VdcEngine(g1, SpspOperator(src), track_reruns=True).initial_run()
        jod = JodEngine(g2, SpspOperator(src), track_reruns=True).initial_run()
        for batch in batches:
            g1.apply_batch(batch)
            g2.apply_batch(batch)
            vdc.maintain(batch)
            jod.maintain(batch)
        required = {
            (key, v, i)
            for key, cells in vdc.trace_d.cells.items()
            for (v, i) in cells
        }
        assert required <= vdc.rerun_log
        assert required <= jod.rerun_log


def test_jod_full_rerun_superset_on_running_example():
    g1 = running_example_graph()
    g2 = running_example_graph()
    vdc = VdcEngine(g1, SpspOperator(A), track_reruns=True).initial_run()
    jod = JodEngine(g2, SpspOperator(A), track_reruns=True).initial_run()
    for batch in running_batches():
        g1.apply_batch(batch)
        g2.apply_batch(batch)
        vdc.maintain(batch)
        jod.maintain(batch)
    assert vdc.rerun_log <= jod.rerun_log


def _random_batches(rng, initial_edges, n_vertices, n_batches, deletions=True):
    present = [tuple(e) for e in initial_edges]
    batches = []
    for version in range(1, n_batches + 1):
        entries = []
        if deletions and present and rng.random() < 0.4:
            pick = rng.randrange(len(present))
            edge = present[pick]
            present[pick] = present[-1]
            present.pop()
            entries.append(UpdateEntry(DELETE, *edge))
        else:
            edge = (rng.randrange(n_vertices), rng.randrange(n_vertices), 0, rng.randint(1, 10))
            present.append(edge)
            entries.append(UpdateEntry(INSERT, *edge))
        batches.append(UpdateBatch(version, entries))
    return batches


@pytest.mark.parametrize("make_op", [
    lambda rng, n: SpspOperator(rng.randrange(n)),
    lambda rng, n: KhopOperator(rng.randrange(n), 4),
    lambda rng, n: WccOperator(),
])
def test_engines_match_scratch_over_random_batches(make_op):
    rng = random.Random(23)
    for _trial in range(8):
        n = 14
        edges = random_graph(rng, n, 30)
        batches = _random_batches(rng, edges, n, n_batches=8)
        g_vdc = Graph.from_edges(edges, names=range(n))
        g_jod = Graph.from_edges(edges, names=range(n))
        g_ref = Graph.from_edges(edges, names=range(n))
        op_rng = random.Random(99)
        vdc = VdcEngine(g_vdc, make_op(op_rng, n)).initial_run()
        op_rng = random.Random(99)
        jod = JodEngine(g_jod, make_op(op_rng, n)).initial_run()
        op_rng = random.Random(99)
        ref_op = make_op(op_rng, n)
        for batch in batches:
            for g in (g_vdc, g_jod, g_ref):
                g.apply_batch(batch)
            vdc.maintain(batch)
            jod.maintain(batch)
            expect = reference_ife(g_ref, ref_op)
            assert vdc.current_states() == expect
            assert jod.current_states() == expect


def test_engines_match_pagerank_power_iteration():
    from oracles import power_iteration_pagerank

    rng = random.Random(31)
    n = 10
    edges = random_graph(rng, n, 25)
    batches = _random_batches(rng, edges, n, n_batches=5)
    g_vdc = Graph.from_edges(edges, names=range(n))
    g_jod = Graph.from_edges(edges, names=range(n))
    g_ref = Graph.from_edges(edges, names=range(n))
    vdc = VdcEngine(g_vdc, PagerankOperator()).initial_run()
    jod = JodEngine(g_jod, PagerankOperator()).initial_run()
    for batch in batches:
        for g in (g_vdc, g_jod, g_ref):
            g.apply_batch(batch)
        vdc.maintain(batch)
        jod.maintain(batch)
        oracle = power_iteration_pagerank(g_ref)
        for v, rank in oracle.items():
            assert vdc.current_states()[v] == pytest.approx(rank, abs=1e-9)
            assert jod.current_states()[v] == pytest.approx(rank, abs=1e-9)


def test_khop_deletion_retracts_reachability():
    g = Graph.from_edges([(0, 1, 0, 1), (1, 2, 0, 1)], names=range(3))
    g2 = Graph.from_edges([(0, 1, 0, 1), (1, 2, 0, 1)], names=range(3))
    jod = JodEngine(g, KhopOperator(0, 5)).initial_run()
    vdc = VdcEngine(g2, KhopOperator(0, 5)).initial_run()
    assert jod.current_states() == {0: 0, 1: 1, 2: 2}
    batch = UpdateBatch(1, [UpdateEntry(DELETE, 0, 1, 0, 1)])
    g.apply_batch(batch)
    g2.apply_batch(batch)
    out = jod.maintain(batch)
    vdc.maintain(batch)
    assert jod.current_states() == {0: 0}
    assert vdc.current_states() == {0: 0}
    assert {(o.key, o.state, o.sign) for o in out} == {(1, 1, -1), (2, 2, -1)}


def test_new_vertex_insertion():
    g = Graph.from_edges([(0, 1, 0, 2)], names=range(2))
    jod = JodEngine(g, SpspOperator(0)).initial_run()
    batch = UpdateBatch(1, [UpdateEntry(INSERT, 1, 2, 0, 3)])
    g.apply_batch(batch)
    jod.maintain(batch)
    assert jod.current_states() == {0: 0, 1: 2, 2: 5}


def test_pagerank_vertex_growth_rescales_init():
    from oracles import power_iteration_pagerank

    g = Graph.from_edges([(0, 1, 0, 1), (1, 0, 0, 1)], names=range(2))
    g_ref = Graph.from_edges([(0, 1, 0, 1), (1, 0, 0, 1)], names=range(2))
    jod = JodEngine(g, PagerankOperator()).initial_run()
    batch = UpdateBatch(1, [UpdateEntry(INSERT, 1, 2, 0, 1)])
    g.apply_batch(batch)
    g_ref.apply_batch(batch)
    jod.maintain(batch)
    oracle = power_iteration_pagerank(g_ref)
    for v, rank in oracle.items():
        assert jod.current_states()[v] == pytest.approx(rank, abs=1e-12)


def test_locality_disjoint_component_update():
    # Components {0,1,2} (query side) and {3,4} (update side).
    edges = [(0, 1, 0, 2), (1, 2, 0, 2), (3, 4, 0, 1)]
    g1 = Graph.from_edges(edges, names=range(5))
    g2 = Graph.from_edges(edges, names=range(5))
    vdc = VdcEngine(g1, SpspOperator(0), track_reruns=True).initial_run()
    jod = JodEngine(g2, SpspOperator(0), track_reruns=True).initial_run()
    vdc.rerun_log.clear()
    jod.rerun_log.clear()
    batch = UpdateBatch(1, [UpdateEntry(INSERT, 4, 3, 0, 1)])
    g1.apply_batch(batch)
    g2.apply_batch(batch)
    out_v = vdc.maintain(batch)
    out_j = jod.maintain(batch)
    assert out_v == [] and out_j == []
    assert {k for (k, _v, _i) in vdc.rerun_log} <= {3, 4}
    assert {k for (k, _v, _i) in jod.rerun_log} <= {3, 4}


def test_sequencing_errors():
    g = running_example_graph()
    eng = VdcEngine(g, SpspOperator(A))
    with pytest.raises(SequencingError):
        eng.maintain(UpdateBatch(1, []))
    eng.initial_run()
    with pytest.raises(SequencingError):
        eng.maintain(UpdateBatch(5, []))
    batch = UpdateBatch(1, [])
    # Graph not advanced yet:
    with pytest.raises(SequencingError):
        eng.maintain(batch)


def test_empty_batch_is_a_noop():
    g = running_example_graph()
    eng = JodEngine(g, SpspOperator(A)).initial_run()
    rows_before = {k: list(v) for k, v in eng.merged.rows.items()}
    batch = UpdateBatch(1, [])
    g.apply_batch(batch)
    assert eng.maintain(batch) == []
    assert eng.merged.rows == rows_before


def test_jod_count_differences_reports_zero_j():
    g = running_example_graph()
    eng = JodEngine(g, SpspOperator(A)).initial_run()
    counts = eng.difference_counts()
    assert counts["J"] == 0
    assert counts["D"] == eng.merged.entry_count() > 0


def test_jod_memory_not_above_vdc():
    rng = random.Random(41)
    for _trial in range(5):
        edges = random_graph(rng, 15, 40)
        batches = _random_batches(rng, edges, 15, n_batches=6)
        g1 = Graph.from_edges(edges, names=range(15))
        g2 = Graph.from_edges(edges, names=range(15))
        src = rng.randrange(15)
        vdc = VdcEngine(g1, SpspOperator(src)).initial_run()
        jod = JodEngine(g2, SpspOperator(src)).initial_run()
        for batch in batches:
            g1.apply_batch(batch)
            g2.apply_batch(batch)
            vdc.maintain(batch)
            jod.maintain(batch)
        v_counts = vdc.difference_counts()
        j_counts = jod.difference_counts()
        assert j_counts["D"] <= v_counts["D"] + v_counts["J"]


def test_vdc_khop_matches_bfs_after_batches():
    rng = random.Random(53)
    edges = random_graph(rng, 30, 60)
    g = Graph.from_edges(edges, names=range(30))
    g_ref = Graph.from_edges(edges, names=range(30))
    src = rng.randrange(30)
    eng = VdcEngine(g, KhopOperator(src, 5)).initial_run()
    assert eng.current_states() == bfs_hops(g_ref, src, 5)


def test_spsp_matches_dijkstra_after_batches():
    rng = random.Random(61)
    edges = random_graph(rng, 30, 70)
    batches = _random_batches(rng, edges, 30, n_batches=10)
    g = Graph.from_edges(edges, names=range(30))
    g_ref = Graph.from_edges(edges, names=range(30))
    src = rng.randrange(30)
    eng = JodEngine(g, SpspOperator(src)).initial_run()
    for batch in batches:
        g.apply_batch(batch)
        g_ref.apply_batch(batch)
        eng.maintain(batch)
        assert eng.current_states() == sssp_states(g_ref, src)
