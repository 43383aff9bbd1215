"""Command-line interface.

`bench` commands run experiments in-process over local files; `serve`
hosts the HTTP service; the `session` group is a thin client for a
running service.  Exit code 0 covers completed runs including those that
hit the memory budget (an OOM flag is a result); errors exit nonzero.
"""

from __future__ import annotations

import json
import sys

import click

from deltagraph.bench import (
    RunConfig,
    capacity_sweep,
    emit_report,
    run_experiment,
    write_sweep,
)
from deltagraph.errors import DeltagraphError


@click.group()
def main():
    """Differentially maintained recursive graph queries."""


@main.group()
def bench():
    """Benchmark harness: run experiments, sweep capacity, report."""


def _common_run_options(fn):
    options = [
        click.option("--dataset", type=click.Path(exists=True), required=True,
                     help="Edge-list file: `src dst [weight] [label]`."),
        click.option("--weighted", is_flag=True, help="Dataset lines carry weights."),
        click.option("--labeled", is_flag=True, help="Dataset lines carry labels."),
        click.option("--add-random-weights", is_flag=True,
                     help="Attach seeded integer weights 1..10 to an unweighted dataset."),
        click.option("--queries", "query_file", type=click.Path(exists=True),
                     help="Query file, one query per line."),
        click.option("--generate", "generate_kind",
                     type=click.Choice(["spsp", "khop", "rpq", "wcc", "pagerank"]),
                     help="Generate queries of this kind instead of a file."),
        click.option("--count", "generate_count", type=int, default=10, show_default=True,
                     help="How many queries to generate."),
        click.option("--engine", type=click.Choice(
            ["scratch", "scratch-landmark", "vdc", "jod", "det-drop", "prob-drop"]),
            default="jod", show_default=True),
        click.option("--policy", help="Drop policy, e.g. random:p=0.5 or "
                     "degree:p=0.5,tau_min=2,tau_max_pct=80."),
        click.option("--batches", "batch_count", type=int, default=100, show_default=True),
        click.option("--batch-size", type=int, default=1, show_default=True),
        click.option("--delete-frac", "deletion_fraction", type=float, default=0.0,
                     show_default=True),
        click.option("--budget", "budget_bytes", type=int, help="Modeled byte budget."),
        click.option("--seed", type=int, default=0, show_default=True),
        click.option("--initial-fraction", type=float, default=0.9, show_default=True),
        click.option("--landmarks", "landmark_count", type=int, default=10, show_default=True),
        click.option("--khop-k", type=int, default=5, show_default=True),
        click.option("--bloom-bits-per-entry", type=int, default=10, show_default=True),
        click.option("--bloom-hashes", type=int, default=7, show_default=True),
        click.option("--bloom-expected-entries", type=int),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


@bench.command("run")
@_common_run_options
@click.option("--out", type=click.Path(), help="Metrics file to write.")
def bench_run(out, **kwargs):
    """Replay an update stream and record per-batch metrics."""
    try:
        config = RunConfig(out=out, **kwargs)
        records = run_experiment(config)
    except DeltagraphError as exc:
        raise click.ClickException(str(exc)) from exc
    last = records[-1]
    click.echo(
        f"{config.engine}: {len(records) - 1} batches, "
        f"{last.cum_ms:.1f} ms total, {last.bytes} modeled bytes"
        + (", OOM" if last.oom else "")
    )


@bench.command("sweep")
@_common_run_options
@click.option("--queries-from", type=int, default=1, show_default=True)
@click.option("--queries-to", type=int, default=8, show_default=True)
@click.option("--p-grid", default="0,0.25,0.5,0.75,1",
              help="Comma-separated drop probabilities to try, ascending.")
@click.option("--out", type=click.Path(), help="Sweep table file to write.")
def bench_sweep(queries_from, queries_to, p_grid, out, **kwargs):
    """Find the smallest feasible drop probability per query count."""
    kwargs.setdefault("generate_kind", None)
    if not kwargs.get("generate_kind"):
        kwargs["generate_kind"] = "spsp"
    try:
        template = RunConfig(**kwargs)
        grid = [float(x) for x in p_grid.split(",") if x != ""]
        counts = list(range(queries_from, queries_to + 1))
        rows = capacity_sweep(template, counts, grid)
    except DeltagraphError as exc:
        raise click.ClickException(str(exc)) from exc
    for row in rows:
        click.echo(row.line())
    if out:
        write_sweep(out, rows)


@bench.command("report")
@click.argument("metrics", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--csv", "csv_out", type=click.Path(), help="Also write the CSV here.")
def bench_report(metrics, csv_out):
    """Summarise one or more metrics files."""
    try:
        table, csv_text = emit_report(list(metrics))
    except DeltagraphError as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(table)
    if csv_out:
        with open(csv_out, "w") as fh:
            fh.write(csv_text)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    uvicorn.run("deltagraph.service.app:app", host=host, port=port)


@main.group()
@click.option("--server", default="http://127.0.0.1:8000", show_default=True,
              envvar="DELTAGRAPH_SERVER")
@click.pass_context
def session(ctx, server):
    """Thin client for a running deltagraph service."""
    ctx.obj = server


def _client(server):
    import httpx

    return httpx.Client(base_url=server, timeout=60.0)


def _echo_json(payload):
    click.echo(json.dumps(payload, indent=2, sort_keys=True))


@session.command("create")
@click.option("--dataset", type=click.Path(exists=True), required=True)
@click.option("--weighted", is_flag=True)
@click.option("--labeled", is_flag=True)
@click.pass_obj
def session_create(server, dataset, weighted, labeled):
    """Create a session from a server-readable dataset path."""
    with _client(server) as client:
        resp = client.post(
            "/sessions",
            json={"dataset_path": dataset, "weighted": weighted, "labeled": labeled},
        )
        resp.raise_for_status()
        _echo_json(resp.json())


@session.command("add-query")
@click.argument("session_id")
@click.argument("query")
@click.option("--engine", default="jod", show_default=True)
@click.option("--policy")
@click.option("--seed", type=int, default=0)
@click.pass_obj
def session_add_query(server, session_id, query, engine, policy, seed):
    """Register a continuous query, e.g. 'spsp a b'."""
    with _client(server) as client:
        resp = client.post(
            f"/sessions/{session_id}/queries",
            json={"query": query, "engine": engine, "policy": policy, "seed": seed},
        )
        resp.raise_for_status()
        _echo_json(resp.json())


@session.command("apply")
@click.argument("session_id")
@click.argument("entries", nargs=-1, required=True)
@click.pass_obj
def session_apply(server, session_id, entries):
    """Apply one batch; entries look like +src:dst:weight[:label] or -src:dst:weight[:label]."""
    parsed = []
    for raw in entries:
        sign, body = raw[0], raw[1:]
        if sign not in "+-":
            raise click.ClickException(f"entry must start with + or -: {raw!r}")
        parts = body.split(":")
        if len(parts) < 2:
            raise click.ClickException(f"entry needs src:dst at least: {raw!r}")
        entry = {"sign": sign, "src": parts[0], "dst": parts[1]}
        if len(parts) > 2:
            entry["weight"] = int(parts[2])
        if len(parts) > 3:
            entry["label"] = int(parts[3])
        parsed.append(entry)
    with _client(server) as client:
        resp = client.post(f"/sessions/{session_id}/batches", json={"entries": parsed})
        resp.raise_for_status()
        _echo_json(resp.json())


@session.command("states")
@click.argument("session_id")
@click.argument("query_id")
@click.pass_obj
def session_states(server, session_id, query_id):
    """Fetch the maintained states and answer of one query."""
    with _client(server) as client:
        resp = client.get(f"/sessions/{session_id}/queries/{query_id}/states")
        resp.raise_for_status()
        _echo_json(resp.json())


@session.command("metrics")
@click.argument("session_id")
@click.pass_obj
def session_metrics(server, session_id):
    """Fetch difference counts and modeled bytes for a session."""
    with _client(server) as client:
        resp = client.get(f"/sessions/{session_id}/metrics")
        resp.raise_for_status()
        _echo_json(resp.json())


if __name__ == "__main__":
    sys.exit(main())
