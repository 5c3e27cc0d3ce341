"""Command-line surface mirroring the HTTP API.

Commands write the same artifacts the API serves, so CLI and service runs are
interchangeable: ingest, build-taxonomy, query, trace, eval, serve.
"""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from .engine import TraceStore
from .errors import ScholarDBError
from .graphstore import Graph
from .ingest import FixtureBiblioClient, ingest_corpus, load_corpus_dir
from .llm import Cassette, HashEmbedder, LlmClient, ScriptedChat
from .retrieval import map_score, ndcg_at_k, r_precision
from .service import build_app, service_from_config
from .taxonomy import TaxonomyConfig, TaxonomyKind, anchor_into_graph, build_taxonomy

log = logging.getLogger(__name__)


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _make_llm(config: dict, cassette: str | None, mode: str) -> LlmClient:
    cassette_obj = Cassette(mode=mode, path=cassette) if cassette else None
    return LlmClient(chat=ScriptedChat(default="{}"),
                     embedder=HashEmbedder(dim=int(config.get("embed_dim", 64))),
                     cassette=cassette_obj,
                     embed_dim=int(config.get("embed_dim", 64)),
                     model=config.get("model", "offline"))


@click.group()
def main():
    """Scholarly-corpus query engine."""


@main.command()
@click.option("--corpus", required=True, type=click.Path(exists=True),
              help="Directory of document-bundle JSON files.")
@click.option("--biblio", type=click.Path(exists=True),
              help="Bibliographic fixture file (title -> metadata).")
@click.option("--cassette", type=click.Path(), help="Cassette file.")
@click.option("--mode", default="replay", show_default=True,
              type=click.Choice(["record", "replay", "replay-strict"]))
@click.option("--snapshot", required=True, type=click.Path(),
              help="Output graph snapshot path.")
@click.option("--config", "config_path", type=click.Path(exists=True))
def ingest(corpus, biblio, cassette, mode, snapshot, config_path):
    """Ingest pre-parsed document bundles into a graph snapshot."""
    config = _load_config(config_path)
    llm = _make_llm(config, cassette, mode)
    bundles = load_corpus_dir(corpus)
    client = FixtureBiblioClient(path=biblio) if biblio else FixtureBiblioClient()
    graph, warnings = ingest_corpus(bundles, llm, client)
    graph.snapshot_save(snapshot)
    for warning in warnings:
        click.echo(f"warning: {warning}", err=True)
    click.echo(f"ingested {len(bundles)} bundles -> {snapshot} "
               f"(corpus_version {graph.corpus_version()[:12]})")


@main.command("build-taxonomy")
@click.option("--snapshot", required=True, type=click.Path(exists=True))
@click.option("--kind", required=True,
              type=click.Choice(["problem", "method"]))
@click.option("--alpha", default=1.0, show_default=True, type=float)
@click.option("--tau-match", default=0.80, show_default=True, type=float)
@click.option("--k-max", default=6, show_default=True, type=int)
@click.option("--cassette", type=click.Path())
@click.option("--mode", default="replay", show_default=True,
              type=click.Choice(["record", "replay", "replay-strict"]))
@click.option("--out", required=True, type=click.Path(),
              help="Taxonomy export file.")
@click.option("--snapshot-out", type=click.Path(),
              help="Re-save the graph (with anchored taxonomy) here.")
@click.option("--config", "config_path", type=click.Path(exists=True))
def build_taxonomy_cmd(snapshot, kind, alpha, tau_match, k_max, cassette, mode,
                       out, snapshot_out, config_path):
    """Build and anchor a problem or method taxonomy."""
    config = _load_config(config_path)
    llm = _make_llm(config, cassette, mode)
    graph = Graph.snapshot_load(snapshot)
    cfg = TaxonomyConfig(alpha=alpha, tau_match=tau_match, k_max=k_max)
    tax = build_taxonomy(graph, TaxonomyKind(kind), cfg, llm)
    anchor_into_graph(tax, graph, llm)
    Path(out).write_text(json.dumps(tax.to_dict(), indent=2, ensure_ascii=False),
                         encoding="utf-8")
    if snapshot_out:
        graph.snapshot_save(snapshot_out)
    click.echo(f"built {kind} taxonomy with {len(tax.nodes)} nodes -> {out}")


@main.command()
@click.argument("query_text")
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True))
@click.option("--session", default="cli", show_default=True)
@click.option("--plan-out", type=click.Path(),
              help="Write the validated plan document here.")
@click.option("--plan-in", type=click.Path(exists=True),
              help="Execute this plan document instead of planning.")
def query(query_text, config_path, session, plan_out, plan_in):
    """Plan and execute a query; prints terminal results as JSON."""
    service = service_from_config(_load_config(config_path))
    if plan_in:
        from .planner import Plan, validate

        plan = Plan.from_dict(json.loads(Path(plan_in).read_text("utf-8")))
        report = validate(plan)
        if not report.ok:
            click.echo(json.dumps(report.to_dict(), indent=2), err=True)
            sys.exit(2)
        outcome = service.runner.execute(plan)
        click.echo(json.dumps({"execution_id": outcome.execution_id,
                               "terminals": outcome.terminals},
                              indent=2, default=str))
        sys.exit(0 if outcome.ok else 1)
    execution_id = service.submit_query(session, query_text)
    status = service.get_status(execution_id)
    result = service.get_result(execution_id)
    if plan_out:
        trace = service.get_trace(execution_id)
        Path(plan_out).write_text(
            json.dumps(trace["plan"], indent=2, ensure_ascii=False),
            encoding="utf-8")
    click.echo(json.dumps({"execution_id": execution_id,
                           "state": status.state, **result},
                          indent=2, default=str))
    sys.exit(0 if status.state == "done" else 1)


@main.command()
@click.argument("execution_id")
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True))
def trace(execution_id, config_path):
    """Print the persisted trace document for an execution."""
    config = _load_config(config_path)
    store = TraceStore(Path(config["state_dir"]) / "traces")
    try:
        click.echo(json.dumps(store.load(execution_id), indent=2, default=str))
    except ScholarDBError as exc:
        click.echo(str(exc), err=True)
        sys.exit(1)


@main.command("eval")
@click.option("--queries", "queries_path", required=True,
              type=click.Path(exists=True),
              help="File of per-query records {query, relevant}.")
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True))
@click.option("--report", type=click.Path(), help="Write the report here.")
def eval_cmd(queries_path, config_path, report):
    """Run retrieval evaluation: per-query and mean R-Precision/MAP/NDCG."""
    service = service_from_config(_load_config(config_path))
    records = [json.loads(line) for line
               in Path(queries_path).read_text("utf-8").splitlines()
               if line.strip()]
    rows = []
    for rec in records:
        ranked = service.search.search(rec["query"])
        relevant = set(rec["relevant"])
        gains = [1.0 if pid in relevant else 0.0 for pid in ranked]
        rows.append({"query": rec["query"],
                     "r_precision": r_precision(ranked, relevant),
                     "map": map_score(ranked, relevant),
                     "ndcg@10": ndcg_at_k(gains, 10)})
    n = max(1, len(rows))
    doc = {"queries": rows,
           "mean": {"r_precision": sum(r["r_precision"] for r in rows) / n,
                    "map": sum(r["map"] for r in rows) / n,
                    "ndcg@10": sum(r["ndcg@10"] for r in rows) / n}}
    text = json.dumps(doc, indent=2, ensure_ascii=False)
    if report:
        Path(report).write_text(text, encoding="utf-8")
    click.echo(text)


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
def serve(config_path, host, port):
    """Serve the HTTP API."""
    import uvicorn

    service = service_from_config(_load_config(config_path))
    uvicorn.run(build_app(service), host=host, port=port)


if __name__ == "__main__":
    main()
