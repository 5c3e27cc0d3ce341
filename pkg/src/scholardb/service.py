"""Query service: session management over planner and engine, plus the HTTP
API surface the CLI and UI both consume.

Every response is derivable from persisted artifacts (graph snapshot, traces,
reports); restarting the service loses no completed work.
"""

from __future__ import annotations

import json
import logging
import threading
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .analytics import (
    FixtureTrendClient,
    TrendEvidenceClient,
    make_analytics_executors,
    milestone_selection,
    trend_analysis,
)
from .engine import PlanRunner, ResultCache, TraceStore
from .errors import NotFoundError, ScholarDBError, SelfCorrectionError, ServiceError
from .graphstore import Graph
from .ingest import FixtureBiblioClient, ingest_corpus
from .llm import Accounting, Cassette, HashEmbedder, LlmClient, ScriptedChat
from .operators import OperatorContext, op_matrix_construct
from .planner import DemoLibrary, PlanLibrary, Planner
from .retrieval import RetrievalConfig, SearchBackend
from .taxonomy import Taxonomy, TaxonomyConfig, TaxonomyKind, anchor_into_graph, build_taxonomy

log = logging.getLogger(__name__)

STATE_ORDER = ("planning", "validating", "executing", "done", "failed")


@dataclass
class QueryStatus:
    state: str
    done_nodes: int = 0
    total_nodes: int = 0
    issues: Optional[dict] = None

    def to_dict(self) -> dict:
        return {"state": self.state,
                "progress": {"done": self.done_nodes, "total": self.total_nodes},
                "issues": self.issues}


@dataclass
class SessionTurn:
    query: str
    execution_id: str
    plan_digest: str = ""
    result_digest: str = ""

    def to_dict(self) -> dict:
        return {"query": self.query, "execution_id": self.execution_id,
                "plan_digest": self.plan_digest,
                "result_digest": self.result_digest}


class QueryService:
    """Owns the corpus artifacts and executes query sessions against them."""

    def __init__(self, graph: Graph, llm: LlmClient,
                 state_dir: str | Path | None = None,
                 trend_client: TrendEvidenceClient | None = None,
                 retrieval_cfg: RetrievalConfig | None = None,
                 max_parallel: int = 4, cache_enabled: bool = True,
                 use_predefined: bool = True,
                 demos: DemoLibrary | None = None,
                 synchronous: bool = True):
        self.graph = graph
        self.llm = llm
        self.state_dir = Path(state_dir) if state_dir else None
        if self.state_dir:
            self.state_dir.mkdir(parents=True, exist_ok=True)
        self.search = SearchBackend(graph, llm)
        self.library = PlanLibrary(llm=llm)
        self.planner = Planner(self.library, demos or DemoLibrary(),
                               use_predefined=use_predefined)
        self.trend_client = trend_client or FixtureTrendClient({})
        cache_path = self.state_dir / "cache.jsonl" if self.state_dir else None
        trace_dir = self.state_dir / "traces" if self.state_dir else None
        self.cache = ResultCache(cache_path, enabled=cache_enabled)
        self.trace_store = TraceStore(trace_dir) if trace_dir else None
        ctx = OperatorContext(graph, llm, self.search,
                              retrieval_cfg or RetrievalConfig())
        self.runner = PlanRunner(
            ctx, self.cache, self.trace_store, max_parallel,
            analytics=make_analytics_executors(self.trend_client))
        self.sessions: dict[str, list[SessionTurn]] = {}
        self.taxonomies: dict[str, Taxonomy] = {}
        self._statuses: dict[str, QueryStatus] = {}
        self._results: dict[str, dict] = {}
        self._lock = threading.Lock()
        self.synchronous = synchronous
        self._load_sessions()
        if self.state_dir:
            from .operators import catalog_document

            (self.state_dir / "operator_catalog.json").write_text(
                json.dumps(catalog_document(), indent=2, sort_keys=True),
                encoding="utf-8")

    # -- persistence -------------------------------------------------------

    def _sessions_path(self) -> Optional[Path]:
        return self.state_dir / "sessions.jsonl" if self.state_dir else None

    def _load_sessions(self) -> None:
        path = self._sessions_path()
        if path is None or not path.exists():
            return
        for line in path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                rec = json.loads(line)
                self.sessions.setdefault(rec["session_id"], []).append(
                    SessionTurn(rec["query"], rec["execution_id"],
                                rec.get("plan_digest", ""),
                                rec.get("result_digest", "")))

    def _append_session(self, session_id: str, turn: SessionTurn) -> None:
        path = self._sessions_path()
        if path is not None:
            with path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps({"session_id": session_id,
                                     **turn.to_dict()}) + "\n")

    # -- taxonomy lifecycle ---------------------------------------------------

    def build_taxonomies(self, cfg: TaxonomyConfig | None = None,
                         kinds: tuple[TaxonomyKind, ...] = (
                             TaxonomyKind.PROBLEM, TaxonomyKind.METHOD)) -> None:
        cfg = cfg or TaxonomyConfig()
        for kind in kinds:
            tax = build_taxonomy(self.graph, kind, cfg, self.llm)
            anchor_into_graph(tax, self.graph, self.llm)
            self.taxonomies[kind.value] = tax
        self.search.build_indexes()
        if self.state_dir:
            for kind, tax in self.taxonomies.items():
                (self.state_dir / f"taxonomy_{kind}.json").write_text(
                    json.dumps(tax.to_dict(), indent=2, ensure_ascii=False),
                    encoding="utf-8")

    def set_taxonomy(self, tax: Taxonomy) -> None:
        self.taxonomies[tax.kind.value] = tax
        anchor_into_graph(tax, self.graph, self.llm)
        self.search.build_indexes()

    # -- query lifecycle ---------------------------------------------------------

    def submit_query(self, session_id: str, query: str) -> str:
        execution_id = uuid.uuid4().hex
        with self._lock:
            self._statuses[execution_id] = QueryStatus("planning")
            self.sessions.setdefault(session_id, [])

        def work() -> None:
            self._run_query(session_id, execution_id, query)

        if self.synchronous:
            work()
        else:
            threading.Thread(target=work, daemon=True).start()
        return execution_id

    def _run_query(self, session_id: str, execution_id: str, query: str) -> None:
        try:
            outcome = self.planner.plan_query(query, self.llm)
            with self._lock:
                # plan_query returns only validated plans; the validating
                # state is observable when submission runs asynchronously.
                self._statuses[execution_id].state = "validating"
                status = self._statuses[execution_id]
                status.state = "executing"
                status.total_nodes = len(outcome.plan.steps)
            result = self.runner.execute(outcome.plan, execution_id)
            turn = SessionTurn(query, execution_id,
                               plan_digest=_digest(outcome.plan.to_dict()),
                               result_digest=_digest(result.terminals))
            with self._lock:
                self.sessions[session_id].append(turn)
                status = self._statuses[execution_id]
                status.done_nodes = sum(
                    1 for s in result.statuses.values()
                    if s in ("done", "cache-hit"))
                status.total_nodes = len(result.statuses)
                status.state = "failed" if result.failures else "done"
                self._results[execution_id] = {
                    "terminals": result.terminals,
                    "failures": result.failures,
                }
            self._append_session(session_id, turn)
        except SelfCorrectionError as exc:
            with self._lock:
                status = self._statuses[execution_id]
                status.state = "failed"
                status.issues = exc.report.to_dict() if exc.report else None
                self._results[execution_id] = {
                    "terminals": {}, "failures": {"planner": str(exc)}}
        except ScholarDBError as exc:
            with self._lock:
                status = self._statuses[execution_id]
                status.state = "failed"
                self._results[execution_id] = {
                    "terminals": {}, "failures": {"planner": str(exc)}}

    def get_status(self, execution_id: str) -> QueryStatus:
        with self._lock:
            status = self._statuses.get(execution_id)
        if status is None:
            raise NotFoundError(f"unknown execution {execution_id!r}")
        return status

    def get_result(self, execution_id: str) -> dict:
        with self._lock:
            result = self._results.get(execution_id)
        if result is None:
            raise NotFoundError(f"no result for execution {execution_id!r}")
        return result

    def get_trace(self, execution_id: str) -> dict:
        return self.runner.trace(execution_id)

    # -- browse surfaces ------------------------------------------------------------

    def browse(self, kind: str, **params) -> dict:
        if kind == "taxonomy":
            tax = self.taxonomies.get(params.get("taxonomy_kind", "problem"))
            if tax is None:
                raise NotFoundError("taxonomy not built")
            return tax.to_dict()
        if kind == "matrix":
            ctx = OperatorContext(self.graph, self.llm, self.search)
            return op_matrix_construct(
                ctx, params.get("topic_node_id")).value.to_dict()
        if kind == "trend":
            node_ids = params.get("node_ids")
            if not node_ids:
                tax = self.taxonomies.get("problem")
                if tax is None:
                    raise NotFoundError("trend report needs a built taxonomy")
                node_ids = [tax.root_id]
            report = trend_analysis(self.graph, node_ids, self.trend_client,
                                    self.llm)
            return report.to_dict()
        if kind == "milestone":
            scores = milestone_selection(
                self.graph, self.llm, int(params.get("top_k", 3)),
                params.get("topic_node_id"))
            return {"milestones": [s.to_dict() for s in scores]}
        raise ServiceError(f"unknown browse kind {kind!r}")

    def session_view(self, session_id: str) -> dict:
        turns = self.sessions.get(session_id, [])
        return {"session_id": session_id,
                "turns": [t.to_dict() for t in turns]}


def _digest(payload) -> str:
    import hashlib

    return hashlib.sha256(json.dumps(payload, sort_keys=True, default=str)
                          .encode("utf-8")).hexdigest()


# -- construction from config ------------------------------------------------------

def service_from_config(config: dict) -> QueryService:
    """Build a service from a config document (file schema used by the CLI)."""
    graph_path = config.get("graph_snapshot")
    graph = Graph.snapshot_load(graph_path) if graph_path else Graph()
    cassette_path = config.get("cassette")
    mode = config.get("cassette_mode", "replay")
    cassette = Cassette(mode=mode, path=cassette_path) if cassette_path else None
    provider = config.get("provider", "scripted")
    chat = None
    if provider == "http":
        from .llm import HttpChat

        chat = HttpChat(model=config.get("model", "gpt-4.1-mini"))
    elif provider == "scripted":
        chat = ScriptedChat(default=json.dumps({"scope": "corpus",
                                                "task": "summarize"}))
    llm = LlmClient(chat=chat,
                    embedder=HashEmbedder(dim=int(config.get("embed_dim", 64))),
                    cassette=cassette,
                    embed_dim=int(config.get("embed_dim", 64)),
                    model=config.get("model", "offline"),
                    accounting=Accounting())
    trend = FixtureTrendClient(path=config["trend_fixture"]) \
        if config.get("trend_fixture") else None
    service = QueryService(
        graph, llm, state_dir=config.get("state_dir"),
        trend_client=trend,
        max_parallel=int(config.get("max_parallel", 4)),
        cache_enabled=bool(config.get("cache_enabled", True)))
    for kind in (TaxonomyKind.PROBLEM, TaxonomyKind.METHOD):
        path = config.get(f"taxonomy_{kind.value}")
        if path and Path(path).exists():
            tax = Taxonomy.from_dict(
                json.loads(Path(path).read_text(encoding="utf-8")))
            service.set_taxonomy(tax)
    return service


try:  # pydantic is present wherever fastapi is installed
    from pydantic import BaseModel

    class QueryBody(BaseModel):
        session_id: str = "default"
        query: str

    class IngestBody(BaseModel):
        bundles: list[dict]
        biblio: dict[str, dict] = {}
except ImportError:  # pragma: no cover - service API optional
    QueryBody = IngestBody = None


def build_app(service: QueryService):
    """FastAPI application over the service; wire format is JSON."""
    from fastapi import FastAPI, HTTPException

    app = FastAPI(title="scholardb")

    def _wrap(fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except ScholarDBError as exc:
            raise HTTPException(status_code=400, detail=str(exc))

    @app.post("/queries")
    def submit(body: QueryBody):
        execution_id = _wrap(service.submit_query, body.session_id, body.query)
        return {"execution_id": execution_id}

    @app.get("/queries/{execution_id}")
    def status(execution_id: str):
        return _wrap(service.get_status, execution_id).to_dict()

    @app.get("/queries/{execution_id}/result")
    def result(execution_id: str):
        return _wrap(service.get_result, execution_id)

    @app.get("/queries/{execution_id}/trace")
    def trace(execution_id: str):
        return _wrap(service.get_trace, execution_id)

    @app.get("/taxonomy/{kind}")
    def taxonomy_view(kind: str):
        return _wrap(service.browse, "taxonomy", taxonomy_kind=kind)

    @app.get("/matrix")
    def matrix_view(topic_node_id: Optional[str] = None):
        return _wrap(service.browse, "matrix", topic_node_id=topic_node_id)

    @app.get("/trend")
    def trend_view(node_id: Optional[str] = None):
        params = {"node_ids": [node_id]} if node_id else {}
        return _wrap(service.browse, "trend", **params)

    @app.get("/milestones")
    def milestones_view(topic_node_id: Optional[str] = None, top_k: int = 3):
        return _wrap(service.browse, "milestone", topic_node_id=topic_node_id,
                     top_k=top_k)

    @app.get("/sessions/{session_id}")
    def session_view(session_id: str):
        return service.session_view(session_id)

    @app.post("/ingest")
    def ingest(body: IngestBody):
        from .ingest import DocumentBundle

        bundles = [DocumentBundle.from_dict(b) for b in body.bundles]
        biblio = FixtureBiblioClient(body.biblio)
        _, warnings = ingest_corpus(bundles, service.llm, biblio, service.graph)
        service.search.build_indexes()
        return {"ingested": len(bundles), "warnings": warnings}

    return app
