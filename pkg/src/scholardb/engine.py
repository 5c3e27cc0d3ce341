"""Unified execution engine: scope execution, plan unfolding, dependency
resolution, parallel dispatch, transient buffering, persistent caching, and
full trace provenance.

The scheduler core (:func:`run_graph`) is independent of the operator layer
so it can be exercised on synthetic DAGs; :class:`PlanRunner` binds it to the
operator library.
"""

from __future__ import annotations

import hashlib
import json
import logging
import queue
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

from .errors import ExecutionError, NotFoundError
from .llm import Accounting
from .operators import (
    CATALOG,
    OperatorContext,
    OperatorResult,
    PayloadKind,
    ProblemMethodMatrix,
    op_aggregate,
    op_check,
    op_extract,
    op_filter,
    op_find_node,
    op_generate,
    op_group_by,
    op_matrix_construct,
    op_rank,
    op_retrieve,
    op_search,
    op_summarize,
    op_traverse,
    op_verify,
)
from .planner import Plan, PlanStep

log = logging.getLogger(__name__)


# -- result serialization ------------------------------------------------------

def result_to_dict(result: OperatorResult) -> dict:
    value = result.value
    if isinstance(value, ProblemMethodMatrix):
        value = {"__matrix__": value.to_dict()}
    return {"kind": result.kind.value, "value": value,
            "provenance": list(result.provenance)}


def result_from_dict(data: dict) -> OperatorResult:
    value = data["value"]
    if isinstance(value, dict) and "__matrix__" in value:
        m = value["__matrix__"]
        cells = {(c["row"], c["col"]): {k: v for k, v in c.items()
                                        if k not in ("row", "col")}
                 for c in m["cells"]}
        value = ProblemMethodMatrix(list(m["rows"]), list(m["cols"]), cells)
    result = OperatorResult.__new__(OperatorResult)
    result.kind = PayloadKind(data["kind"])
    result.value = value
    result.provenance = list(data.get("provenance", []))
    return result


def result_digest(result: OperatorResult) -> str:
    blob = json.dumps(result_to_dict(result), sort_keys=True, ensure_ascii=False,
                      default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


# -- runtime graph ----------------------------------------------------------------

@dataclass
class ExecutionNode:
    exec_id: str
    origin_step_id: str
    op_name: str
    params: dict = field(default_factory=dict)
    execution_mode: str = "n/a"
    instance_index: Optional[int] = None
    item: Any = None                      # bound scope item for instance nodes
    upstream: list[str] = field(default_factory=list)
    dep_count: int = 0
    status: str = "pending"
    transitions: list[tuple[str, float]] = field(default_factory=list)
    cache_key: Optional[str] = None
    error: Optional[str] = None

    def set_status(self, status: str) -> None:
        self.status = status
        self.transitions.append((status, time.time()))


@dataclass
class ExecutionGraph:
    nodes: dict[str, ExecutionNode] = field(default_factory=dict)
    downstream: dict[str, list[str]] = field(default_factory=dict)
    terminals: list[str] = field(default_factory=list)

    def add(self, node: ExecutionNode) -> None:
        if node.exec_id in self.nodes:
            raise ExecutionError(f"duplicate exec id {node.exec_id}")
        self.nodes[node.exec_id] = node
        self.downstream.setdefault(node.exec_id, [])
        for upstream_id in node.upstream:
            self.downstream.setdefault(upstream_id, []).append(node.exec_id)

    def edges(self) -> list[tuple[str, str]]:
        return sorted((u, d) for u, ds in self.downstream.items() for d in ds)


class Buffer:
    """Write-once per-execution result store."""

    def __init__(self):
        self._data: dict[str, OperatorResult] = {}
        self._lock = threading.Lock()

    def put(self, exec_id: str, result: OperatorResult) -> None:
        with self._lock:
            if exec_id in self._data:
                raise ExecutionError(f"buffer already holds {exec_id}")
            self._data[exec_id] = result

    def get(self, exec_id: str) -> Optional[OperatorResult]:
        with self._lock:
            return self._data.get(exec_id)

    def clear(self) -> None:
        with self._lock:
            self._data.clear()


class ResultCache:
    """Content-addressed memo store: append-only file + in-memory index."""

    def __init__(self, path: str | Path | None = None, enabled: bool = True):
        self.path = Path(path) if path is not None else None
        self.enabled = enabled
        self._index: dict[str, dict] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0
        if self.path is not None and self.path.exists():
            try:
                for line in self.path.read_text(encoding="utf-8").splitlines():
                    if line.strip():
                        rec = json.loads(line)
                        self._index[rec["key"]] = rec
            except (OSError, json.JSONDecodeError, KeyError) as exc:
                log.warning("cache file unreadable, starting cold: %s", exc)
                self._index = {}

    @staticmethod
    def make_key(op_name: str, params: dict, input_digests: Sequence[str],
                 corpus_version: str) -> str:
        blob = json.dumps({"op": op_name, "params": params,
                           "inputs": list(input_digests),
                           "corpus": corpus_version},
                          sort_keys=True, ensure_ascii=False, default=str)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def get(self, key: str) -> Optional[OperatorResult]:
        if not self.enabled:
            return None
        with self._lock:
            rec = self._index.get(key)
            if rec is None:
                self.misses += 1
                return None
            self.hits += 1
            return result_from_dict(rec["value"])

    def put(self, key: str, result: OperatorResult) -> OperatorResult:
        """Atomic get-or-insert: first writer wins, losers adopt the stored value."""
        if not self.enabled:
            return result
        with self._lock:
            existing = self._index.get(key)
            if existing is not None:
                return result_from_dict(existing["value"])
            rec = {"key": key, "value": result_to_dict(result),
                   "created_at": time.time()}
            self._index[key] = rec
            if self.path is not None:
                try:
                    with self.path.open("a", encoding="utf-8") as fh:
                        fh.write(json.dumps(rec, ensure_ascii=False,
                                            default=str) + "\n")
                except OSError as exc:
                    log.warning("cache write failed (degrading to memory): %s", exc)
            return result

    def __len__(self) -> int:
        with self._lock:
            return len(self._index)


# -- scheduler core ---------------------------------------------------------------

def fetch_inputs(node: ExecutionNode, buffer: Buffer,
                 cache: ResultCache | None,
                 graph: ExecutionGraph) -> list[OperatorResult]:
    """Resolve a node's inputs: buffer first, then the persistent cache via
    the upstream's recorded key. Source-less operators return no inputs and
    read the storage layer (graph, indexes) through their context instead.
    A miss is an engine bug and fails hard."""
    inputs: list[OperatorResult] = []
    for upstream_id in node.upstream:
        value = buffer.get(upstream_id)
        if value is None and cache is not None:
            upstream = graph.nodes.get(upstream_id)
            if upstream is not None and upstream.cache_key:
                value = cache.get(upstream.cache_key)
        if value is None:
            raise ExecutionError(
                f"missing input {upstream_id} for {node.exec_id}")
        inputs.append(value)
    return inputs


def run_graph(graph: ExecutionGraph,
              run_node: Callable[[ExecutionNode, list[OperatorResult]], OperatorResult],
              buffer: Buffer, max_parallel: int = 4,
              cache: ResultCache | None = None) -> dict[str, str]:
    """Dependency-counted parallel dispatch.

    Returns final status per exec id. ``run_node`` is called only when every
    upstream is done/cache-hit (violations raise). A failed node marks its
    downstream subgraph failed; independent branches continue.
    """
    if max_parallel < 1:
        raise ExecutionError("max_parallel must be >= 1")
    lock = threading.Lock()
    ready: "queue.Queue[Optional[str]]" = queue.Queue()
    dep = {}
    remaining = 0
    done_states = ("done", "cache-hit")

    with lock:
        for node in graph.nodes.values():
            if node.status in done_states:
                continue
            dep[node.exec_id] = sum(
                1 for u in node.upstream
                if graph.nodes[u].status not in done_states)
            remaining += 1
        for exec_id, count in dep.items():
            if count == 0:
                graph.nodes[exec_id].set_status("ready")
                ready.put(exec_id)
    if remaining == 0:
        return {nid: n.status for nid, n in graph.nodes.items()}

    all_done = threading.Event()

    def fail_downstream(exec_id: str) -> int:
        """Transitively mark downstream failed; returns count newly settled."""
        settled = 0
        stack = list(graph.downstream.get(exec_id, []))
        while stack:
            nid = stack.pop()
            node = graph.nodes[nid]
            if node.status in ("failed",) + done_states:
                continue
            node.set_status("failed")
            node.error = f"upstream {exec_id} failed"
            settled += 1
            stack.extend(graph.downstream.get(nid, []))
        return settled

    def complete(exec_id: str, failed: bool) -> None:
        nonlocal remaining
        with lock:
            remaining -= 1
            if failed:
                remaining -= fail_downstream(exec_id)
            else:
                for down_id in graph.downstream.get(exec_id, []):
                    if down_id not in dep:
                        continue
                    dep[down_id] -= 1
                    if dep[down_id] == 0 and graph.nodes[down_id].status == "pending":
                        graph.nodes[down_id].set_status("ready")
                        ready.put(down_id)
            if remaining <= 0:
                all_done.set()
                for _ in range(max_parallel):
                    ready.put(None)

    def worker() -> None:
        while True:
            exec_id = ready.get()
            if exec_id is None:
                return
            node = graph.nodes[exec_id]
            if node.status == "failed":  # settled while queued
                continue
            violated = [u for u in node.upstream
                        if graph.nodes[u].status not in done_states]
            if violated:  # engine bug guard: must never trigger
                node.set_status("failed")
                node.error = f"dependency violation: {violated}"
                log.error("node %s dispatched before upstream %s",
                          exec_id, violated)
                complete(exec_id, failed=True)
                continue
            try:
                inputs = fetch_inputs(node, buffer, cache, graph)
            except ExecutionError as exc:
                node.set_status("failed")
                node.error = str(exc)
                complete(exec_id, failed=True)
                continue
            try:
                result = run_node(node, inputs)
                buffer.put(node.exec_id, result)
                if node.status != "cache-hit":
                    node.set_status("done")
                complete(exec_id, failed=False)
            except Exception as exc:  # noqa: BLE001 - per-node failures recorded
                node.set_status("failed")
                node.error = f"{type(exc).__name__}: {exc}"
                log.debug("node %s failed: %s", exec_id, exc)
                complete(exec_id, failed=True)

    threads = [threading.Thread(target=worker, daemon=True)
               for _ in range(max_parallel)]
    for t in threads:
        t.start()
    all_done.wait()
    for t in threads:
        t.join()
    return {nid: n.status for nid, n in graph.nodes.items()}


# -- unfolding ---------------------------------------------------------------------

def _topo_order(steps: list[PlanStep]) -> list[PlanStep]:
    by_id = {s.step_id: s for s in steps}
    seen: dict[str, int] = {}
    order: list[PlanStep] = []

    def visit(sid: str) -> None:
        state = seen.get(sid, 0)
        if state == 2:
            return
        if state == 1:
            raise ExecutionError("plan contains a cycle")
        seen[sid] = 1
        for upstream in by_id[sid].inputs:
            if upstream in by_id:
                visit(upstream)
        seen[sid] = 2
        order.append(by_id[sid])

    for step in steps:
        visit(step.step_id)
    return order


def unfold(plan: Plan, scope_results: Sequence[Any],
           scope_nodes: Sequence[ExecutionNode] = ()) -> ExecutionGraph:
    """Expand instance steps into one node per scope item; group steps single.

    ``scope_nodes`` are pre-completed nodes from scope execution, included so
    traces reconstruct the full DAG.
    """
    graph = ExecutionGraph()
    scope_ids = set(plan.scope_step_ids)
    scope_terminal_exec: Optional[str] = None
    for node in scope_nodes:
        graph.add(node)
        scope_terminal_exec = node.exec_id

    task_steps = [s for s in plan.steps if s.step_id not in scope_ids]
    exec_ids_of: dict[str, list[str]] = {}
    n_items = len(scope_results)

    for step in _topo_order(task_steps):
        upstream_groups: list[list[str]] = []
        consumes_scope = False
        for input_id in step.inputs:
            if input_id in scope_ids:
                consumes_scope = True
            else:
                upstream_groups.append(exec_ids_of[input_id])

        if step.execution_mode == "instance":
            ids = []
            for i in range(n_items):
                upstream = []
                if consumes_scope and scope_terminal_exec is not None:
                    upstream.append(scope_terminal_exec)
                for group in upstream_groups:
                    if len(group) == n_items:
                        upstream.append(group[i])  # per-item chain
                    else:
                        upstream.extend(group)
                node = ExecutionNode(
                    exec_id=f"{step.step_id}#{i}", origin_step_id=step.step_id,
                    op_name=step.op_name, params=dict(step.params),
                    execution_mode="instance", instance_index=i,
                    item=scope_results[i], upstream=upstream)
                graph.add(node)
                ids.append(node.exec_id)
            exec_ids_of[step.step_id] = ids
        else:
            upstream = []
            if consumes_scope and scope_terminal_exec is not None:
                upstream.append(scope_terminal_exec)
            for group in upstream_groups:
                upstream.extend(group)
            node = ExecutionNode(
                exec_id=step.step_id, origin_step_id=step.step_id,
                op_name=step.op_name, params=dict(step.params),
                execution_mode=step.execution_mode, upstream=upstream)
            graph.add(node)
            exec_ids_of[step.step_id] = [node.exec_id]

    for node in graph.nodes.values():
        node.dep_count = len(node.upstream)
    terminal_steps = [sid for sid in plan.terminal_ids if sid not in scope_ids]
    graph.terminals = [eid for sid in terminal_steps
                       for eid in exec_ids_of.get(sid, [])]
    if not graph.terminals and scope_terminal_exec is not None:
        graph.terminals = [scope_terminal_exec]
    return graph


# -- tracing ------------------------------------------------------------------------

VOLATILE_TRACE_FIELDS = ("timestamp", "wall_time_ms", "latency_ms", "created_at")


class TraceStore:
    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def save(self, execution_id: str, document: dict) -> None:
        path = self.directory / f"{execution_id}.json"
        path.write_text(json.dumps(document, indent=2, ensure_ascii=False,
                                   sort_keys=True, default=str),
                        encoding="utf-8")

    def load(self, execution_id: str) -> dict:
        path = self.directory / f"{execution_id}.json"
        if not path.exists():
            raise NotFoundError(f"unknown execution {execution_id!r}")
        return json.loads(path.read_text(encoding="utf-8"))

    def canonical(self, execution_id: str) -> str:
        """Deterministic trace export: volatile timing fields dropped."""
        document = self.load(execution_id)

        def scrub(value):
            if isinstance(value, dict):
                return {k: scrub(v) for k, v in sorted(value.items())
                        if k not in VOLATILE_TRACE_FIELDS}
            if isinstance(value, list):
                return [scrub(v) for v in value]
            return value

        doc = scrub(document)
        doc.pop("execution_id", None)
        return json.dumps(doc, sort_keys=True, ensure_ascii=False, indent=1)


# -- plan runner ---------------------------------------------------------------------

@dataclass
class ExecutionOutcome:
    execution_id: str
    statuses: dict[str, str]
    terminals: dict[str, list[dict]]   # terminal step id -> results (dict form)
    failures: dict[str, str]
    trace: dict

    @property
    def ok(self) -> bool:
        return not self.failures


class PlanRunner:
    """Executes validated plans against an OperatorContext."""

    def __init__(self, ctx: OperatorContext, cache: ResultCache | None = None,
                 trace_store: TraceStore | None = None, max_parallel: int = 4,
                 analytics: Optional[dict[str, Callable]] = None):
        self.ctx = ctx
        self.cache = cache if cache is not None else ResultCache(enabled=False)
        self.trace_store = trace_store
        self.max_parallel = max_parallel
        self.analytics = analytics or {}
        self._executions: dict[str, dict] = {}

    # -- node dispatch ----------------------------------------------------

    def _entity_items(self, inputs: list[OperatorResult],
                      node: ExecutionNode) -> list:
        items: list = []
        if node.execution_mode == "instance" and node.item is not None:
            items.append(node.item)
        for res in inputs:
            if res.kind is PayloadKind.ENTITY_LIST:
                for item in res.value:
                    if item not in items:
                        items.append(item)
        return items

    def _document_of(self, node: ExecutionNode,
                     inputs: list[OperatorResult]) -> Optional[str]:
        if node.params.get("document_id"):
            return node.params["document_id"]
        if isinstance(node.item, str):
            return node.item
        for res in inputs:
            if res.kind is PayloadKind.ENTITY_LIST and res.value:
                return res.value[0]
        return None

    def execute_node(self, node: ExecutionNode,
                     inputs: list[OperatorResult],
                     ctx: OperatorContext) -> OperatorResult:
        op = node.op_name
        params = node.params
        values = [r.value for r in inputs]
        provenance = [p for r in inputs for p in r.provenance]

        if op == "Search":
            return op_search(ctx, **params)
        if op == "FindNode":
            return op_find_node(ctx, node_id=params.get("node_id"),
                                node_description=params.get("node_description"))
        if op == "Traverse":
            start = self._entity_items(inputs, node)
            return op_traverse(ctx, start, params["traversal_path"])
        if op == "Retrieve":
            document = self._document_of(node, inputs)
            if document is None:
                raise ExecutionError("Retrieve has no document to read")
            return op_retrieve(ctx, document, params["section_tags"])
        if op == "Extract":
            source_text = None
            for res in inputs:
                if res.kind is PayloadKind.TEXT:
                    source_text = res.value
                    break
            document = self._document_of(node, inputs)
            return op_extract(
                ctx, params["extract_instruction"], document_id=document,
                section_tags=params.get("section_tags"),
                source_text=source_text, query=params.get("query", ""),
                detail_level=params.get("detail_level", "short"))
        if op == "Summarize":
            return op_summarize(ctx, values or ([node.item] if node.item else []),
                                detail_level=params.get("detail_level", "short"),
                                focus=params.get("focus", ""),
                                provenance=provenance)
        if op == "Check":
            return op_check(ctx, values, params["check_instruction"],
                            provenance=provenance)
        if op == "Verify":
            evidence = params.get("evidence")
            if evidence is None:
                texts = [r.value for r in inputs if r.kind is PayloadKind.TEXT]
                evidence = "\n".join(str(t) for t in texts)
            return op_verify(ctx, params["claim"], evidence)
        if op == "Rank":
            flat: list = []
            for value in values:
                if isinstance(value, list):
                    flat.extend(value)
                else:
                    flat.append(value)
            return op_rank(ctx, flat, params["rank_instruction"],
                           provenance=provenance)
        if op == "GroupBy":
            return op_group_by(ctx, self._entity_items(inputs, node),
                               params["grouping_key"])
        if op == "Aggregate":
            if len(values) == 1 and isinstance(values[0], dict):
                target: Any = values[0]
            else:
                target = self._entity_items(inputs, node)
            return op_aggregate(ctx, target, params["aggregation_instruction"])
        if op == "Filter":
            if len(inputs) == 1 and inputs[0].kind is PayloadKind.MATRIX:
                return op_filter(ctx, [inputs[0].value], params["filter_instruction"])
            return op_filter(ctx, self._entity_items(inputs, node),
                             params["filter_instruction"])
        if op == "Generate":
            return op_generate(ctx, values, params["generation_instruction"],
                               provenance=provenance)
        if op == "MatrixConstruct":
            topic = params.get("topic_node_id")
            if topic is None:
                items = self._entity_items(inputs, node)
                topic = items[0] if items else None
            return op_matrix_construct(ctx, topic)
        if op in self.analytics:
            return self.analytics[op](ctx, node, inputs)
        raise ExecutionError(f"no executor for operator {op!r}")

    # -- cache-aware node runner --------------------------------------------

    def _run_node_cached(self, node: ExecutionNode,
                         inputs: list[OperatorResult],
                         corpus_version: str,
                         node_stats: dict[str, Accounting]) -> OperatorResult:
        key_params = dict(node.params)
        if node.item is not None:
            key_params["__item__"] = node.item
        node.cache_key = ResultCache.make_key(
            node.op_name, key_params, [result_digest(r) for r in inputs],
            corpus_version)
        cached = self.cache.get(node.cache_key)
        if cached is not None:
            node.set_status("cache-hit")
            return cached
        node.set_status("running")
        tally = Accounting()
        node_stats[node.exec_id] = tally
        ctx = OperatorContext(self.ctx.graph, self.ctx.llm.with_tally(tally),
                              self.ctx.search, self.ctx.retrieval_cfg)
        result = self.execute_node(node, inputs, ctx)
        expected = CATALOG.get(node.op_name)
        if expected is not None and result.kind is not expected.output_kind:
            raise ExecutionError(
                f"{node.op_name} produced {result.kind.value}, declared "
                f"{expected.output_kind.value}")
        return self.cache.put(node.cache_key, result)

    # -- full plan execution ---------------------------------------------------

    def execute_scope(self, plan: Plan, corpus_version: str,
                      node_stats: dict[str, Accounting],
                      buffer: Buffer) -> tuple[list[ExecutionNode], list]:
        """Run the scope sub-plan to completion before unfolding."""
        scope_steps = [s for s in plan.steps if s.step_id in plan.scope_step_ids]
        nodes: list[ExecutionNode] = []
        results: dict[str, OperatorResult] = {}
        for step in _topo_order(scope_steps):
            node = ExecutionNode(exec_id=step.step_id,
                                 origin_step_id=step.step_id,
                                 op_name=step.op_name, params=dict(step.params),
                                 execution_mode="n/a",
                                 upstream=list(step.inputs))
            node.set_status("ready")
            inputs = [results[i] for i in step.inputs]
            result = self._run_node_cached(node, inputs, corpus_version,
                                           node_stats)
            if node.status != "cache-hit":
                node.set_status("done")
            results[step.step_id] = result
            buffer.put(node.exec_id, result)
            nodes.append(node)
        scope_items = []
        if nodes:
            terminal = results[nodes[-1].exec_id]
            if isinstance(terminal.value, list):
                scope_items = list(terminal.value)
        return nodes, scope_items

    def execute(self, plan: Plan, execution_id: str | None = None,
                max_parallel: int | None = None) -> ExecutionOutcome:
        execution_id = execution_id or uuid.uuid4().hex
        max_parallel = max_parallel or self.max_parallel
        corpus_version = self.ctx.graph.corpus_version()
        buffer = Buffer()
        node_stats: dict[str, Accounting] = {}
        started = time.time()

        scope_failed = False
        scope_nodes: list[ExecutionNode] = []
        scope_items: list = []
        try:
            scope_nodes, scope_items = self.execute_scope(
                plan, corpus_version, node_stats, buffer)
        except Exception as exc:  # noqa: BLE001 - scope failure aborts the run
            scope_failed = True
            failed_step = plan.scope_step_ids[0] if plan.scope_step_ids else "scope"
            node = ExecutionNode(exec_id=failed_step, origin_step_id=failed_step,
                                 op_name="scope", upstream=[])
            node.set_status("failed")
            node.error = f"{type(exc).__name__}: {exc}"
            scope_nodes = [node]

        if scope_failed:
            graph = ExecutionGraph()
            for node in scope_nodes:
                graph.add(node)
            statuses = {n.exec_id: n.status for n in scope_nodes}
        else:
            graph = unfold(plan, scope_items, scope_nodes)

            def run_node(node: ExecutionNode,
                         inputs: list[OperatorResult]) -> OperatorResult:
                return self._run_node_cached(node, inputs, corpus_version,
                                             node_stats)

            statuses = run_graph(graph, run_node, buffer,
                                 max_parallel=max_parallel, cache=self.cache)

        terminals: dict[str, list[dict]] = {}
        scope_ids = set(plan.scope_step_ids)
        terminal_steps = [sid for sid in plan.terminal_ids
                          if sid not in scope_ids] or list(plan.terminal_ids)
        for sid in terminal_steps:
            outputs = []
            for eid in graph.terminals:
                node = graph.nodes[eid]
                if node.origin_step_id == sid:
                    value = buffer.get(eid)
                    if value is not None:
                        outputs.append(result_to_dict(value))
            terminals[sid] = outputs

        failures = {nid: node.error for nid, node in graph.nodes.items()
                    if node.status == "failed"}
        records = []
        for eid in sorted(graph.nodes):
            node = graph.nodes[eid]
            value = buffer.get(eid)
            stats = node_stats.get(eid)
            summary = stats.summary() if stats else {
                "input_tokens": 0, "output_tokens": 0, "call_count": 0,
                "embed_count": 0, "wall_time_ms": 0.0}
            records.append({
                "exec_id": eid,
                "origin_step_id": node.origin_step_id,
                "op_name": node.op_name,
                "instance_index": node.instance_index,
                "dependencies": list(node.upstream),
                "status": node.status,
                "transitions": [{"status": s, "timestamp": t}
                                for s, t in node.transitions],
                "inputs_digest": hashlib.sha256(json.dumps(
                    [result_digest(buffer.get(u)) if buffer.get(u) else None
                     for u in node.upstream]).encode()).hexdigest(),
                "output_digest": result_digest(value) if value else None,
                "error": node.error,
                "tokens": {"input": summary["input_tokens"],
                           "output": summary["output_tokens"],
                           "calls": summary["call_count"],
                           "embeds": summary["embed_count"]},
                "wall_time_ms": summary["wall_time_ms"],
            })
        trace_doc = {
            "execution_id": execution_id,
            "plan": plan.to_dict(),
            "corpus_version": corpus_version,
            "records": records,
            "terminals": terminals,
            "statuses": statuses,
            "failures": failures,
            "wall_time_ms": (time.time() - started) * 1000.0,
        }
        if self.trace_store is not None:
            self.trace_store.save(execution_id, trace_doc)
        self._executions[execution_id] = trace_doc
        buffer.clear()
        return ExecutionOutcome(execution_id, statuses, terminals, failures,
                                trace_doc)

    def trace(self, execution_id: str) -> dict:
        if execution_id in self._executions:
            return self._executions[execution_id]
        if self.trace_store is not None:
            return self.trace_store.load(execution_id)
        raise NotFoundError(f"unknown execution {execution_id!r}")


def reconstruct_edges(trace_document: dict) -> list[tuple[str, str]]:
    """The annotated DAG is reconstructible from records alone."""
    edges = []
    for record in trace_document["records"]:
        for upstream in record["dependencies"]:
            edges.append((upstream, record["exec_id"]))
    return sorted(edges)
