"""The composable operator library and its catalog.

Each operator is a parameterized unit with a declared I/O signature executed
against an :class:`OperatorContext`. The catalog drives plan validation:
parameter schemas, admitted input kinds, output kind, and execution-mode
applicability all live here.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Optional, Sequence

from .errors import EvidenceIntegrityError, OperatorError, SchemaViolationError
from .graphstore import EdgeKind, Graph, Hop, NodeKind
from .ingest import CANONICAL_ORDER, SectionLabel
from .llm import LlmClient, PromptRequest, cosine
from .retrieval import RetrievalConfig, SearchBackend

log = logging.getLogger(__name__)


class PayloadKind(str, Enum):
    ENTITY_LIST = "EntityList"
    TEXT = "Text"
    STRUCTURED_RECORD = "StructuredRecord"
    TABLE_GRID = "TableGrid"
    RANKING = "Ranking"
    MATRIX = "Matrix"


@dataclass
class OperatorResult:
    kind: PayloadKind
    value: Any
    provenance: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self._has_content() and not self.provenance:
            raise OperatorError("content-bearing result requires provenance")

    def _has_content(self) -> bool:
        if self.value is None:
            return False
        if isinstance(self.value, (list, dict, str)) and not self.value:
            return False
        return True

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "value": self.value,
                "provenance": list(self.provenance)}


@dataclass
class OperatorContext:
    graph: Graph
    llm: LlmClient
    search: Optional[SearchBackend] = None
    retrieval_cfg: RetrievalConfig = field(default_factory=RetrievalConfig)


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    params: dict[str, dict]          # param name -> {"type", "required"}
    input_kinds: frozenset[PayloadKind]
    output_kind: PayloadKind
    execution_modes: frozenset[str]  # {"instance", "group"} or {"n/a"}
    composite: bool = False


def _entry(name, params, input_kinds, output, modes, composite=False):
    return CatalogEntry(name, params, frozenset(input_kinds), output,
                        frozenset(modes), composite)


ANY_KIND = set(PayloadKind)

CATALOG: dict[str, CatalogEntry] = {e.name: e for e in [
    _entry("Search",
           {"query": {"type": "str", "required": True},
            "candidates_per_query": {"type": "int", "required": False},
            "top_k": {"type": "int", "required": False}},
           set(), PayloadKind.ENTITY_LIST, {"n/a"}),
    _entry("FindNode",
           {"node_id": {"type": "str", "required": False},
            "node_description": {"type": "str", "required": False}},
           set(), PayloadKind.ENTITY_LIST, {"n/a"}),
    _entry("Traverse",
           {"traversal_path": {"type": "list", "required": True}},
           {PayloadKind.ENTITY_LIST}, PayloadKind.ENTITY_LIST, {"n/a"}),
    _entry("Retrieve",
           {"document_id": {"type": "str", "required": False},
            "section_tags": {"type": "list", "required": True}},
           {PayloadKind.ENTITY_LIST}, PayloadKind.TEXT,
           {"instance", "group"}),
    _entry("Extract",
           {"query": {"type": "str", "required": False},
            "document_id": {"type": "str", "required": False},
            "section_tags": {"type": "list", "required": False},
            "extract_instruction": {"type": "str", "required": True},
            "detail_level": {"type": "str", "required": False}},
           {PayloadKind.TEXT, PayloadKind.ENTITY_LIST},
           PayloadKind.STRUCTURED_RECORD, {"instance", "group"}),
    _entry("Summarize",
           {"detail_level": {"type": "str", "required": False},
            "focus": {"type": "str", "required": False}},
           {PayloadKind.TEXT, PayloadKind.STRUCTURED_RECORD,
            PayloadKind.ENTITY_LIST, PayloadKind.RANKING},
           PayloadKind.TEXT, {"instance", "group"}),
    _entry("Check",
           {"check_instruction": {"type": "str", "required": True}},
           {PayloadKind.TEXT, PayloadKind.STRUCTURED_RECORD},
           PayloadKind.TEXT, {"instance", "group"}),
    _entry("Verify",
           {"claim": {"type": "str", "required": True},
            "evidence": {"type": "str", "required": False}},
           {PayloadKind.TEXT, PayloadKind.STRUCTURED_RECORD},
           PayloadKind.TEXT, {"instance", "group"}),
    _entry("Rank",
           {"rank_instruction": {"type": "str", "required": True}},
           {PayloadKind.STRUCTURED_RECORD, PayloadKind.ENTITY_LIST,
            PayloadKind.TEXT},
           PayloadKind.RANKING, {"instance", "group"}),
    _entry("GroupBy",
           {"grouping_key": {"type": "str", "required": True}},
           {PayloadKind.ENTITY_LIST, PayloadKind.STRUCTURED_RECORD},
           PayloadKind.STRUCTURED_RECORD, {"instance", "group"}),
    _entry("Aggregate",
           {"aggregation_instruction": {"type": "dict", "required": True}},
           {PayloadKind.ENTITY_LIST, PayloadKind.STRUCTURED_RECORD},
           PayloadKind.STRUCTURED_RECORD, {"instance", "group"}),
    _entry("Filter",
           {"filter_instruction": {"type": "str", "required": True}},
           {PayloadKind.ENTITY_LIST, PayloadKind.MATRIX},
           PayloadKind.ENTITY_LIST, {"instance", "group"}),
    _entry("Generate",
           {"generation_instruction": {"type": "str", "required": True}},
           ANY_KIND, PayloadKind.TEXT, {"instance", "group"}),
    _entry("MatrixConstruct",
           {"topic_node_id": {"type": "str", "required": False}},
           {PayloadKind.ENTITY_LIST}, PayloadKind.MATRIX,
           {"instance", "group"}),
    # Composite catalog entries backing the topic-level plan templates; they
    # delegate to the analytics pipelines built from the primitives above.
    _entry("TrendAnalysis",
           {"topic_node_id": {"type": "str", "required": False},
            "node_description": {"type": "str", "required": False}},
           {PayloadKind.ENTITY_LIST}, PayloadKind.STRUCTURED_RECORD,
           {"group"}, composite=True),
    _entry("IdeaExploration",
           {"topic_node_id": {"type": "str", "required": False},
            "node_description": {"type": "str", "required": False},
            "top_k": {"type": "int", "required": False}},
           {PayloadKind.ENTITY_LIST}, PayloadKind.STRUCTURED_RECORD,
           {"group"}, composite=True),
    _entry("MilestoneSelection",
           {"topic_node_id": {"type": "str", "required": False},
            "node_description": {"type": "str", "required": False},
            "top_k": {"type": "int", "required": False}},
           {PayloadKind.ENTITY_LIST}, PayloadKind.STRUCTURED_RECORD,
           {"group"}, composite=True),
]}

SCOPE_OPERATORS = ("Search", "FindNode", "Traverse")


def catalog_document() -> dict:
    """The catalog in file form, for planner validation and docs."""
    return {name: {
        "params": entry.params,
        "input_kinds": sorted(k.value for k in entry.input_kinds),
        "output_kind": entry.output_kind.value,
        "execution_modes": sorted(entry.execution_modes),
        "composite": entry.composite,
    } for name, entry in sorted(CATALOG.items())}


# -- knowledge access ---------------------------------------------------------

def op_search(ctx: OperatorContext, query: str,
              candidates_per_query: int | None = None,
              top_k: int | None = None) -> OperatorResult:
    if ctx.search is None:
        raise OperatorError("search backend not configured")
    cfg = RetrievalConfig(
        candidates_per_query or ctx.retrieval_cfg.candidates_per_query,
        top_k or ctx.retrieval_cfg.top_k)
    ids = ctx.search.search(query, cfg)
    return OperatorResult(PayloadKind.ENTITY_LIST, ids,
                          provenance=["search"] + ids)


def op_find_node(ctx: OperatorContext, node_id: str | None = None,
                 node_description: str | None = None) -> OperatorResult:
    if (node_id is None) == (node_description is None):
        raise OperatorError(
            "FindNode takes exactly one of node_id / node_description")
    if node_id is not None:
        node = ctx.graph.get_node(node_id)  # raises MissingNodeError
        return OperatorResult(PayloadKind.ENTITY_LIST, [node.id],
                              provenance=[f"find_node:{node.id}"])
    candidates = [n for kind in (NodeKind.PROBLEM, NodeKind.METHOD)
                  for n in ctx.graph.nodes(kind) if n.embedding is not None]
    if not candidates:
        raise OperatorError("no taxonomy nodes with description embeddings")
    probe = ctx.llm.embed(node_description)
    scored = sorted(candidates,
                    key=lambda n: (-cosine(n.embedding, probe), n.id))
    best = scored[0]
    return OperatorResult(PayloadKind.ENTITY_LIST, [best.id],
                          provenance=[f"find_node:{best.id}"])


def op_traverse(ctx: OperatorContext, start: Sequence[str],
                traversal_path: Sequence[dict | Hop]) -> OperatorResult:
    hops = [h if isinstance(h, Hop) else
            Hop(EdgeKind(h["edge_kind"]), h["direction"], NodeKind(h["target_kind"]))
            for h in traversal_path]
    nodes = ctx.graph.execute_traversal(list(start), hops)
    ids = [n.id for n in nodes]
    prov = [f"start:{s}" for s in start] + [
        f"hop:{h.edge_kind.value}:{h.direction}:{h.target_kind.value}" for h in hops]
    return OperatorResult(PayloadKind.ENTITY_LIST, ids, provenance=prov or ["traverse"])


# -- knowledge navigation -------------------------------------------------------

def op_retrieve(ctx: OperatorContext, document_id: str,
                section_tags: Sequence[str]) -> OperatorResult:
    if not ctx.graph.has_node(document_id):
        raise OperatorError(f"unknown document {document_id!r}")
    labels = [SectionLabel(tag) for tag in section_tags]
    ordered = [lab for lab in CANONICAL_ORDER if lab in labels]
    parts: list[str] = []
    provenance: list[str] = []
    for label in ordered:
        sid = f"{document_id}/section/{label.value}"
        if ctx.graph.has_node(sid):
            parts.append(ctx.graph.get_node(sid).attrs.get("body", ""))
            provenance.append(f"{document_id}:{label.value}")
        else:
            provenance.append(f"{document_id}:{label.value}:absent")
    return OperatorResult(PayloadKind.TEXT, "\n\n".join(p for p in parts if p),
                          provenance=provenance)


# -- semantic content processing ---------------------------------------------------

DETAIL_LEVELS = ("short", "detailed", "detailed_with_evidence")

_EXTRACT_SYSTEM = (
    "You extract structured information from paper text following the "
    "instruction. Respond with JSON {\"record\": <object>, \"evidence\": "
    "[<verbatim source spans>]} (evidence may be empty unless the detail "
    "level asks for it).")


def op_extract(ctx: OperatorContext, extract_instruction: str,
               document_id: str | None = None,
               section_tags: Sequence[str] | None = None,
               source_text: str | None = None, query: str = "",
               detail_level: str = "short") -> OperatorResult:
    if detail_level not in DETAIL_LEVELS:
        raise OperatorError(f"unknown detail_level {detail_level!r}")
    provenance: list[str] = []
    if source_text is None:
        if document_id is None:
            raise OperatorError("Extract needs source text or a document id")
        retrieved = op_retrieve(ctx, document_id,
                                section_tags or [SectionLabel.EXPERIMENTS.value])
        source_text = retrieved.value
        provenance.extend(retrieved.provenance)
    elif document_id is not None:
        provenance.append(document_id)
    if not source_text:
        return OperatorResult(PayloadKind.STRUCTURED_RECORD, {},
                              provenance=provenance + ["absent"])
    user = json.dumps({"query": query, "instruction": extract_instruction,
                       "detail_level": detail_level, "text": source_text},
                      ensure_ascii=False, sort_keys=True)
    payload = ctx.llm.complete_json(
        PromptRequest.build(user=user, system=_EXTRACT_SYSTEM,
                            response_schema="extract"),
        required=("record",))
    evidence = payload.get("evidence", [])
    if detail_level == "detailed_with_evidence":
        for span in evidence:
            if span not in source_text:
                raise EvidenceIntegrityError(
                    f"evidence span not found verbatim: {span[:80]!r}")
    record = payload["record"]
    if not isinstance(record, dict):
        raise SchemaViolationError("record must be an object",
                                   raw=json.dumps(payload))
    return OperatorResult(PayloadKind.STRUCTURED_RECORD,
                          {"record": record, "evidence": evidence},
                          provenance=provenance or ["extract"])


def _render_input(value: Any) -> str:
    if isinstance(value, str):
        return value
    return json.dumps(value, ensure_ascii=False, sort_keys=True, default=str)


def op_summarize(ctx: OperatorContext, inputs: Sequence[Any],
                 detail_level: str = "short", focus: str = "",
                 provenance: Sequence[str] = ()) -> OperatorResult:
    if not inputs:
        raise OperatorError("Summarize requires non-empty input")
    if detail_level not in DETAIL_LEVELS:
        raise OperatorError(f"unknown detail_level {detail_level!r}")
    user = json.dumps({"detail_level": detail_level, "focus": focus,
                       "inputs": [_render_input(v) for v in inputs]},
                      ensure_ascii=False, sort_keys=True)
    text, _ = ctx.llm.complete(PromptRequest.build(
        user=user, system="Summarize the inputs into one coherent overview."))
    prov = list(provenance) or [f"input:{i}" for i in range(len(inputs))]
    return OperatorResult(PayloadKind.TEXT, text, provenance=prov)


def op_check(ctx: OperatorContext, inputs: Sequence[Any], check_instruction: str,
             provenance: Sequence[str] = ()) -> OperatorResult:
    if len(inputs) < 2:
        raise OperatorError("Check requires at least two peer inputs")
    user = json.dumps({"instruction": check_instruction,
                       "sources": [_render_input(v) for v in inputs]},
                      ensure_ascii=False, sort_keys=True)
    text, _ = ctx.llm.complete(PromptRequest.build(
        user=user,
        system=("Compare the peer sources; report agreements and "
                "disagreements with per-source attribution.")))
    prov = list(provenance) or [f"peer:{i}" for i in range(len(inputs))]
    return OperatorResult(PayloadKind.TEXT, text, provenance=prov)


VERDICTS = ("supported", "contradicted", "insufficient")

_VERIFY_SYSTEM = (
    "You fact-check a claim against evidence. Respond with JSON {\"verdict\": "
    "\"supported\"|\"contradicted\"|\"insufficient\", \"justification\": ..}.")


def op_verify(ctx: OperatorContext, claim: str, evidence: str) -> OperatorResult:
    if not claim or not evidence:
        raise OperatorError("Verify requires non-empty claim and evidence")
    payload = ctx.llm.complete_json(
        PromptRequest.build(
            user=json.dumps({"claim": claim, "evidence": evidence},
                            sort_keys=True, ensure_ascii=False),
            system=_VERIFY_SYSTEM, response_schema="verify"),
        required=("verdict",))
    verdict = payload["verdict"]
    if verdict not in VERDICTS:
        raise SchemaViolationError(f"verdict {verdict!r} outside enumeration",
                                   raw=json.dumps(payload))
    text = f"{verdict}: {payload.get('justification', '')}"
    return OperatorResult(PayloadKind.TEXT, text, provenance=["claim", "evidence"])


_RANK_SYSTEM = (
    "You identify rankable entities and their criterion values from the "
    "input. Respond with JSON {\"entities\": [{\"id\": .., \"value\": "
    "<number or null>, \"note\": ..}]} listing every entity exactly once.")


def _numeric_pairs(inputs: Sequence[Any]) -> Optional[list[tuple[str, float]]]:
    pairs = []
    for item in inputs:
        if (isinstance(item, (list, tuple)) and len(item) == 2
                and isinstance(item[1], (int, float))):
            pairs.append((str(item[0]), float(item[1])))
        elif (isinstance(item, dict) and set(item) >= {"id", "value"}
              and isinstance(item["value"], (int, float))):
            pairs.append((str(item["id"]), float(item["value"])))
        else:
            return None
    return pairs


def op_rank(ctx: OperatorContext, inputs: Sequence[Any], rank_instruction: str,
            provenance: Sequence[str] = ()) -> OperatorResult:
    if not inputs:
        raise OperatorError("Rank requires rankable entities")
    pairs = _numeric_pairs(inputs)
    if pairs is None:
        user = json.dumps({"instruction": rank_instruction,
                           "inputs": [_render_input(v) for v in inputs]},
                          ensure_ascii=False, sort_keys=True)
        payload = ctx.llm.complete_json(
            PromptRequest.build(user=user, system=_RANK_SYSTEM,
                                response_schema="rank"),
            required=("entities",))
        rendered = json.dumps(inputs, ensure_ascii=False, default=str)
        pairs = []
        seen = set()
        for entry in payload["entities"]:
            eid = str(entry.get("id"))
            if eid in seen:
                raise SchemaViolationError(f"entity {eid!r} ranked twice",
                                           raw=json.dumps(payload))
            if eid not in rendered:
                raise SchemaViolationError(
                    f"entity {eid!r} not present in input", raw=json.dumps(payload))
            seen.add(eid)
            value = entry.get("value")
            pairs.append((eid, float(value) if value is not None else float("-inf")))
    ranked = sorted(pairs, key=lambda kv: (-kv[1], kv[0]))
    value = [{"id": eid, "value": None if v == float("-inf") else v}
             for eid, v in ranked]
    prov = list(provenance) or [eid for eid, _ in ranked]
    return OperatorResult(PayloadKind.RANKING, value, provenance=prov)


# -- relational-style data manipulation ---------------------------------------------

MISSING_GROUP = "∅"


def _attr_of(ctx: OperatorContext, item: Any, key: str) -> Any:
    if isinstance(item, dict):
        return item.get(key)
    if isinstance(item, str) and ctx.graph.has_node(item):
        return ctx.graph.get_node(item).attrs.get(key)
    return None


def op_group_by(ctx: OperatorContext, inputs: Sequence[Any],
                grouping_key: str) -> OperatorResult:
    if not grouping_key:
        raise OperatorError("GroupBy requires a grouping key")
    groups: dict[str, list[Any]] = {}
    for item in inputs:
        value = _attr_of(ctx, item, grouping_key)
        groups.setdefault(MISSING_GROUP if value is None else str(value),
                          []).append(item)
    return OperatorResult(PayloadKind.STRUCTURED_RECORD, groups,
                          provenance=[f"group_by:{grouping_key}"] if groups else [])


AGG_FUNCTIONS = ("COUNT", "MAX", "AVG")


def _aggregate_values(func: str, values: list[Any]) -> float | int:
    if func == "COUNT":
        return len(values)
    numeric = [v for v in values if isinstance(v, (int, float))]
    if len(numeric) != len(values) or not numeric:
        raise OperatorError(f"{func} requires a non-empty numeric target")
    if func == "MAX":
        return max(numeric)
    return sum(numeric) / len(numeric)


def op_aggregate(ctx: OperatorContext, inputs: Any,
                 aggregation_instruction: dict) -> OperatorResult:
    func = str(aggregation_instruction.get("function", "")).upper()
    if func not in AGG_FUNCTIONS:
        raise OperatorError(f"unknown aggregation function {func!r}")
    target = aggregation_instruction.get("target")

    def values_of(items: Sequence[Any]) -> list[Any]:
        if func == "COUNT" and not target:
            return list(items)
        return [_attr_of(ctx, item, target) for item in items]

    if isinstance(inputs, dict):  # grouped input aggregates per group
        result = {group: _aggregate_values(func, values_of(items))
                  for group, items in inputs.items()}
    else:
        result = {"value": _aggregate_values(func, values_of(list(inputs)))}
    return OperatorResult(PayloadKind.STRUCTURED_RECORD, result,
                          provenance=[f"aggregate:{func}"])


_COMPARISON_RE = re.compile(
    r"^\s*(\w+)\s*(>=|<=|!=|≠|≥|≤|=|<|>|contains)\s*(.+?)\s*$")

_OPS: dict[str, Callable[[Any, Any], bool]] = {
    "=": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    "≠": lambda a, b: a != b,
    "<": lambda a, b: a is not None and a < b,
    "<=": lambda a, b: a is not None and a <= b,
    "≤": lambda a, b: a is not None and a <= b,
    ">": lambda a, b: a is not None and a > b,
    ">=": lambda a, b: a is not None and a >= b,
    "≥": lambda a, b: a is not None and a >= b,
    "contains": lambda a, b: b in a if a is not None else False,
}


def parse_comparison(instruction: str) -> Optional[tuple[str, str, Any]]:
    m = _COMPARISON_RE.match(instruction)
    if not m:
        return None
    fld, op, raw = m.group(1), m.group(2), m.group(3).strip().strip("'\"")
    try:
        literal: Any = int(raw)
    except ValueError:
        try:
            literal = float(raw)
        except ValueError:
            literal = raw
    return fld, op, literal


_FILTER_SYSTEM = ("You decide whether an item satisfies a condition. Respond "
                  "with JSON {\"keep\": true|false}.")


def op_filter(ctx: OperatorContext, inputs: Sequence[Any],
              filter_instruction: str) -> OperatorResult:
    comparison = parse_comparison(filter_instruction)
    kept = []
    if comparison is not None:
        fld, op, literal = comparison
        for item in inputs:
            value = _attr_of(ctx, item, fld)
            if isinstance(literal, (int, float)) and isinstance(value, str):
                try:
                    value = float(value)
                except ValueError:
                    pass
            try:
                ok = _OPS[op](value, literal)
            except TypeError:
                ok = False
            if ok:
                kept.append(item)
    else:
        for item in inputs:
            payload = ctx.llm.complete_json(
                PromptRequest.build(
                    user=json.dumps({"condition": filter_instruction,
                                     "item": _render_input(item)},
                                    ensure_ascii=False, sort_keys=True),
                    system=_FILTER_SYSTEM, response_schema="filter"),
                required=("keep",))
            if bool(payload["keep"]):
                kept.append(item)
    return OperatorResult(PayloadKind.ENTITY_LIST, kept,
                          provenance=[filter_instruction] if kept else [])


# -- knowledge generation ----------------------------------------------------------

def op_generate(ctx: OperatorContext, inputs: Sequence[Any],
                generation_instruction: str,
                provenance: Sequence[str] = ()) -> OperatorResult:
    if not generation_instruction:
        raise OperatorError("Generate requires an instruction")
    user = json.dumps({"instruction": generation_instruction,
                       "inputs": [_render_input(v) for v in inputs]},
                      ensure_ascii=False, sort_keys=True)
    text, _ = ctx.llm.complete(PromptRequest.build(
        user=user, system="Produce the requested content from the inputs."))
    prov = list(provenance)
    if not prov:
        prov = [f"input:{i}" for i in range(len(inputs))] or ["instruction"]
    return OperatorResult(PayloadKind.TEXT, text, provenance=prov)


@dataclass
class ProblemMethodMatrix:
    rows: list[str]                       # problem node ids
    cols: list[str]                       # method node ids
    cells: dict[tuple[str, str], dict]    # (row, col) -> {papers, count, summary}

    def cell(self, row: str, col: str) -> dict:
        return self.cells[(row, col)]

    def to_dict(self) -> dict:
        return {"rows": self.rows, "cols": self.cols,
                "cells": [{"row": r, "col": c, **v}
                          for (r, c), v in sorted(self.cells.items())]}


def _leaves_under(graph: Graph, node_id: str, kind: NodeKind) -> list[str]:
    children = graph.neighbors(node_id, EdgeKind.CHILD_OF, "in", kind)
    if not children:
        return [node_id]
    out: list[str] = []
    for child in children:
        out.extend(_leaves_under(graph, child.id, kind))
    return sorted(out)


def _taxonomy_roots(graph: Graph, kind: NodeKind) -> list[str]:
    ids = graph.node_ids(kind)
    return [nid for nid in ids
            if not graph.neighbors(nid, EdgeKind.CHILD_OF, "out", kind)]


def op_matrix_construct(ctx: OperatorContext,
                        topic_node_id: str | None = None) -> OperatorResult:
    graph = ctx.graph
    if topic_node_id is not None:
        topic = graph.get_node(topic_node_id)
        if topic.kind is NodeKind.PROBLEM:
            problem_roots = [topic_node_id]
            method_roots = _taxonomy_roots(graph, NodeKind.METHOD)
        else:
            method_roots = [topic_node_id]
            problem_roots = _taxonomy_roots(graph, NodeKind.PROBLEM)
    else:
        problem_roots = _taxonomy_roots(graph, NodeKind.PROBLEM)
        method_roots = _taxonomy_roots(graph, NodeKind.METHOD)
    if not problem_roots or not method_roots:
        raise OperatorError("both taxonomies must be anchored in the graph")
    rows = sorted({leaf for root in problem_roots
                   for leaf in _leaves_under(graph, root, NodeKind.PROBLEM)})
    cols = sorted({leaf for root in method_roots
                   for leaf in _leaves_under(graph, root, NodeKind.METHOD)})
    papers_by_row = {r: {p.id for p in graph.neighbors(
        r, EdgeKind.ADDRESSES, "in", NodeKind.PAPER)} for r in rows}
    papers_by_col = {c: {p.id for p in graph.neighbors(
        c, EdgeKind.APPLIES, "in", NodeKind.PAPER)} for c in cols}
    cells = {}
    for r in rows:
        for c in cols:
            papers = sorted(papers_by_row[r] & papers_by_col[c])
            cells[(r, c)] = {"papers": papers, "count": len(papers),
                             "summary": ""}
    matrix = ProblemMethodMatrix(rows, cols, cells)
    return OperatorResult(PayloadKind.MATRIX, matrix,
                          provenance=rows + cols or ["matrix"])
