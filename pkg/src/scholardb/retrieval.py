"""Hybrid retrieval: BM25 over metadata fields, dense cosine over aspects,
min-max score fusion, provider reranking, and ranking-quality metrics.
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import RetrievalError, SchemaViolationError
from .graphstore import Graph, NodeKind
from .llm import LlmClient, PromptRequest

log = logging.getLogger(__name__)

METADATA_FIELDS = ("title", "authors", "affiliations", "publication_year", "venue")
ASPECT_FIELDS = ("research_topic", "problem_formulation", "proposed_method",
                 "experimental_datasets", "experimental_baselines",
                 "experimental_results")

BM25_K1 = 1.2
BM25_B = 0.75


@dataclass(frozen=True)
class YearRange:
    start: Optional[int] = None  # inclusive; None = unbounded
    end: Optional[int] = None

    def contains(self, year: Optional[int]) -> bool:
        # Papers without a year pass the filter (ingest gaps stay visible).
        if year is None:
            return True
        if self.start is not None and year < self.start:
            return False
        if self.end is not None and year > self.end:
            return False
        return True

    @property
    def unbounded(self) -> bool:
        return self.start is None and self.end is None


@dataclass
class DecomposedQuery:
    metadata_constraints: list[tuple[str, str]] = field(default_factory=list)
    aspect_intents: list[tuple[str, str]] = field(default_factory=list)
    year_range: YearRange = field(default_factory=YearRange)

    def validate(self) -> None:
        for fld, _ in self.metadata_constraints:
            if fld not in METADATA_FIELDS:
                raise SchemaViolationError(f"unknown metadata field {fld!r}")
        for aspect, _ in self.aspect_intents:
            if aspect not in ASPECT_FIELDS:
                raise SchemaViolationError(f"unknown aspect {aspect!r}")
        if not self.metadata_constraints and not self.aspect_intents and \
                self.year_range.unbounded:
            raise SchemaViolationError("query decomposed to nothing")


@dataclass
class ScoredCandidate:
    paper_id: str
    group_scores: dict[str, float] = field(default_factory=dict)
    combined: float = 0.0


@dataclass
class RetrievalConfig:
    candidates_per_query: int = 20
    top_k: int = 10


# -- query decomposition -----------------------------------------------------

_DECOMPOSE_SYSTEM = (
    "You parse a scholarly search query into structured parts. Respond with "
    "JSON {\"metadata_constraints\": [{\"field\": <one of title|authors|"
    "affiliations|publication_year|venue>, \"value\": <text>}], "
    "\"aspect_intents\": [{\"aspect\": <one of research_topic|"
    "problem_formulation|proposed_method|experimental_datasets|"
    "experimental_baselines|experimental_results>, \"text\": <text>}]}. "
    "Express year constraints as a publication_year constraint whose value is "
    "the year expression (e.g. 'since 2023', '2019', 'before 2021').")

_YEAR_SINGLE = re.compile(r"^\s*(\d{4})\s*$")
_YEAR_SINCE = re.compile(r"(?:since|after|from)\s+(\d{4})", re.IGNORECASE)
_YEAR_BEFORE = re.compile(r"(?:before|until|up to)\s+(\d{4})", re.IGNORECASE)
_YEAR_SPAN = re.compile(r"(\d{4})\s*[-–to]+\s*(\d{4})")


def normalize_year_expression(value: str) -> YearRange:
    """Closed-range normalization of year expressions like 'since 2023'."""
    value = str(value)
    m = _YEAR_SPAN.search(value)
    if m:
        return YearRange(int(m.group(1)), int(m.group(2)))
    m = _YEAR_SINCE.search(value)
    if m:
        return YearRange(int(m.group(1)), None)
    m = _YEAR_BEFORE.search(value)
    if m:
        return YearRange(None, int(m.group(1)))
    m = _YEAR_SINGLE.match(value)
    if m:
        year = int(m.group(1))
        return YearRange(year, year)
    raise SchemaViolationError(f"unparseable year expression {value!r}")


def decompose_query(query: str, llm: LlmClient) -> DecomposedQuery:
    if not query.strip():
        raise RetrievalError("query must be non-empty")
    payload = llm.complete_json(
        PromptRequest.build(user=query, system=_DECOMPOSE_SYSTEM,
                            response_schema="query_decomposition"),
        required=("metadata_constraints", "aspect_intents"))
    out = DecomposedQuery()
    for item in payload["metadata_constraints"]:
        fld, value = item.get("field"), item.get("value")
        if fld == "publication_year":
            rng = normalize_year_expression(value)
            out.year_range = YearRange(
                rng.start if rng.start is not None else out.year_range.start,
                rng.end if rng.end is not None else out.year_range.end)
        else:
            out.metadata_constraints.append((fld, str(value)))
    for item in payload["aspect_intents"]:
        out.aspect_intents.append((item.get("aspect"), str(item.get("text"))))
    out.validate()
    return out


def temporal_filter(papers: Sequence[str], year_of: dict[str, Optional[int]],
                    year_range: YearRange) -> list[str]:
    return [p for p in papers if year_range.contains(year_of.get(p))]


# -- lexical index -------------------------------------------------------------

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(str(text).lower())


class Bm25Index:
    """Per-field BM25 (k1=1.2, b=0.75) with idf = ln(1 + (N-df+.5)/(df+.5))."""

    def __init__(self):
        self._docs: dict[str, dict[str, list[str]]] = {}  # field -> id -> tokens
        self._df: dict[str, dict[str, int]] = {}
        self._avg_len: dict[str, float] = {}

    def build(self, field_texts: dict[str, dict[str, str]]) -> None:
        for fld, by_doc in field_texts.items():
            docs = {doc_id: tokenize(text) for doc_id, text in by_doc.items()}
            self._docs[fld] = docs
            df: dict[str, int] = {}
            for tokens in docs.values():
                for term in set(tokens):
                    df[term] = df.get(term, 0) + 1
            self._df[fld] = df
            lens = [len(t) for t in docs.values()]
            self._avg_len[fld] = (sum(lens) / len(lens)) if lens else 0.0

    def fields(self) -> list[str]:
        return sorted(self._docs)

    def search(self, field: str, value: str, k: int) -> list[tuple[str, float]]:
        if field not in self._docs:
            raise RetrievalError(f"unknown lexical field {field!r}")
        docs = self._docs[field]
        df = self._df[field]
        n_docs = len(docs)
        avg_len = self._avg_len[field] or 1.0
        query_terms = tokenize(value)
        scores: dict[str, float] = {}
        for doc_id, tokens in docs.items():
            score = 0.0
            length = len(tokens)
            for term in query_terms:
                tf = tokens.count(term)
                if tf == 0:
                    continue
                idf = math.log(1.0 + (n_docs - df[term] + 0.5) / (df[term] + 0.5))
                score += idf * tf * (BM25_K1 + 1) / (
                    tf + BM25_K1 * (1 - BM25_B + BM25_B * length / avg_len))
            if score > 0:
                scores[doc_id] = score
        ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
        return ranked[:k]


# -- dense index ----------------------------------------------------------------

class DenseIndex:
    """Exhaustive cosine search over per-aspect unit-normalized embeddings."""

    def __init__(self):
        self._vectors: dict[str, dict[str, np.ndarray]] = {}  # aspect -> id -> vec

    def build(self, aspect_texts: dict[str, dict[str, str]], llm: LlmClient) -> None:
        for aspect, by_doc in aspect_texts.items():
            vecs: dict[str, np.ndarray] = {}
            for doc_id, text in sorted(by_doc.items()):
                vec = llm.embed(text)
                norm = np.linalg.norm(vec)
                vecs[doc_id] = vec / norm if norm else vec
            self._vectors[aspect] = vecs

    def aspects(self) -> list[str]:
        return sorted(self._vectors)

    def search(self, aspect: str, intent: str, k: int,
               llm: LlmClient) -> list[tuple[str, float]]:
        vectors = self._vectors.get(aspect)
        if not vectors:
            raise RetrievalError(f"no indexed embeddings for aspect {aspect!r}")
        if k <= 0:
            return []
        query = llm.embed(intent)
        norm = np.linalg.norm(query)
        if norm:
            query = query / norm
        scored = [(doc_id, float(query @ vec)) for doc_id, vec in vectors.items()]
        scored.sort(key=lambda kv: (-kv[1], kv[0]))
        return scored[:k]


# -- score aggregation -----------------------------------------------------------

def _min_max(scores: dict[str, float]) -> dict[str, float]:
    if not scores:
        return {}
    lo, hi = min(scores.values()), max(scores.values())
    if hi == lo:
        # Degenerate source carries no ordering information; keep members alive.
        return {k: 1.0 for k in scores}
    return {k: (v - lo) / (hi - lo) for k, v in scores.items()}


def aggregate_scores(sources: dict[str, list[dict[str, float]]]) -> list[ScoredCandidate]:
    """Min-max each source, average within group, mean across present groups.

    ``sources`` maps group name ("lexical" / "semantic") to that group's raw
    per-source score dicts. Candidates absent from a source score 0 there.
    """
    present = {g: [s for s in srcs if s] for g, srcs in sources.items()}
    present = {g: srcs for g, srcs in present.items() if srcs}
    if not present:
        raise RetrievalError("aggregate_scores requires at least one non-empty source")
    candidates: set[str] = set()
    for srcs in present.values():
        for s in srcs:
            candidates.update(s)
    group_scores: dict[str, dict[str, float]] = {}
    for group, srcs in present.items():
        normalized = [_min_max(s) for s in srcs]
        group_scores[group] = {
            cand: sum(norm.get(cand, 0.0) for norm in normalized) / len(normalized)
            for cand in candidates}
    out = []
    for cand in sorted(candidates):
        per_group = {g: group_scores[g][cand] for g in group_scores}
        combined = sum(per_group.values()) / len(per_group)
        out.append(ScoredCandidate(cand, per_group, combined))
    out.sort(key=lambda c: (-c.combined, c.paper_id))
    return out


# -- reranking --------------------------------------------------------------------

_RERANK_SYSTEM = (
    "You rerank candidate papers for a scholarly query. Given the query and "
    "candidates (id, metadata, aspect summaries), respond with JSON "
    "{\"keep\": [<candidate ids in relevance order>]} listing only relevant "
    "ids; omit irrelevant ones. Never invent ids.")


def rerank(query: str, candidates: list[dict], top_k: int,
           llm: LlmClient) -> list[str]:
    if not candidates:
        raise RetrievalError("rerank requires a non-empty candidate list")
    known = [c["paper_id"] for c in candidates]
    payload = llm.complete_json(
        PromptRequest.build(
            user=json.dumps({"query": query, "candidates": candidates},
                            ensure_ascii=False, sort_keys=True),
            system=_RERANK_SYSTEM, response_schema="rerank"),
        required=("keep",))
    keep = payload["keep"]
    if not isinstance(keep, list):
        raise SchemaViolationError("keep must be a list", raw=json.dumps(payload))
    seen: set[str] = set()
    ordered: list[str] = []
    for pid in keep:
        if pid not in known:
            raise SchemaViolationError(
                f"reranker emitted unknown id {pid!r}", raw=json.dumps(payload))
        if pid not in seen:
            seen.add(pid)
            ordered.append(pid)
    return ordered[:top_k]


# -- full pipeline ------------------------------------------------------------------

class SearchBackend:
    """Owns the indexes and runs the five-stage pipeline over a graph."""

    def __init__(self, graph: Graph, llm: LlmClient):
        self.graph = graph
        self.llm = llm
        self.bm25 = Bm25Index()
        self.dense = DenseIndex()
        self._year_of: dict[str, Optional[int]] = {}
        self._meta: dict[str, dict] = {}
        self.build_indexes()

    def build_indexes(self) -> None:
        papers = self.graph.nodes(NodeKind.PAPER)
        field_texts: dict[str, dict[str, str]] = {f: {} for f in METADATA_FIELDS}
        aspect_texts: dict[str, dict[str, str]] = {a: {} for a in ASPECT_FIELDS}
        for paper in papers:
            attrs = paper.attrs
            field_texts["title"][paper.id] = attrs.get("title", "")
            field_texts["authors"][paper.id] = " ".join(attrs.get("authors", []))
            field_texts["affiliations"][paper.id] = " ".join(
                attrs.get("affiliations", []))
            field_texts["publication_year"][paper.id] = str(
                attrs.get("publication_year", ""))
            field_texts["venue"][paper.id] = attrs.get("venue", "")
            self._year_of[paper.id] = attrs.get("publication_year")
            self._meta[paper.id] = {
                "paper_id": paper.id,
                "title": attrs.get("title", ""),
                "publication_year": attrs.get("publication_year"),
                "venue": attrs.get("venue"),
                "aspects": {a: attrs.get(f"aspect_{a}", "") for a in ASPECT_FIELDS},
            }
            for aspect in ASPECT_FIELDS:
                text = attrs.get(f"aspect_{aspect}", "")
                if text:
                    aspect_texts[aspect][paper.id] = text
        self.bm25.build(field_texts)
        self.dense.build(aspect_texts, self.llm)

    def bm25_search(self, field: str, value: str, k: int) -> list[tuple[str, float]]:
        return self.bm25.search(field, value, k)

    def dense_search(self, aspect: str, intent: str, k: int) -> list[tuple[str, float]]:
        return self.dense.search(aspect, intent, k, self.llm)

    def search(self, query: str, cfg: RetrievalConfig | None = None) -> list[str]:
        cfg = cfg or RetrievalConfig()
        decomposed = decompose_query(query, self.llm)
        surviving = set(temporal_filter(sorted(self._year_of),
                                        self._year_of, decomposed.year_range))
        if not surviving:
            return []  # short-circuit: no candidates, no rerank call

        lexical_sources = []
        for fld, value in decomposed.metadata_constraints:
            hits = self.bm25_search(fld, value, cfg.candidates_per_query)
            lexical_sources.append({pid: score for pid, score in hits
                                    if pid in surviving})
        semantic_sources = []
        for aspect, intent in decomposed.aspect_intents:
            hits = self.dense_search(aspect, intent, cfg.candidates_per_query)
            semantic_sources.append({pid: score for pid, score in hits
                                     if pid in surviving})
        sources = {}
        if lexical_sources:
            sources["lexical"] = lexical_sources
        if semantic_sources:
            sources["semantic"] = semantic_sources
        if not any(s for srcs in sources.values() for s in srcs):
            return []
        candidates = aggregate_scores(sources)
        payload = [dict(self._meta[c.paper_id], score=round(c.combined, 6))
                   for c in candidates]
        return rerank(query, payload, cfg.top_k, self.llm)


# -- ranking metrics -----------------------------------------------------------------

def r_precision(ranked: Sequence[str], relevant: set[str]) -> float:
    if not relevant:
        raise RetrievalError("relevant set must be non-empty")
    r = len(relevant)
    return len(set(ranked[:r]) & relevant) / r


def map_score(ranked: Sequence[str], relevant: set[str]) -> float:
    """Average precision: mean of precision@rank over all relevant documents."""
    if not relevant:
        raise RetrievalError("relevant set must be non-empty")
    hits = 0
    total = 0.0
    for rank, doc in enumerate(ranked, start=1):
        if doc in relevant:
            hits += 1
            total += hits / rank
    return total / len(relevant)


def ndcg_at_k(gains: Sequence[float], k: int) -> float:
    """NDCG with gain 2^rel - 1 and log2(rank+1) discount."""
    if k < 1:
        raise RetrievalError("k must be >= 1")

    def dcg(values: Sequence[float]) -> float:
        return sum((2.0 ** rel - 1.0) / math.log2(rank + 1)
                   for rank, rel in enumerate(values[:k], start=1))

    ideal = dcg(sorted(gains, reverse=True))
    if ideal == 0:
        return 0.0
    return dcg(list(gains)) / ideal
