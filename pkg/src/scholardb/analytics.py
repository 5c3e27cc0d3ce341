"""Topic-level analytics composed from the operator layer: research trend
analysis, research idea exploration, and milestone paper selection.

Trend evidence comes from a pluggable client (fixture-backed by default);
milestone scoring is fully deterministic until the final summaries.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Protocol, Sequence

from .errors import OperatorError, SchemaViolationError
from .graphstore import EdgeKind, Graph, NodeKind
from .llm import LlmClient, PromptRequest
from .operators import OperatorContext, _leaves_under, op_matrix_construct

log = logging.getLogger(__name__)

MILESTONE_DIMENSIONS = ("citations", "problem_novelty", "method_novelty", "impact")
MILESTONE_WEIGHT = 1.0 / len(MILESTONE_DIMENSIONS)
DELAYED_BOOST = 0.1
DELAYED_LAG_YEARS = 5
DELAYED_PEAK_FACTOR = 2.0
SPARSITY_THRESHOLD = 1  # cells with count below this are "unexplored"


# -- trend analysis ---------------------------------------------------------------

class TrendEvidenceClient(Protocol):
    def lookup(self, query: str) -> list[dict]:
        """Records {year, count, citations} for a node-name query."""
        ...


class FixtureTrendClient:
    """Reads trend evidence from a local fixture keyed by node name."""

    def __init__(self, records: dict[str, list[dict]] | None = None,
                 path: str | Path | None = None):
        self.records = dict(records or {})
        if path is not None:
            self.records.update(json.loads(Path(path).read_text(encoding="utf-8")))

    def lookup(self, query: str) -> list[dict]:
        if query not in self.records:
            raise OperatorError(f"no trend evidence for {query!r}")
        return self.records[query]


@dataclass
class LeafTrend:
    node_id: str
    name: str
    yearly_counts: dict[int, int] = field(default_factory=dict)
    citation_series: dict[int, int] = field(default_factory=dict)
    rank: Optional[int] = None
    narrative: str = ""
    degraded: bool = False

    def to_dict(self) -> dict:
        return {"node_id": self.node_id, "name": self.name,
                "yearly_counts": {str(y): c for y, c
                                  in sorted(self.yearly_counts.items())},
                "citation_series": {str(y): c for y, c
                                    in sorted(self.citation_series.items())},
                "rank": self.rank, "narrative": self.narrative,
                "degraded": self.degraded}


@dataclass
class TrendReport:
    leaves: list[LeafTrend]

    def to_dict(self) -> dict:
        return {"leaves": [leaf.to_dict() for leaf in self.leaves]}


_TREND_SYSTEM = (
    "You rank research subtopics by momentum from their publication and "
    "citation series and narrate each. Respond with JSON {\"ranking\": "
    "[{\"node_id\": .., \"narrative\": ..}]} covering every subtopic, "
    "strongest trend first.")


def trend_analysis(graph: Graph, node_ids: Sequence[str],
                   evidence: TrendEvidenceClient, llm: LlmClient) -> TrendReport:
    """Exact per-leaf aggregation; ranking and narration by one provider call."""
    leaves: list[LeafTrend] = []
    for node_id in node_ids:
        node = graph.get_node(node_id)
        for leaf_id in _leaves_under(graph, node_id, node.kind):
            leaf_node = graph.get_node(leaf_id)
            leaf = LeafTrend(leaf_id, leaf_node.attrs.get("name", leaf_id))
            try:
                records = evidence.lookup(leaf.name)
            except OperatorError:
                leaf.degraded = True
                records = []
            for rec in records:
                year = int(rec["year"])
                leaf.yearly_counts[year] = (leaf.yearly_counts.get(year, 0)
                                            + int(rec.get("count", 0)))
                leaf.citation_series[year] = (leaf.citation_series.get(year, 0)
                                              + int(rec.get("citations", 0)))
            leaves.append(leaf)
    seen: set[str] = set()
    unique = []
    for leaf in leaves:
        if leaf.node_id not in seen:
            seen.add(leaf.node_id)
            unique.append(leaf)
    leaves = sorted(unique, key=lambda l: l.node_id)

    payload = llm.complete_json(
        PromptRequest.build(
            user=json.dumps({"subtopics": [leaf.to_dict() for leaf in leaves]},
                            sort_keys=True, ensure_ascii=False),
            system=_TREND_SYSTEM, response_schema="trend_ranking"),
        required=("ranking",))
    by_id = {leaf.node_id: leaf for leaf in leaves}
    ranked: set[str] = set()
    for position, entry in enumerate(payload["ranking"], start=1):
        node_id = entry.get("node_id")
        if node_id not in by_id or node_id in ranked:
            raise SchemaViolationError(
                f"trend ranking names unknown or repeated node {node_id!r}",
                raw=json.dumps(payload))
        ranked.add(node_id)
        by_id[node_id].rank = position
        by_id[node_id].narrative = str(entry.get("narrative", ""))
    if ranked != set(by_id):
        raise SchemaViolationError("trend ranking must cover every subtopic",
                                   raw=json.dumps(payload))
    return TrendReport(leaves)


# -- idea exploration -----------------------------------------------------------------

@dataclass
class IdeaProposal:
    problem_node: str
    method_node: str
    stage1_score: float
    proposal: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"problem_node": self.problem_node, "method_node": self.method_node,
                "stage1_score": self.stage1_score, "proposal": self.proposal}


_SCORE_SYSTEM = (
    "You estimate how plausible and impactful it is to apply a method to a "
    "problem, from their compact descriptors. Respond with JSON "
    "{\"score\": <real in [0,1]>}.")

_PROPOSAL_SYSTEM = (
    "You draft a structured research proposal for a problem-method "
    "combination. Respond with JSON {\"motivation\": .., \"feasibility\": .., "
    "\"novelty\": .., \"contributions\": ..}.")


def _node_descriptor(graph: Graph, node_id: str) -> dict:
    node = graph.get_node(node_id)
    return {"name": node.attrs.get("name", node_id),
            "description": node.attrs.get("description", ""),
            "signature": node.attrs.get("signature", [])}


def idea_exploration(graph: Graph, llm: LlmClient, k: int,
                     topic_node_id: str | None = None,
                     sparsity_threshold: int = SPARSITY_THRESHOLD
                     ) -> list[IdeaProposal]:
    """Matrix -> drop explored cells -> stage-1 score all -> stage-2 top-k."""
    ctx = OperatorContext(graph, llm)
    matrix = op_matrix_construct(ctx, topic_node_id).value
    unexplored = [(r, c) for (r, c), cell in sorted(matrix.cells.items())
                  if cell["count"] < sparsity_threshold]
    if not unexplored:
        return []

    raw_scores: dict[tuple[str, str], float] = {}
    for row, col in unexplored:  # one stage-1 call per unexplored cell
        payload = llm.complete_json(
            PromptRequest.build(
                user=json.dumps({"problem": _node_descriptor(graph, row),
                                 "method": _node_descriptor(graph, col)},
                                sort_keys=True, ensure_ascii=False),
                system=_SCORE_SYSTEM, response_schema="idea_score"),
            required=("score",))
        score = float(payload["score"])
        if not 0.0 <= score <= 1.0:
            raise SchemaViolationError(f"score {score} outside [0,1]",
                                       raw=json.dumps(payload))
        raw_scores[(row, col)] = score

    lo, hi = min(raw_scores.values()), max(raw_scores.values())
    normalized = {cell: 1.0 if hi == lo else (s - lo) / (hi - lo)
                  for cell, s in raw_scores.items()}
    survivors = sorted(unexplored,
                       key=lambda cell: (-normalized[cell], cell[0], cell[1]))[:k]

    proposals = []
    for row, col in survivors:  # one stage-2 call per survivor
        payload = llm.complete_json(
            PromptRequest.build(
                user=json.dumps({"problem": _node_descriptor(graph, row),
                                 "method": _node_descriptor(graph, col),
                                 "score": normalized[(row, col)]},
                                sort_keys=True, ensure_ascii=False),
                system=_PROPOSAL_SYSTEM, response_schema="idea_proposal"),
            required=("motivation", "feasibility", "novelty", "contributions"))
        proposals.append(IdeaProposal(row, col, normalized[(row, col)],
                                      dict(payload)))
    return proposals


# -- milestone selection -----------------------------------------------------------------

@dataclass
class MilestoneScore:
    paper_id: str
    dimensions: dict[str, float]
    delayed_boost: float
    composite: float
    summary: str = ""

    def to_dict(self) -> dict:
        return {"paper_id": self.paper_id, "dimensions": self.dimensions,
                "delayed_boost": self.delayed_boost, "composite": self.composite,
                "summary": self.summary}


def _series_slope(series: list[tuple[int, int]]) -> float:
    if len(series) < 2:
        return 0.0
    first_year, first = series[0]
    last_year, last = series[-1]
    span = max(1, last_year - first_year)
    return (last - first) / span


def _impact_raw(history: Optional[list[tuple[int, int]]]) -> float:
    """Early influence plus sustained momentum: slopes of the first and last
    three-year windows of the citation history."""
    if not history:
        return 0.0
    series = sorted((int(y), int(c)) for y, c in history)
    return _series_slope(series[:3]) + _series_slope(series[-3:])


def _delayed_boost(publication_year: Optional[int],
                   history: Optional[list[tuple[int, int]]]) -> float:
    if not history or publication_year is None:
        return 0.0
    series = sorted((int(y), int(c)) for y, c in history)
    peak_year, peak = max(series, key=lambda yc: (yc[1], -yc[0]))
    early = [c for _, c in series[:3]]
    early_mean = sum(early) / len(early) if early else 0.0
    if (peak_year - publication_year >= DELAYED_LAG_YEARS
            and peak >= DELAYED_PEAK_FACTOR * early_mean and early_mean > 0):
        return DELAYED_BOOST
    return 0.0


def _novelty(graph: Graph, paper_id: str, year: Optional[int],
             edge: EdgeKind, node_kind: NodeKind) -> float:
    """1 - fraction of same-node papers published strictly earlier."""
    nodes = graph.neighbors(paper_id, edge, "out", node_kind)
    if not nodes or year is None:
        return 0.0
    peers = {p.id for node in nodes
             for p in graph.neighbors(node.id, edge, "in", NodeKind.PAPER)}
    peers.discard(paper_id)
    if not peers:
        return 1.0
    earlier = 0
    for pid in peers:
        peer_year = graph.get_node(pid).attrs.get("publication_year")
        if peer_year is not None and peer_year < year:
            earlier += 1
    return 1.0 - earlier / len(peers)


def _min_max(values: dict[str, float]) -> dict[str, float]:
    lo, hi = min(values.values()), max(values.values())
    if hi == lo:
        return {k: 1.0 for k in values}
    return {k: (v - lo) / (hi - lo) for k, v in values.items()}


_MILESTONE_SYSTEM = (
    "You summarize why a paper is a milestone given its score breakdown. "
    "Respond with JSON {\"summary\": ..}.")


def milestone_selection(graph: Graph, llm: LlmClient, k: int,
                        topic_node_id: str | None = None,
                        paper_ids: Optional[Sequence[str]] = None,
                        summarize: bool = True) -> list[MilestoneScore]:
    """Composite scoring over the topic's papers; provider used only for the
    final summaries."""
    if paper_ids is None:
        if topic_node_id is not None:
            topic = graph.get_node(topic_node_id)
            leaf_ids = _leaves_under(graph, topic_node_id, topic.kind)
            edge = (EdgeKind.ADDRESSES if topic.kind is NodeKind.PROBLEM
                    else EdgeKind.APPLIES)
            paper_ids = sorted({p.id for leaf in leaf_ids
                                for p in graph.neighbors(leaf, edge, "in",
                                                         NodeKind.PAPER)})
        else:
            paper_ids = graph.node_ids(NodeKind.PAPER)
    paper_ids = list(paper_ids)
    if not paper_ids:
        raise OperatorError("topic has no papers to score")

    raw: dict[str, dict[str, float]] = {d: {} for d in MILESTONE_DIMENSIONS}
    boosts: dict[str, float] = {}
    for pid in paper_ids:
        attrs = graph.get_node(pid).attrs
        year = attrs.get("publication_year")
        history = attrs.get("citation_history")
        history = [tuple(x) for x in history] if history else None
        raw["citations"][pid] = float(attrs.get("citation_count") or 0)
        raw["problem_novelty"][pid] = _novelty(graph, pid, year,
                                               EdgeKind.ADDRESSES,
                                               NodeKind.PROBLEM)
        raw["method_novelty"][pid] = _novelty(graph, pid, year,
                                              EdgeKind.APPLIES, NodeKind.METHOD)
        raw["impact"][pid] = _impact_raw(history)
        boosts[pid] = _delayed_boost(year, history)

    normalized = {dim: _min_max(values) for dim, values in raw.items()}
    scores = []
    for pid in paper_ids:
        dims = {dim: normalized[dim][pid] for dim in MILESTONE_DIMENSIONS}
        composite = sum(MILESTONE_WEIGHT * v for v in dims.values()) + boosts[pid]
        scores.append(MilestoneScore(pid, dims, boosts[pid], composite))
    scores.sort(key=lambda s: (-s.composite, s.paper_id))
    top = scores[:k]
    if summarize:
        for score in top:
            payload = llm.complete_json(
                PromptRequest.build(
                    user=json.dumps(score.to_dict(), sort_keys=True),
                    system=_MILESTONE_SYSTEM, response_schema="milestone_summary"),
                required=("summary",))
            score.summary = str(payload["summary"])
    return top


# -- operator-layer adapters -------------------------------------------------------

def make_analytics_executors(evidence: TrendEvidenceClient,
                             default_k: int = 3):
    """Executors for the composite catalog entries, keyed by operator name."""

    def _topic_from(ctx: OperatorContext, node, inputs) -> Optional[str]:
        topic = node.params.get("topic_node_id")
        if topic:
            return topic
        for res in inputs:
            if res.kind.value == "EntityList" and res.value:
                return res.value[0]
        return None

    def run_trend(ctx: OperatorContext, node, inputs):
        from .operators import OperatorResult, PayloadKind
        topic = _topic_from(ctx, node, inputs)
        node_ids = [topic] if topic else ctx.graph.node_ids(NodeKind.PROBLEM)
        report = trend_analysis(ctx.graph, node_ids, evidence, ctx.llm)
        return OperatorResult(PayloadKind.STRUCTURED_RECORD, report.to_dict(),
                              provenance=[l.node_id for l in report.leaves]
                              or ["trend"])

    def run_ideas(ctx: OperatorContext, node, inputs):
        from .operators import OperatorResult, PayloadKind
        topic = _topic_from(ctx, node, inputs)
        k = int(node.params.get("top_k", default_k))
        proposals = idea_exploration(ctx.graph, ctx.llm, k, topic)
        return OperatorResult(
            PayloadKind.STRUCTURED_RECORD,
            {"proposals": [p.to_dict() for p in proposals]},
            provenance=[f"{p.problem_node}x{p.method_node}" for p in proposals]
            or ["ideas"])

    def run_milestones(ctx: OperatorContext, node, inputs):
        from .operators import OperatorResult, PayloadKind
        topic = _topic_from(ctx, node, inputs)
        k = int(node.params.get("top_k", default_k))
        scores = milestone_selection(ctx.graph, ctx.llm, k, topic)
        return OperatorResult(
            PayloadKind.STRUCTURED_RECORD,
            {"milestones": [s.to_dict() for s in scores]},
            provenance=[s.paper_id for s in scores] or ["milestones"])

    return {"TrendAnalysis": run_trend, "IdeaExploration": run_ideas,
            "MilestoneSelection": run_milestones}
