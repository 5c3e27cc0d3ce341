"""Document-bundle ingestion: section labeling, entity extraction, enrichment.

Bundles are pre-parsed papers (no OCR here). Section titles are normalized by
pattern rules first and by the provider only when the rules fail; experimental
context entities are extracted from the Experiments unit and canonicalized
corpus-wide before any graph node is created.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Protocol

from .errors import IngestError, SchemaViolationError
from .graphstore import EdgeKind, Graph, GraphNode, NodeKind
from .llm import LlmClient, PromptRequest

log = logging.getLogger(__name__)


class SectionLabel(str, Enum):
    ABSTRACT = "Abstract"
    INTRODUCTION = "Introduction"
    RELATED_WORK = "RelatedWork"
    PROBLEM_FORMULATION = "ProblemFormulation"
    METHODOLOGY = "Methodology"
    EXPERIMENTS = "Experiments"
    OTHER = "Other"


# Canonical order used when several semantic units are concatenated.
CANONICAL_ORDER = [
    SectionLabel.ABSTRACT, SectionLabel.INTRODUCTION, SectionLabel.RELATED_WORK,
    SectionLabel.PROBLEM_FORMULATION, SectionLabel.METHODOLOGY,
    SectionLabel.EXPERIMENTS, SectionLabel.OTHER,
]


@dataclass
class DocumentBundle:
    paper_id: str
    title: str
    authors: list[str] = field(default_factory=list)
    venue: Optional[str] = None
    publication_year: Optional[int] = None
    citation_count: Optional[int] = None
    citation_history: Optional[list[tuple[int, int]]] = None
    sections: list[dict] = field(default_factory=list)  # {raw_title, body}
    tables: list[dict] = field(default_factory=list)    # {caption, cells}
    figures: list[dict] = field(default_factory=list)   # {caption, reference_name}

    def validate(self) -> None:
        if not self.title:
            raise IngestError(f"bundle {self.paper_id!r}: title must be non-empty")
        if self.publication_year is not None and not (
                1000 <= self.publication_year <= 9999):
            raise IngestError(
                f"bundle {self.paper_id!r}: implausible year {self.publication_year}")
        if not self.sections:
            raise IngestError(f"bundle {self.paper_id!r}: sections must be non-empty")

    @classmethod
    def from_dict(cls, data: dict) -> "DocumentBundle":
        meta = data.get("metadata", {})
        history = meta.get("citation_history")
        bundle = cls(
            paper_id=data["paper_id"],
            title=meta.get("title", ""),
            authors=list(meta.get("authors", [])),
            venue=meta.get("venue"),
            publication_year=meta.get("publication_year"),
            citation_count=meta.get("citation_count"),
            citation_history=[tuple(x) for x in history] if history else None,
            sections=list(data.get("sections", [])),
            tables=list(data.get("tables", [])),
            figures=list(data.get("figures", [])),
        )
        bundle.validate()
        return bundle

    @classmethod
    def load(cls, path: str | Path) -> "DocumentBundle":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict:
        return {
            "paper_id": self.paper_id,
            "metadata": {
                "title": self.title, "authors": self.authors, "venue": self.venue,
                "publication_year": self.publication_year,
                "citation_count": self.citation_count,
                "citation_history": self.citation_history,
            },
            "sections": self.sections, "tables": self.tables,
            "figures": self.figures,
        }


# -- section classification --------------------------------------------------

# Leading numbering: "1.", "IV.", "A)", "2.3", "§3" and similar.
_NUMBERING_RE = re.compile(
    r"^\s*(?:§\s*)?(?:\d+(?:\.\d+)*|[IVXLC]+|[A-Z])\s*[\.\):\-]?\s+", re.ASCII)

_CANONICAL_TITLES: dict[str, SectionLabel] = {
    "abstract": SectionLabel.ABSTRACT,
    "introduction": SectionLabel.INTRODUCTION,
    "related work": SectionLabel.RELATED_WORK,
    "related works": SectionLabel.RELATED_WORK,
    "prior work": SectionLabel.RELATED_WORK,
    "background and related work": SectionLabel.RELATED_WORK,
    "problem formulation": SectionLabel.PROBLEM_FORMULATION,
    "problem definition": SectionLabel.PROBLEM_FORMULATION,
    "problem statement": SectionLabel.PROBLEM_FORMULATION,
    "preliminaries": SectionLabel.PROBLEM_FORMULATION,
    "methodology": SectionLabel.METHODOLOGY,
    "method": SectionLabel.METHODOLOGY,
    "methods": SectionLabel.METHODOLOGY,
    "proposed method": SectionLabel.METHODOLOGY,
    "our approach": SectionLabel.METHODOLOGY,
    "approach": SectionLabel.METHODOLOGY,
    "experiments": SectionLabel.EXPERIMENTS,
    "experimental evaluation": SectionLabel.EXPERIMENTS,
    "experimental results": SectionLabel.EXPERIMENTS,
    "experimental study": SectionLabel.EXPERIMENTS,
    "evaluation": SectionLabel.EXPERIMENTS,
    "conclusion": SectionLabel.OTHER,
    "conclusions": SectionLabel.OTHER,
    "references": SectionLabel.OTHER,
    "acknowledgments": SectionLabel.OTHER,
    "appendix": SectionLabel.OTHER,
}

_CLASSIFY_SYSTEM = (
    "You classify section titles of research papers into one of these labels: "
    "Abstract, Introduction, RelatedWork, ProblemFormulation, Methodology, "
    "Experiments, Other. Respond with JSON {\"label\": \"<label>\"}.")


def match_section_pattern(raw_title: str) -> Optional[SectionLabel]:
    """Deterministic rules: strip numbering, look up canonical names."""
    stripped = _NUMBERING_RE.sub("", raw_title).strip().rstrip(".:").lower()
    return _CANONICAL_TITLES.get(stripped)


def classify_sections(bundle: DocumentBundle,
                      llm: LlmClient) -> list[tuple[SectionLabel, str]]:
    """Label every section (rules first, provider for leftovers) and merge.

    Sections sharing a label are concatenated in document order into one
    semantic unit; the result is ordered by CANONICAL_ORDER.
    """
    bundle.validate()
    labeled: list[tuple[SectionLabel, str]] = []
    for section in bundle.sections:
        raw_title = section.get("raw_title", "")
        body = section.get("body", "")
        label = match_section_pattern(raw_title)
        if label is None:
            try:
                payload = llm.complete_json(
                    PromptRequest.build(
                        user=f"Section title: {raw_title!r}",
                        system=_CLASSIFY_SYSTEM,
                        response_schema="section_label"),
                    required=("label",))
            except SchemaViolationError:
                raise
            except Exception as exc:
                raise IngestError(
                    f"section {raw_title!r} of {bundle.paper_id}: {exc}") from exc
            name = str(payload["label"])
            try:
                label = SectionLabel(name)
            except ValueError:
                raise SchemaViolationError(
                    f"unknown section label {name!r}", raw=json.dumps(payload))
        labeled.append((label, body))

    merged: dict[SectionLabel, list[str]] = {}
    for label, body in labeled:
        merged.setdefault(label, []).append(body)
    return [(label, "\n\n".join(merged[label]))
            for label in CANONICAL_ORDER if label in merged]


# -- entity extraction ---------------------------------------------------------

@dataclass(frozen=True)
class EntityMention:
    name: str
    section: SectionLabel
    span: Optional[tuple[int, int]]  # char offsets in the semantic unit


_EXTRACT_SYSTEM = (
    "You extract experimental context from the Experiments section of a paper. "
    "Respond with JSON {\"datasets\": [..], \"metrics\": [..], \"baselines\": [..]} "
    "listing the names exactly as they appear.")


def _locate(name: str, text: str) -> Optional[tuple[int, int]]:
    idx = text.find(name)
    if idx < 0:
        idx = text.lower().find(name.lower())
    return (idx, idx + len(name)) if idx >= 0 else None


def extract_context_entities(units: list[tuple[SectionLabel, str]],
                             llm: LlmClient) -> dict[str, list[EntityMention]]:
    """Datasets/metrics/baselines with source spans; empty without Experiments."""
    empty = {"datasets": [], "metrics": [], "baselines": []}
    text = next((body for label, body in units
                 if label is SectionLabel.EXPERIMENTS), None)
    if text is None:
        return empty
    payload = llm.complete_json(
        PromptRequest.build(user=text, system=_EXTRACT_SYSTEM,
                            response_schema="context_entities"),
        required=("datasets", "metrics", "baselines"))
    out: dict[str, list[EntityMention]] = {}
    for key in ("datasets", "metrics", "baselines"):
        names = payload[key]
        if not isinstance(names, list) or not all(isinstance(n, str) for n in names):
            raise SchemaViolationError(
                f"{key} must be a list of strings", raw=json.dumps(payload))
        out[key] = [EntityMention(n, SectionLabel.EXPERIMENTS, _locate(n, text))
                    for n in names]
    return out


_NORMALIZE_SYSTEM = (
    "You unify variant names of the same dataset/metric/baseline. Given a list "
    "of names, respond with JSON {\"groups\": [{\"canonical\": .., "
    "\"members\": [..]}]} covering only names that have variants.")


def normalize_entities(names: Iterable[str], llm: LlmClient) -> dict[str, str]:
    """Total raw -> canonical map; canonical names map to themselves."""
    unique = sorted(set(names))
    if not unique:
        raise IngestError("normalize_entities requires a non-empty name set")
    mapping = {name: name for name in unique}
    if len(unique) == 1:
        return mapping
    payload = llm.complete_json(
        PromptRequest.build(user=json.dumps(unique), system=_NORMALIZE_SYSTEM,
                            response_schema="entity_groups"),
        required=("groups",))
    for group in payload["groups"]:
        canonical = group.get("canonical")
        members = group.get("members", [])
        if not isinstance(canonical, str) or not isinstance(members, list):
            raise SchemaViolationError("malformed group", raw=json.dumps(payload))
        for member in members:
            if member in mapping:
                mapping[member] = canonical
        mapping[canonical] = canonical
    return mapping


# -- bibliographic enrichment ---------------------------------------------------

class BiblioClient(Protocol):
    def lookup(self, title: str) -> Optional[dict]: ...


class FixtureBiblioClient:
    """Exact-title lookup against a local fixture file."""

    def __init__(self, records: dict[str, dict] | None = None,
                 path: str | Path | None = None):
        self.records = dict(records or {})
        if path is not None:
            self.records.update(json.loads(Path(path).read_text(encoding="utf-8")))

    def lookup(self, title: str) -> Optional[dict]:
        return self.records.get(title)


def enrich_bibliography(bundle: DocumentBundle,
                        client: BiblioClient) -> tuple[DocumentBundle, list[str]]:
    """Fill missing venue/year/citation fields; never overwrite bundle data."""
    warnings: list[str] = []
    record = client.lookup(bundle.title)
    if record is None:
        warnings.append(f"no bibliographic match for title {bundle.title!r}")
        return bundle, warnings
    if bundle.venue is None and record.get("venue") is not None:
        bundle.venue = record["venue"]
    if bundle.publication_year is None and record.get("publication_year") is not None:
        bundle.publication_year = record["publication_year"]
    if bundle.citation_count is None and record.get("citation_count") is not None:
        bundle.citation_count = record["citation_count"]
    if bundle.citation_history is None and record.get("citation_history"):
        bundle.citation_history = [tuple(x) for x in record["citation_history"]]
    return bundle, warnings


# -- corpus ingestion into the graph -----------------------------------------

ASPECTS = ("research_topic", "problem_formulation", "proposed_method",
           "experimental_datasets", "experimental_baselines",
           "experimental_results")


def _aspect_texts(bundle: DocumentBundle, units: dict[SectionLabel, str],
                  canonical: dict[str, str],
                  entities: dict[str, list[EntityMention]]) -> dict[str, str]:
    datasets = sorted({canonical.get(m.name, m.name) for m in entities["datasets"]})
    baselines = sorted({canonical.get(m.name, m.name) for m in entities["baselines"]})
    return {
        "research_topic": bundle.title + " " + units.get(SectionLabel.ABSTRACT, ""),
        "problem_formulation": units.get(
            SectionLabel.PROBLEM_FORMULATION,
            units.get(SectionLabel.ABSTRACT, bundle.title)),
        "proposed_method": units.get(
            SectionLabel.METHODOLOGY, units.get(SectionLabel.ABSTRACT, bundle.title)),
        "experimental_datasets": ", ".join(datasets) or "none",
        "experimental_baselines": ", ".join(baselines) or "none",
        "experimental_results": units.get(SectionLabel.EXPERIMENTS, "none"),
    }


def ingest_corpus(bundles: list[DocumentBundle], llm: LlmClient,
                  biblio: BiblioClient | None = None,
                  graph: Graph | None = None) -> tuple[Graph, list[str]]:
    """Classify, extract, normalize (corpus barrier), then build the graph."""
    graph = graph if graph is not None else Graph()
    warnings: list[str] = []

    prepared = []
    all_names: dict[str, set[str]] = {"datasets": set(), "metrics": set(),
                                      "baselines": set()}
    for bundle in bundles:
        if biblio is not None:
            bundle, notes = enrich_bibliography(bundle, biblio)
            warnings.extend(notes)
        units_list = classify_sections(bundle, llm)
        entities = extract_context_entities(units_list, llm)
        for key in all_names:
            all_names[key].update(m.name for m in entities[key])
        prepared.append((bundle, dict(units_list), entities))

    # Normalization is a corpus-level barrier: one map per entity family.
    canonical: dict[str, dict[str, str]] = {}
    for key, names in all_names.items():
        canonical[key] = (normalize_entities(names, llm) if names else {})

    kind_of = {"datasets": NodeKind.DATASET, "metrics": NodeKind.METRIC,
               "baselines": NodeKind.BASELINE}
    prefix_of = {"datasets": "dataset", "metrics": "metric",
                 "baselines": "baseline"}

    for bundle, units, entities in prepared:
        attrs = {"title": bundle.title, "authors": bundle.authors}
        if bundle.venue is not None:
            attrs["venue"] = bundle.venue
        if bundle.publication_year is not None:
            attrs["publication_year"] = bundle.publication_year
        if bundle.citation_count is not None:
            attrs["citation_count"] = bundle.citation_count
        if bundle.citation_history is not None:
            attrs["citation_history"] = [list(x) for x in bundle.citation_history]
        flat = {m.name for family in entities.values() for m in family}
        merged_canonical = {}
        for key in canonical:
            merged_canonical.update(canonical[key])
        aspect = _aspect_texts(bundle, units,
                               {n: merged_canonical.get(n, n) for n in flat},
                               entities)
        for name, text in aspect.items():
            attrs[f"aspect_{name}"] = text
        graph.add_node(GraphNode(bundle.paper_id, NodeKind.PAPER, attrs))

        for label, body in units.items():
            sid = f"{bundle.paper_id}/section/{label.value}"
            graph.add_node(GraphNode(sid, NodeKind.SECTION,
                                     {"label": label.value, "body": body}))
            graph.add_edge(bundle.paper_id, sid, EdgeKind.HAS)
        for i, fig in enumerate(bundle.figures):
            fid = f"{bundle.paper_id}/figure/{i}"
            graph.add_node(GraphNode(fid, NodeKind.FIGURE, dict(fig)))
            graph.add_edge(bundle.paper_id, fid, EdgeKind.HAS)
        for i, tab in enumerate(bundle.tables):
            tid = f"{bundle.paper_id}/table/{i}"
            graph.add_node(GraphNode(tid, NodeKind.TABLE, dict(tab)))
            graph.add_edge(bundle.paper_id, tid, EdgeKind.HAS)

        for author in bundle.authors:
            aid = f"author/{author}"
            if not graph.has_node(aid):
                graph.add_node(GraphNode(aid, NodeKind.AUTHOR, {"name": author}))
            graph.add_edge(bundle.paper_id, aid, EdgeKind.WRITTEN_BY)
        if bundle.venue:
            vid = f"venue/{bundle.venue}"
            if not graph.has_node(vid):
                graph.add_node(GraphNode(vid, NodeKind.VENUE, {"name": bundle.venue}))
            graph.add_edge(bundle.paper_id, vid, EdgeKind.PUBLISHED_IN)

        for key, mentions in entities.items():
            for mention in mentions:
                cname = canonical[key].get(mention.name, mention.name)
                nid = f"{prefix_of[key]}/{cname}"
                if not graph.has_node(nid):
                    graph.add_node(GraphNode(nid, kind_of[key], {"name": cname}))
                graph.add_edge(bundle.paper_id, nid, EdgeKind.USES)

    return graph, warnings


def load_corpus_dir(corpus_dir: str | Path) -> list[DocumentBundle]:
    paths = sorted(Path(corpus_dir).glob("*.json"))
    if not paths:
        raise IngestError(f"no bundle files under {corpus_dir}")
    return [DocumentBundle.load(p) for p in paths]
