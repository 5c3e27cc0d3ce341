"""Reference-enhanced taxonomy construction and progressive refinement.

Construction runs in four stages: per-paper aspect extraction, cross-paper
standardization into canonical classes and concepts, alignment of those
concepts against a provider-drafted reference skeleton, and progressive
update with size-triggered branch refinement. Problem taxonomies carry
(input, output) aspects; method taxonomies carry (key_techniques, strengths,
weaknesses).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

from .errors import SchemaViolationError, TaxonomyError
from .graphstore import EdgeKind, Graph, GraphNode, NodeKind
from .ingest import SectionLabel
from .llm import LlmClient, PromptRequest, cosine

log = logging.getLogger(__name__)

CONTEXT_BUDGET_CHARS = 6000
MAX_STANDARDIZE_PASSES = 3


class TaxonomyKind(str, Enum):
    PROBLEM = "problem"
    METHOD = "method"

    @property
    def aspect_names(self) -> tuple[str, ...]:
        if self is TaxonomyKind.PROBLEM:
            return ("input", "output")
        return ("key_techniques", "strengths", "weaknesses")

    @property
    def m(self) -> int:
        return len(self.aspect_names)

    @property
    def node_kind(self) -> NodeKind:
        return NodeKind.PROBLEM if self is TaxonomyKind.PROBLEM else NodeKind.METHOD

    @property
    def assignment_edge(self) -> EdgeKind:
        return (EdgeKind.ADDRESSES if self is TaxonomyKind.PROBLEM
                else EdgeKind.APPLIES)


@dataclass
class TaxonomyConfig:
    alpha: float = 1.0
    tau_match: float = 0.80
    k_max: int = 6

    def __post_init__(self):
        if self.alpha <= 0:
            raise TaxonomyError("alpha must be positive")
        if not 0.0 <= self.tau_match <= 1.0:
            raise TaxonomyError("tau_match must lie in [0, 1]")
        if self.k_max < 2:
            raise TaxonomyError("k_max must be >= 2")


@dataclass
class AspectTemplate:
    paper_id: str
    description: str
    aspects: tuple[str, ...]  # kind-ordered, length m


@dataclass
class AspectClass:
    class_id: str
    aspect_index: int
    canonical_label: str
    member_signatures: list[str] = field(default_factory=list)


@dataclass
class Concept:
    concept_id: str
    class_tuple: tuple[str, ...]  # canonical labels, one per aspect index
    member_papers: list[str] = field(default_factory=list)


@dataclass
class TaxonomyNode:
    node_id: str
    name: str
    description: str = ""
    signature: Optional[tuple[str, ...]] = None
    papers: list[str] = field(default_factory=list)
    children: list[str] = field(default_factory=list)
    new_paper_count: int = 0
    base_size: int = 1


@dataclass
class RoutingRecord:
    node_id: str
    created_new: bool
    refined: Optional["RefinementRecord"] = None


@dataclass
class RefinementRecord:
    case: str  # "leaf" | "nonleaf" | "noop"
    new_nodes: list[str] = field(default_factory=list)
    moved_papers: dict[str, list[str]] = field(default_factory=dict)


class Taxonomy:
    """A rooted tree of concept nodes plus the standardization state."""

    def __init__(self, kind: TaxonomyKind, cfg: TaxonomyConfig):
        self.kind = kind
        self.cfg = cfg
        self.nodes: dict[str, TaxonomyNode] = {}
        self.root_id: Optional[str] = None
        self.parent: dict[str, str] = {}
        self.classes: list[list[AspectClass]] = [[] for _ in range(kind.m)]
        self.templates: dict[str, AspectTemplate] = {}
        self.paper_tuples: dict[str, tuple[str, ...]] = {}
        self._counter = 0

    # -- structure ---------------------------------------------------------

    def new_node(self, name: str, description: str = "",
                 signature: Optional[tuple[str, ...]] = None) -> TaxonomyNode:
        node_id = f"{self.kind.value}/n{self._counter:04d}"
        self._counter += 1
        node = TaxonomyNode(node_id, name, description, signature)
        self.nodes[node_id] = node
        return node

    def add_child(self, parent_id: str, node: TaxonomyNode) -> None:
        if node.node_id in self.parent:
            raise TaxonomyError(f"{node.node_id} already has a parent")
        self.nodes[parent_id].children.append(node.node_id)
        self.parent[node.node_id] = parent_id

    def is_leaf(self, node_id: str) -> bool:
        return not self.nodes[node_id].children

    def subtree_ids(self, node_id: str) -> list[str]:
        out = [node_id]
        for child in self.nodes[node_id].children:
            out.extend(self.subtree_ids(child))
        return out

    def leaves(self, node_id: Optional[str] = None) -> list[str]:
        start = node_id if node_id is not None else self.root_id
        return [nid for nid in self.subtree_ids(start) if self.is_leaf(nid)]

    def all_papers(self) -> list[str]:
        out: list[str] = []
        for nid in sorted(self.nodes):
            out.extend(self.nodes[nid].papers)
        return out

    def check_tree(self) -> None:
        """Raise if the structure is not a single-parent rooted tree."""
        if self.root_id is None or self.root_id not in self.nodes:
            raise TaxonomyError("taxonomy has no root")
        seen: set[str] = set()
        stack = [self.root_id]
        while stack:
            nid = stack.pop()
            if nid in seen:
                raise TaxonomyError(f"cycle or multi-parent at {nid}")
            seen.add(nid)
            stack.extend(self.nodes[nid].children)
        if seen != set(self.nodes):
            raise TaxonomyError("nodes unreachable from root")

    def node_text(self, node_id: str) -> str:
        node = self.nodes[node_id]
        if node.signature:
            return "; ".join(node.signature)
        if node.description:
            return f"{node.name}: {node.description}"
        return node.name

    # -- export ----------------------------------------------------------

    def to_dict(self) -> dict:
        def render(nid: str) -> dict:
            node = self.nodes[nid]
            return {"node_id": node.node_id, "name": node.name,
                    "description": node.description,
                    "signature": list(node.signature) if node.signature else None,
                    "papers": list(node.papers),
                    "children": [render(c) for c in node.children]}

        return {"kind": self.kind.value, "root": render(self.root_id)}

    @classmethod
    def from_dict(cls, data: dict,
                  cfg: TaxonomyConfig | None = None) -> "Taxonomy":
        tax = cls(TaxonomyKind(data["kind"]), cfg or TaxonomyConfig())

        def load(rec: dict, parent_id: Optional[str]) -> None:
            node = TaxonomyNode(
                rec["node_id"], rec["name"], rec.get("description", ""),
                tuple(rec["signature"]) if rec.get("signature") else None,
                list(rec.get("papers", [])))
            tax.nodes[node.node_id] = node
            if parent_id is None:
                tax.root_id = node.node_id
            else:
                tax.nodes[parent_id].children.append(node.node_id)
                tax.parent[node.node_id] = parent_id
            for child in rec.get("children", []):
                load(child, node.node_id)

        load(data["root"], None)
        tax._counter = len(tax.nodes)
        return tax


# -- stage 1: structured information extraction --------------------------------

def _section_unit(graph: Graph, paper_id: str, label: SectionLabel) -> Optional[str]:
    sid = f"{paper_id}/section/{label.value}"
    if graph.has_node(sid):
        return graph.get_node(sid).attrs.get("body", "")
    return None


_TEMPLATE_SYSTEM = {
    TaxonomyKind.PROBLEM: (
        "You extract the research problem addressed by a paper. Respond with "
        "JSON {\"description\": <one sentence>, \"input\": <formal input "
        "specification>, \"output\": <formal output specification>}."),
    TaxonomyKind.METHOD: (
        "You extract the method proposed by a paper. Respond with JSON "
        "{\"description\": <one sentence>, \"key_techniques\": <core "
        "components>, \"strengths\": <strengths>, \"weaknesses\": "
        "<weaknesses>}."),
}


def extract_template(graph: Graph, paper_id: str, kind: TaxonomyKind,
                     llm: LlmClient) -> AspectTemplate:
    """Shared units + targeted unit -> one structured template per paper."""
    shared = [(label, _section_unit(graph, paper_id, label))
              for label in (SectionLabel.ABSTRACT, SectionLabel.INTRODUCTION)]
    targeted_label = (SectionLabel.PROBLEM_FORMULATION
                      if kind is TaxonomyKind.PROBLEM else SectionLabel.METHODOLOGY)
    targeted = _section_unit(graph, paper_id, targeted_label)
    if targeted is None:
        targeted = _section_unit(graph, paper_id, SectionLabel.INTRODUCTION)
    parts = [body for _, body in shared if body] + ([targeted] if targeted else [])
    if not parts:
        raise TaxonomyError(f"paper {paper_id!r} has no usable context units")
    context = "\n\n".join(parts)[:CONTEXT_BUDGET_CHARS]
    payload = llm.complete_json(
        PromptRequest.build(user=context, system=_TEMPLATE_SYSTEM[kind],
                            response_schema=f"aspect_template_{kind.value}"),
        required=("description",) + kind.aspect_names)
    aspects = tuple(str(payload[a]) for a in kind.aspect_names)
    if any(not a.strip() for a in aspects):
        raise SchemaViolationError("empty aspect field", raw=json.dumps(payload))
    return AspectTemplate(paper_id, str(payload["description"]), aspects)


# -- stage 2: cross-paper standardization ----------------------------------------

_SIGNATURE_SYSTEM = (
    "You extract the key noun phrases that act as semantic signatures of an "
    "aspect statement. Respond with JSON {\"signatures\": [<short phrases>]}.")

_CLASS_SYSTEM = (
    "You group semantically equivalent signatures under canonical classes. "
    "Given a list of signatures, respond with JSON {\"classes\": "
    "[{\"label\": <canonical label>, \"members\": [<signatures>]}]} covering "
    "every input signature exactly once.")


def _extract_signatures(aspect_name: str, aspect_text: str,
                        llm: LlmClient) -> list[str]:
    payload = llm.complete_json(
        PromptRequest.build(user=f"{aspect_name}: {aspect_text}",
                            system=_SIGNATURE_SYSTEM, response_schema="signatures"),
        required=("signatures",))
    sigs = payload["signatures"]
    if not isinstance(sigs, list) or not all(isinstance(s, str) for s in sigs):
        raise SchemaViolationError("signatures must be strings",
                                   raw=json.dumps(payload))
    return sigs or [aspect_text]


def _cluster_signatures(aspect_name: str, signatures: set[str],
                        llm: LlmClient) -> list[tuple[str, list[str]]]:
    # Prompt over the sorted signature set so fingerprints are insensitive to
    # template order.
    payload = llm.complete_json(
        PromptRequest.build(
            user=json.dumps({"aspect": aspect_name,
                             "signatures": sorted(signatures)}, sort_keys=True),
            system=_CLASS_SYSTEM, response_schema="signature_classes"),
        required=("classes",))
    out = []
    for entry in payload["classes"]:
        label, members = entry.get("label"), entry.get("members")
        if not isinstance(label, str) or not isinstance(members, list):
            raise SchemaViolationError("malformed class entry",
                                       raw=json.dumps(payload))
        out.append((label, [m for m in members if m in signatures]))
    return out


def standardize(templates: Sequence[AspectTemplate], kind: TaxonomyKind,
                llm: LlmClient) -> tuple[list[list[AspectClass]], list[Concept]]:
    """Consolidate aspects into canonical classes and papers into concepts."""
    if not templates:
        raise TaxonomyError("standardize requires at least one template")
    m = kind.m
    paper_sigs: dict[str, list[list[str]]] = {}
    for tpl in templates:
        paper_sigs[tpl.paper_id] = [
            _extract_signatures(kind.aspect_names[i], tpl.aspects[i], llm)
            for i in range(m)]

    classes: list[list[AspectClass]] = [[] for _ in range(m)]
    sig_to_class: list[dict[str, AspectClass]] = [{} for _ in range(m)]

    def register(i: int, label: str, members: list[str]) -> None:
        cls = AspectClass(f"{kind.value}/a{i}/c{len(classes[i]):03d}", i,
                          label, list(members))
        classes[i].append(cls)
        for member in members:
            sig_to_class[i].setdefault(member, cls)

    remaining = list(templates)
    for _ in range(MAX_STANDARDIZE_PASSES):
        if not remaining:
            break
        for i in range(m):
            pool = {s for tpl in remaining for s in paper_sigs[tpl.paper_id][i]
                    if s not in sig_to_class[i]}
            if not pool:
                continue
            for label, members in _cluster_signatures(
                    kind.aspect_names[i], pool, llm):
                if members:
                    register(i, label, members)
        still_unmatched = []
        for tpl in remaining:
            if any(all(s not in sig_to_class[i] for s in paper_sigs[tpl.paper_id][i])
                   for i in range(m)):
                still_unmatched.append(tpl)
        remaining = still_unmatched

    # Whatever is left gets singleton classes so every paper lands somewhere.
    for tpl in remaining:
        for i in range(m):
            sigs = paper_sigs[tpl.paper_id][i]
            if all(s not in sig_to_class[i] for s in sigs):
                register(i, sigs[0], sigs)

    def tuple_for(paper_id: str) -> tuple[str, ...]:
        labels = []
        for i in range(m):
            counts: dict[str, int] = {}
            for sig in paper_sigs[paper_id][i]:
                cls = sig_to_class[i].get(sig)
                if cls is not None:
                    counts[cls.canonical_label] = counts.get(
                        cls.canonical_label, 0) + 1
            best = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[0][0]
            labels.append(best)
        return tuple(labels)

    by_tuple: dict[tuple[str, ...], list[str]] = {}
    for tpl in templates:
        by_tuple.setdefault(tuple_for(tpl.paper_id), []).append(tpl.paper_id)
    concepts = [Concept(f"{kind.value}/concept{i:03d}", labels, sorted(papers))
                for i, (labels, papers) in enumerate(sorted(by_tuple.items()))]
    return classes, concepts


# -- stage 3: reference taxonomy generation and alignment -------------------------

_TOPIC_SYSTEM = ("You infer the research topic covered by a corpus of papers. "
                 "Respond with JSON {\"topic\": <short label>}.")

_REF_SYSTEM = (
    "You draft a skeletal reference taxonomy for a research topic. Respond "
    "with JSON {\"nodes\": [{\"id\": <unique>, \"name\": .., \"description\": "
    ".., \"parent_id\": <id or null>}]} with exactly one root (parent_id null).")

_SUBSUME_SYSTEM = (
    "You decide whether a taxonomy category strictly subsumes (is a proper "
    "generalization of) a concept. Respond with JSON {\"subsumes\": true|false}.")

_NAME_SYSTEM = (
    "You name a new taxonomy node for a concept signature. Respond with JSON "
    "{\"name\": <canonical name>, \"description\": <one sentence>}.")


def infer_topic_label(descriptions: Sequence[str], llm: LlmClient) -> str:
    payload = llm.complete_json(
        PromptRequest.build(user="\n".join(sorted(descriptions))[:CONTEXT_BUDGET_CHARS],
                            system=_TOPIC_SYSTEM, response_schema="topic_label"),
        required=("topic",))
    return str(payload["topic"])


def generate_reference_taxonomy(descriptions: Sequence[str], kind: TaxonomyKind,
                                llm: LlmClient) -> dict:
    """Skeletal (name, description) tree; topic label inferred first."""
    if not descriptions:
        raise TaxonomyError("reference taxonomy needs a non-empty corpus")
    topic = infer_topic_label(descriptions, llm)
    payload = llm.complete_json(
        PromptRequest.build(
            user=json.dumps({"topic": topic, "taxonomy_kind": kind.value}),
            system=_REF_SYSTEM, response_schema="reference_taxonomy"),
        required=("nodes",))
    nodes = payload["nodes"]
    by_id: dict[str, dict] = {}
    roots = []
    for rec in nodes:
        nid = rec.get("id")
        if not isinstance(nid, str) or nid in by_id:
            raise SchemaViolationError("missing or duplicate node id",
                                       raw=json.dumps(payload))
        by_id[nid] = {"name": rec.get("name", nid),
                      "description": rec.get("description", ""),
                      "children": []}
        if rec.get("parent_id") is None:
            roots.append(nid)
    if len(roots) != 1:
        raise SchemaViolationError("reference taxonomy must have exactly one root",
                                   raw=json.dumps(payload))
    for rec in nodes:
        parent = rec.get("parent_id")
        if parent is not None:
            if parent not in by_id:
                raise SchemaViolationError(f"unknown parent {parent!r}",
                                           raw=json.dumps(payload))
            by_id[parent]["children"].append(rec["id"])

    # Reject cyclic / non-tree payloads: every node must hang off the root.
    seen: set[str] = set()
    stack = [roots[0]]
    while stack:
        nid = stack.pop()
        if nid in seen:
            raise SchemaViolationError("reference taxonomy contains a cycle",
                                       raw=json.dumps(payload))
        seen.add(nid)
        stack.extend(by_id[nid]["children"])
    if seen != set(by_id):
        raise SchemaViolationError("reference taxonomy is not a single tree",
                                   raw=json.dumps(payload))

    def render(nid: str) -> dict:
        rec = by_id[nid]
        return {"name": rec["name"], "description": rec["description"],
                "children": [render(c) for c in rec["children"]]}

    return render(roots[0])


def _subsumes(category_text: str, concept_text: str, llm: LlmClient) -> bool:
    payload = llm.complete_json(
        PromptRequest.build(
            user=json.dumps({"category": category_text, "concept": concept_text},
                            sort_keys=True),
            system=_SUBSUME_SYSTEM, response_schema="subsumes"),
        required=("subsumes",))
    return bool(payload["subsumes"])


def locate_parent(tax: Taxonomy, concept_text: str, llm: LlmClient) -> str:
    """Greedy top-down descent into the first child that subsumes the concept."""
    current = tax.root_id
    while True:
        for child_id in tax.nodes[current].children:
            if _subsumes(tax.node_text(child_id), concept_text, llm):
                current = child_id
                break
        else:
            return current


def find_matching_child(tax: Taxonomy, parent_id: str, concept_text: str,
                        llm: LlmClient) -> Optional[str]:
    """Best child by cosine similarity of signature embeddings, gated by tau."""
    best_id, best_sim = None, -1.0
    target = llm.embed(concept_text)
    for child_id in tax.nodes[parent_id].children:
        sim = cosine(llm.embed(tax.node_text(child_id)), target)
        if sim > best_sim:  # strict: ties keep the first child in stored order
            best_id, best_sim = child_id, sim
    if best_id is not None and best_sim >= tax.cfg.tau_match:
        return best_id
    return None


def _name_new_node(labels: tuple[str, ...], llm: LlmClient) -> tuple[str, str]:
    payload = llm.complete_json(
        PromptRequest.build(user=json.dumps({"signature": list(labels)}),
                            system=_NAME_SYSTEM, response_schema="node_naming"),
        required=("name",))
    return str(payload["name"]), str(payload.get("description", ""))


def align_and_instantiate(ref_tree: dict, concepts: Sequence[Concept],
                          kind: TaxonomyKind, cfg: TaxonomyConfig,
                          llm: LlmClient,
                          classes: Optional[list[list[AspectClass]]] = None,
                          templates: Optional[Sequence[AspectTemplate]] = None,
                          ) -> Taxonomy:
    tax = Taxonomy(kind, cfg)
    if classes is not None:
        tax.classes = classes
    if templates:
        tax.templates = {t.paper_id: t for t in templates}

    def instantiate(rec: dict, parent_id: Optional[str]) -> None:
        node = tax.new_node(rec["name"], rec.get("description", ""))
        if parent_id is None:
            tax.root_id = node.node_id
        else:
            tax.add_child(parent_id, node)
        for child in rec.get("children", []):
            instantiate(child, node.node_id)

    instantiate(ref_tree, None)

    for concept in concepts:
        concept_text = "; ".join(concept.class_tuple)
        parent_id = locate_parent(tax, concept_text, llm)
        target_id = find_matching_child(tax, parent_id, concept_text, llm)
        if target_id is None:
            name, desc = _name_new_node(concept.class_tuple, llm)
            node = tax.new_node(name, desc, concept.class_tuple)
            tax.add_child(parent_id, node)
            target_id = node.node_id
        target = tax.nodes[target_id]
        if target.signature is None:
            # Skeleton node instantiated by corpus evidence adopts the signature.
            target.signature = concept.class_tuple
        for paper_id in concept.member_papers:
            if paper_id not in target.papers:
                target.papers.append(paper_id)
            tax.paper_tuples[paper_id] = concept.class_tuple

    for node in tax.nodes.values():
        node.base_size = max(1, len(node.papers))
        node.new_paper_count = 0
    tax.check_tree()
    return tax


def build_taxonomy(graph: Graph, kind: TaxonomyKind, cfg: TaxonomyConfig,
                   llm: LlmClient,
                   paper_ids: Optional[Sequence[str]] = None) -> Taxonomy:
    """End-to-end construction over the papers currently in the graph."""
    papers = list(paper_ids) if paper_ids is not None else graph.node_ids(
        NodeKind.PAPER)
    if not papers:
        raise TaxonomyError("corpus is empty")
    templates = [extract_template(graph, pid, kind, llm) for pid in papers]
    classes, concepts = standardize(templates, kind, llm)
    ref_tree = generate_reference_taxonomy(
        [t.description for t in templates], kind, llm)
    return align_and_instantiate(ref_tree, concepts, kind, cfg, llm,
                                 classes=classes, templates=templates)


# -- stage 4: progressive update and branch refinement ------------------------------

def _map_to_classes_or_create(tax: Taxonomy, template: AspectTemplate,
                              llm: LlmClient) -> tuple[str, ...]:
    """Match each aspect to an existing class or mint a new one."""
    labels = []
    for i in range(tax.kind.m):
        sigs = _extract_signatures(tax.kind.aspect_names[i],
                                   template.aspects[i], llm)
        matched = None
        lowered = {s.lower() for s in sigs}
        for cls in tax.classes[i]:
            if lowered & {m.lower() for m in cls.member_signatures}:
                matched = cls
                break
        if matched is None:
            probe = llm.embed("; ".join(sorted(sigs)))
            best, best_sim = None, -1.0
            for cls in tax.classes[i]:
                sim = cosine(llm.embed(cls.canonical_label), probe)
                if sim > best_sim:
                    best, best_sim = cls, sim
            if best is not None and best_sim >= tax.cfg.tau_match:
                matched = best
        if matched is None:
            # Mint the class through the same labeling step the build uses,
            # so labels stay consistent across construction and update.
            label, members = _cluster_signatures(
                tax.kind.aspect_names[i], set(sigs), llm)[0]
            matched = AspectClass(
                f"{tax.kind.value}/a{i}/c{len(tax.classes[i]):03d}", i,
                label, list(members) or list(sigs))
            tax.classes[i].append(matched)
        else:
            for sig in sigs:
                if sig not in matched.member_signatures:
                    matched.member_signatures.append(sig)
        labels.append(matched.canonical_label)
    return tuple(labels)


def update_with_paper(tax: Taxonomy, graph: Graph, paper_id: str,
                      llm: LlmClient) -> RoutingRecord:
    template = extract_template(graph, paper_id, tax.kind, llm)
    labels = _map_to_classes_or_create(tax, template, llm)
    tax.templates[paper_id] = template
    tax.paper_tuples[paper_id] = labels
    concept_text = "; ".join(labels)

    parent_id = locate_parent(tax, concept_text, llm)
    target_id = find_matching_child(tax, parent_id, concept_text, llm)
    created = target_id is None
    if created:
        name, desc = _name_new_node(labels, llm)
        node = tax.new_node(name, desc, labels)
        tax.add_child(parent_id, node)
        target_id = node.node_id
        tax.nodes[target_id].base_size = 1

    target = tax.nodes[target_id]
    if paper_id not in target.papers:
        target.papers.append(paper_id)
    target.new_paper_count += 1

    refined = None
    if target.new_paper_count >= tax.cfg.alpha * target.base_size:
        refined = refine_branch(tax, target_id, llm)
    tax.check_tree()
    return RoutingRecord(target_id, created, refined)


_ESTIMATE_SYSTEM = (
    "You estimate how many distinct subtopics a set of papers spans. Respond "
    "with JSON {\"k\": <integer>}.")

_CLUSTER_SYSTEM = (
    "You cluster papers into K labeled groups by their aspect templates. "
    "Respond with JSON {\"clusters\": [{\"label\": .., \"description\": .., "
    "\"paper_ids\": [..]}]} assigning every paper to exactly one cluster.")


def _estimate_subtopics(tax: Taxonomy, papers: Sequence[str],
                        llm: LlmClient) -> int:
    digest = {pid: tax.templates[pid].description
              for pid in sorted(papers) if pid in tax.templates}
    payload = llm.complete_json(
        PromptRequest.build(user=json.dumps(digest, sort_keys=True),
                            system=_ESTIMATE_SYSTEM,
                            response_schema="estimate_subtopics"),
        required=("k",))
    try:
        return int(payload["k"])
    except (TypeError, ValueError):
        raise SchemaViolationError("k must be an integer", raw=json.dumps(payload))


def _cluster_and_label(tax: Taxonomy, papers: Sequence[str], k: int,
                       llm: LlmClient) -> list[dict]:
    digest = {pid: {"description": tax.templates[pid].description,
                    "aspects": list(tax.templates[pid].aspects)}
              for pid in sorted(papers) if pid in tax.templates}
    payload = llm.complete_json(
        PromptRequest.build(user=json.dumps({"k": k, "papers": digest},
                                            sort_keys=True),
                            system=_CLUSTER_SYSTEM,
                            response_schema="cluster_and_label"),
        required=("clusters",))
    clusters = payload["clusters"]
    assigned: set[str] = set()
    for cluster in clusters:
        ids = cluster.get("paper_ids")
        if not isinstance(cluster.get("label"), str) or not isinstance(ids, list):
            raise SchemaViolationError("malformed cluster", raw=json.dumps(payload))
        for pid in ids:
            if pid not in papers:
                raise SchemaViolationError(f"cluster names unknown paper {pid!r}",
                                           raw=json.dumps(payload))
            if pid in assigned:
                raise SchemaViolationError(f"paper {pid!r} assigned twice",
                                           raw=json.dumps(payload))
            assigned.add(pid)
    if assigned != set(papers):
        raise SchemaViolationError("clusters must partition the papers",
                                   raw=json.dumps(payload))
    return clusters


def _dominant_tuple(tax: Taxonomy, papers: Sequence[str]) -> tuple[str, ...]:
    labels = []
    for i in range(tax.kind.m):
        counts: dict[str, int] = {}
        for pid in papers:
            tup = tax.paper_tuples.get(pid)
            if tup is not None:
                counts[tup[i]] = counts.get(tup[i], 0) + 1
        if not counts:
            labels.append("unspecified")
        else:
            labels.append(sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[0][0])
    return tuple(labels)


def refine_branch(tax: Taxonomy, node_id: str, llm: LlmClient) -> RefinementRecord:
    """Split a crowded leaf into a subtree, or grow branches under a non-leaf.

    Provider calls happen before any mutation, so a mid-pass failure leaves
    the taxonomy untouched.
    """
    node = tax.nodes[node_id]
    papers = list(node.papers)
    if len(papers) <= 1:
        return RefinementRecord("noop")
    k = min(_estimate_subtopics(tax, papers, llm), tax.cfg.k_max)
    if k <= 1:
        return RefinementRecord("noop")
    clusters = _cluster_and_label(tax, papers, k, llm)

    was_leaf = tax.is_leaf(node_id)
    planned: list[tuple[Optional[str], dict, tuple[str, ...]]] = []
    for cluster in clusters:
        dominant = _dominant_tuple(tax, cluster["paper_ids"])
        target = None
        if not was_leaf:
            target = find_matching_child(tax, node_id, "; ".join(dominant), llm)
        planned.append((target, cluster, dominant))

    record = RefinementRecord("leaf" if was_leaf else "nonleaf")
    for target_id, cluster, dominant in planned:
        if target_id is None:
            child = tax.new_node(cluster["label"],
                                 cluster.get("description", ""), dominant)
            tax.add_child(node_id, child)
            child.base_size = max(1, len(cluster["paper_ids"]))
            target_id = child.node_id
            record.new_nodes.append(target_id)
        target = tax.nodes[target_id]
        for pid in cluster["paper_ids"]:
            node.papers.remove(pid)
            if pid not in target.papers:
                target.papers.append(pid)
        record.moved_papers[target_id] = list(cluster["paper_ids"])
    node.new_paper_count = 0
    node.base_size = max(1, len(node.papers))
    tax.check_tree()
    return record


# -- anchoring into the property graph ------------------------------------------

def anchor_into_graph(tax: Taxonomy, graph: Graph, llm: LlmClient) -> None:
    """Materialize nodes, CHILD_OF edges, and paper assignment edges.

    Idempotent; re-anchoring after refinement reconciles stale assignments.
    """
    node_kind = tax.kind.node_kind
    edge_kind = tax.kind.assignment_edge
    for nid in sorted(tax.nodes):
        node = tax.nodes[nid]
        attrs = {"name": node.name, "description": node.description,
                 "signature": list(node.signature) if node.signature else []}
        if graph.has_node(nid):
            graph.set_attrs(nid, **attrs)
        else:
            graph.add_node(GraphNode(nid, node_kind, attrs))
        graph.set_embedding(nid, llm.embed(tax.node_text(nid)))
    for child_id, parent_id in tax.parent.items():
        graph.add_edge(child_id, parent_id, EdgeKind.CHILD_OF)

    assignment: dict[str, str] = {}
    for nid in sorted(tax.nodes):
        for pid in tax.nodes[nid].papers:
            assignment[pid] = nid
    tax_node_ids = set(tax.nodes)
    for pid, nid in assignment.items():
        if not graph.has_node(pid):
            continue
        for existing in graph.neighbors(pid, edge_kind, "out", node_kind):
            if existing.id in tax_node_ids and existing.id != nid:
                graph.remove_edge(pid, existing.id, edge_kind)
        graph.add_edge(pid, nid, edge_kind)
