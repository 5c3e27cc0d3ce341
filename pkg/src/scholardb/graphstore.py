"""In-process property graph for papers, their components, and taxonomies.

Papers act as hubs linked to content nodes (sections, figures, tables),
experimental context (datasets, metrics, baselines), bibliographic nodes
(authors, venues), and the problem/method taxonomy nodes. Traversals are
deterministic (id-ordered) so results are cacheable and testable.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import (
    DimensionMismatchError,
    DuplicateNodeError,
    MissingNodeError,
    SchemaError,
    SnapshotError,
)

SNAPSHOT_SCHEMA_VERSION = 1


class NodeKind(str, Enum):
    PAPER = "Paper"
    SECTION = "Section"
    FIGURE = "Figure"
    TABLE = "Table"
    DATASET = "Dataset"
    METRIC = "Metric"
    BASELINE = "Baseline"
    AUTHOR = "Author"
    VENUE = "Venue"
    PROBLEM = "ProblemNode"
    METHOD = "MethodNode"


class EdgeKind(str, Enum):
    ADDRESSES = "ADDRESSES"
    APPLIES = "APPLIES"
    USES = "USES"
    HAS = "HAS"
    WRITTEN_BY = "WRITTEN_BY"
    PUBLISHED_IN = "PUBLISHED_IN"
    CHILD_OF = "CHILD_OF"


# Admitted (source kind, target kind) pairs per edge kind.
EDGE_SCHEMA: dict[EdgeKind, frozenset[tuple[NodeKind, NodeKind]]] = {
    EdgeKind.ADDRESSES: frozenset({(NodeKind.PAPER, NodeKind.PROBLEM)}),
    EdgeKind.APPLIES: frozenset({(NodeKind.PAPER, NodeKind.METHOD)}),
    EdgeKind.USES: frozenset({
        (NodeKind.PAPER, NodeKind.DATASET),
        (NodeKind.PAPER, NodeKind.METRIC),
        (NodeKind.PAPER, NodeKind.BASELINE),
    }),
    EdgeKind.HAS: frozenset({
        (NodeKind.PAPER, NodeKind.SECTION),
        (NodeKind.PAPER, NodeKind.FIGURE),
        (NodeKind.PAPER, NodeKind.TABLE),
    }),
    EdgeKind.WRITTEN_BY: frozenset({(NodeKind.PAPER, NodeKind.AUTHOR)}),
    EdgeKind.PUBLISHED_IN: frozenset({(NodeKind.PAPER, NodeKind.VENUE)}),
    EdgeKind.CHILD_OF: frozenset({
        (NodeKind.PROBLEM, NodeKind.PROBLEM),
        (NodeKind.METHOD, NodeKind.METHOD),
    }),
}

REQUIRED_ATTRS: dict[NodeKind, tuple[str, ...]] = {
    NodeKind.PAPER: ("title",),
}


@dataclass
class GraphNode:
    id: str
    kind: NodeKind
    attrs: dict = field(default_factory=dict)
    embedding: Optional[np.ndarray] = None

    def copy(self) -> "GraphNode":
        emb = None if self.embedding is None else np.array(self.embedding, copy=True)
        return GraphNode(self.id, self.kind, json.loads(json.dumps(self.attrs)), emb)


@dataclass(frozen=True)
class GraphEdge:
    src: str
    dst: str
    kind: EdgeKind


@dataclass(frozen=True)
class Hop:
    edge_kind: EdgeKind
    direction: str  # "out" | "in"
    target_kind: NodeKind

    def __post_init__(self):
        if self.direction not in ("out", "in"):
            raise ValueError("direction must be 'out' or 'in'")


TraversalPath = Sequence[Hop]


def path_is_kind_compatible(path: TraversalPath) -> bool:
    """Consecutive hops must chain: hop i's target admits hop i+1's edge."""
    for prev, nxt in zip(path, path[1:]):
        admitted = EDGE_SCHEMA[nxt.edge_kind]
        if nxt.direction == "out":
            sources = {src for src, _ in admitted}
        else:
            sources = {dst for _, dst in admitted}
        if prev.target_kind not in sources:
            return False
    return True


class Graph:
    """Property graph; many concurrent readers, serialized writers."""

    def __init__(self, embedding_dim: int | None = None):
        self.embedding_dim = embedding_dim
        self._nodes: dict[str, GraphNode] = {}
        self._edges: set[GraphEdge] = set()
        self._out: dict[str, dict[EdgeKind, list[str]]] = {}
        self._in: dict[str, dict[EdgeKind, list[str]]] = {}
        self._version = 0
        self._lock = threading.RLock()

    # -- mutation -------------------------------------------------------

    def add_node(self, node: GraphNode) -> str:
        with self._lock:
            if node.id in self._nodes:
                raise DuplicateNodeError(f"node id {node.id!r} already present")
            for attr in REQUIRED_ATTRS.get(node.kind, ()):
                if not node.attrs.get(attr):
                    raise SchemaError(
                        f"{node.kind.value} node requires attribute {attr!r}")
            if node.embedding is not None:
                vec = np.asarray(node.embedding, dtype=float)
                if self.embedding_dim is None:
                    self.embedding_dim = int(vec.shape[0])
                if vec.shape != (self.embedding_dim,):
                    raise DimensionMismatchError(
                        f"embedding dim {vec.shape} != declared {self.embedding_dim}")
                node = GraphNode(node.id, node.kind, node.attrs, vec)
            self._nodes[node.id] = node.copy()
            self._out.setdefault(node.id, {})
            self._in.setdefault(node.id, {})
            self._version += 1
            return node.id

    def set_attrs(self, node_id: str, **attrs) -> None:
        with self._lock:
            node = self._require(node_id)
            node.attrs.update(attrs)
            self._version += 1

    def set_embedding(self, node_id: str, embedding: Sequence[float]) -> None:
        with self._lock:
            node = self._require(node_id)
            vec = np.asarray(embedding, dtype=float)
            if self.embedding_dim is None:
                self.embedding_dim = int(vec.shape[0])
            if vec.shape != (self.embedding_dim,):
                raise DimensionMismatchError(
                    f"embedding dim {vec.shape} != declared {self.embedding_dim}")
            node.embedding = vec
            self._version += 1

    def add_edge(self, src: str, dst: str, kind: EdgeKind) -> None:
        with self._lock:
            if src not in self._nodes:
                raise MissingNodeError(f"unknown source node {src!r}")
            if dst not in self._nodes:
                raise MissingNodeError(f"unknown target node {dst!r}")
            pair = (self._nodes[src].kind, self._nodes[dst].kind)
            if pair not in EDGE_SCHEMA[kind]:
                raise SchemaError(
                    f"edge {kind.value} does not admit "
                    f"({pair[0].value} -> {pair[1].value})")
            edge = GraphEdge(src, dst, kind)
            if edge in self._edges:
                return  # idempotent
            self._edges.add(edge)
            self._out[src].setdefault(kind, []).append(dst)
            self._in[dst].setdefault(kind, []).append(src)
            self._version += 1

    def remove_edge(self, src: str, dst: str, kind: EdgeKind) -> None:
        with self._lock:
            edge = GraphEdge(src, dst, kind)
            if edge not in self._edges:
                return
            self._edges.discard(edge)
            self._out[src][kind].remove(dst)
            self._in[dst][kind].remove(src)
            self._version += 1

    # -- reads -----------------------------------------------------------

    def _require(self, node_id: str) -> GraphNode:
        node = self._nodes.get(node_id)
        if node is None:
            raise MissingNodeError(f"unknown node {node_id!r}")
        return node

    def get_node(self, node_id: str) -> GraphNode:
        with self._lock:
            return self._require(node_id).copy()

    def has_node(self, node_id: str) -> bool:
        with self._lock:
            return node_id in self._nodes

    def node_ids(self, kind: NodeKind | None = None) -> list[str]:
        with self._lock:
            if kind is None:
                return sorted(self._nodes)
            return sorted(nid for nid, n in self._nodes.items() if n.kind == kind)

    def nodes(self, kind: NodeKind | None = None) -> list[GraphNode]:
        return [self.get_node(nid) for nid in self.node_ids(kind)]

    def edges(self) -> list[GraphEdge]:
        with self._lock:
            return sorted(self._edges, key=lambda e: (e.src, e.dst, e.kind.value))

    def edge_count(self) -> int:
        with self._lock:
            return len(self._edges)

    @property
    def version(self) -> int:
        with self._lock:
            return self._version

    def neighbors(self, start: str, edge_kind: EdgeKind, direction: str,
                  target_kind: NodeKind) -> list[GraphNode]:
        """All and only the one-hop matches, id-ordered for determinism."""
        with self._lock:
            self._require(start)
            adjacency = self._out if direction == "out" else self._in
            candidates = adjacency.get(start, {}).get(edge_kind, [])
            hits = sorted({nid for nid in candidates
                           if self._nodes[nid].kind == target_kind})
            return [self._nodes[nid].copy() for nid in hits]

    def execute_traversal(self, start_nodes: Sequence[str],
                          path: TraversalPath) -> list[GraphNode]:
        path = list(path)
        if not path_is_kind_compatible(path):
            raise SchemaError("traversal path hops are not kind-compatible")
        with self._lock:
            for nid in start_nodes:
                self._require(nid)
            frontier = sorted(set(start_nodes))
            if not path:
                return [self._nodes[nid].copy() for nid in frontier]
            for hop in path:
                next_ids: set[str] = set()
                for nid in frontier:
                    for node in self.neighbors(nid, hop.edge_kind, hop.direction,
                                               hop.target_kind):
                        next_ids.add(node.id)
                frontier = sorted(next_ids)
            return [self._nodes[nid].copy() for nid in frontier]

    # -- versioning and snapshots ------------------------------------------

    def corpus_version(self) -> str:
        """Content digest, independent of insertion order."""
        with self._lock:
            node_payload = []
            for nid in sorted(self._nodes):
                node = self._nodes[nid]
                emb = None if node.embedding is None else [
                    float(x) for x in node.embedding]
                node_payload.append([nid, node.kind.value,
                                     json.dumps(node.attrs, sort_keys=True), emb])
            edge_payload = [[e.src, e.dst, e.kind.value] for e in self.edges()]
            blob = json.dumps([node_payload, edge_payload], sort_keys=False)
            return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def snapshot_save(self, path: str | Path) -> None:
        path = Path(path)
        with self._lock:
            header = {"schema_version": SNAPSHOT_SCHEMA_VERSION,
                      "embedding_dim": self.embedding_dim,
                      "corpus_version": self.corpus_version()}
            lines = [json.dumps(header, sort_keys=True)]
            for nid in sorted(self._nodes):
                node = self._nodes[nid]
                rec = {"type": "node", "id": nid, "kind": node.kind.value,
                       "attrs": node.attrs}
                if node.embedding is not None:
                    rec["embedding"] = [float(x) for x in node.embedding]
                lines.append(json.dumps(rec, sort_keys=True, ensure_ascii=False))
            for edge in self.edges():
                lines.append(json.dumps(
                    {"type": "edge", "src": edge.src, "dst": edge.dst,
                     "kind": edge.kind.value}, sort_keys=True))
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def snapshot_load(cls, path: str | Path) -> "Graph":
        path = Path(path)
        try:
            lines = path.read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            raise SnapshotError(f"cannot read snapshot: {exc}")
        if not lines:
            raise SnapshotError("snapshot file is empty")
        try:
            header = json.loads(lines[0])
            if header.get("schema_version") != SNAPSHOT_SCHEMA_VERSION:
                raise SnapshotError(
                    f"unsupported snapshot schema {header.get('schema_version')!r}")
            graph = cls(embedding_dim=header.get("embedding_dim"))
            for line in lines[1:]:
                if not line.strip():
                    continue
                rec = json.loads(line)
                if rec["type"] == "node":
                    emb = rec.get("embedding")
                    graph.add_node(GraphNode(
                        rec["id"], NodeKind(rec["kind"]), rec["attrs"],
                        None if emb is None else np.asarray(emb, dtype=float)))
                elif rec["type"] == "edge":
                    graph.add_edge(rec["src"], rec["dst"], EdgeKind(rec["kind"]))
                else:
                    raise SnapshotError(f"unknown record type {rec['type']!r}")
        except SnapshotError:
            raise
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise SnapshotError(f"corrupt snapshot: {exc}")
        expected = header.get("corpus_version")
        actual = graph.corpus_version()
        if expected is not None and expected != actual:
            raise SnapshotError("corrupt snapshot: corpus version mismatch")
        return graph


def papers_using(graph: Graph, node_id: str, kind: EdgeKind) -> list[GraphNode]:
    return graph.neighbors(node_id, kind, "in", NodeKind.PAPER)
