"""Property-graph basics: typed nodes and edges, multi-hop traversal,
snapshots, and content versioning.

Run: python3 demos/01_knowledge_graph.py
"""

import tempfile
from pathlib import Path

from scholardb.graphstore import EdgeKind, Graph, GraphNode, Hop, NodeKind

graph = Graph()

# Papers are hubs; everything else hangs off them through typed edges.
graph.add_node(GraphNode("paper/spann", NodeKind.PAPER,
                         {"title": "SPANN", "publication_year": 2021}))
graph.add_node(GraphNode("paper/starling", NodeKind.PAPER,
                         {"title": "Starling", "publication_year": 2023}))
graph.add_node(GraphNode("dataset/sift1m", NodeKind.DATASET,
                         {"name": "SIFT1M"}))
graph.add_node(GraphNode("metric/qps", NodeKind.METRIC, {"name": "QPS"}))
graph.add_node(GraphNode("problem/disk-ann", NodeKind.PROBLEM,
                         {"name": "Disk-based ANN"}))

graph.add_edge("paper/spann", "dataset/sift1m", EdgeKind.USES)
graph.add_edge("paper/starling", "dataset/sift1m", EdgeKind.USES)
graph.add_edge("paper/spann", "metric/qps", EdgeKind.USES)
graph.add_edge("paper/spann", "problem/disk-ann", EdgeKind.ADDRESSES)
graph.add_edge("paper/starling", "problem/disk-ann", EdgeKind.ADDRESSES)

# The schema rejects nonsense edges outright.
try:
    graph.add_edge("paper/spann", "metric/qps", EdgeKind.ADDRESSES)
except Exception as exc:
    print(f"schema rejected a bad edge: {exc}")

# One-hop neighborhoods are id-ordered and deterministic.
users = graph.neighbors("dataset/sift1m", EdgeKind.USES, "in", NodeKind.PAPER)
print("papers using SIFT1M:", [n.attrs["title"] for n in users])

# Multi-hop traversal: problem -> its papers -> their datasets.
path = [Hop(EdgeKind.ADDRESSES, "in", NodeKind.PAPER),
        Hop(EdgeKind.USES, "out", NodeKind.DATASET)]
datasets = graph.execute_traversal(["problem/disk-ann"], path)
print("datasets reachable from the problem node:",
      [n.attrs["name"] for n in datasets])

# Snapshots round-trip byte-identically and carry a corpus version hash.
with tempfile.TemporaryDirectory() as tmp:
    snap = Path(tmp) / "graph.snap"
    graph.snapshot_save(snap)
    reloaded = Graph.snapshot_load(snap)
    print("round-trip corpus version matches:",
          reloaded.corpus_version() == graph.corpus_version())

before = graph.corpus_version()
graph.set_attrs("paper/spann", citation_count=1500)
print("mutation changed the corpus version:",
      before != graph.corpus_version())
