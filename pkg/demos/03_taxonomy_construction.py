"""Reference-enhanced taxonomy construction on the five-paper corpus:
build over three papers, then progressively route two more, watching a
leaf split and a new branch appear.

Run: python3 demos/03_taxonomy_construction.py
"""

import demo_corpus
from scholardb.graphstore import EdgeKind, NodeKind
from scholardb.taxonomy import (
    TaxonomyConfig,
    TaxonomyKind,
    anchor_into_graph,
    build_taxonomy,
    update_with_paper,
)


def show(tax, node_id=None, depth=0):
    node_id = node_id or tax.root_id
    node = tax.nodes[node_id]
    papers = f"  <- {sorted(node.papers)}" if node.papers else ""
    print("  " * depth + f"- {node.name}{papers}")
    for child in node.children:
        show(tax, child, depth + 1)


llm = demo_corpus.make_llm()
graph = demo_corpus.build_graph(llm)
cfg = TaxonomyConfig(alpha=1.0, tau_match=0.80, k_max=6)

print("=== construction over P1, P2, P3 ===")
tax = build_taxonomy(graph, TaxonomyKind.PROBLEM, cfg, llm,
                     paper_ids=["P1", "P2", "P3"])
show(tax)
# The reference skeleton contributed "KNN Retrieval" and "Filtered Vector
# Search"; the corpus forced a new "Range Search" node for P2.

print("\n=== progressive update with P4 (multi-attribute filtering) ===")
record = update_with_paper(tax, graph, "P4", llm)
refined = record.refined.case if record.refined else "none"
print(f"routed to {tax.nodes[record.node_id].name}; refinement: {refined}")
show(tax)
# P4 crowded the "Filtered Vector Search" leaf past the alpha threshold,
# so the leaf split into single- and multi-attribute children.

print("\n=== progressive update with P5 (batch queries) ===")
record = update_with_paper(tax, graph, "P5", llm)
print(f"created new node: {record.created_new} "
      f"({tax.nodes[record.node_id].name})")
show(tax)

print("\n=== anchoring into the property graph ===")
anchor_into_graph(tax, graph, llm)
single = next(nid for nid, n in tax.nodes.items()
              if n.name == "Single Attribute Filter")
papers = graph.neighbors(single, EdgeKind.ADDRESSES, "in", NodeKind.PAPER)
print("papers assigned to 'Single Attribute Filter':",
      [p.id for p in papers])
