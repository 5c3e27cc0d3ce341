"""Topic-level analytics: publication trends per taxonomy leaf, the
problem-method matrix with unexplored cells, and milestone scoring.

Run: python3 demos/06_research_analytics.py
"""

import demo_corpus
from scholardb.analytics import (
    FixtureTrendClient,
    idea_exploration,
    milestone_selection,
    trend_analysis,
)
from scholardb.operators import OperatorContext, op_matrix_construct
from scholardb.taxonomy import TaxonomyConfig, TaxonomyKind, anchor_into_graph, build_taxonomy, update_with_paper

llm = demo_corpus.make_llm()
graph = demo_corpus.build_graph(llm)
cfg = TaxonomyConfig(alpha=1.0, tau_match=0.80, k_max=6)

problem = build_taxonomy(graph, TaxonomyKind.PROBLEM, cfg, llm,
                         paper_ids=["P1", "P2", "P3"])
update_with_paper(problem, graph, "P4", llm)
update_with_paper(problem, graph, "P5", llm)
method = build_taxonomy(graph, TaxonomyKind.METHOD, cfg, llm)
anchor_into_graph(problem, graph, llm)
anchor_into_graph(method, graph, llm)

print("=== research trends per problem leaf ===")
report = trend_analysis(graph, [problem.root_id],
                        FixtureTrendClient(demo_corpus.TREND_EVIDENCE), llm)
for leaf in sorted(report.leaves, key=lambda l: l.rank):
    series = ", ".join(f"{y}:{c}" for y, c in sorted(leaf.yearly_counts.items()))
    print(f"  #{leaf.rank} {leaf.name:28s} [{series}]")

print("\n=== problem-method matrix ===")
matrix = op_matrix_construct(OperatorContext(graph, llm)).value
name_of = {nid: graph.get_node(nid).attrs["name"]
           for nid in matrix.rows + matrix.cols}
header = " " * 26 + " | ".join(f"{name_of[c][:18]:18s}" for c in matrix.cols)
print(header)
for row in matrix.rows:
    cells = " | ".join(f"{matrix.cell(row, c)['count']:^18d}"
                       for c in matrix.cols)
    print(f"{name_of[row][:24]:24s}  {cells}")

print("\n=== idea exploration over the empty cells ===")
for proposal in idea_exploration(graph, llm, k=2):
    print(f"  {name_of[proposal.problem_node]} x "
          f"{name_of[proposal.method_node]} "
          f"(score {proposal.stage1_score:.2f}): "
          f"{proposal.proposal['motivation']}")

print("\n=== milestone papers ===")
for score in milestone_selection(graph, llm, k=3):
    print(f"  {score.paper_id}: composite={score.composite:.3f} "
          f"boost={score.delayed_boost} - {score.summary}")
