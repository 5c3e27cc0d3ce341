"""The five-stage search pipeline: decomposition, temporal filtering, hybrid
BM25 + dense retrieval, score fusion, and reranking — plus ranking metrics.

Run: python3 demos/04_hybrid_search.py
"""

import demo_corpus
from scholardb.retrieval import (
    SearchBackend,
    aggregate_scores,
    decompose_query,
    map_score,
    ndcg_at_k,
    r_precision,
)

llm = demo_corpus.make_llm()
graph = demo_corpus.build_graph(llm)
backend = SearchBackend(graph, llm)

decomposed = decompose_query(demo_corpus.QUERY, llm)
print("metadata constraints:", decomposed.metadata_constraints)
print("aspect intents:", decomposed.aspect_intents)
print("year range:", decomposed.year_range)

# Lexical and dense strategies run separately...
lexical = backend.bm25_search("title", "vector search", 5)
print("\nBM25 over titles:", [(pid, round(s, 3)) for pid, s in lexical])
dense = backend.dense_search("proposed_method", "graph-based methods", 5)
print("dense over method aspect:", [(pid, round(s, 3)) for pid, s in dense])

# ...then min-max fusion combines the groups with equal weight.
fused = aggregate_scores({"lexical": [dict(lexical)],
                          "semantic": [dict(dense)]})
print("fused top-3:", [(c.paper_id, round(c.combined, 3)) for c in fused[:3]])

ranked = backend.search(demo_corpus.QUERY)
print("\nfull pipeline result:", ranked)

relevant = {"P3", "P4", "P5"}
gains = [1.0 if pid in relevant else 0.0 for pid in ranked]
print(f"R-Precision={r_precision(ranked, relevant):.3f} "
      f"MAP={map_score(ranked, relevant):.3f} "
      f"NDCG@3={ndcg_at_k(gains, 3):.3f}")
