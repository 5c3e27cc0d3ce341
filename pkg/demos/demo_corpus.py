"""A five-paper vector-search corpus with fully scripted providers.

Every demo runs offline: chat responses come from pattern rules and
embeddings from a deterministic mock, so the scripts are reproducible
end to end. Import this module from the demo scripts.
"""

from __future__ import annotations

import json

from scholardb.graphstore import Graph
from scholardb.ingest import DocumentBundle, FixtureBiblioClient, ingest_corpus
from scholardb.llm import Accounting, GeometryEmbedder, LlmClient, ScriptedChat

EMBED_DIM = 64

PAPERS = {
    "P1": {"title": "Filtered ANN Search with Attribute Pruning",
           "year": 2021, "citations": 120,
           "history": [[2021, 10], [2022, 30], [2023, 40], [2024, 40]],
           "input": "a query vector and an attribute filter",
           "output": "top-k candidates",
           "technique": "graph index with filter-aware pruning",
           "speed": "12k vectors/s", "memory": "8.1 GB"},
    "P2": {"title": "Scalable Range Search over Vector Collections",
           "year": 2022, "citations": 45,
           "history": [[2022, 5], [2023, 15], [2024, 25]],
           "input": "a query vector and a distance radius",
           "output": "all points within the radius",
           "technique": "space partitioning tree with radius pruning",
           "speed": "9k vectors/s", "memory": "5.4 GB"},
    "P3": {"title": "Fast KNN Retrieval with Proximity Graphs",
           "year": 2023, "citations": 260,
           "history": [[2023, 100], [2024, 160]],
           "input": "a query vector", "output": "top-k neighbors",
           "technique": "graph index greedy traversal",
           "speed": "21k vectors/s", "memory": "6.2 GB"},
    "P4": {"title": "Multi-attribute Filtered Vector Search",
           "year": 2024, "citations": 30, "history": [[2024, 30]],
           "input": "a query vector and a multi-attribute filter",
           "output": "top-k candidates",
           "technique": "graph index with composite predicate pruning",
           "speed": "11k vectors/s", "memory": "9.0 GB"},
    "P5": {"title": "Batched KNN Query Processing",
           "year": 2024, "citations": 18, "history": [[2024, 18]],
           "input": "a batch of query vectors",
           "output": "top-k neighbors per query",
           "technique": "graph index batched traversal",
           "speed": "17k vectors/s", "memory": "7.3 GB"},
}

SIGNATURES = {
    "a query vector and an attribute filter": ["attribute filter"],
    "a query vector and a distance radius": ["distance radius"],
    "a query vector": ["query vector"],
    "a query vector and a multi-attribute filter": ["multi-attribute filter"],
    "a batch of query vectors": ["batch of query vectors"],
    "top-k candidates": ["top-k candidates"],
    "all points within the radius": ["all points within the radius"],
    "top-k neighbors": ["top-k neighbors"],
    "top-k neighbors per query": ["top-k neighbors"],
}

CLASS_LABELS = {
    "attribute filter": "filtered vector query",
    "distance radius": "radius vector query",
    "query vector": "plain vector query",
    "multi-attribute filter": "multi-attribute filtered query",
    "batch of query vectors": "batched vector queries",
    "top-k candidates": "top-k result set",
    "top-k neighbors": "top-k result set",
    "all points within the radius": "radius result set",
}

SCOPE = "papers on vector search since 2023 that use graph-based methods"
TASK = "build a table comparing their indexing speed and memory usage"
QUERY = f"Find {SCOPE} and {TASK}"


def make_bundle(pid: str) -> DocumentBundle:
    p = PAPERS[pid]
    dataset = "SIFT-1M" if pid == "P2" else "SIFT1M"
    sections = [
        {"raw_title": "Abstract",
         "body": f"{p['title']}. We study vector search where the input is "
                 f"{p['input']} and the output is {p['output']}."},
        {"raw_title": "1. Introduction",
         "body": f"This paper ({pid}) targets {p['input']}."},
        {"raw_title": "2. Problem Definition",
         "body": f"Given {p['input']}, return {p['output']}."},
        {"raw_title": "3. Methodology",
         "body": f"Our method uses {p['technique']}."},
        {"raw_title": "4. Experiments",
         "body": f"On {dataset} we measure QPS and Recall against HNSW. "
                 f"Indexing speed reaches {p['speed']} and memory usage is "
                 f"{p['memory']}."},
    ]
    return DocumentBundle(paper_id=pid, title=p["title"],
                          authors=[f"Author {pid}"], venue="VecConf",
                          publication_year=p["year"],
                          citation_count=p["citations"],
                          citation_history=[tuple(x) for x in p["history"]],
                          sections=sections)


def concept_text(pid: str) -> str:
    p = PAPERS[pid]
    return (f"{CLASS_LABELS[SIGNATURES[p['input']][0]]}; "
            f"{CLASS_LABELS[SIGNATURES[p['output']][0]]}")


def make_chat() -> ScriptedChat:
    chat = ScriptedChat()
    for pid, p in PAPERS.items():
        dataset = "SIFT-1M" if pid == "P2" else "SIFT1M"
        chat.add("context_entities", p["speed"], json.dumps(
            {"datasets": [dataset], "metrics": ["QPS", "Recall"],
             "baselines": ["HNSW"]}))
        chat.add("aspect_template_problem", p["title"], json.dumps(
            {"description": f"{p['title']} problem statement",
             "input": p["input"], "output": p["output"]}))
        chat.add("aspect_template_method", p["title"], json.dumps(
            {"description": f"{p['title']} method summary",
             "key_techniques": p["technique"], "strengths": "fast",
             "weaknesses": "memory hungry"}))
    chat.add("entity_groups", "SIFT-1M", json.dumps(
        {"groups": [{"canonical": "SIFT1M", "members": ["SIFT-1M", "SIFT1M"]}]}))
    chat.add("entity_groups", None, json.dumps({"groups": []}))

    def signature_rule(req):
        text = req.messages[-1][1].split(": ", 1)[-1]
        return json.dumps({"signatures": SIGNATURES.get(text, [text])})

    chat.add("signatures", None, signature_rule)

    def class_rule(req):
        sigs = json.loads(req.messages[-1][1])["signatures"]
        groups: dict[str, list[str]] = {}
        for sig in sigs:
            groups.setdefault(CLASS_LABELS.get(sig, sig), []).append(sig)
        return json.dumps({"classes": [{"label": k, "members": v}
                                       for k, v in sorted(groups.items())]})

    chat.add("signature_classes", None, class_rule)
    chat.add("topic_label", "problem statement",
             json.dumps({"topic": "Vector Search"}))
    chat.add("topic_label", "method summary",
             json.dumps({"topic": "Vector Search Methods"}))

    def ref_rule(req):
        kind = json.loads(req.messages[-1][1])["taxonomy_kind"]
        if kind == "problem":
            nodes = [("root", "Vector Search", "Search over vector collections",
                      None),
                     ("knn", "KNN Retrieval", "Plain nearest neighbor retrieval",
                      "root"),
                     ("fvs", "Filtered Vector Search",
                      "Vector search constrained by attribute predicates",
                      "root")]
        else:
            nodes = [("root", "Vector Search Methods",
                      "Method families for vector search", None),
                     ("graph", "Graph-based Indexing",
                      "Proximity-graph traversal methods", "root"),
                     ("tree", "Space-partitioning Indexing",
                      "Tree and partition based methods", "root")]
        return json.dumps({"nodes": [
            {"id": i, "name": n, "description": d, "parent_id": p}
            for i, n, d, p in nodes]})

    chat.add("reference_taxonomy", None, ref_rule)
    chat.add("subsumes", None, json.dumps({"subsumes": False}))

    def naming_rule(req):
        signature = json.loads(req.messages[-1][1])["signature"]
        if "radius vector query" in signature:
            return json.dumps({"name": "Range Search",
                               "description": "All points within a radius"})
        if "batched vector queries" in signature:
            return json.dumps({"name": "Batch KNN",
                               "description": "Batched nearest neighbor queries"})
        return json.dumps({"name": " / ".join(signature), "description": ""})

    chat.add("node_naming", None, naming_rule)
    chat.add("estimate_subtopics", None, json.dumps({"k": 2}))

    def cluster_rule(req):
        papers = sorted(json.loads(req.messages[-1][1])["papers"])
        if papers == ["P1", "P4"]:
            return json.dumps({"clusters": [
                {"label": "Single Attribute Filter",
                 "description": "One attribute predicate", "paper_ids": ["P1"]},
                {"label": "Multi-attribute Filter",
                 "description": "Several attribute predicates",
                 "paper_ids": ["P4"]}]})
        half = max(1, len(papers) // 2)
        return json.dumps({"clusters": [
            {"label": "cluster-a", "description": "", "paper_ids": papers[:half]},
            {"label": "cluster-b", "description": "", "paper_ids": papers[half:]}]})

    chat.add("cluster_and_label", None, cluster_rule)

    # Search pipeline, planning, and operator responses for the worked query.
    chat.add("query_decomposition", "vector search since 2023", json.dumps({
        "metadata_constraints": [
            {"field": "publication_year", "value": "since 2023"},
            {"field": "title", "value": "vector search"}],
        "aspect_intents": [
            {"aspect": "proposed_method", "text": "graph-based methods"},
            {"aspect": "research_topic", "text": "vector search"}]}))

    def rerank_rule(req):
        payload = json.loads(req.messages[-1][1])
        keep = [c["paper_id"] for c in payload["candidates"]
                if (c.get("publication_year") or 0) >= 2023]
        return json.dumps({"keep": sorted(keep)})

    chat.add("rerank", None, rerank_rule)
    chat.add("scope_task", "indexing speed", json.dumps(
        {"scope": SCOPE, "task": TASK}))

    def score_rule(req):
        payload = json.loads(req.messages[-1][1])
        return json.dumps({"scores": [
            {"plan_id": c["plan_id"], "confidence": 40}
            for c in payload["candidates"]]})

    chat.add("plan_selection", None, score_rule)
    chat.add("high_level_plan", None, json.dumps(
        {"steps": [{"purpose": "fetch experiment sections"},
                   {"purpose": "extract indexing speed and memory"},
                   {"purpose": "build the comparison table"}]}))

    instantiations = {
        "fetch experiment sections": {
            "op_name": "Retrieve", "params": {"section_tags": ["Experiments"]},
            "execution_mode": "instance"},
        "extract indexing speed and memory": {
            "op_name": "Extract",
            "params": {"extract_instruction": "indexing speed and memory usage",
                       "section_tags": ["Experiments"]},
            "execution_mode": "instance"},
        "build the comparison table": {
            "op_name": "Generate",
            "params": {"generation_instruction": "build a comparison table"},
            "execution_mode": "group"},
    }
    chat.add("instantiate_step", None, lambda req: json.dumps(
        instantiations[json.loads(req.messages[-1][1])["step_purpose"]]))
    chat.add("scope_plan", None, json.dumps(
        {"steps": [{"op_name": "Search", "params": {"query": SCOPE}}]}))
    chat.add("slot_fill", None, lambda req: json.dumps(
        {"value": json.loads(req.messages[-1][1])["task"]}))

    def extract_rule(req):
        text = json.loads(req.messages[-1][1])["text"]
        for pid, p in PAPERS.items():
            if p["speed"] in text:
                return json.dumps({"record": {"paper": pid, "speed": p["speed"],
                                              "memory": p["memory"]},
                                   "evidence": []})
        return json.dumps({"record": {}, "evidence": []})

    chat.add("extract", None, extract_rule)

    def table_rule(req):
        records = json.loads(req.messages[-1][1])["inputs"]
        rows = ["| paper | indexing speed | memory |",
                "|-------|----------------|--------|"]
        for rec in records:
            inner = json.loads(rec)["record"]
            if inner:
                rows.append(f"| {inner['paper']} | {inner['speed']} "
                            f"| {inner['memory']} |")
        return "\n".join(rows)

    chat.add(None, "Produce the requested content", table_rule)
    chat.add(None, "Summarize the inputs", "a concise summary of the inputs")

    def trend_rule(req):
        subtopics = json.loads(req.messages[-1][1])["subtopics"]
        ordered = sorted(subtopics,
                         key=lambda l: (-sum(map(int, l["yearly_counts"]
                                                 .values())), l["node_id"]))
        return json.dumps({"ranking": [
            {"node_id": l["node_id"],
             "narrative": f"{l['name']} shows steady growth"}
            for l in ordered]})

    chat.add("trend_ranking", None, trend_rule)
    chat.add("idea_score", None, lambda req: json.dumps(
        {"score": 0.9 if "Range Search" in req.messages[-1][1] else 0.3}))
    chat.add("idea_proposal", None, json.dumps(
        {"motivation": "an unexplored pairing", "feasibility": "high",
         "novelty": "bridges two method families",
         "contributions": "a new index layout"}))
    chat.add("milestone_summary", None,
             json.dumps({"summary": "a field-defining result"}))
    return chat


def make_embedder() -> GeometryEmbedder:
    emb = GeometryEmbedder(dim=EMBED_DIM, seed=7)
    emb.place_near(concept_text("P1"),
                   "Filtered Vector Search: Vector search constrained by "
                   "attribute predicates", 0.95)
    emb.place_near(concept_text("P3"),
                   "KNN Retrieval: Plain nearest neighbor retrieval", 0.95)
    emb.place_near(concept_text("P4"), concept_text("P1"), 0.90)
    for pid in ("P1", "P3", "P4", "P5"):
        emb.place_near(f"{PAPERS[pid]['technique']}; fast; memory hungry",
                       "Graph-based Indexing: Proximity-graph traversal "
                       "methods", 0.95)
    emb.place_near(f"{PAPERS['P2']['technique']}; fast; memory hungry",
                   "Space-partitioning Indexing: Tree and partition based "
                   "methods", 0.95)
    return emb


def make_llm(cassette=None) -> LlmClient:
    return LlmClient(chat=make_chat(), embedder=make_embedder(),
                     cassette=cassette, embed_dim=EMBED_DIM,
                     accounting=Accounting())


def make_biblio() -> FixtureBiblioClient:
    return FixtureBiblioClient({p["title"]: {"venue": "VecConf",
                                             "publication_year": p["year"],
                                             "citation_count": p["citations"]}
                                for p in PAPERS.values()})


def build_graph(llm: LlmClient, paper_ids=tuple(PAPERS)) -> Graph:
    bundles = [make_bundle(pid) for pid in paper_ids]
    graph, _ = ingest_corpus(bundles, llm, make_biblio())
    return graph


TREND_EVIDENCE = {
    "Single Attribute Filter": [
        {"year": 2021, "count": 1, "citations": 10},
        {"year": 2022, "count": 3, "citations": 25},
        {"year": 2023, "count": 5, "citations": 60}],
    "Multi-attribute Filter": [
        {"year": 2023, "count": 2, "citations": 9},
        {"year": 2024, "count": 4, "citations": 20}],
    "KNN Retrieval": [{"year": 2021, "count": 4, "citations": 90}],
    "Range Search": [{"year": 2022, "count": 1, "citations": 4}],
    "Batch KNN": [{"year": 2024, "count": 1, "citations": 2}],
}
