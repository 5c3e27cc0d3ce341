"""The query service and its HTTP surface: submit a session turn, poll
status, fetch results and traces, and browse the analytic views.

Run: python3 demos/07_service_api.py
"""

import tempfile
from pathlib import Path

from fastapi.testclient import TestClient

import demo_corpus
from scholardb.analytics import FixtureTrendClient
from scholardb.service import QueryService, build_app
from scholardb.taxonomy import TaxonomyConfig, TaxonomyKind, build_taxonomy, update_with_paper

llm = demo_corpus.make_llm()
graph = demo_corpus.build_graph(llm)
cfg = TaxonomyConfig(alpha=1.0, tau_match=0.80, k_max=6)
problem = build_taxonomy(graph, TaxonomyKind.PROBLEM, cfg, llm,
                         paper_ids=["P1", "P2", "P3"])
update_with_paper(problem, graph, "P4", llm)
update_with_paper(problem, graph, "P5", llm)
method = build_taxonomy(graph, TaxonomyKind.METHOD, cfg, llm)

with tempfile.TemporaryDirectory() as tmp:
    service = QueryService(
        graph, llm, state_dir=Path(tmp),
        trend_client=FixtureTrendClient(demo_corpus.TREND_EVIDENCE))
    service.set_taxonomy(problem)
    service.set_taxonomy(method)
    client = TestClient(build_app(service))

    print("=== a session turn over the wire ===")
    execution_id = client.post("/queries", json={
        "session_id": "demo", "query": demo_corpus.QUERY}).json()["execution_id"]
    status = client.get(f"/queries/{execution_id}").json()
    print("status:", status)
    result = client.get(f"/queries/{execution_id}/result").json()
    print(result["terminals"]["task.step_3"][0]["value"])

    trace = client.get(f"/queries/{execution_id}/trace").json()
    print(f"\ntrace has {len(trace['records'])} node records")

    print("\n=== browse views ===")
    tree = client.get("/taxonomy/problem").json()
    print("taxonomy root:", tree["root"]["name"], "with",
          [c["name"] for c in tree["root"]["children"]])
    matrix = client.get("/matrix").json()
    print(f"matrix: {len(matrix['rows'])} problems x "
          f"{len(matrix['cols'])} methods")
    trend = client.get("/trend").json()
    print("trend leaves:", [l["name"] for l in trend["leaves"]][:3], "...")
    milestones = client.get("/milestones", params={"top_k": 2}).json()
    print("milestones:", [m["paper_id"] for m in milestones["milestones"]])

    session = client.get("/sessions/demo").json()
    print("\nsession turns:", len(session["turns"]))
