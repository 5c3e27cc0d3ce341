"""Capture wire-format responses from the fixture-backed service for the
frontend's data-binding tests.

Run from the repository root:
    python3 scripts/generate_ui_fixtures.py
"""

from __future__ import annotations

import json
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "demos"))

import demo_corpus  # noqa: E402
from fastapi.testclient import TestClient  # noqa: E402

from scholardb.analytics import FixtureTrendClient  # noqa: E402
from scholardb.service import QueryService, build_app  # noqa: E402
from scholardb.taxonomy import (  # noqa: E402
    TaxonomyConfig,
    TaxonomyKind,
    build_taxonomy,
    update_with_paper,
)

OUT = ROOT / "frontend" / "tests" / "fixtures"


def main() -> None:
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

        execution_id = client.post("/queries", json={
            "session_id": "ui", "query": demo_corpus.QUERY,
        }).json()["execution_id"]

        captures = {
            "status": client.get(f"/queries/{execution_id}").json(),
            "result": client.get(f"/queries/{execution_id}/result").json(),
            "trace": client.get(f"/queries/{execution_id}/trace").json(),
            "taxonomy": client.get("/taxonomy/problem").json(),
            "matrix": client.get("/matrix").json(),
            "trend": client.get("/trend").json(),
            "milestones": client.get("/milestones",
                                     params={"top_k": 3}).json(),
            "session": client.get("/sessions/ui").json(),
        }
        # Stable execution id so fixtures do not churn between captures.
        blob = json.dumps(captures, sort_keys=True)
        blob = blob.replace(execution_id, "exec-fixture")
        captures = json.loads(blob)

        # A compact four-node trace for the DAG-view snapshot test.
        records = captures["trace"]["records"]
        keep = ["scope.step_1", "task.step_1#0", "task.step_2#0",
                "task.step_3"]
        small = dict(captures["trace"])
        small["records"] = [
            {**r, "dependencies": [d for d in r["dependencies"] if d in keep]}
            for r in records if r["exec_id"] in keep]
        captures["trace_small"] = small

    OUT.mkdir(parents=True, exist_ok=True)
    for name, payload in captures.items():
        (OUT / f"{name}.json").write_text(
            json.dumps(payload, indent=2, ensure_ascii=False, sort_keys=True),
            encoding="utf-8")
        print(f"wrote {name}.json")


if __name__ == "__main__":
    main()
