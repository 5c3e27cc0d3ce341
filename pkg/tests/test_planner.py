from __future__ import annotations

import json

import pytest

from scholardb.errors import PlanError, SchemaViolationError, SelfCorrectionError
from scholardb.llm import Accounting, LlmClient, ScriptedChat
from scholardb.planner import (
    CONFIDENCE_THRESHOLD,
    SLOT,
    DemoLibrary,
    Plan,
    PlanLibrary,
    PlanStep,
    Planner,
    ValidationReport,
    build_plan_library,
    compose,
    decompose,
    fill_slots,
    generate_dynamic,
    plan_scope,
    select_predefined,
    self_correct,
    validate,
)


def make_llm(rules=(), default=None) -> LlmClient:
    return LlmClient(chat=ScriptedChat(rules, default=default), embed_dim=32,
                     accounting=Accounting())


def valid_chain() -> Plan:
    return Plan([
        PlanStep("step_1", "Retrieve", {"section_tags": ["Experiments"]},
                 "instance", []),
        PlanStep("step_2", "Extract",
                 {"extract_instruction": "extract numbers",
                  "section_tags": ["Experiments"]}, "instance", ["step_1"]),
        PlanStep("step_3", "Generate", {"generation_instruction": "table"},
                 "group", ["step_2"]),
    ])


class TestDecompose:
    def test_fig6_query(self):
        llm = make_llm([("scope_task", None, json.dumps({
            "scope": "papers on vector search since 2023 that use graph-based "
                     "methods",
            "task": "build a table comparing their indexing speed and memory "
                    "usage"}))])
        st = decompose("Find papers on vector search since 2023 that use "
                       "graph-based methods and build a table comparing their "
                       "indexing speed and memory usage", llm)
        assert st.scope.startswith("papers on vector search")
        assert st.task.startswith("build a table")

    def test_single_paper_query(self):
        llm = make_llm([("scope_task", None, json.dumps(
            {"scope": "paper X", "task": "summarize the method"}))])
        st = decompose("Summarize paper X's method", llm)
        assert st == type(st)("paper X", "summarize the method")

    def test_empty_query_rejected(self):
        with pytest.raises(PlanError):
            decompose("   ", make_llm())

    def test_empty_fields_rejected(self):
        llm = make_llm([("scope_task", None,
                         json.dumps({"scope": "", "task": "t"}))])
        with pytest.raises(SchemaViolationError):
            decompose("q", llm)


class TestPlanLibrary:
    def test_twenty_five_plans(self):
        lib = build_plan_library()
        assert [p.plan_id for p in lib] == list(range(1, 26))

    def test_doc_scopes(self):
        lib = {p.plan_id: p for p in build_plan_library()}
        assert all(lib[i].doc_scope == "single" for i in range(1, 17))
        assert all(lib[i].doc_scope == "multiple" for i in range(17, 23))
        assert all(lib[i].doc_scope == "topic" for i in range(23, 26))

    def test_all_templates_validate(self):
        for plan in build_plan_library():
            report = validate(plan.template)
            assert report.ok, f"plan {plan.plan_id}: {report.to_dict()}"

    def test_candidate_filtering_returns_five(self):
        llm = make_llm()
        library = PlanLibrary(llm=llm)
        out = library.candidates("Extract experimental datasets", llm)
        assert len(out) == 5

    def test_exact_description_is_top_candidate(self):
        llm = make_llm()
        library = PlanLibrary(llm=llm)
        out = library.candidates("Extract experimental datasets", llm)
        assert out[0].plan_id == 2  # identical text embeds identically


class TestSelectPredefined:
    def _llm_scoring(self, confidence: int) -> LlmClient:
        def score_rule(req):
            payload = json.loads(req.messages[-1][1])
            scores = [{"plan_id": c["plan_id"], "confidence": 10}
                      for c in payload["candidates"][1:]]
            scores.append({"plan_id": payload["candidates"][0]["plan_id"],
                           "confidence": confidence})
            return json.dumps({"scores": scores})

        return make_llm([("plan_selection", None, score_rule)])

    def test_high_confidence_selected(self):
        llm = self._llm_scoring(95)
        library = PlanLibrary(llm=llm)
        hit = select_predefined("Extract experimental datasets", library, llm)
        assert hit is not None
        plan, confidence = hit
        assert plan.plan_id == 2
        assert confidence == 0.95

    def test_low_confidence_falls_through(self):
        llm = self._llm_scoring(80)
        library = PlanLibrary(llm=llm)
        assert select_predefined("Extract experimental datasets",
                                 library, llm) is None

    def test_threshold_is_exclusive(self):
        llm = self._llm_scoring(90)
        library = PlanLibrary(llm=llm)
        assert select_predefined("anything", library, llm) is None
        assert CONFIDENCE_THRESHOLD == 0.90

    def test_empty_library_rejected(self):
        llm = make_llm()
        with pytest.raises(PlanError):
            select_predefined("t", PlanLibrary(plans=[]), llm)


class TestFillSlots:
    def test_each_slot_gets_focused_call(self):
        def slot_rule(req):
            payload = json.loads(req.messages[-1][1])
            return json.dumps({"value": f"filled {payload['parameter']}"})

        llm = make_llm([("slot_fill", None, slot_rule)])
        library = PlanLibrary(llm=llm)
        template = library.get(2).template
        filled = fill_slots(template, "Extract experimental datasets", llm)
        extract = filled.step("step_2")
        assert extract.params["extract_instruction"] == \
            "filled extract_instruction"
        assert SLOT not in json.dumps(filled.to_dict())

    def test_template_not_mutated(self):
        llm = make_llm([("slot_fill", None, json.dumps({"value": "v"}))])
        library = PlanLibrary(llm=llm)
        template = library.get(2).template
        fill_slots(template, "task", llm)
        assert template.step("step_2").params["extract_instruction"] == SLOT


class TestGenerateDynamic:
    def _llm(self, high_level, instantiations):
        queue = list(instantiations)

        def inst_rule(req):
            return json.dumps(queue.pop(0))

        return make_llm([
            ("high_level_plan", None, json.dumps({"steps": high_level})),
            ("instantiate_step", None, inst_rule),
        ])

    def test_fig6_three_step_plan(self):
        llm = self._llm(
            [{"purpose": "fetch experiment sections"},
             {"purpose": "extract the numbers"},
             {"purpose": "build the table"}],
            [{"op_name": "Retrieve",
              "params": {"section_tags": ["Experiments"]},
              "execution_mode": "instance"},
             {"op_name": "Extract",
              "params": {"extract_instruction": "indexing speed and memory"},
              "execution_mode": "instance"},
             {"op_name": "Generate",
              "params": {"generation_instruction": "comparison table"},
              "execution_mode": "group"}])
        plan = generate_dynamic("build a table", "papers", DemoLibrary(), llm)
        assert [s.op_name for s in plan.steps] == [
            "Retrieve", "Extract", "Generate"]
        assert plan.steps[1].inputs == ["step_1"]
        assert validate(plan).ok

    def test_single_step_plan(self):
        llm = self._llm([{"purpose": "summarize"}],
                        [{"op_name": "Summarize", "params": {},
                          "execution_mode": "group"}])
        plan = generate_dynamic("summarize", "papers", DemoLibrary(), llm)
        assert len(plan.steps) == 1
        assert plan.terminal_ids == ["step_1"]

    def test_unknown_operator_is_validation_bound(self):
        llm = self._llm([{"purpose": "summarize"}],
                        [{"op_name": "Summarise2", "params": {},
                          "execution_mode": "group"}])
        plan = generate_dynamic("x", "y", DemoLibrary(), llm)
        report = validate(plan)
        assert not report.ok
        assert any("unknown operator" in i.message for i in report.issues)


class TestValidate:
    def test_valid_chain_clean(self):
        assert validate(valid_chain()).ok

    def test_section_tag_coherence_issue(self):
        plan = valid_chain()
        plan.steps[1].params["section_tags"] = ["Methodology"]
        report = validate(plan)
        issues = [i for i in report.issues if i.category == "inter-step"]
        assert issues and set(issues[0].step_ids) == {"step_1", "step_2"}
        assert "Methodology" in issues[0].message

    def test_cycle_detected(self):
        plan = Plan([
            PlanStep("a", "Summarize", {}, "group", ["b"]),
            PlanStep("b", "Summarize", {}, "group", ["a"]),
        ])
        report = validate(plan)
        assert any("not a DAG" in i.message for i in report.issues)

    def test_missing_required_param(self):
        plan = Plan([PlanStep("a", "Extract", {}, "instance", [])])
        report = validate(plan)
        assert any("extract_instruction" in i.message for i in report.issues)

    def test_illegal_execution_mode(self):
        plan = Plan([PlanStep("a", "Search", {"query": "x"}, "instance", [])])
        report = validate(plan)
        assert any("execution_mode" in i.message for i in report.issues)

    def test_type_incompatible_input(self):
        plan = Plan([
            PlanStep("a", "Search", {"query": "x"}, "n/a", []),
            PlanStep("b", "Verify", {"claim": "c"}, "group", ["a"]),
        ])
        report = validate(plan)
        assert any("cannot consume" in i.message for i in report.issues)

    def test_unknown_input_reference(self):
        plan = Plan([PlanStep("a", "Summarize", {}, "group", ["ghost"])])
        report = validate(plan)
        assert any("unknown step" in i.message for i in report.issues)

    def test_findnode_exclusive_params(self):
        plan = Plan([PlanStep("a", "FindNode",
                              {"node_id": "x", "node_description": "y"},
                              "n/a", [])])
        report = validate(plan)
        assert any("exactly one" in i.message for i in report.issues)


class TestLibraryFiles:
    def test_plan_library_file_round_trip(self, tmp_path):
        library = PlanLibrary()
        library.save(tmp_path / "library.json")
        again = PlanLibrary.load(tmp_path / "library.json")
        assert again.to_dict() == library.to_dict()
        assert [p.plan_id for p in again.plans] == list(range(1, 26))

    def test_demo_library_file_round_trip(self, tmp_path):
        from scholardb.planner import Demo

        demos = DemoLibrary([Demo("q1", valid_chain())])
        demos.save(tmp_path / "demos.json")
        got = DemoLibrary.load(tmp_path / "demos.json")
        assert got.demos[0].query == "q1"
        assert got.demos[0].plan.structurally_equal(valid_chain())


class TestSelfCorrect:
    def test_already_valid_returns_unchanged(self):
        plan = valid_chain()
        out, rounds = self_correct(plan, ValidationReport(), make_llm())
        assert out is plan and rounds == 0

    def test_one_round_repair(self):
        flawed = valid_chain()
        flawed.steps[1].params["section_tags"] = ["Methodology"]
        fixed = valid_chain()

        llm = make_llm([("corrected_plan", None,
                         json.dumps({"steps": [s.to_dict()
                                               for s in fixed.steps]}))])
        out, rounds = self_correct(flawed, validate(flawed), llm)
        assert rounds == 1
        assert validate(out).ok

    def test_never_fixed_fails_after_three_rounds(self):
        flawed = Plan([
            PlanStep("a", "Summarize", {}, "group", ["b"]),
            PlanStep("b", "Summarize", {}, "group", ["a"]),
        ])
        llm = make_llm([("corrected_plan", None,
                         json.dumps({"steps": [s.to_dict()
                                               for s in flawed.steps]}))])
        with pytest.raises(SelfCorrectionError) as err:
            self_correct(flawed, validate(flawed), llm, max_rounds=3)
        assert err.value.report is not None
        assert llm.accounting_summary()["call_count"] == 3


class TestCompose:
    def test_search_feeds_task(self):
        scope = Plan([PlanStep("step_1", "Search", {"query": "q"}, "n/a", [])])
        task = valid_chain()
        combined = compose(scope, task)
        assert combined.scope_step_ids == ["scope.step_1"]
        first_task = combined.step("task.step_1")
        assert first_task.inputs == ["scope.step_1"]
        assert validate(combined).ok

    def test_findnode_traverse_scope(self):
        scope = Plan([
            PlanStep("step_1", "FindNode", {"node_description": "graph"},
                     "n/a", []),
            PlanStep("step_2", "Traverse", {"traversal_path": []}, "n/a",
                     ["step_1"]),
        ])
        task = Plan([PlanStep("step_1", "Summarize", {}, "group", [])])
        combined = compose(scope, task)
        assert combined.step("task.step_1").inputs == ["scope.step_2"]

    def test_type_incompatible_junction_rejected(self):
        scope = Plan([PlanStep("step_1", "Search", {"query": "q"}, "n/a", [])])
        task = Plan([PlanStep("step_1", "Verify", {"claim": "c"}, "group", [])])
        with pytest.raises(PlanError):
            compose(scope, task)

    def test_step_ids_uniquified(self):
        scope = Plan([PlanStep("step_1", "Search", {"query": "q"}, "n/a", [])])
        task = Plan([PlanStep("step_1", "Summarize", {}, "group", [])])
        combined = compose(scope, task)
        ids = [s.step_id for s in combined.steps]
        assert len(ids) == len(set(ids))


class TestPlannerEndToEnd:
    def _full_llm(self, confidence=95):
        def score_rule(req):
            payload = json.loads(req.messages[-1][1])
            return json.dumps({"scores": [
                {"plan_id": c["plan_id"],
                 "confidence": confidence if i == 0 else 5}
                for i, c in enumerate(payload["candidates"])]})

        return make_llm([
            ("scope_task", None, json.dumps(
                {"scope": "papers on vector search",
                 "task": "Extract experimental datasets"})),
            ("plan_selection", None, score_rule),
            ("slot_fill", None, json.dumps({"value": "extract datasets"})),
            ("scope_plan", None, json.dumps(
                {"steps": [{"op_name": "Search",
                            "params": {"query": "vector search"}}]})),
        ])

    def test_predefined_hit_produces_valid_plan(self):
        llm = self._full_llm()
        planner = Planner(PlanLibrary(llm=llm))
        outcome = planner.plan_query("find vector search papers and extract "
                                     "their datasets", llm)
        assert outcome.predefined_id == 2
        assert outcome.confidence == 0.95
        assert validate(outcome.plan).ok
        assert outcome.plan.scope_step_ids == ["scope.step_1"]

    def test_planner_determinism(self):
        plans = []
        for _ in range(2):
            llm = self._full_llm()
            planner = Planner(PlanLibrary(llm=llm))
            plans.append(planner.plan_query("q", llm).plan)
        assert plans[0].structurally_equal(plans[1])

    def test_predefined_hit_frugality(self):
        llm = self._full_llm()
        planner = Planner(PlanLibrary(llm=llm))
        llm.reset_accounting()
        planner.plan_query("q", llm)
        summary = llm.accounting_summary()
        # decompose + stage-2 rerank + one slot fill + scope planning.
        assert summary["call_count"] == 4

    def test_scope_plan_rejects_non_scope_operator(self):
        llm = make_llm([("scope_plan", None, json.dumps(
            {"steps": [{"op_name": "Summarize", "params": {}}]}))])
        with pytest.raises(SchemaViolationError):
            plan_scope("papers", llm)
