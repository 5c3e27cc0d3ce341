"""Query planning: scope/task decomposition, predefined-plan selection with
confidence gating, dynamic two-phase generation, deterministic validation,
bounded self-correction, and scope/task composition.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import PlanError, SchemaViolationError, SelfCorrectionError
from .llm import LlmClient, PromptRequest, cosine
from .operators import CATALOG, SCOPE_OPERATORS, catalog_document

log = logging.getLogger(__name__)

CONFIDENCE_THRESHOLD = 0.90
CANDIDATE_COUNT = 5
DEMO_COUNT = 3
MAX_CORRECTION_ROUNDS = 3


@dataclass(frozen=True)
class ScopeTask:
    scope: str
    task: str


@dataclass
class PlanStep:
    step_id: str
    op_name: str
    params: dict = field(default_factory=dict)
    execution_mode: str = "n/a"  # instance | group | n/a
    inputs: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"step_id": self.step_id, "op_name": self.op_name,
                "params": self.params, "execution_mode": self.execution_mode,
                "inputs": list(self.inputs)}

    @classmethod
    def from_dict(cls, data: dict) -> "PlanStep":
        return cls(data["step_id"], data["op_name"], dict(data.get("params", {})),
                   data.get("execution_mode", "n/a"), list(data.get("inputs", [])))


@dataclass
class Plan:
    steps: list[PlanStep] = field(default_factory=list)
    scope_step_ids: list[str] = field(default_factory=list)

    @property
    def terminal_ids(self) -> list[str]:
        consumed = {sid for step in self.steps for sid in step.inputs}
        return [s.step_id for s in self.steps if s.step_id not in consumed]

    def step(self, step_id: str) -> PlanStep:
        for step in self.steps:
            if step.step_id == step_id:
                return step
        raise PlanError(f"unknown step {step_id!r}")

    def to_dict(self) -> dict:
        return {"steps": [s.to_dict() for s in self.steps],
                "scope_step_ids": list(self.scope_step_ids)}

    @classmethod
    def from_dict(cls, data: dict) -> "Plan":
        return cls([PlanStep.from_dict(s) for s in data.get("steps", [])],
                   list(data.get("scope_step_ids", [])))

    def structurally_equal(self, other: "Plan") -> bool:
        return self.to_dict() == other.to_dict()


@dataclass
class Issue:
    severity: str       # "error" | "warning"
    category: str       # "step-internal" | "inter-step" | "overall"
    step_ids: list[str]
    message: str

    def to_dict(self) -> dict:
        return {"severity": self.severity, "category": self.category,
                "step_ids": list(self.step_ids), "message": self.message}


@dataclass
class ValidationReport:
    issues: list[Issue] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues

    def to_dict(self) -> dict:
        return {"issues": [i.to_dict() for i in self.issues]}


# -- predefined plan library -----------------------------------------------------

@dataclass
class PredefinedPlan:
    plan_id: int
    description: str
    template: Plan
    doc_scope: str  # single | multiple | topic


def _chain(*specs: tuple[str, dict, str]) -> Plan:
    steps: list[PlanStep] = []
    prev: Optional[str] = None
    for i, (op, params, mode) in enumerate(specs):
        sid = f"step_{i + 1}"
        steps.append(PlanStep(sid, op, dict(params), mode,
                              [prev] if prev else []))
        prev = sid
    return Plan(steps)


SLOT = "__slot__"


def _extract_plan(description: str, tags: list[str]) -> Plan:
    return _chain(
        ("Retrieve", {"section_tags": tags}, "instance"),
        ("Extract", {"extract_instruction": SLOT, "detail_level": "detailed"},
         "instance"))


def _multi_summarize(description: str) -> Plan:
    return _chain(
        ("Retrieve", {"section_tags": ["Experiments"]}, "instance"),
        ("Extract", {"extract_instruction": SLOT, "detail_level": "detailed"},
         "instance"),
        ("Summarize", {"focus": SLOT, "detail_level": "detailed"}, "group"))


def build_plan_library() -> list[PredefinedPlan]:
    lib: list[PredefinedPlan] = []

    def add(plan_id: int, description: str, template: Plan, doc_scope: str):
        lib.append(PredefinedPlan(plan_id, description, template, doc_scope))

    exp = ["Experiments"]
    prob = ["ProblemFormulation"]
    meth = ["Methodology"]
    add(1, "Extract experimental settings", _extract_plan("settings", exp), "single")
    add(2, "Extract experimental datasets", _extract_plan("datasets", exp), "single")
    add(3, "Extract evaluation metrics", _extract_plan("metrics", exp), "single")
    add(4, "Extract compared baselines", _extract_plan("baselines", exp), "single")
    add(5, "Extract the experimental results of comparison with baselines",
        _extract_plan("comparison", exp), "single")
    add(6, "Extract the experimental results of parameter study",
        _extract_plan("parameters", exp), "single")
    add(7, "Extract the experimental results of ablation study",
        _extract_plan("ablation", exp), "single")
    add(8, "Extract the problem definition", _extract_plan("problem", prob), "single")
    add(9, "Extract the input of the problem", _extract_plan("input", prob), "single")
    add(10, "Extract the output of the problem", _extract_plan("output", prob),
        "single")
    add(11, "Extract the goal of the problem", _extract_plan("goal", prob), "single")
    add(12, "Extract the proposed method", _extract_plan("method", meth), "single")
    add(13, "Summarize the impact of parameters based on experimental results",
        _chain(("Retrieve", {"section_tags": exp}, "instance"),
               ("Extract", {"extract_instruction": SLOT,
                            "detail_level": "detailed"}, "instance"),
               ("Summarize", {"focus": SLOT, "detail_level": "detailed"},
                "instance")), "single")
    add(14, "Rank variants of the proposed method based on experimental results",
        _chain(("Retrieve", {"section_tags": exp}, "instance"),
               ("Extract", {"extract_instruction": SLOT,
                            "detail_level": "detailed"}, "instance"),
               ("Rank", {"rank_instruction": SLOT}, "instance")), "single")
    add(15, "Rank experimental datasets based on experimental results",
        _chain(("Retrieve", {"section_tags": exp}, "instance"),
               ("Extract", {"extract_instruction": SLOT,
                            "detail_level": "detailed"}, "instance"),
               ("Rank", {"rank_instruction": SLOT}, "instance")), "single")
    check16 = Plan([
        PlanStep("step_1", "Retrieve", {"section_tags": exp}, "instance", []),
        PlanStep("step_2", "Extract",
                 {"extract_instruction": SLOT, "detail_level": "detailed"},
                 "instance", ["step_1"]),
        PlanStep("step_3", "Retrieve", {"section_tags": meth}, "instance", []),
        PlanStep("step_4", "Extract",
                 {"extract_instruction": SLOT, "detail_level": "detailed"},
                 "instance", ["step_3"]),
        PlanStep("step_5", "Check", {"check_instruction": SLOT}, "instance",
                 ["step_2", "step_4"]),
    ])
    add(16, "Check inconsistencies between the used evaluation metrics and the "
            "original evaluation metrics", check16, "single")
    add(17, "Summarize common settings in experiments",
        _multi_summarize("common settings"), "multiple")
    add(18, "Summarize missing settings in experiments",
        _multi_summarize("missing settings"), "multiple")
    add(19, "Summarize pros and cons across different methods",
        _chain(("Retrieve", {"section_tags": meth}, "instance"),
               ("Extract", {"extract_instruction": SLOT,
                            "detail_level": "detailed"}, "instance"),
               ("Summarize", {"focus": SLOT, "detail_level": "detailed"},
                "group")), "multiple")
    add(20, "Summarize differences among the problem definition",
        _chain(("Retrieve", {"section_tags": prob}, "instance"),
               ("Extract", {"extract_instruction": SLOT,
                            "detail_level": "detailed"}, "instance"),
               ("Summarize", {"focus": SLOT, "detail_level": "detailed"},
                "group")), "multiple")
    add(21, "Rank experiment results of different methods on a common dataset "
            "and a common evaluation metric",
        _chain(("Retrieve", {"section_tags": exp}, "instance"),
               ("Extract", {"extract_instruction": SLOT,
                            "detail_level": "detailed"}, "instance"),
               ("Rank", {"rank_instruction": SLOT}, "group")), "multiple")
    add(22, "Check inconsistencies in experiment results on a common dataset "
            "and a common evaluation metric",
        _chain(("Retrieve", {"section_tags": exp}, "instance"),
               ("Extract", {"extract_instruction": SLOT,
                            "detail_level": "detailed"}, "instance"),
               ("Check", {"check_instruction": SLOT}, "group")), "multiple")
    add(23, "Research trend analysis",
        _chain(("TrendAnalysis", {}, "group")), "topic")
    add(24, "Research idea exploration",
        _chain(("IdeaExploration", {}, "group")), "topic")
    add(25, "Milestone paper selection",
        _chain(("MilestoneSelection", {}, "group")), "topic")
    return lib


class PlanLibrary:
    """Predefined plans with precomputed description embeddings."""

    def __init__(self, plans: Optional[Sequence[PredefinedPlan]] = None,
                 llm: Optional[LlmClient] = None):
        self.plans = list(plans) if plans is not None else build_plan_library()
        self._embeddings: dict[int, np.ndarray] = {}
        if llm is not None:
            self.precompute(llm)

    def to_dict(self) -> dict:
        return {"plans": [{"plan_id": p.plan_id, "description": p.description,
                           "doc_scope": p.doc_scope,
                           "template": p.template.to_dict()}
                          for p in self.plans]}

    def save(self, path) -> None:
        from pathlib import Path

        Path(path).write_text(json.dumps(self.to_dict(), indent=2,
                                         ensure_ascii=False), encoding="utf-8")

    @classmethod
    def load(cls, path, llm: Optional[LlmClient] = None) -> "PlanLibrary":
        from pathlib import Path

        data = json.loads(Path(path).read_text(encoding="utf-8"))
        plans = [PredefinedPlan(rec["plan_id"], rec["description"],
                                Plan.from_dict(rec["template"]),
                                rec["doc_scope"])
                 for rec in data["plans"]]
        return cls(plans, llm=llm)

    def precompute(self, llm: LlmClient) -> None:
        for plan in self.plans:
            self._embeddings[plan.plan_id] = llm.embed(plan.description)

    def get(self, plan_id: int) -> PredefinedPlan:
        for plan in self.plans:
            if plan.plan_id == plan_id:
                return plan
        raise PlanError(f"unknown predefined plan {plan_id}")

    def candidates(self, task: str, llm: LlmClient,
                   count: int = CANDIDATE_COUNT) -> list[PredefinedPlan]:
        if not self._embeddings:
            self.precompute(llm)
        probe = llm.embed(task)
        scored = sorted(
            self.plans,
            key=lambda p: (-cosine(self._embeddings[p.plan_id], probe), p.plan_id))
        return scored[:count]


@dataclass
class Demo:
    query: str
    plan: Plan


class DemoLibrary:
    def __init__(self, demos: Sequence[Demo] = (), llm: Optional[LlmClient] = None):
        self.demos = list(demos)
        self._embeddings: list[np.ndarray] = []
        if llm is not None and self.demos:
            self._embeddings = [llm.embed(d.query) for d in self.demos]

    @classmethod
    def load(cls, path, llm: Optional[LlmClient] = None) -> "DemoLibrary":
        from pathlib import Path

        data = json.loads(Path(path).read_text(encoding="utf-8"))
        demos = [Demo(rec["query"], Plan.from_dict(rec["plan"]))
                 for rec in data["demos"]]
        return cls(demos, llm=llm)

    def save(self, path) -> None:
        from pathlib import Path

        Path(path).write_text(json.dumps(
            {"demos": [{"query": d.query, "plan": d.plan.to_dict()}
                       for d in self.demos]}, indent=2, ensure_ascii=False),
            encoding="utf-8")

    def retrieve(self, query: str, llm: LlmClient,
                 count: int = DEMO_COUNT) -> list[Demo]:
        if not self.demos:
            return []
        if not self._embeddings:
            self._embeddings = [llm.embed(d.query) for d in self.demos]
        probe = llm.embed(query)
        order = sorted(range(len(self.demos)),
                       key=lambda i: (-cosine(self._embeddings[i], probe), i))
        return [self.demos[i] for i in order[:count]]


# -- decomposition -----------------------------------------------------------------

_DECOMPOSE_SYSTEM = (
    "You split an analytical query into what to analyze and how to analyze it. "
    "Respond with JSON {\"scope\": <the entities or conceptual boundary to "
    "analyze>, \"task\": <the analytical step to perform over that scope>}.")


def decompose(query: str, llm: LlmClient) -> ScopeTask:
    if not query.strip():
        raise PlanError("query must be non-empty")
    payload = llm.complete_json(
        PromptRequest.build(user=query, system=_DECOMPOSE_SYSTEM,
                            response_schema="scope_task"),
        required=("scope", "task"))
    scope, task = str(payload["scope"]), str(payload["task"])
    if not scope or not task:
        raise SchemaViolationError("scope and task must be non-empty",
                                   raw=json.dumps(payload))
    return ScopeTask(scope, task)


# -- predefined selection --------------------------------------------------------

_SELECT_SYSTEM = (
    "You judge how well each candidate plan matches the analytical task. "
    "Respond with JSON {\"scores\": [{\"plan_id\": <id>, \"confidence\": "
    "<integer 0-100>}]} covering every candidate.")


def select_predefined(task: str, library: PlanLibrary, llm: LlmClient
                      ) -> Optional[tuple[PredefinedPlan, float]]:
    if not library.plans:
        raise PlanError("plan library is empty")
    candidates = library.candidates(task, llm)
    if not candidates:
        return None
    payload = llm.complete_json(
        PromptRequest.build(
            user=json.dumps({"task": task,
                             "candidates": [{"plan_id": p.plan_id,
                                             "description": p.description}
                                            for p in candidates]},
                            sort_keys=True, ensure_ascii=False),
            system=_SELECT_SYSTEM, response_schema="plan_selection"),
        required=("scores",))
    known = {p.plan_id for p in candidates}
    best_id, best_conf = None, -1.0
    for entry in payload["scores"]:
        pid, conf = entry.get("plan_id"), entry.get("confidence")
        if pid not in known or not isinstance(conf, (int, float)):
            raise SchemaViolationError("malformed selection score",
                                       raw=json.dumps(payload))
        if conf > best_conf:
            best_id, best_conf = pid, conf
    confidence = best_conf / 100.0
    if best_id is None or confidence <= CONFIDENCE_THRESHOLD:
        return None
    return library.get(best_id), confidence


_SLOT_SYSTEM = (
    "You fill one parameter of an operator from the analytical task. Respond "
    "with JSON {\"value\": <the parameter value as natural language>}.")


def fill_slots(plan: Plan, task: str, llm: LlmClient) -> Plan:
    """Each template slot gets one focused provider call."""
    steps = []
    for step in plan.steps:
        params = dict(step.params)
        for name, value in step.params.items():
            if value == SLOT:
                payload = llm.complete_json(
                    PromptRequest.build(
                        user=json.dumps({"task": task, "operator": step.op_name,
                                         "parameter": name}, sort_keys=True),
                        system=_SLOT_SYSTEM, response_schema="slot_fill"),
                    required=("value",))
                params[name] = str(payload["value"])
        steps.append(replace(step, params=params, inputs=list(step.inputs)))
    return Plan(steps, list(plan.scope_step_ids))


# -- dynamic generation -----------------------------------------------------------

_HIGHLEVEL_SYSTEM = (
    "You draft a high-level logical plan for an analytical task as an ordered "
    "list of abstract steps. Respond with JSON {\"steps\": [{\"purpose\": .., "
    "\"inputs\": [<indices of upstream steps, 0-based>]}]}; omit inputs for "
    "a step that consumes the previous step's output.")

_INSTANTIATE_SYSTEM = (
    "You select the single most appropriate operator for one abstract step "
    "and parameterize it. Respond with JSON {\"op_name\": .., \"params\": "
    "{..}, \"execution_mode\": \"instance\"|\"group\"|\"n/a\"}.")


def generate_dynamic(task: str, scope_hint: str, demos: DemoLibrary,
                     llm: LlmClient) -> Plan:
    demo_records = [{"query": d.query, "plan": d.plan.to_dict()}
                    for d in demos.retrieve(task, llm)]
    payload = llm.complete_json(
        PromptRequest.build(
            user=json.dumps({"task": task, "scope_hint": scope_hint,
                             "demonstrations": demo_records},
                            sort_keys=True, ensure_ascii=False),
            system=_HIGHLEVEL_SYSTEM, response_schema="high_level_plan"),
        required=("steps",))
    abstract = payload["steps"]
    if not isinstance(abstract, list) or not abstract:
        raise SchemaViolationError("high-level plan must have steps",
                                   raw=json.dumps(payload))
    catalog = catalog_document()
    steps: list[PlanStep] = []
    for i, item in enumerate(abstract):
        purpose = item.get("purpose", "")
        inst = llm.complete_json(
            PromptRequest.build(
                user=json.dumps({"task": task, "step_purpose": purpose,
                                 "operator_catalog": catalog},
                                sort_keys=True, ensure_ascii=False),
                system=_INSTANTIATE_SYSTEM, response_schema="instantiate_step"),
            required=("op_name",))
        declared = item.get("inputs")
        if declared is None:
            inputs = [steps[-1].step_id] if steps else []
        else:
            inputs = []
            for idx in declared:
                if not isinstance(idx, int) or not 0 <= idx < i:
                    raise SchemaViolationError(
                        f"step {i} declares invalid input {idx!r}",
                        raw=json.dumps(payload))
                inputs.append(steps[idx].step_id)
        steps.append(PlanStep(
            f"step_{i + 1}", str(inst["op_name"]),
            dict(inst.get("params", {})),
            str(inst.get("execution_mode", "n/a")), inputs))
    return Plan(steps)


# -- deterministic validation ------------------------------------------------------

_TYPE_CHECKS: dict[str, Callable] = {
    "str": lambda v: isinstance(v, str),
    "int": lambda v: isinstance(v, int) and not isinstance(v, bool),
    "list": lambda v: isinstance(v, list),
    "dict": lambda v: isinstance(v, dict),
}


def _has_cycle(plan: Plan) -> bool:
    color: dict[str, int] = {}
    steps = {s.step_id: s for s in plan.steps}

    def visit(sid: str) -> bool:
        state = color.get(sid, 0)
        if state == 1:
            return True
        if state == 2:
            return False
        color[sid] = 1
        for upstream in steps[sid].inputs:
            if upstream in steps and visit(upstream):
                return True
        color[sid] = 2
        return False

    return any(visit(sid) for sid in steps)


def validate(plan: Plan) -> ValidationReport:
    """Deterministic checks only; no provider calls."""
    report = ValidationReport()
    issues = report.issues
    step_ids = [s.step_id for s in plan.steps]
    if len(set(step_ids)) != len(step_ids):
        issues.append(Issue("error", "overall", [], "duplicate step ids"))
        return report
    if not plan.steps:
        issues.append(Issue("error", "overall", [], "plan has no steps"))
        return report
    steps = {s.step_id: s for s in plan.steps}

    for step in plan.steps:
        entry = CATALOG.get(step.op_name)
        if entry is None:
            issues.append(Issue("error", "step-internal", [step.step_id],
                                f"unknown operator {step.op_name!r}"))
            continue
        for name, spec in entry.params.items():
            if spec.get("required") and name not in step.params:
                issues.append(Issue(
                    "error", "step-internal", [step.step_id],
                    f"{step.op_name} missing required parameter {name!r}"))
        for name, value in step.params.items():
            spec = entry.params.get(name)
            if spec is None:
                issues.append(Issue(
                    "error", "step-internal", [step.step_id],
                    f"{step.op_name} does not take parameter {name!r}"))
            elif value != SLOT and not _TYPE_CHECKS[spec["type"]](value):
                issues.append(Issue(
                    "error", "step-internal", [step.step_id],
                    f"parameter {name!r} must be {spec['type']}"))
        if step.op_name == "FindNode":
            given = [p for p in ("node_id", "node_description")
                     if step.params.get(p)]
            if len(given) != 1:
                issues.append(Issue(
                    "error", "step-internal", [step.step_id],
                    "FindNode takes exactly one of node_id / node_description"))
        if step.execution_mode not in entry.execution_modes:
            issues.append(Issue(
                "error", "step-internal", [step.step_id],
                f"execution_mode {step.execution_mode!r} illegal for "
                f"{step.op_name}"))

    for step in plan.steps:
        for upstream_id in step.inputs:
            if upstream_id not in steps:
                issues.append(Issue(
                    "error", "inter-step", [step.step_id],
                    f"{step.step_id} consumes unknown step {upstream_id!r}"))

    if _has_cycle(plan):
        issues.append(Issue("error", "overall", [], "plan is not a DAG"))
        return report

    for step in plan.steps:
        entry = CATALOG.get(step.op_name)
        if entry is None:
            continue
        for upstream_id in step.inputs:
            upstream = steps.get(upstream_id)
            if upstream is None:
                continue
            up_entry = CATALOG.get(upstream.op_name)
            if up_entry is None:
                continue
            if entry.input_kinds and up_entry.output_kind not in entry.input_kinds:
                issues.append(Issue(
                    "error", "inter-step", [upstream_id, step.step_id],
                    f"{step.step_id} ({step.op_name}) cannot consume "
                    f"{up_entry.output_kind.value} produced by {upstream_id} "
                    f"({upstream.op_name})"))
            # Section-tag coherence: an Extract over sections its upstream
            # Retrieve never fetched lacks the required input.
            if (step.op_name == "Extract" and upstream.op_name == "Retrieve"
                    and step.params.get("section_tags")):
                fetched = set(upstream.params.get("section_tags", []))
                wanted = set(step.params["section_tags"])
                if not wanted <= fetched:
                    missing = sorted(wanted - fetched)
                    issues.append(Issue(
                        "error", "inter-step", [upstream_id, step.step_id],
                        f"{step.step_id} extracts from sections {missing} but "
                        f"{upstream_id} retrieves only {sorted(fetched)}"))

    if not plan.terminal_ids:
        issues.append(Issue("error", "overall", [],
                            "plan has no terminal step"))
    return report


# -- self-correction ----------------------------------------------------------------

_CORRECT_SYSTEM = (
    "You debug a failed analytical plan. Given the plan and validator issues, "
    "propose a corrected plan. Respond with JSON {\"steps\": [{\"step_id\": .., "
    "\"op_name\": .., \"params\": {..}, \"execution_mode\": .., "
    "\"inputs\": [..]}]}.")


def self_correct_once(plan: Plan, report: ValidationReport,
                      llm: LlmClient) -> Plan:
    payload = llm.complete_json(
        PromptRequest.build(
            user=json.dumps({"plan": plan.to_dict(),
                             "issues": report.to_dict()},
                            sort_keys=True, ensure_ascii=False),
            system=_CORRECT_SYSTEM, response_schema="corrected_plan"),
        required=("steps",))
    return Plan([PlanStep.from_dict(s) for s in payload["steps"]],
                list(plan.scope_step_ids))


def self_correct(plan: Plan, report: ValidationReport, llm: LlmClient,
                 max_rounds: int = MAX_CORRECTION_ROUNDS) -> tuple[Plan, int]:
    """Debug-loop the plan until it validates; returns (plan, rounds used)."""
    if report.ok:
        return plan, 0
    current, current_report = plan, report
    for round_no in range(1, max_rounds + 1):
        current = self_correct_once(current, current_report, llm)
        current_report = validate(current)
        if current_report.ok:
            return current, round_no
    raise SelfCorrectionError(
        f"self-correction failed after {max_rounds} rounds",
        report=current_report)


# -- composition --------------------------------------------------------------------

def compose(scope_plan: Plan, task_plan: Plan) -> Plan:
    """Chain the scope DAG into the task DAG; source-less task steps consume
    the scope terminal."""
    scope_terminals = scope_plan.terminal_ids
    if len(scope_terminals) != 1:
        raise PlanError("scope plan must have exactly one terminal")
    terminal_id = f"scope.{scope_terminals[0]}"
    scope_steps = [replace(s, step_id=f"scope.{s.step_id}",
                           inputs=[f"scope.{i}" for i in s.inputs],
                           params=dict(s.params))
                   for s in scope_plan.steps]
    scope_out = CATALOG[scope_plan.step(scope_terminals[0]).op_name].output_kind

    task_steps = []
    for step in task_plan.steps:
        inputs = [f"task.{i}" for i in step.inputs]
        if not step.inputs:
            entry = CATALOG.get(step.op_name)
            if entry is not None and entry.input_kinds and \
                    scope_out not in entry.input_kinds:
                raise PlanError(
                    f"type-incompatible junction: {step.op_name} cannot "
                    f"consume {scope_out.value}")
            inputs = [terminal_id]
        task_steps.append(replace(step, step_id=f"task.{step.step_id}",
                                  inputs=inputs, params=dict(step.params)))
    return Plan(scope_steps + task_steps,
                scope_step_ids=[s.step_id for s in scope_steps])


# -- end-to-end planning ---------------------------------------------------------------

_SCOPE_PLAN_SYSTEM = (
    "You plan how to obtain the entities described by a scope. Respond with "
    "JSON {\"steps\": [{\"op_name\": \"Search\"|\"FindNode\"|\"Traverse\", "
    "\"params\": {..}}]} keeping the chain minimal (usually a single Search, "
    "or FindNode followed by Traverse).")


def plan_scope(scope: str, llm: LlmClient) -> Plan:
    payload = llm.complete_json(
        PromptRequest.build(user=scope, system=_SCOPE_PLAN_SYSTEM,
                            response_schema="scope_plan"),
        required=("steps",))
    steps = []
    for i, item in enumerate(payload["steps"]):
        op = item.get("op_name")
        if op not in SCOPE_OPERATORS:
            raise SchemaViolationError(f"scope step must be one of "
                                       f"{SCOPE_OPERATORS}, got {op!r}",
                                       raw=json.dumps(payload))
        steps.append(PlanStep(f"step_{i + 1}", op, dict(item.get("params", {})),
                              "n/a", [f"step_{i}"] if i else []))
    if not steps:
        raise SchemaViolationError("scope plan has no steps",
                                   raw=json.dumps(payload))
    return Plan(steps)


@dataclass
class PlanningOutcome:
    plan: Plan
    scope_task: ScopeTask
    predefined_id: Optional[int] = None
    confidence: Optional[float] = None
    correction_rounds: int = 0


class Planner:
    """Stateless given its libraries; safe to share across queries."""

    def __init__(self, library: PlanLibrary, demos: DemoLibrary | None = None,
                 use_predefined: bool = True):
        self.library = library
        self.demos = demos or DemoLibrary()
        self.use_predefined = use_predefined

    def plan_query(self, query: str, llm: LlmClient) -> PlanningOutcome:
        st = decompose(query, llm)
        predefined_id = confidence = None
        task_plan: Optional[Plan] = None
        if self.use_predefined:
            hit = select_predefined(st.task, self.library, llm)
            if hit is not None:
                template, confidence = hit
                predefined_id = template.plan_id
                task_plan = fill_slots(template.template, st.task, llm)
        if task_plan is None:
            task_plan = generate_dynamic(st.task, st.scope, self.demos, llm)

        scope_plan = plan_scope(st.scope, llm)
        composed = compose(scope_plan, task_plan)
        report = validate(composed)
        composed, rounds = self_correct(composed, report, llm)
        return PlanningOutcome(composed, st, predefined_id, confidence, rounds)
