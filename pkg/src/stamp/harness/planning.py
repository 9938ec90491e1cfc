"""Planners propose the next sub-instruction; workers ground it to an engine action."""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from typing import Optional, Protocol

from ..clients import ChatClient, UnparseableResponse, parse_json_document, text_message
from ..engine import Action, Observation
from ..synthesis.bundle import EnvironmentBundle
from ..synthesis.patterns import pattern_for
from ..templates import load_template

log = logging.getLogger(__name__)

PROPOSAL_KINDS = ("click", "input", "scroll", "end")


@dataclass(frozen=True)
class Proposal:
    """A planner sub-instruction.

    ``target`` is the testid the scripted planner means; service planners
    leave it empty and rely on the description.
    """

    kind: str
    description: str = ""
    text: Optional[str] = None
    target: Optional[str] = None
    memory: str = ""
    think: str = ""

    def as_instruction(self) -> str:
        if self.kind == "scroll":
            return "Scroll"
        if self.kind == "end":
            return "End"
        if self.kind == "input":
            return f"Input - {self.description}, text: {self.text}"
        return f"Click - {self.description}"


@dataclass
class PlannerContext:
    goal: str
    guideline: str
    observation: Observation
    history: list[str] = field(default_factory=list)


class Planner(Protocol):
    def propose(self, ctx: PlannerContext) -> Proposal: ...


class Worker(Protocol):
    def ground(self, proposal: Proposal, observation: Observation) -> Action: ...


class WorkerParseError(ValueError):
    pass


# ---------------------------------------------------------------------------
# scripted planner


@dataclass(frozen=True)
class PlanItem:
    kind: str
    target: Optional[str]
    description: str
    text: Optional[str] = None
    memory: str = ""
    reveals: tuple[str, ...] = ()  # fact testids that must be on screen before this item

    @property
    def is_dwell(self) -> bool:
        return bool(self.reveals)


def build_plan(bundle: EnvironmentBundle) -> list[PlanItem]:
    """Guideline-following plan: visit each must-visit page, dwell to record its facts, then submit."""
    graph = bundle.page_graph
    pattern = pattern_for(bundle.task_seed_id)
    home_tab = next((t for t in graph.tab_bar if t.target_page == graph.home_page_id), None)
    by_page: dict[str, list[str]] = {}
    for item in bundle.memory_items:
        by_page.setdefault(item["page_id"], []).append(item["fact_key"])
    elements = {el.testid: el for _, el in graph.iter_elements()}
    must_visit = list(bundle.task_spec.get("task", {}).get("must_visit_pages", []))
    plan: list[PlanItem] = []
    for n, pid in enumerate(must_visit):
        entry = f"entry-{pid}"
        label = elements[entry].label if entry in elements else pid
        plan.append(PlanItem("click", entry, f"the '{label}' entry in the list"))
        keys = by_page.get(pid, [])
        if not keys:
            continue
        page = graph.page(pid)
        displays = [el for el in (page.elements if page else []) if el.fact_key in keys]
        memory = "; ".join(pattern.memory_unit(el.fact_key, el.value or "") for el in displays)
        reveals = tuple(el.testid for el in displays)
        if n == len(must_visit) - 1:
            plan.append(PlanItem("click", "go-submit-answer", "the 'Submit answer' button in the top-right area",
                                 memory=memory, reveals=reveals))
        else:
            plan.append(PlanItem("click", home_tab.testid if home_tab else "back",
                                 f"the '{home_tab.label if home_tab else 'Back'}' tab at the bottom",
                                 memory=memory, reveals=reveals))
    if not plan or plan[-1].target != "go-submit-answer":
        plan.append(PlanItem("click", "go-submit-answer", "the 'Submit answer' button in the top-right area"))
    plan.append(PlanItem("input", "answer-input", "the answer input box", text=bundle.gold))
    plan.append(PlanItem("click", "answer-submit", "the 'Submit' button below the answer box"))
    plan.append(PlanItem("end", None, ""))
    return plan


class ScriptedPlanner:
    """Follows ``build_plan`` in order, scrolling when the next target is below the fold."""

    def __init__(self, bundle: EnvironmentBundle, *, emit_memory: bool = True):
        self.bundle = bundle
        self.plan = build_plan(bundle)
        self.emit_memory = emit_memory
        self.cursor = 0

    @property
    def dwell_count(self) -> int:
        return sum(1 for p in self.plan if p.is_dwell)

    def propose(self, ctx: PlannerContext) -> Proposal:
        obs = ctx.observation
        if obs.success_banner or self.cursor >= len(self.plan):
            return Proposal("end", think="The result shows Success!, so the task is complete.")
        item = self.plan[self.cursor]
        if item.kind == "end":
            return Proposal("end", think="The answer has been submitted.")
        needed = list(item.reveals) + ([item.target] if item.target else [])
        if any(obs.find(t) is None for t in needed) and obs.scroll_hint:
            return Proposal("scroll", "scroll down", think="The element I need is further down the page.")
        self.cursor += 1
        return Proposal(item.kind, item.description, item.text, item.target,
                        item.memory if self.emit_memory else "")


def scripted_planner(bundle: EnvironmentBundle, *, emit_memory: bool = True) -> ScriptedPlanner:
    return ScriptedPlanner(bundle, emit_memory=emit_memory)


class OracleWorker:
    """Grounds scripted proposals by clicking the center of the target testid."""

    def ground(self, proposal: Proposal, observation: Observation) -> Action:
        if proposal.kind == "scroll":
            return Action.scroll()
        if proposal.kind == "end":
            raise WorkerParseError("End is not an executable action")
        el = observation.find(proposal.target or "")
        if el is None:
            return Action.open(proposal.target or "")
        x, y = el.center
        if proposal.kind == "input":
            return Action.type(x, y, proposal.text or "")
        return Action.click(x, y)


# ---------------------------------------------------------------------------
# service-backed planner and worker

_CLICK = re.compile(r"^click\s*\(\s*(\d+)\s*,\s*(\d+)\s*\)$", re.I)
_TYPE = re.compile(r"^type\s*\(\s*(\d+)\s*,\s*(\d+)\s*,\s*(.*)\)$", re.I | re.S)
_SCROLL = re.compile(r"^scroll$", re.I)


def parse_worker_output(text: str) -> Action:
    """Parse one of ``click (x, y)``, ``type (x, y, text)`` or ``scroll``."""
    line = text.strip().strip("`").strip()
    if m := _CLICK.match(line):
        x, y = int(m.group(1)), int(m.group(2))
        kind = "click"
    elif m := _TYPE.match(line):
        x, y = int(m.group(1)), int(m.group(2))
        kind = "type"
    elif _SCROLL.match(line):
        return Action.scroll()
    else:
        raise WorkerParseError(f"unrecognized worker output {line[:80]!r}")
    if not (0 <= x <= 1000 and 0 <= y <= 1000):
        raise WorkerParseError(f"coordinates ({x}, {y}) outside 0-1000")
    return Action.click(x, y) if kind == "click" else Action.type(x, y, m.group(3).strip())


def parse_planner_action(think: str, action: str) -> Proposal:
    head, _, rest = action.strip().partition("-")
    kind = head.strip().lower()
    if kind not in PROPOSAL_KINDS:
        raise UnparseableResponse(f"planner action kind {head.strip()!r} unknown")
    rest = rest.strip()
    text = None
    if kind == "input":
        m = re.search(r"""(?:text(?: content)?\s*[:=]\s*|["'])(.+?)["']?$""", rest)
        text = m.group(1).strip() if m else None
    return Proposal(kind, rest, text, think=think)


class ServicePlanner:
    """Planner backed by a chat service using the fixed planner template."""

    def __init__(self, client: ChatClient, bundle: EnvironmentBundle, *, calculation: str = ""):
        self.client = client
        self.bundle = bundle
        if not calculation:
            from ..synthesis.verifier import statically_verify

            calculation = statically_verify(bundle).calculation
        self.calculation = calculation

    def prompt(self, ctx: PlannerContext) -> str:
        task = self.bundle.task_spec["task"]
        text = (load_template("planner_prompt")
                .replace("{self.task}", task.get("natural_language", ctx.goal))
                .replace("{self.guideline}", task.get("guideline", ctx.guideline))
                .replace("{self.calculation}", self.calculation)
                .replace("{self.answer}", self.bundle.gold)
                .replace("{{", "{").replace("}}", "}"))
        history = "\n".join(f"{i}. {h}" for i, h in enumerate(ctx.history, 1)) or "(none)"
        return f"{text}\n\nAction history:\n{history}\n\nCurrent screen:\n{ctx.observation.describe()}"

    def propose(self, ctx: PlannerContext) -> Proposal:
        doc = parse_json_document(self.client.complete([text_message("user", self.prompt(ctx))]))
        if not isinstance(doc, dict) or not isinstance(doc.get("action"), str):
            raise UnparseableResponse("planner reply lacks an action string")
        return parse_planner_action(str(doc.get("think", "")), doc["action"])


class ServiceWorker:
    def __init__(self, client: ChatClient):
        self.client = client

    def prompt(self, proposal: Proposal, observation: Observation) -> str:
        return (load_template("worker_prompt").replace("{next_planning}", proposal.as_instruction())
                + f"\n\n<screenshot>\n{observation.describe()}\n</screenshot>")

    def ground(self, proposal: Proposal, observation: Observation) -> Action:
        if proposal.kind == "scroll":
            return Action.scroll()
        reply = self.client.complete([text_message("user", self.prompt(proposal, observation))])
        return parse_worker_output(reply)


def proposal_from_json(text: str) -> Proposal:
    """Convenience for tests and fixtures: parse a planner JSON reply."""
    doc = json.loads(text)
    return parse_planner_action(doc.get("think", ""), doc["action"])
