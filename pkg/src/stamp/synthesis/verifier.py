"""Static inspection of a bundle's page graph.

Nothing is executed: the inspector walks the declared pages the way a
rule-following reader would, recomputes the answer with the task pattern,
and scans every comparable distractor for ambiguity.
"""

from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Any

from ..seed_model import SUBMISSION_TESTIDS, ValidationReport, Violation, tab_testid, validate_task_spec
from .bundle import ELEMENT_KINDS, EnvironmentBundle, PageGraph
from .patterns import Reading, UnsupportedTaskSeed, pattern_for, suffix_of


@dataclass
class InspectionReport:
    predicted_answer: str
    is_unique: bool
    ambiguity_reasons: list[str] = field(default_factory=list)
    key_observations: list[dict[str, str]] = field(default_factory=list)
    key_notes: list[str] = field(default_factory=list)
    calculation: str = ""
    violations: list[Violation] = field(default_factory=list)
    conflicts: list[str] = field(default_factory=list)
    gold: str = ""
    truth_answer: str = ""

    @property
    def ok(self) -> bool:
        return not self.violations and self.is_unique and self.predicted_answer == self.gold

    @property
    def fix_needed(self) -> bool:
        return not self.ok

    @property
    def rule_ids(self) -> list[str]:
        return [v.rule_id for v in self.violations]

    def to_dict(self) -> dict[str, Any]:
        return {
            "ok": self.ok,
            "predicted_answer": self.predicted_answer,
            "uniqueness": {"is_unique": self.is_unique, "ambiguity_reasons": list(self.ambiguity_reasons)},
            "evidence": {"key_observations": list(self.key_observations), "calculation": self.calculation,
                         "key_notes": list(self.key_notes)},
            "fix_needed": self.fix_needed,
            "violations": [v.to_dict() for v in self.violations],
        }


def reachable_pages(graph: PageGraph) -> set[str]:
    seen = {graph.home_page_id}
    queue = deque([graph.home_page_id])
    while queue:
        page = graph.page(queue.popleft())
        if page is None:
            continue
        targets = [e.target_page for e in page.elements if e.target_page]
        if page.chrome:
            targets += [e.target_page for e in graph.tab_bar if e.target_page]
            if graph.submit_entry is not None and graph.submit_entry.target_page:
                targets.append(graph.submit_entry.target_page)
        for t in targets:
            if t not in seen and graph.page(t) is not None:
                seen.add(t)
                queue.append(t)
    return seen


def _structural(bundle: EnvironmentBundle, report: ValidationReport) -> None:
    graph = bundle.page_graph
    counts = Counter(el.testid for _, el in graph.iter_elements())
    for testid, n in sorted(counts.items()):
        if n > 1:
            report.add("testid_unique", f"testid {testid} declared {n} times", testid)
    required = set(bundle.task_spec.get("ui_contract", {}).get("required_testids", [])) | set(SUBMISSION_TESTIDS)
    for testid in sorted(required):
        if counts.get(testid, 0) == 0:
            report.add("required_testid_missing", f"required testid {testid} is missing", testid)

    for page_id, el in graph.iter_elements():
        if el.kind not in ELEMENT_KINDS:
            report.add("filter_as_buttons", f"element {el.testid} uses unsupported kind {el.kind!r}",
                       f"{page_id}/{el.testid}")
        if el.target_page is not None and graph.page(el.target_page) is None:
            report.add("dangling_target", f"{el.testid} targets missing page {el.target_page}",
                       f"{page_id}/{el.testid}")

    tabs = bundle.task_spec.get("platform", {}).get("tabs", [])
    bar_ids = {e.testid for e in graph.tab_bar if e.kind == "tab"}
    for tab in tabs:
        if tab_testid(tab) not in bar_ids:
            report.add("tab_bar_complete", f"tab bar lacks {tab_testid(tab)}", "tab_bar")
    entry = graph.submit_entry
    if entry is None or entry.testid != "go-submit-answer" or entry.target_page != graph.submission_page_id:
        report.add("submit_entry", "go-submit-answer must lead to the submission page", "submit_entry")

    sub = graph.page(graph.submission_page_id)
    if sub is None:
        report.add("submission_page_missing", "submission page not found", graph.submission_page_id)
    else:
        kinds = {e.testid: e.kind for e in sub.elements}
        for testid, kind in (("answer-input", "input"), ("answer-submit", "submit"), ("result", "result")):
            if kinds.get(testid) != kind:
                report.add("submission_contents", f"submission page lacks {kind} {testid}", f"{sub.id}/{testid}")
        if not any(e.kind == "back" for e in sub.elements):
            report.add("submission_contents", "submission page lacks a back element", f"{sub.id}/back")
        if sub.chrome or any(e.kind == "tab" for e in sub.elements):
            report.add("submission_no_chrome", "submission page must not show navigation tabs", sub.id)
    for page in graph.pages:
        if page.id != graph.submission_page_id and not page.chrome:
            report.add("info_page_chrome", f"information page {page.id} hides the tab bar", page.id)

    reach = reachable_pages(graph)
    for pid in bundle.task_spec.get("task", {}).get("must_visit_pages", []):
        if pid not in reach:
            report.add("unreachable_page", f"must-visit page {pid} is unreachable from home", pid)
    if graph.submission_page_id not in reach:
        report.add("unreachable_page", "submission page is unreachable from home", graph.submission_page_id)

    facts = bundle.scenario.get("data", {}).get("truth", {}).get("facts", {})
    memory_keys = {m.get("fact_key") for m in bundle.memory_items}
    for page_id, el in graph.iter_elements():
        if el.kind == "fact_display":
            if el.fact_key is None or el.value is None:
                report.add("fact_display_incomplete", f"{el.testid} lacks fact_key or value", f"{page_id}/{el.testid}")
            elif el.fact_key in facts and el.value != facts[el.fact_key]:
                report.add("fact_display_mismatch",
                           f"{el.testid} shows {el.value!r} but truth is {facts[el.fact_key]!r}",
                           f"{page_id}/{el.testid}")
        elif el.kind == "distractor" and el.fact_key in memory_keys:
            report.add("distractor_fact_key", f"distractor {el.testid} carries memory fact {el.fact_key}",
                       f"{page_id}/{el.testid}")
    for item in bundle.memory_items:
        hits = [(pid, el) for pid, el in graph.iter_elements()
                if el.kind == "fact_display" and el.fact_key == item.get("fact_key")]
        if len(hits) != 1 or hits[0][0] != item.get("page_id"):
            report.add("memory_fact_display",
                       f"fact {item.get('fact_key')} must be displayed exactly once on {item.get('page_id')}",
                       str(item.get("fact_key")))


def statically_verify(bundle: EnvironmentBundle) -> InspectionReport:
    report = validate_task_spec(bundle.task_spec, bundle.scenario)
    truth = bundle.scenario.get("data", {}).get("truth", {})
    grading_gold = bundle.task_spec.get("task", {}).get("grading", {}).get("gold")
    if not (bundle.gold == truth.get("gold") == grading_gold):
        report.add("bundle_gold_consistent", "bundle gold, truth gold and grading gold disagree", "gold")
    _structural(bundle, report)

    try:
        pattern = pattern_for(bundle.task_seed_id)
    except UnsupportedTaskSeed as exc:
        report.add("pattern_known", str(exc), "provenance.task_seed")
        return InspectionReport("", False, [str(exc)], violations=report.violations, gold=bundle.gold)

    graph = bundle.page_graph
    readings: list[Reading] = []
    observations: list[dict[str, str]] = []
    notes: list[str] = []
    for item in bundle.memory_items:
        key = item.get("fact_key", "")
        pid = item.get("page_id", "")
        page = graph.page(pid)
        elems = page.elements if page else []
        value = next((e.value for e in elems if e.kind == "fact_display" and e.fact_key == key), None)
        name_key = f"name_{suffix_of(key)}"
        name = next((e.value for e in elems if e.kind == "fact_display" and e.fact_key == name_key), None)
        readings.append(Reading(suffix_of(key), pid, value, name))
        what = f"{key} shows {value!r}" + (f" for {name}" if name else "")
        observations.append({"page_or_section": pid, "what": what})
        notes.append(pattern.memory_unit(key, value or ""))

    distractors = [(pid, el.testid, el.value, el.label) for pid, el in graph.iter_elements()
                   if el.kind == "distractor" and pid is not None]
    solution = pattern.solve(readings, distractors)

    facts = truth.get("facts", {})
    truth_readings = [Reading(r.suffix, r.page_id, facts.get(item.get("fact_key")),
                              facts.get(f"name_{r.suffix}") if r.name is not None or f"name_{r.suffix}" in facts
                              else None)
                      for r, item in zip(readings, bundle.memory_items)]
    truth_answer = pattern.solve(truth_readings, []).predicted
    reasons = list(solution.ambiguity_reasons)
    if truth_answer != truth.get("gold"):
        reasons.append(f"truth facts imply {truth_answer!r}, not the declared gold")

    return InspectionReport(
        predicted_answer=solution.predicted,
        is_unique=not reasons,
        ambiguity_reasons=reasons,
        key_observations=observations,
        key_notes=notes,
        calculation=solution.calculation,
        violations=report.violations,
        conflicts=solution.conflicts,
        gold=bundle.gold,
        truth_answer=truth_answer,
    )
