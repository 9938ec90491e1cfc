"""Minimal-fix repair loop driven by inspection reports.

Fix priority follows the inspector contract: adjust distractor values or
labels first, then move distractors out of the comparison scope, and only
as a last resort edit truth facts (recorded with risk "high"). A bundle
whose declared gold disagrees with its own documents is never rewritten.
"""

from __future__ import annotations

import logging
import re
from typing import Optional

from ..seed_model import SUBMISSION_TESTIDS, slugify, tab_testid
from .bundle import ELEMENT_KINDS, Element, EnvironmentBundle, Page
from .patterns import ExtremePattern, pattern_for, suffix_of
from .verifier import InspectionReport, statically_verify

log = logging.getLogger(__name__)

MAX_REPAIR_ROUNDS = 3

# gold contradictions are rejected outright
_REJECT_RULES = {"HC1", "HC2", "bundle_gold_consistent", "scenario_gold_consistent", "gold_nonempty",
                 "gold_single_line", "pattern_known", "memory_items_nonempty", "memory_fact_known",
                 "must_visit_min2", "scenario_distractions_min5", "scenario_facts_known"}


class RepairRejected(Exception):
    def __init__(self, reasons: list[str]):
        super().__init__("; ".join(reasons))
        self.reasons = reasons


def _change(bundle: EnvironmentBundle, kind: str, summary: str, risk: str = "low") -> None:
    bundle.provenance.setdefault("changes", []).append({"type": kind, "summary": summary, "risk": risk})


def _find(bundle: EnvironmentBundle, testid: str) -> list[tuple[Optional[Page], Element]]:
    graph = bundle.page_graph
    out: list[tuple[Optional[Page], Element]] = []
    for el in graph.tab_bar:
        if el.testid == testid:
            out.append((None, el))
    if graph.submit_entry is not None and graph.submit_entry.testid == testid:
        out.append((None, graph.submit_entry))
    for p in graph.pages:
        for el in p.elements:
            if el.testid == testid:
                out.append((p, el))
    return out


def _fix_submission(bundle: EnvironmentBundle) -> None:
    graph = bundle.page_graph
    sub = graph.page(graph.submission_page_id)
    if sub is None:
        sub = Page(graph.submission_page_id, "Submit answer", "Submit", [], chrome=False)
        graph.pages.append(sub)
        _change(bundle, "other", f"inserted submission page {sub.id}")
    if sub.chrome or any(e.kind == "tab" for e in sub.elements):
        sub.chrome = False
        sub.elements = [e for e in sub.elements if e.kind != "tab"]
        _change(bundle, "hide_block", "removed navigation chrome from the submission page")
    wanted = [("back", "back", "Back", graph.home_page_id, None),
              ("answer-input", "input", "Answer", None, ""),
              ("answer-submit", "submit", "Submit", None, None),
              ("result", "result", "Result", None, "")]
    for pos, (testid, kind, label, target, value) in enumerate(wanted):
        present = [e for e in sub.elements if (e.kind == kind if kind == "back" else e.testid == testid)]
        if present and all(e.kind == kind for e in present):
            continue
        for p, el in _find(bundle, testid):
            if p is not None:
                p.elements.remove(el)
        sub.elements.insert(min(pos, len(sub.elements)), Element(testid, kind, label, value, target_page=target))
        _change(bundle, "other", f"inserted {kind} element {testid} on the submission page")


def _fix_chrome(bundle: EnvironmentBundle) -> None:
    graph = bundle.page_graph
    for p in graph.pages:
        if p.id != graph.submission_page_id and not p.chrome:
            p.chrome = True
            _change(bundle, "other", f"restored tab bar on {p.id}")
    entry = graph.submit_entry
    if entry is None or entry.testid != "go-submit-answer" or entry.target_page != graph.submission_page_id:
        graph.submit_entry = Element("go-submit-answer", "button", "Submit answer",
                                     target_page=graph.submission_page_id)
        _change(bundle, "other", "restored go-submit-answer entry")
    present = {e.testid for e in graph.tab_bar}
    for tab in bundle.task_spec.get("platform", {}).get("tabs", []):
        tid = tab_testid(tab)
        if tid in present:
            continue
        target = next((p.id for p in graph.pages if p.role == "tab" and p.title == tab), graph.home_page_id)
        graph.tab_bar.append(Element(tid, "tab", tab, target_page=target))
        _change(bundle, "other", f"restored tab {tid}")


def _fix_duplicates(bundle: EnvironmentBundle) -> None:
    seen: dict[str, int] = {}
    graph = bundle.page_graph
    chrome_ids = {e.testid for e in graph.tab_bar}
    if graph.submit_entry:
        chrome_ids.add(graph.submit_entry.testid)
    for p in graph.pages:
        kept = []
        for el in p.elements:
            n = seen.get(el.testid, 0)
            seen[el.testid] = n + 1
            if n == 0 and el.testid not in chrome_ids:
                kept.append(el)
            elif el.kind == "distractor":
                el.testid = f"{el.testid}-dup{n + 1}"
                kept.append(el)
                _change(bundle, "rename_label", f"renamed duplicate distractor testid to {el.testid}")
            else:
                _change(bundle, "hide_block", f"removed duplicate declaration of {el.testid} on {p.id}")
        p.elements = kept


def _fix_facts(bundle: EnvironmentBundle) -> None:
    graph = bundle.page_graph
    facts = bundle.scenario["data"]["truth"]["facts"]
    memory_keys = {m["fact_key"] for m in bundle.memory_items}
    pattern = pattern_for(bundle.task_seed_id)
    for p in graph.pages:
        kept = []
        for el in p.elements:
            if el.kind == "fact_display":
                if el.fact_key not in facts:
                    _change(bundle, "hide_block", f"removed fact display {el.testid} with unknown fact")
                    continue
                if el.value != facts[el.fact_key]:
                    el.value = facts[el.fact_key]
                    _change(bundle, "edit_text", f"restored {el.testid} to its truth value")
            elif el.kind == "distractor" and el.fact_key in memory_keys:
                el.fact_key = None
                _change(bundle, "edit_text", f"detached memory fact from distractor {el.testid}")
            if el.kind not in ELEMENT_KINDS:
                _change(bundle, "other", f"rebuilt {el.testid} ({el.kind}) as clickable buttons")
                el.kind = "distractor"
            kept.append(el)
        p.elements = kept
    for item in bundle.memory_items:
        key, pid = item["fact_key"], item["page_id"]
        hits = [(p, el) for p in graph.pages for el in p.elements if el.kind == "fact_display" and el.fact_key == key]
        on_page = [h for h in hits if h[0].id == pid]
        for p, el in hits:
            if on_page and (p, el) is not on_page[0] and el is not on_page[0][1]:
                p.elements.remove(el)
                _change(bundle, "hide_block", f"removed extra display of {key} on {p.id}")
        if not on_page:
            page = graph.page(pid)
            if page is None:
                continue
            page.elements.insert(0, Element(f"fact-{slugify(key)}", "fact_display", pattern.fact_label(key),
                                            facts[key], fact_key=key))
            _change(bundle, "other", f"inserted display of {key} on {pid}")


def _fix_reachability(bundle: EnvironmentBundle, report: InspectionReport) -> None:
    graph = bundle.page_graph
    home = graph.page(graph.home_page_id)
    for v in report.violations:
        if v.rule_id == "dangling_target":
            for _, el in graph.iter_elements():
                if el.target_page is not None and graph.page(el.target_page) is None:
                    el.target_page = graph.home_page_id
                    _change(bundle, "other", f"retargeted {el.testid} to home")
        if v.rule_id == "unreachable_page" and home is not None and graph.page(v.path) is not None:
            if v.path == graph.submission_page_id:
                continue
            home.elements.insert(0, Element(f"entry-{v.path}", "list_item", graph.page(v.path).title,
                                            target_page=v.path))
            _change(bundle, "other", f"added home entry for {v.path}")


def _fix_documents(bundle: EnvironmentBundle, rules: set[str]) -> None:
    task = bundle.task_spec.setdefault("task", {})
    facts = bundle.scenario["data"]["truth"]["facts"]
    gold = bundle.gold
    if "HC3" in rules:
        task.setdefault("grading", {})["pass_regex"] = "^" + re.escape(gold) + "$"
        _change(bundle, "edit_text", "regenerated pass_regex from gold")
    if "grading_exact" in rules:
        task.setdefault("grading", {})["method"] = "exact"
        _change(bundle, "edit_text", "set grading method to exact")
    if "final_action_testids" in rules:
        task.setdefault("final_action", {}).update(input_testid="answer-input", submit_testid="answer-submit")
        _change(bundle, "edit_text", "set final action testids")
    if "HC4" in rules:
        contract = bundle.task_spec.setdefault("ui_contract", {})
        req = list(contract.get("required_testids", []))
        want = [tab_testid(t) for t in bundle.task_spec.get("platform", {}).get("tabs", [])]
        want += list(SUBMISSION_TESTIDS) + [f"fact-{slugify(m['fact_key'])}" for m in bundle.memory_items]
        contract["required_testids"] = req + [t for t in want if t not in req]
        _change(bundle, "edit_text", "completed required_testids")
    if "HC5" in rules:
        text = task.get("natural_language", "")
        for item in bundle.memory_items:
            text = text.replace(facts[item["fact_key"]], "the displayed value")
        task["natural_language"] = text
        _change(bundle, "edit_text", "removed memory values from the natural-language task")
    if "HC6" in rules or "HC7" in rules:
        extra = [f"Find the value {facts[m['fact_key']]} on page {m['page_id']}." for m in bundle.memory_items
                 if facts[m["fact_key"]] not in task.get("guideline", "")]
        extra.append("Then open go-submit-answer, type the answer into answer-input and submit it.")
        task["guideline"] = (task.get("guideline", "") + " " + " ".join(extra)).strip()
        _change(bundle, "edit_text", "expanded guideline with memory locations and submission steps")
    if "extra_interactives_min5" in rules:
        ids = [el.testid for _, el in bundle.page_graph.iter_elements() if el.kind == "distractor"]
        bundle.task_spec.setdefault("anti_triviality", {})["extra_interactives"] = ids
        _change(bundle, "edit_text", "listed distractor elements as extra interactives")


def _fix_ambiguity(bundle: EnvironmentBundle, report: InspectionReport) -> None:
    pattern = pattern_for(bundle.task_seed_id)
    facts = bundle.scenario["data"]["truth"]["facts"]
    memory_keys = [m["fact_key"] for m in bundle.memory_items]
    for testid in dict.fromkeys(report.conflicts):
        for _page, el in _find(bundle, testid):
            if isinstance(pattern, ExtremePattern):
                safe = pattern.safe_value(facts, memory_keys)
                if safe is not None:
                    old, el.value = el.value, safe
                    _change(bundle, "edit_number", f"moved distractor {testid} value {old} -> {safe}")
                else:
                    el.value = None
                    _change(bundle, "move_block", f"took distractor {testid} out of the comparison scope")
            else:
                new_label = el.label + " (sponsored)"
                _change(bundle, "rename_label", f"relabelled distractor {testid} to {new_label!r}")
                el.label = new_label

    if isinstance(pattern, ExtremePattern) and report.truth_answer != bundle.gold or _has_tie(report):
        _touch_truth(bundle, pattern)


def _has_tie(report: InspectionReport) -> bool:
    return any(r.startswith("tie between") for r in report.ambiguity_reasons)


def _touch_truth(bundle: EnvironmentBundle, pattern) -> None:
    if not isinstance(pattern, ExtremePattern):
        return
    facts = bundle.scenario["data"]["truth"]["facts"]
    keys = [m["fact_key"] for m in bundle.memory_items]
    winner_key = next((k for k in keys if facts.get(f"name_{suffix_of(k)}") == bundle.gold), None)
    if winner_key is None:
        raise RepairRejected(["gold does not name any candidate; refusing to rewrite truth"])
    best = pattern.parse(facts[winner_key])
    for k in keys:
        if k == winner_key:
            continue
        v = pattern.parse(facts[k])
        if v is None or v == best or pattern.better(v, best):
            new = pattern.encode(best - 1 if pattern.largest else best + 100)
            facts[k] = new
            bundle.facts[k] = new
            for ent in bundle.scenario["data"].get("entities", []):
                if k in ent.get("attributes", {}):
                    ent["attributes"][k] = new
            for _, el in bundle.page_graph.iter_elements():
                if el.kind == "fact_display" and el.fact_key == k:
                    el.value = new
            guideline = bundle.task_spec.get("task", {}).get("guideline", "")
            bundle.task_spec["task"]["guideline"] = guideline.replace(pattern.encode(v) if v is not None else "", new)
            _change(bundle, "edit_number", f"truth fact {k} changed to {new} to keep {bundle.gold} unique", "high")
            log.warning("repair touched truth fact %s of bundle %s", k, bundle.bundle_id)


def repair(bundle: EnvironmentBundle, report: InspectionReport,
           max_rounds: int = MAX_REPAIR_ROUNDS) -> EnvironmentBundle:
    """Apply minimal fixes until the bundle verifies, or reject it.

    Works on a copy. Raises RepairRejected when the gold contradicts the
    documents or when the bundle still fails after ``max_rounds`` rounds.
    """
    if report.ok:
        return bundle
    fixed = bundle.copy()
    current = report
    for _ in range(max_rounds):
        rules = set(current.rule_ids)
        blocking = sorted(rules & _REJECT_RULES)
        if blocking:
            raise RepairRejected([f"{v.rule_id}: {v.message}" for v in current.violations
                                  if v.rule_id in _REJECT_RULES])
        fixed.provenance["repair_rounds"] = int(fixed.provenance.get("repair_rounds", 0)) + 1
        _fix_documents(fixed, rules)
        if rules & {"submission_page_missing", "submission_contents", "submission_no_chrome",
                    "required_testid_missing"}:
            _fix_submission(fixed)
        if rules & {"info_page_chrome", "submit_entry", "tab_bar_complete", "required_testid_missing"}:
            _fix_chrome(fixed)
        if "testid_unique" in rules:
            _fix_duplicates(fixed)
        _fix_facts(fixed)
        _fix_reachability(fixed, current)
        _fix_ambiguity(fixed, current)
        current = statically_verify(fixed)
        if current.ok:
            return fixed
    reasons = [f"{v.rule_id}: {v.message}" for v in current.violations] + current.ambiguity_reasons
    if current.predicted_answer != fixed.gold:
        reasons.append(f"predicted {current.predicted_answer!r} != gold {fixed.gold!r}")
    raise RepairRejected(reasons or ["unrepairable after maximum rounds"])
