"""Document schemas for the synthesis pipeline and their validators.

Seeds are small typed records. Scenarios and task specs stay plain JSON
dictionaries because external generators produce them verbatim; the
validators below are the only gate they pass through.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from typing import Any, Iterable

SCHEMA_VERSION = 1

MEMORY_LOADS = ("low", "medium", "high")
ANSWER_TYPES = ("single_label", "code", "composite")
SUBMISSION_TESTIDS = ("go-submit-answer", "answer-input", "answer-submit", "result")

_COLOR_RE = re.compile(r"^#[0-9A-Fa-f]{6}$")


def slugify(text: str) -> str:
    return re.sub(r"[^a-z0-9]+", "-", text.lower()).strip("-")


def tab_testid(tab: str) -> str:
    return f"tab-{slugify(tab)}"


def fact_testid(fact_key: str) -> str:
    return f"fact-{slugify(fact_key)}"


def is_submission_role(role: str) -> bool:
    return role.strip().lower().startswith("submit")


@dataclass
class PlatformSeed:
    app_type: str
    app_name: str
    slogan: str
    tabs: list[str]
    colors: list[str]
    card_style: str
    icon_style: str
    text_tone: str
    common_entities: list[str] = field(default_factory=list)
    detail_entry_points: list[str] = field(default_factory=list)
    distractions: list[str] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "PlatformSeed":
        return cls(**{f.name: d[f.name] for f in dataclasses.fields(cls) if f.name in d})


@dataclass
class TaskSeed:
    id: str
    description: str
    goal: str
    required_steps: int
    memory_load: str
    output_format: str
    answer_type: str
    ui_pattern: list[str]

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "TaskSeed":
        return cls(**{f.name: d[f.name] for f in dataclasses.fields(cls) if f.name in d})


@dataclass(frozen=True)
class Violation:
    rule_id: str
    message: str
    path: str = ""

    def to_dict(self) -> dict[str, str]:
        return {"rule_id": self.rule_id, "message": self.message, "path": self.path}


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def rule_ids(self) -> list[str]:
        return [v.rule_id for v in self.violations]

    def add(self, rule_id: str, message: str, path: str = "") -> None:
        self.violations.append(Violation(rule_id, message, path))

    def to_dict(self) -> dict[str, Any]:
        return {"ok": self.ok, "violations": [v.to_dict() for v in self.violations]}


def validate_platform_seed(seed: PlatformSeed) -> ValidationReport:
    report = ValidationReport()
    if not seed.app_name.strip():
        report.add("app_name_nonempty", "app_name must be non-empty", "app_name")
    if not seed.tabs:
        report.add("tabs_nonempty", "tabs must list at least one tab", "tabs")
    seen: set[str] = set()
    for i, tab in enumerate(seed.tabs):
        key = tab_testid(tab)
        if key in seen:
            report.add("tabs_distinct", f"duplicate tab {tab!r}", f"tabs[{i}]")
        seen.add(key)
    if not seed.distractions:
        report.add("distractions_nonempty", "at least one distractor module is required", "distractions")
    if len(seed.colors) != 3:
        report.add("colors_count", "exactly three color codes expected", "colors")
    for i, color in enumerate(seed.colors):
        if not _COLOR_RE.match(color):
            report.add("color_syntax", f"{color!r} is not #RRGGBB", f"colors[{i}]")
    return report


def validate_task_seed(seed: TaskSeed) -> ValidationReport:
    report = ValidationReport()
    if not seed.id:
        report.add("id_nonempty", "task seed id must be non-empty", "id")
    if not isinstance(seed.required_steps, int) or seed.required_steps < 1:
        report.add("required_steps_positive", "required_steps must be a positive integer", "required_steps")
    if seed.memory_load not in MEMORY_LOADS:
        report.add("memory_load_enum", f"memory_load {seed.memory_load!r} not in {MEMORY_LOADS}", "memory_load")
    if seed.answer_type not in ANSWER_TYPES:
        report.add("answer_type_enum", f"answer_type {seed.answer_type!r} not in {ANSWER_TYPES}", "answer_type")
    if not seed.ui_pattern or not is_submission_role(seed.ui_pattern[-1]):
        report.add("ui_pattern_submission_last", "ui_pattern must end with a submission role", "ui_pattern")
    elif isinstance(seed.required_steps, int) and seed.required_steps < len(seed.ui_pattern) - 1:
        report.add("required_steps_cover_pattern", "required_steps below ui_pattern length - 1", "required_steps")
    return report


def _get(doc: dict, path: str, default: Any = None) -> Any:
    cur: Any = doc
    for part in path.split("."):
        if not isinstance(cur, dict) or part not in cur:
            return default
        cur = cur[part]
    return cur


def validate_scenario(scenario: dict[str, Any]) -> ValidationReport:
    report = ValidationReport()
    truth = _get(scenario, "data.truth", {}) or {}
    facts = truth.get("facts") or {}
    if _get(scenario, "task.gold") != truth.get("gold"):
        report.add("scenario_gold_consistent", "task.gold differs from data.truth.gold", "task.gold")
    if not isinstance(truth.get("gold"), str) or not truth.get("gold"):
        report.add("gold_nonempty", "truth.gold must be a non-empty string", "data.truth.gold")
    elif "\n" in truth["gold"] or truth["gold"] != truth["gold"].strip():
        report.add("gold_single_line", "gold must be one line without surrounding spaces", "data.truth.gold")
    distractions = _get(scenario, "ui_requirements.distraction_interactions", []) or []
    if len(distractions) < 5:
        report.add("scenario_distractions_min5", "need at least 5 distraction interactions",
                   "ui_requirements.distraction_interactions")
    for i, page in enumerate(_get(scenario, "ui_requirements.pages", []) or []):
        for key in page.get("must_show_facts", []):
            if key not in facts:
                report.add("scenario_facts_known", f"page {page.get('id')} shows unknown fact {key!r}",
                           f"ui_requirements.pages[{i}].must_show_facts")
    return report


def validate_task_spec(spec: dict[str, Any], scenario: dict[str, Any]) -> ValidationReport:
    """Check a task spec against its scenario.

    Rules HC1..HC7 are the generator's hard constraints; the remaining rule
    ids cover structural invariants. ``key_testids`` in the scenario is
    advisory and never checked against ``required_testids``.
    """
    report = validate_scenario(scenario)
    task = spec.get("task") or {}
    final = task.get("final_action") or {}
    grading = task.get("grading") or {}
    truth = _get(scenario, "data.truth", {}) or {}
    facts = truth.get("facts") or {}
    gold = truth.get("gold")

    if final.get("gold") != gold:
        report.add("HC1", "final_action.gold differs from scenario truth gold", "task.final_action.gold")
    if grading.get("gold") != final.get("gold"):
        report.add("HC2", "grading.gold differs from final_action.gold", "task.grading.gold")
    pattern = grading.get("pass_regex")
    try:
        matched = isinstance(pattern, str) and isinstance(gold, str) and re.fullmatch(pattern, gold) is not None
    except re.error:
        matched = False
    if not matched:
        report.add("HC3", f"pass_regex {pattern!r} does not match gold", "task.grading.pass_regex")

    memory_items = task.get("memory_items") or []
    required = set(_get(spec, "ui_contract.required_testids", []) or [])
    expected = set(SUBMISSION_TESTIDS) | {tab_testid(t) for t in _get(spec, "platform.tabs", []) or []}
    expected |= {fact_testid(item.get("fact_key", "")) for item in memory_items}
    for missing in sorted(expected - required):
        report.add("HC4", f"required_testids lacks {missing}", "ui_contract.required_testids")

    natural = task.get("natural_language") or ""
    guideline = task.get("guideline") or ""
    for item in memory_items:
        value = facts.get(item.get("fact_key"))
        if isinstance(value, str) and value and value in natural:
            report.add("HC5", f"natural_language reveals the value of {item.get('fact_key')}",
                       "task.natural_language")
    if len(guideline) <= len(natural) or "submit" not in guideline.lower():
        report.add("HC6", "guideline must expand the natural-language task and cover submission",
                   "task.guideline")
    for item in memory_items:
        value = facts.get(item.get("fact_key"))
        if not isinstance(value, str) or value not in guideline:
            report.add("HC7", f"guideline lacks exact content of {item.get('fact_key')}", "task.guideline")

    must_visit = task.get("must_visit_pages") or []
    if len(must_visit) < 2:
        report.add("must_visit_min2", "at least two pages must be visited", "task.must_visit_pages")
    if not memory_items:
        report.add("memory_items_nonempty", "memory_items must be non-empty", "task.memory_items")
    for i, item in enumerate(memory_items):
        if item.get("page_id") not in must_visit:
            report.add("memory_page_visited", f"memory item page {item.get('page_id')!r} not in must_visit_pages",
                       f"task.memory_items[{i}].page_id")
        if item.get("fact_key") not in facts:
            report.add("memory_fact_known", f"memory item fact {item.get('fact_key')!r} not in truth facts",
                       f"task.memory_items[{i}].fact_key")
    if grading.get("method") != "exact":
        report.add("grading_exact", "grading.method must be 'exact'", "task.grading.method")
    if final.get("input_testid") != "answer-input" or final.get("submit_testid") != "answer-submit":
        report.add("final_action_testids", "final action must use answer-input / answer-submit",
                   "task.final_action")
    if len(_get(spec, "anti_triviality.extra_interactives", []) or []) < 5:
        report.add("extra_interactives_min5", "need at least 5 extra interactives",
                   "anti_triviality.extra_interactives")
    return report


def _finite_only(obj: Any) -> Any:
    if isinstance(obj, float) and not math.isfinite(obj):
        raise ValueError("non-finite number cannot be canonically serialized")
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return _finite_only(obj.to_dict() if hasattr(obj, "to_dict") else dataclasses.asdict(obj))
    if isinstance(obj, dict):
        return {str(k): _finite_only(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite_only(v) for v in obj]
    return obj


def canonical_json(document: Any) -> str:
    return json.dumps(_finite_only(document), sort_keys=True, separators=(",", ":"),
                      ensure_ascii=False, allow_nan=False)


def canonical_digest(document: Any) -> str:
    """SHA-256 hex digest of the key-sorted compact JSON form."""
    return hashlib.sha256(canonical_json(document).encode("utf-8")).hexdigest()


def dump_document(document: Any, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(_finite_only(document), sort_keys=True, indent=2, ensure_ascii=False,
                            allow_nan=False))
        fh.write("\n")


def load_document(path) -> Any:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def merge_reports(reports: Iterable[ValidationReport]) -> ValidationReport:
    out = ValidationReport()
    for r in reports:
        out.violations.extend(r.violations)
    return out
