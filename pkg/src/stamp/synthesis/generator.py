"""Procedural environment generator.

Everything random is drawn from ``random.Random`` instances seeded with
strings derived from the caller's seed, so a bundle is a pure function of
(platform seed, task seed, rng seed, noise level).
"""

from __future__ import annotations

import random
import re
from typing import Any, Optional

from ..seed_model import (
    SCHEMA_VERSION,
    SUBMISSION_TESTIDS,
    PlatformSeed,
    TaskSeed,
    fact_testid,
    slugify,
    tab_testid,
    validate_platform_seed,
    validate_task_seed,
)
from .bundle import Element, EnvironmentBundle, Page, PageGraph
from .catalog import SeedCatalog
from .patterns import ExtremePattern, PatternDraw, TaskPattern, pattern_for

HOME_PAGE_ID = "home"
SUBMIT_PAGE_ID = "submit"
NOISE_LEVELS = ("low", "high")


def sub_rng(seed: Any, tag: str) -> random.Random:
    return random.Random(f"{seed}:{tag}")


def sample_seeds(master_seed: int, catalog: SeedCatalog) -> tuple[PlatformSeed, TaskSeed]:
    """Pick one (platform, task) pair uniformly from the catalog cross-product."""
    if not catalog.platforms or not catalog.tasks:
        raise ValueError("seed catalog is empty")
    rng = sub_rng(master_seed, f"catalog:{catalog.digest()}")
    idx = rng.randrange(len(catalog.platforms) * len(catalog.tasks))
    return catalog.platforms[idx // len(catalog.tasks)], catalog.tasks[idx % len(catalog.tasks)]


def detail_roles(task: TaskSeed) -> list[str]:
    return list(task.ui_pattern[:-1])


def page_layout_ids(platform: PlatformSeed, task: TaskSeed) -> tuple[dict[str, str], list[str], list[str]]:
    """Return (tab name -> page id, detail page ids, suffixes)."""
    tab_pages: dict[str, str] = {}
    for i, tab in enumerate(platform.tabs):
        pid = HOME_PAGE_ID if i == 0 else slugify(tab)
        if pid in (HOME_PAGE_ID, SUBMIT_PAGE_ID) and i != 0 or pid in tab_pages.values():
            pid = f"tab-{pid}"
        tab_pages[tab] = pid
    details = []
    used = set(tab_pages.values()) | {SUBMIT_PAGE_ID}
    for role in detail_roles(task):
        pid = slugify(role) or "detail"
        while pid in used:
            pid += "-x"
        used.add(pid)
        details.append(pid)
    suffixes = [chr(ord("a") + i) for i in range(len(details))]
    return tab_pages, details, suffixes


def plan_distractors(
    labels: list[str],
    home_id: str,
    tab_page_ids: list[str],
    detail_ids: list[str],
    pattern: TaskPattern,
    facts: dict[str, str],
    memory_keys: list[str],
    rng: random.Random,
    noise: str,
) -> list[dict[str, Any]]:
    """Place distractor modules across pages and attach safe comparable values."""
    if noise not in NOISE_LEVELS:
        raise ValueError(f"noise must be one of {NOISE_LEVELS}")
    count = max(5, len(labels))
    if noise == "high":
        count += 2 * len(detail_ids)
    placement = [home_id] + detail_ids + [p for p in tab_page_ids if p != home_id]
    plan = []
    for i in range(count):
        label = labels[i % len(labels)]
        page_id = placement[i % len(placement)]
        value = None
        wants_value = noise == "high" or rng.random() < 0.5
        if wants_value:
            value = pattern.distractor_value(rng, facts, memory_keys)
        plan.append({"testid": f"distractor-{slugify(label)}-{i + 1}", "label": label, "page_id": page_id,
                     "value": value})
    return plan


def build_scenario(platform: PlatformSeed, task: TaskSeed, draw: PatternDraw, pattern: TaskPattern,
                   rng_seed: int, detail_ids: list[str], suffixes: list[str],
                   distractors: list[dict[str, Any]]) -> dict[str, Any]:
    entities = []
    for s, pid in zip(suffixes, detail_ids):
        attrs = {k: v for k, v in draw.facts.items() if k.endswith(f"_{s}")}
        entities.append({"name": draw.names.get(s, f"{pattern.value_label} {s.upper()}"), "page_id": pid,
                         "kind": (platform.common_entities or ["item"])[0], "attributes": attrs})
    for d in distractors:
        entities.append({"name": d["label"], "kind": "distractor", "page_id": d["page_id"],
                         "attributes": {"value": d["value"]} if d["value"] else {}})
    pages = [{"id": HOME_PAGE_ID, "title": f"{platform.app_name} {platform.tabs[0]}",
              "purpose": "entry list for every detail page", "must_show_facts": []}]
    for role, pid, s in zip(detail_roles(task), detail_ids, suffixes):
        keys = [k for k in draw.facts if k.endswith(f"_{s}")]
        keys.sort(key=lambda k: (not k.startswith("name_"), k))
        pages.append({"id": pid, "title": role, "purpose": f"shows the {pattern.value_label.lower()} for {role}",
                      "must_show_facts": keys})
    pages.append({"id": SUBMIT_PAGE_ID, "title": "Submit answer", "purpose": "answer submission",
                  "must_show_facts": []})
    question = natural_language(platform, task, pattern, len(detail_ids))
    return {
        "stamp_schema": SCHEMA_VERSION,
        "meta": {
            "seed": rng_seed,
            "platform_type": platform.app_type,
            "app_name": platform.app_name,
            "theme_keywords": [platform.card_style, platform.icon_style, platform.text_tone],
            "task_seed_id": task.id,
        },
        "data": {
            "entities": entities,
            "truth": {"gold": draw.gold, "explain": draw.explain, "facts": dict(draw.facts)},
        },
        "task": {"question": question, "must_visit": list(detail_ids),
                 "final_output_format": task.output_format, "gold": draw.gold},
        "ui_requirements": {
            "tabs": list(platform.tabs),
            "key_testids": list(SUBMISSION_TESTIDS) + [fact_testid(k) for k in draw.memory_keys],
            "distraction_interactions": [d["label"] for d in distractors],
            "pages": pages,
        },
    }


def natural_language(platform: PlatformSeed, task: TaskSeed, pattern: TaskPattern, n: int) -> str:
    label = pattern.value_label.lower()
    if isinstance(pattern, ExtremePattern):
        word = {("date", True): "latest", ("date", False): "earliest"}.get(
            (pattern.value_key, pattern.largest), "lowest" if not pattern.largest else "highest")
        return (f"In the {platform.app_name} app, open the {n} detail pages listed on the {platform.tabs[0]} tab, "
                f"compare their {label} values, and submit the name with the {word} {label}.")
    return (f"In the {platform.app_name} app, open each of the {n} detail pages listed on the {platform.tabs[0]} "
            f"tab, note the {label} shown on each page, and submit them in page order. {task.output_format}.")


def build_task_spec(platform: PlatformSeed, task: TaskSeed, scenario: dict[str, Any], pattern: TaskPattern,
                    entry_labels: dict[str, str], distractor_ids: list[str]) -> dict[str, Any]:
    facts = scenario["data"]["truth"]["facts"]
    gold = scenario["data"]["truth"]["gold"]
    must_visit = list(scenario["task"]["must_visit"])
    memory_items = []
    steps = [f"Start on the {platform.tabs[0]} tab."]
    for pid in must_visit:
        page = next(p for p in scenario["ui_requirements"]["pages"] if p["id"] == pid)
        for key in page["must_show_facts"]:
            if key.startswith("name_"):
                continue
            memory_items.append({"page_id": pid, "fact_key": key,
                                 "how_to_find": f"data-testid={fact_testid(key)} on page {pid}"})
            steps.append(f"Tap '{entry_labels[pid]}' to open {page['title']} and find the "
                         f"{pattern.value_label.lower()} {facts[key]} ({fact_testid(key)}); remember it, then "
                         f"return with the {platform.tabs[0]} tab.")
    steps.append("Tap the 'Submit answer' entry (go-submit-answer) in the top-right area, type the answer into "
                 "answer-input, and press answer-submit. " + task.output_format + ".")
    required = [tab_testid(t) for t in platform.tabs] + list(SUBMISSION_TESTIDS)
    required += [fact_testid(m["fact_key"]) for m in memory_items]
    return {
        "stamp_schema": SCHEMA_VERSION,
        "platform": {"app_name": platform.app_name,
                     "style_keywords": [platform.card_style, platform.icon_style, platform.text_tone],
                     "tabs": list(platform.tabs)},
        "task": {
            "natural_language": scenario["task"]["question"],
            "guideline": " ".join(steps),
            "must_visit_pages": must_visit,
            "memory_items": memory_items,
            "final_action": {"page_id": SUBMIT_PAGE_ID, "type": "input_and_submit",
                             "input_testid": "answer-input", "submit_testid": "answer-submit",
                             "required_output_format": task.output_format, "gold": gold},
            "grading": {"method": "exact", "gold": gold, "pass_regex": "^" + re.escape(gold) + "$"},
        },
        "ui_contract": {
            "required_testids": required,
            "navigation_contract": [
                ", ".join(tab_testid(t) for t in platform.tabs)
                + " must exist and be clickable on every information page, but must not appear on the "
                  "submission page",
                "go-submit-answer must be visible from every information page",
            ],
        },
        "anti_triviality": {"extra_interactives": list(distractor_ids),
                            "notes": "distractor modules toggle state but never change the answer"},
    }


def answer_example(task: TaskSeed) -> str:
    return {"single_label": "JaneDoe", "code": "X0-00", "composite": "tag-one;tag-two"}.get(task.answer_type, "abc")


def build_page_graph(platform: PlatformSeed, task: TaskSeed, scenario: dict[str, Any],
                     entry_labels: dict[str, str], distractors: list[dict[str, Any]]) -> PageGraph:
    tab_pages, _, _ = page_layout_ids(platform, task)
    detail_ids = list(scenario["task"]["must_visit"])
    roles = detail_roles(task)
    facts = scenario["data"]["truth"]["facts"]
    pattern = pattern_for(task.id)
    sc_pages = {p["id"]: p for p in scenario["ui_requirements"]["pages"]}
    by_page: dict[str, list[Element]] = {}
    for d in distractors:
        by_page.setdefault(d["page_id"], []).append(
            Element(d["testid"], "distractor", d["label"], d["value"]))

    pages: list[Page] = []
    home_elems = [Element(f"entry-{pid}", "list_item", entry_labels[pid], target_page=pid) for pid in detail_ids]
    pages.append(Page(HOME_PAGE_ID, sc_pages.get(HOME_PAGE_ID, {}).get("title", platform.app_name), "home",
                      home_elems + by_page.get(HOME_PAGE_ID, [])))
    for tab, pid in tab_pages.items():
        if pid == HOME_PAGE_ID:
            continue
        pages.append(Page(pid, tab, "tab", by_page.get(pid, [])))
    for i, pid in enumerate(detail_ids):
        role = roles[i] if i < len(roles) else "Detail"
        shown = sc_pages.get(pid, {}).get("must_show_facts", [])
        elems = [Element(fact_testid(k), "fact_display", pattern.fact_label(k), facts[k], fact_key=k)
                 for k in shown if k in facts]
        pages.append(Page(pid, sc_pages.get(pid, {}).get("title", role), role, elems + by_page.get(pid, [])))
    pages.append(Page(SUBMIT_PAGE_ID, "Submit answer", task.ui_pattern[-1], [
        Element("back", "back", "Back", target_page=HOME_PAGE_ID),
        Element("answer-input", "input", f"Answer (Example: {answer_example(task)})", value=""),
        Element("answer-submit", "submit", "Submit"),
        Element("result", "result", "Result", value=""),
    ], chrome=False))
    tab_bar = [Element(tab_testid(t), "tab", t, target_page=pid) for t, pid in tab_pages.items()]
    entry = Element("go-submit-answer", "button", "Submit answer", target_page=SUBMIT_PAGE_ID)
    return PageGraph(pages, HOME_PAGE_ID, SUBMIT_PAGE_ID, tab_bar, entry)


def entry_labels_for(platform: PlatformSeed, scenario: dict[str, Any]) -> dict[str, str]:
    """Home-list labels: the entry point kind plus the candidate name when there is one."""
    points = platform.detail_entry_points or ["detail"]
    facts = scenario["data"]["truth"]["facts"]
    sc_pages = {p["id"]: p for p in scenario["ui_requirements"]["pages"]}
    labels = {}
    for i, pid in enumerate(scenario["task"]["must_visit"]):
        point = points[i % len(points)]
        point = point[:1].upper() + point[1:]
        page = sc_pages.get(pid, {})
        name_key = next((k for k in page.get("must_show_facts", []) if k.startswith("name_")), None)
        if name_key and name_key in facts:
            labels[pid] = f"{point}: {facts[name_key]}"
        else:
            labels[pid] = f"{point} ({page.get('title', pid)})"
    return labels


def generate_environment(platform: PlatformSeed, task: TaskSeed, rng_seed: int, *,
                         master_seed: Optional[int] = None, noise: str = "low") -> EnvironmentBundle:
    """Build and statically verify a runnable bundle for one seed pair."""
    from .repair import repair
    from .verifier import statically_verify

    for report in (validate_platform_seed(platform), validate_task_seed(task)):
        if not report.ok:
            raise ValueError(f"invalid seed: {report.rule_ids}")
    pattern = pattern_for(task.id)
    tab_pages, detail_ids, suffixes = page_layout_ids(platform, task)
    draw = pattern.draw(sub_rng(rng_seed, "facts"), suffixes)
    distractors = plan_distractors(platform.distractions, HOME_PAGE_ID, list(tab_pages.values()), detail_ids,
                                   pattern, draw.facts, draw.memory_keys, sub_rng(rng_seed, "distractors"), noise)
    scenario = build_scenario(platform, task, draw, pattern, rng_seed, detail_ids, suffixes, distractors)
    entry_labels = entry_labels_for(platform, scenario)
    task_spec = build_task_spec(platform, task, scenario, pattern, entry_labels, [d["testid"] for d in distractors])
    graph = build_page_graph(platform, task, scenario, entry_labels, distractors)
    bundle = EnvironmentBundle(
        scenario=scenario,
        task_spec=task_spec,
        page_graph=graph,
        gold=draw.gold,
        facts=dict(draw.facts),
        provenance={
            "master_seed": rng_seed if master_seed is None else master_seed,
            "rng_seed": rng_seed,
            "generator": "procedural",
            "repair_rounds": 0,
            "noise": noise,
            "platform_seed": platform.to_dict(),
            "task_seed": task.to_dict(),
            "changes": [],
        },
    )
    report = statically_verify(bundle)
    if not report.ok:
        bundle = repair(bundle, report)
    return bundle


def generate_from_master_seed(master_seed: int, catalog: SeedCatalog, noise: str = "low") -> EnvironmentBundle:
    platform, task = sample_seeds(master_seed, catalog)
    return generate_environment(platform, task, master_seed, master_seed=master_seed, noise=noise)
