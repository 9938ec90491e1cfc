"""Delegate scenario and task-spec authoring to a text-generation service.

Gold-related values are still drawn locally and handed to the service as
fixed values; the service only writes the surrounding documents. The page
graph is built natively from those documents, then the usual static
verification and repair loop applies.
"""

from __future__ import annotations

import json
import logging
from typing import Optional

from ..clients import ChatClient, UnparseableResponse, parse_json_document, text_message
from ..seed_model import PlatformSeed, TaskSeed
from ..templates import load_template
from .bundle import EnvironmentBundle
from .generator import (
    HOME_PAGE_ID,
    SUBMIT_PAGE_ID,
    build_page_graph,
    entry_labels_for,
    generate_environment,
    page_layout_ids,
    plan_distractors,
    sub_rng,
)
from .patterns import pattern_for
from .repair import RepairRejected, repair
from .verifier import statically_verify

log = logging.getLogger(__name__)


class VerificationFailed(RuntimeError):
    def __init__(self, reasons: list[str]):
        super().__init__("; ".join(reasons))
        self.reasons = reasons


def scenario_prompt(spec: dict) -> str:
    return load_template("scenario_prompt").replace(
        "{json.dumps(spec, ensure_ascii=False, indent=2)}", json.dumps(spec, ensure_ascii=False, indent=2))


def task_prompt(scenario: dict) -> str:
    return load_template("task_prompt").replace(
        "{json.dumps(scn, ensure_ascii=False, indent=2)}", json.dumps(scenario, ensure_ascii=False, indent=2))


def _request_document(client: ChatClient, prompt: str, required: tuple[str, ...]) -> dict:
    doc = parse_json_document(client.complete([text_message("user", prompt)]))
    if not isinstance(doc, dict) or any(k not in doc for k in required):
        raise UnparseableResponse(f"document lacks required sections {required}")
    return doc


def external_generate(platform: PlatformSeed, task: TaskSeed, client: ChatClient, *, rng_seed: int,
                      master_seed: Optional[int] = None, noise: str = "low",
                      fallback: bool = False) -> EnvironmentBundle:
    """Generate a bundle through ``client``; optionally fall back to procedural generation.

    Transport and parse errors propagate unless ``fallback`` is set.
    """
    try:
        return _external(platform, task, client, rng_seed, master_seed, noise)
    except Exception as exc:
        if not fallback:
            raise
        log.warning("external generation failed (%s); using procedural generator", exc)
        return generate_environment(platform, task, rng_seed, master_seed=master_seed, noise=noise)


def _external(platform, task, client, rng_seed, master_seed, noise) -> EnvironmentBundle:
    pattern = pattern_for(task.id)
    tab_pages, detail_ids, suffixes = page_layout_ids(platform, task)
    draw = pattern.draw(sub_rng(rng_seed, "facts"), suffixes)
    spec = {
        "platform_seed": platform.to_dict(),
        "task_seed": task.to_dict(),
        "seed": rng_seed,
        "fixed_values": {"gold": draw.gold, "facts": draw.facts},
        "page_ids": {"home": HOME_PAGE_ID, "details": detail_ids, "submission": SUBMIT_PAGE_ID},
        "fact_placement": {pid: [k for k in draw.facts if k.endswith(f"_{s}")]
                           for pid, s in zip(detail_ids, suffixes)},
    }
    scenario = _request_document(client, scenario_prompt(spec), ("meta", "data", "task", "ui_requirements"))
    scenario.setdefault("meta", {}).setdefault("task_seed_id", task.id)
    try:
        must_visit = list(scenario["task"]["must_visit"])
        facts = scenario["data"]["truth"]["facts"]
        labels = list(scenario["ui_requirements"]["distraction_interactions"])
        scenario["ui_requirements"]["pages"]
    except (KeyError, TypeError) as exc:
        raise UnparseableResponse(f"scenario document is incomplete: {exc}") from exc
    task_spec = _request_document(client, task_prompt(scenario), ("platform", "task", "ui_contract"))

    memory_keys = [m.get("fact_key") for m in task_spec.get("task", {}).get("memory_items", [])]
    distractors = plan_distractors([str(x) if not isinstance(x, dict) else str(x.get("label", x)) for x in labels]
                                   or platform.distractions, HOME_PAGE_ID, list(tab_pages.values()), must_visit,
                                   pattern, facts, memory_keys, sub_rng(rng_seed, "distractors"), noise)
    try:
        graph = build_page_graph(platform, task, scenario, entry_labels_for(platform, scenario), distractors)
    except (KeyError, TypeError) as exc:
        raise UnparseableResponse(f"documents cannot be laid out as pages: {exc}") from exc
    bundle = EnvironmentBundle(
        scenario=scenario,
        task_spec=task_spec,
        page_graph=graph,
        gold=str(scenario["data"]["truth"].get("gold", "")),
        facts={k: str(v) for k, v in facts.items()},
        provenance={
            "master_seed": rng_seed if master_seed is None else master_seed,
            "rng_seed": rng_seed,
            "generator": "external",
            "repair_rounds": 0,
            "noise": noise,
            "platform_seed": platform.to_dict(),
            "task_seed": task.to_dict(),
            "changes": [],
        },
    )
    report = statically_verify(bundle)
    if report.ok:
        return bundle
    try:
        return repair(bundle, report)
    except RepairRejected as exc:
        raise VerificationFailed(exc.reasons) from exc
