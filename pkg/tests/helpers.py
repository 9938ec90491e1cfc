"""Shared test utilities: bundle caches, a scripted chat client and bundle mutators."""

from __future__ import annotations

import random
from functools import lru_cache

from stamp.synthesis import EnvironmentBundle, default_catalog, generate_from_master_seed, pattern_for
from stamp.synthesis.patterns import ExtremePattern

REQUIRED = ("answer-input", "answer-submit", "result", "go-submit-answer")


@lru_cache(maxsize=None)
def _bundle_dict(seed: int, noise: str) -> dict:
    return generate_from_master_seed(seed, default_catalog(), noise).to_dict()


def bundle(seed: int, noise: str = "low") -> EnvironmentBundle:
    """A fresh (mutable) copy of the bundle for ``seed``."""
    return EnvironmentBundle.from_dict(_bundle_dict(seed, noise))


def bundles(seeds=range(1, 101), noise: str = "low") -> list[EnvironmentBundle]:
    return [bundle(s, noise) for s in seeds]


def first_bundle_of(task_id: str, noise: str = "low") -> EnvironmentBundle:
    for seed in range(1, 500):
        b = bundle(seed, noise)
        if b.task_seed_id == task_id:
            return b
    raise LookupError(task_id)


class ScriptedClient:
    """Chat client that replays canned replies and records every request."""

    def __init__(self, *replies):
        self.replies = list(replies)
        self.requests = []

    def complete(self, messages):
        self.requests.append(messages)
        if not self.replies:
            raise AssertionError("no canned reply left")
        reply = self.replies.pop(0)
        if isinstance(reply, Exception):
            raise reply
        return reply(messages) if callable(reply) else reply


# ---------------------------------------------------------------------------
# single-field mutations


def _distractors(b: EnvironmentBundle):
    return [(p, el) for p in b.page_graph.pages for el in p.elements if el.kind == "distractor"]


def _memory_displays(b: EnvironmentBundle):
    keys = {m["fact_key"] for m in b.memory_items}
    return [el for p in b.page_graph.pages for el in p.elements if el.kind == "fact_display" and el.fact_key in keys]


def mutate_ambiguity(b: EnvironmentBundle, rng: random.Random) -> str:
    """Change one field so that the gold is no longer the unique derivable answer."""
    pattern = pattern_for(b.task_seed_id)
    if isinstance(pattern, ExtremePattern):
        keys = [m["fact_key"] for m in b.memory_items]
        vals = [pattern.parse(b.facts[k]) for k in keys]
        best = max(vals) if pattern.largest else min(vals)
        _, el = rng.choice(_distractors(b))
        delta = rng.choice([0, 1, 5])
        el.value = pattern.encode(best + delta if pattern.largest else max(0, best - delta))
        return f"distractor {el.testid} competes"
    memory_pages = {m["page_id"] for m in b.memory_items}
    candidates = [el for p, el in _distractors(b) if p.id in memory_pages and el.value]
    if candidates and rng.random() < 0.5:
        el = rng.choice(candidates)
        el.label = pattern.value_label
        return f"distractor {el.testid} relabelled"
    el = rng.choice(_memory_displays(b))
    el.value = (el.value or "") + "x"
    return f"fact {el.testid} altered"


def mutate_testids(b: EnvironmentBundle, rng: random.Random) -> str:
    """Delete or rename one element the contract requires."""
    graph = b.page_graph
    choice = rng.choice(["delete", "rename", "tab", "entry", "fact"])
    if choice in ("delete", "rename"):
        target = rng.choice(REQUIRED)
        if target == "go-submit-answer":
            if choice == "delete":
                graph.submit_entry = None
            else:
                graph.submit_entry.testid = "go-submit"
            return f"{choice} {target}"
        page = graph.page(graph.submission_page_id)
        el = next(e for e in page.elements if e.testid == target)
        if choice == "delete":
            page.elements.remove(el)
        else:
            el.testid = target + "-x"
        return f"{choice} {target}"
    if choice == "tab":
        tab = rng.choice(graph.tab_bar)
        graph.tab_bar.remove(tab)
        return f"delete {tab.testid}"
    if choice == "entry":
        graph.submit_entry.testid = rng.choice(["answer-input", "result"])
        return "duplicate testid"
    el = rng.choice(_memory_displays(b))
    el.testid = el.testid + "-renamed"
    return f"rename {el.testid}"


def mutation_suite(count: int = 200, seed: int = 7):
    """(bundle, description) pairs: alternating ambiguity and testid mutations over seeds 1..100."""
    rng = random.Random(seed)
    out = []
    for i in range(count):
        b = bundle(1 + (i // 2) % 100)
        desc = mutate_ambiguity(b, rng) if i % 2 == 0 else mutate_testids(b, rng)
        out.append((b, desc))
    return out


def flagged(report) -> bool:
    return (not report.is_unique) or bool(report.violations) or report.predicted_answer != report.gold
