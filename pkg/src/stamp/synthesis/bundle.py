"""Runnable environment bundle: documents plus the page graph the engine executes."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Any, Iterator, Optional

from ..seed_model import SCHEMA_VERSION, canonical_digest

ELEMENT_KINDS = (
    "tab", "button", "list_item", "fact_display", "input", "submit", "result", "back", "distractor",
)
INTERACTIVE_KINDS = frozenset({"tab", "button", "list_item", "input", "submit", "back", "distractor"})


@dataclass
class Element:
    testid: str
    kind: str
    label: str
    value: Optional[str] = None
    target_page: Optional[str] = None
    fact_key: Optional[str] = None

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"testid": self.testid, "kind": self.kind, "label": self.label}
        if self.value is not None:
            d["value"] = self.value
        if self.target_page is not None:
            d["target_page"] = self.target_page
        if self.fact_key is not None:
            d["fact_key"] = self.fact_key
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Element":
        return cls(d["testid"], d["kind"], d.get("label", ""), d.get("value"), d.get("target_page"),
                   d.get("fact_key"))


@dataclass
class Page:
    id: str
    title: str
    role: str
    elements: list[Element] = field(default_factory=list)
    # info pages show the tab bar and the go-submit-answer entry; the submission page does not
    chrome: bool = True

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "title": self.title, "role": self.role, "chrome": self.chrome,
                "elements": [e.to_dict() for e in self.elements]}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Page":
        return cls(d["id"], d.get("title", ""), d.get("role", ""),
                   [Element.from_dict(e) for e in d.get("elements", [])], bool(d.get("chrome", True)))


@dataclass
class PageGraph:
    """Pages plus the persistent chrome shared by every information page.

    The tab bar and the submission entry are declared once here and drawn on
    each page whose ``chrome`` flag is set, so every testid has exactly one
    declaration in the graph.
    """

    pages: list[Page]
    home_page_id: str
    submission_page_id: str
    tab_bar: list[Element] = field(default_factory=list)
    submit_entry: Optional[Element] = None

    def page(self, page_id: str) -> Optional[Page]:
        for p in self.pages:
            if p.id == page_id:
                return p
        return None

    def iter_elements(self) -> Iterator[tuple[Optional[str], Element]]:
        """Yield (page id or None for chrome, element) for every declaration."""
        for el in self.tab_bar:
            yield None, el
        if self.submit_entry is not None:
            yield None, self.submit_entry
        for p in self.pages:
            for el in p.elements:
                yield p.id, el

    def to_dict(self) -> dict[str, Any]:
        return {
            "pages": [p.to_dict() for p in self.pages],
            "home_page_id": self.home_page_id,
            "submission_page_id": self.submission_page_id,
            "tab_bar": [e.to_dict() for e in self.tab_bar],
            "submit_entry": self.submit_entry.to_dict() if self.submit_entry else None,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "PageGraph":
        entry = d.get("submit_entry")
        return cls([Page.from_dict(p) for p in d.get("pages", [])], d["home_page_id"], d["submission_page_id"],
                   [Element.from_dict(e) for e in d.get("tab_bar", [])],
                   Element.from_dict(entry) if entry else None)


@dataclass
class EnvironmentBundle:
    scenario: dict[str, Any]
    task_spec: dict[str, Any]
    page_graph: PageGraph
    gold: str
    facts: dict[str, str]
    provenance: dict[str, Any]

    @property
    def task_seed_id(self) -> str:
        return self.provenance.get("task_seed", {}).get("id") or self.scenario.get("meta", {}).get("task_seed_id", "")

    @property
    def memory_items(self) -> list[dict[str, Any]]:
        return list(self.task_spec.get("task", {}).get("memory_items", []))

    @property
    def required_steps(self) -> int:
        return int(self.provenance.get("task_seed", {}).get("required_steps", 0))

    @property
    def bundle_id(self) -> str:
        return f"{self.provenance.get('master_seed')}-{self.task_seed_id}"

    def to_dict(self) -> dict[str, Any]:
        return {
            "stamp_schema": SCHEMA_VERSION,
            "scenario": self.scenario,
            "task_spec": self.task_spec,
            "page_graph": self.page_graph.to_dict(),
            "gold": self.gold,
            "facts": dict(self.facts),
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "EnvironmentBundle":
        if d.get("stamp_schema") != SCHEMA_VERSION:
            raise ValueError(f"unsupported stamp_schema {d.get('stamp_schema')!r}")
        return cls(d["scenario"], d["task_spec"], PageGraph.from_dict(d["page_graph"]), d["gold"],
                   dict(d["facts"]), d.get("provenance", {}))

    def copy(self) -> "EnvironmentBundle":
        return EnvironmentBundle.from_dict(copy.deepcopy(self.to_dict()))

    def digest(self) -> str:
        return canonical_digest(self.to_dict())

    def file_name(self) -> str:
        return f"{self.bundle_id}.bundle.json"
