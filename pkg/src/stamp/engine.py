"""Deterministic interactive execution of an environment bundle.

Screen geometry is on a 0-1000 grid:

* y in [0, 120) is the reserved chrome band; clicks there are inert.
* content rows start at y=140, each 80 tall with a 10-unit gap, and are
  visible only when fully inside [140, 920] after subtracting the scroll
  offset.
* y in [920, 1000] holds the tab bar on information pages, split evenly.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import IO, Any, Optional, Union

from .seed_model import canonical_digest
from .synthesis.bundle import Element, EnvironmentBundle, Page

log = logging.getLogger(__name__)

GRID = 1000
CHROME_BAND = 120
CONTENT_TOP = 140
ROW_HEIGHT = 80
ROW_GAP = 10
ROW_PITCH = ROW_HEIGHT + ROW_GAP
TAB_TOP = 920
SCROLL_STRIDE = 600
CONTENT_X = (20, 980)
SUBMIT_ENTRY_X = (700, 980)
BACK_X = (0, 120)

SUCCESS_TEXT = "Success!"
FAILURE_TEXT = "Wrong answer, please try again"
CHROME_NOTE = "reserved: system tag bar y<120"

EFFECTS = ("navigated", "toggled", "typed", "focused", "scrolled", "graded", "noop")
EXTRA_ACTIONS = frozenset({
    "invalid", "key", "long_press", "system_button", "open_app", "wait", "interact", "terminate", "swipe",
})

BBox = tuple[int, int, int, int]


class EngineError(Exception):
    pass


class TerminalStateError(EngineError):
    pass


class CoordinateError(EngineError, ValueError):
    pass


class UnverifiedBundle(EngineError):
    pass


@dataclass(frozen=True)
class Action:
    kind: str
    x: Optional[int] = None
    y: Optional[int] = None
    text: Optional[str] = None
    target: Optional[str] = None

    @classmethod
    def click(cls, x: int, y: int) -> "Action":
        return cls("click", x, y)

    @classmethod
    def type(cls, x: int, y: int, text: str) -> "Action":
        return cls("type", x, y, text)

    @classmethod
    def type_focused(cls, text: str) -> "Action":
        return cls("type_focused", text=text)

    @classmethod
    def scroll(cls) -> "Action":
        return cls("scroll")

    @classmethod
    def open(cls, testid: str) -> "Action":
        return cls("open", target=testid)

    @classmethod
    def back(cls) -> "Action":
        return cls("back")

    @classmethod
    def answer(cls, text: str) -> "Action":
        return cls("answer", text=text)

    @classmethod
    def extra(cls, name: str, text: Optional[str] = None) -> "Action":
        return cls(name, text=text)

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"kind": self.kind}
        if self.x is not None:
            d["coordinate"] = [self.x, self.y]
        if self.text is not None:
            d["text"] = self.text
        if self.target is not None:
            d["target"] = self.target
        return d


@dataclass(frozen=True)
class GradeResult:
    success: bool
    submitted: str
    gold: str

    def to_dict(self) -> dict[str, Any]:
        return {"success": self.success, "submitted": self.submitted, "gold": self.gold}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "GradeResult":
        return cls(bool(d["success"]), d.get("submitted", ""), d.get("gold", ""))


@dataclass(frozen=True)
class VisibleElement:
    testid: str
    kind: str
    label: str
    value: Optional[str]
    bbox: BBox

    @property
    def center(self) -> tuple[int, int]:
        x0, y0, x1, y1 = self.bbox
        return (x0 + x1) // 2, (y0 + y1) // 2

    def to_dict(self) -> dict[str, Any]:
        d = {"testid": self.testid, "kind": self.kind, "label": self.label, "bbox": list(self.bbox)}
        if self.value is not None:
            d["value"] = self.value
        return d


@dataclass(frozen=True)
class Observation:
    page_id: str
    page_title: str
    visible_elements: tuple[VisibleElement, ...]
    scroll_hint: bool
    chrome_note: str = CHROME_NOTE
    success_banner: Optional[str] = None

    def find(self, testid: str) -> Optional[VisibleElement]:
        for el in self.visible_elements:
            if el.testid == testid:
                return el
        return None

    def to_dict(self) -> dict[str, Any]:
        d = {"page_id": self.page_id, "page_title": self.page_title,
             "visible_elements": [e.to_dict() for e in self.visible_elements],
             "scroll_hint": self.scroll_hint, "chrome_note": self.chrome_note}
        if self.success_banner is not None:
            d["success_banner"] = self.success_banner
        return d

    def digest(self) -> str:
        return canonical_digest(self.to_dict())

    def describe(self) -> str:
        """Text stand-in for a screenshot."""
        lines = [f"Screen: {self.page_title}", f"[{self.chrome_note}]"]
        for el in self.visible_elements:
            value = f" = {el.value!r}" if el.value not in (None, "") else ""
            lines.append(f"- {el.kind} '{el.label}'{value} at {list(el.bbox)} (testid {el.testid})")
        if self.scroll_hint:
            lines.append("(more content below)")
        if self.success_banner:
            lines.append(self.success_banner)
        return "\n".join(lines)


@dataclass(frozen=True)
class StepEffect:
    kind: str
    testid: Optional[str] = None
    note: str = ""

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"kind": self.kind}
        if self.testid:
            d["testid"] = self.testid
        if self.note:
            d["note"] = self.note
        return d


@dataclass
class _Row:
    cells: list[tuple[Element, int, int]]
    top: int  # unscrolled


@dataclass
class _PageLayout:
    page: Page
    rows: list[_Row]
    max_scroll: int


@dataclass
class EnvState:
    engine: "Engine"
    current_page_id: str
    max_steps: int
    scroll_offset: int = 0
    input_buffer: dict[str, str] = field(default_factory=dict)
    toggled: set[str] = field(default_factory=set)
    focused: Optional[str] = None
    result_text: str = ""
    step_count: int = 0
    terminal: Optional[GradeResult] = None
    last_submitted: Optional[str] = None

    @property
    def bundle(self) -> EnvironmentBundle:
        return self.engine.bundle

    def snapshot(self) -> dict[str, Any]:
        return {
            "page": self.current_page_id,
            "scroll": self.scroll_offset,
            "inputs": dict(sorted(self.input_buffer.items())),
            "toggled": sorted(self.toggled),
            "focused": self.focused,
            "result": self.result_text,
            "step_count": self.step_count,
            "terminal": self.terminal.to_dict() if self.terminal else None,
        }

    def digest(self) -> str:
        return canonical_digest(self.snapshot())


class Engine:
    """Executes one bundle. Layouts are computed once; sessions are ``EnvState`` objects."""

    def __init__(self, bundle: EnvironmentBundle):
        self.bundle = bundle
        graph = bundle.page_graph
        self.gold = bundle.gold
        self.home = graph.home_page_id
        self.submission = graph.submission_page_id
        self.layouts = {p.id: self._layout(p) for p in graph.pages}
        n = len(graph.tab_bar)
        self.tab_cells = [
            VisibleElement(el.testid, el.kind, el.label, None,
                           (round(i * GRID / n), TAB_TOP, round((i + 1) * GRID / n), GRID))
            for i, el in enumerate(graph.tab_bar)
        ]
        self.elements = {el.testid: el for _, el in graph.iter_elements()}

    def _layout(self, page: Page) -> _PageLayout:
        rows: list[_Row] = []
        graph = self.bundle.page_graph
        elements = list(page.elements)
        if page.chrome and graph.submit_entry is not None:
            rows.append(_Row([(graph.submit_entry, *SUBMIT_ENTRY_X)], 0))
        backs = [e for e in elements if e.kind == "back"]
        if not page.chrome and backs:
            rows.append(_Row([(backs[0], *BACK_X)], 0))
            elements.remove(backs[0])
        for el in elements:
            rows.append(_Row([(el, *CONTENT_X)], 0))
        for i, row in enumerate(rows):
            row.top = CONTENT_TOP + i * ROW_PITCH
        bottom = rows[-1].top + ROW_HEIGHT if rows else CONTENT_TOP
        return _PageLayout(page, rows, max(0, bottom - TAB_TOP))

    # ------------------------------------------------------------------
    def reset(self, max_steps: int) -> tuple[EnvState, Observation]:
        if max_steps < 0:
            raise ValueError("max_steps must be non-negative")
        state = EnvState(self, self.home, max_steps)
        return state, self.render(state)

    def _value_of(self, state: EnvState, el: Element) -> Optional[str]:
        if el.kind == "input":
            return state.input_buffer.get(el.testid, "")
        if el.kind == "result":
            return state.result_text
        return el.value

    def render(self, state: EnvState) -> Observation:
        layout = self.layouts[state.current_page_id]
        off = state.scroll_offset
        visible: list[VisibleElement] = []
        below = False
        for row in layout.rows:
            top = row.top - off
            if top < CONTENT_TOP:
                continue
            if top + ROW_HEIGHT > TAB_TOP:
                below = True
                break
            for el, x0, x1 in row.cells:
                label = el.label + " [on]" if el.testid in state.toggled else el.label
                visible.append(VisibleElement(el.testid, el.kind, label, self._value_of(state, el),
                                              (x0, top, x1, top + ROW_HEIGHT)))
        if layout.page.chrome:
            visible.extend(self.tab_cells)
        banner = SUCCESS_TEXT if state.result_text == SUCCESS_TEXT else None
        return Observation(layout.page.id, layout.page.title, tuple(visible), below, CHROME_NOTE, banner)

    def resolve_hit(self, state: EnvState, x: int, y: int) -> Union[VisibleElement, str, None]:
        """Return the visible element under (x, y), the string "chrome", or None."""
        if not (isinstance(x, int) and isinstance(y, int)) or not (0 <= x <= GRID and 0 <= y <= GRID):
            raise CoordinateError(f"coordinates ({x}, {y}) outside the 0-{GRID} grid")
        if y < CHROME_BAND:
            return "chrome"
        layout = self.layouts[state.current_page_id]
        if y >= TAB_TOP:
            if not layout.page.chrome:
                return None
            for cell in self.tab_cells:
                x0, _, x1, _ = cell.bbox
                if x0 <= x < x1 or (x == GRID and x1 == GRID):
                    return cell
            return None
        if y < CONTENT_TOP:
            return None
        off = state.scroll_offset
        for row in layout.rows:
            top = row.top - off
            if top < CONTENT_TOP or top + ROW_HEIGHT > TAB_TOP:
                continue
            if top <= y < top + ROW_HEIGHT:
                for el, x0, x1 in row.cells:
                    if x0 <= x < x1:
                        label = el.label + " [on]" if el.testid in state.toggled else el.label
                        return VisibleElement(el.testid, el.kind, label, self._value_of(state, el),
                                              (x0, top, x1, top + ROW_HEIGHT))
                return None
        return None

    def grade(self, submitted: str) -> GradeResult:
        return GradeResult(submitted == self.gold, submitted, self.gold)

    # ------------------------------------------------------------------
    def _navigate(self, state: EnvState, target: Optional[str], testid: str) -> StepEffect:
        if target is None or target not in self.layouts:
            return StepEffect("noop", testid, "element has no valid target")
        state.current_page_id = target
        state.scroll_offset = 0
        state.focused = None
        return StepEffect("navigated", testid, target)

    def _submit(self, state: EnvState, testid: str) -> StepEffect:
        submitted = state.input_buffer.get("answer-input", "")
        result = self.grade(submitted)
        state.last_submitted = submitted
        if result.success:
            state.result_text = SUCCESS_TEXT
            state.terminal = result
        else:
            state.result_text = FAILURE_TEXT
        return StepEffect("graded", testid, "success" if result.success else "failure")

    def _element(self, testid: str) -> Optional[Element]:
        return self.elements.get(testid)

    def _click(self, state: EnvState, x: int, y: int) -> StepEffect:
        hit = self.resolve_hit(state, x, y)
        if hit == "chrome":
            return StepEffect("noop", None, "click in reserved chrome band")
        if hit is None:
            return StepEffect("noop", None, "click hit no element")
        el = self._element(hit.testid)
        kind = hit.kind
        if kind in ("tab", "button", "list_item", "back"):
            return self._navigate(state, el.target_page if el else None, hit.testid)
        if kind == "distractor":
            state.toggled.symmetric_difference_update({hit.testid})
            return StepEffect("toggled", hit.testid)
        if kind == "input":
            state.focused = hit.testid
            return StepEffect("focused", hit.testid)
        if kind == "submit":
            return self._submit(state, hit.testid)
        return StepEffect("noop", hit.testid, f"{kind} is not interactive")

    def step(self, state: EnvState, action: Action) -> tuple[EnvState, Observation, StepEffect]:
        if state.terminal is not None:
            raise TerminalStateError("session already terminated")
        if state.step_count >= state.max_steps:
            state.terminal = GradeResult(False, state.last_submitted or "", self.gold)
            return state, self.render(state), StepEffect("noop", None, "step budget exhausted")
        effect = self._apply(state, action)
        state.step_count += 1
        if state.terminal is None and state.step_count >= state.max_steps:
            state.terminal = GradeResult(False, state.last_submitted or "", self.gold)
        return state, self.render(state), effect

    def _apply(self, state: EnvState, action: Action) -> StepEffect:
        kind = action.kind
        if kind == "click":
            return self._click(state, action.x, action.y)
        if kind == "type":
            hit = self.resolve_hit(state, action.x, action.y)
            if not hasattr(hit, "kind") or hit.kind != "input":
                log.debug("type at (%s, %s) did not hit an input", action.x, action.y)
                return StepEffect("noop", getattr(hit, "testid", None), "type target is not an input")
            state.focused = hit.testid
            state.input_buffer[hit.testid] = action.text or ""
            return StepEffect("typed", hit.testid)
        if kind == "type_focused":
            if state.focused is None:
                return StepEffect("noop", None, "no focused input")
            state.input_buffer[state.focused] = action.text or ""
            return StepEffect("typed", state.focused)
        if kind == "scroll":
            layout = self.layouts[state.current_page_id]
            new = min(state.scroll_offset + SCROLL_STRIDE, layout.max_scroll)
            if new == state.scroll_offset:
                return StepEffect("noop", None, "nothing further to scroll")
            state.scroll_offset = new
            return StepEffect("scrolled", None, str(new))
        if kind == "open":
            obs = self.render(state)
            el = obs.find(action.target or "")
            if el is None:
                return StepEffect("noop", action.target, "element not visible")
            return self._click(state, *el.center)
        if kind == "back":
            if state.current_page_id == self.home:
                return StepEffect("noop", None, "already on home page")
            return self._navigate(state, self.home, "back")
        if kind == "answer":
            if state.current_page_id != self.submission:
                return StepEffect("noop", None, "answer outside the submission page")
            state.input_buffer["answer-input"] = action.text or ""
            return self._submit(state, "answer-submit")
        if kind in EXTRA_ACTIONS:
            log.debug("accepted no-op action %s", kind)
            return StepEffect("noop", None, f"{kind} has no effect in the virtual environment")
        raise EngineError(f"unknown action kind {kind!r}")


def reset(bundle: EnvironmentBundle, max_steps: int, *, verified: bool = False) -> tuple[EnvState, Observation]:
    """Start a session. Unless ``verified`` is passed, the bundle is statically verified first."""
    if not verified:
        from .synthesis.verifier import statically_verify

        report = statically_verify(bundle)
        if not report.ok:
            raise UnverifiedBundle(f"bundle failed static verification: {report.rule_ids or report.ambiguity_reasons}")
    return Engine(bundle).reset(max_steps)


def step(state: EnvState, action: Action) -> tuple[EnvState, Observation, StepEffect]:
    return state.engine.step(state, action)


def render_observation(state: EnvState) -> Observation:
    return state.engine.render(state)


def resolve_hit(state: EnvState, x: int, y: int):
    return state.engine.resolve_hit(state, x, y)


def grade(state: EnvState, submitted: str) -> GradeResult:
    return state.engine.grade(submitted)


class TranscriptWriter:
    """Optional per-step JSONL session transcript."""

    def __init__(self, fh: IO[str]):
        self.fh = fh

    def record(self, state: EnvState, action: Action, effect: StepEffect) -> None:
        self.fh.write(json.dumps({"step": state.step_count, "action": action.to_dict(), "effect": effect.to_dict(),
                                  "page": state.current_page_id, "digest": state.digest()}, sort_keys=True) + "\n")
