"""Step-output grammar and two-tier prompt assembly.

A model step is four parts in fixed order::

    <think>
    reasoning
    </think>
    Action: short imperative
    Memory: key facts, or none
    <tool_call>
    {"name": "mobile_use", "arguments": {...}}
    </tool_call>

Prompts keep the last five rounds in full (with screenshots) and compress
everything older into "Step i / Memory" text blocks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional, Protocol, Sequence

from .engine import Action
from .templates import load_template

RECENT_WINDOW = 5
TOOL_NAME = "mobile_use"

TOOL_ACTIONS = ("key", "click", "long_press", "swipe", "type", "system_button", "open", "wait", "answer",
                "interact", "terminate")
SYSTEM_BUTTONS = ("Back", "Home", "Menu", "Enter")
REQUIRED_ARGS = {
    "key": ("text",),
    "click": ("coordinate",),
    "long_press": ("coordinate", "time"),
    "swipe": ("coordinate", "coordinate2"),
    "type": ("text",),
    "system_button": ("button",),
    "open": ("text",),
    "wait": ("time",),
    "answer": ("text",),
    "interact": ("text",),
    "terminate": ("status",),
}

_THINK_OPEN, _THINK_CLOSE = "<think>", "</think>"
_TOOL_OPEN, _TOOL_CLOSE = "<tool_call>", "</tool_call>"
_ACTION, _MEMORY = "Action:", "Memory:"
_HEADERS = (_THINK_OPEN, _ACTION, _MEMORY, _TOOL_OPEN)


class FormatError(ValueError):
    """Base for grammar violations; ``cause`` names the violated part."""

    cause = "format"


class MissingThink(FormatError):
    cause = "missing_think"


class MissingAction(FormatError):
    cause = "missing_action"


class MissingMemory(FormatError):
    cause = "missing_memory"


class MissingToolCall(FormatError):
    cause = "missing_tool_call"


class MalformedToolCall(FormatError):
    cause = "malformed_tool_call"


class WrongOrder(FormatError):
    cause = "wrong_order"


class HistoryGap(ValueError):
    pass


def _pair(value: Any, name: str) -> Optional[tuple[int, int]]:
    if value is None:
        return None
    if (not isinstance(value, (list, tuple)) or len(value) != 2
            or not all(isinstance(v, int) and not isinstance(v, bool) for v in value)):
        raise MalformedToolCall(f"{name} must be two integers")
    if not all(0 <= v <= 1000 for v in value):
        raise MalformedToolCall(f"{name} {list(value)} outside 0-1000")
    return int(value[0]), int(value[1])


@dataclass(frozen=True)
class ToolAction:
    action: str
    coordinate: Optional[tuple[int, int]] = None
    coordinate2: Optional[tuple[int, int]] = None
    text: Optional[str] = None
    time: Optional[float] = None
    button: Optional[str] = None
    status: Optional[str] = None
    name: str = TOOL_NAME

    def __post_init__(self):
        if self.action not in REQUIRED_ARGS:
            raise MalformedToolCall(f"unknown action {self.action!r}")
        for arg in REQUIRED_ARGS[self.action]:
            if getattr(self, arg) is None:
                raise MalformedToolCall(f"action {self.action} requires {arg}")
        object.__setattr__(self, "coordinate", _pair(self.coordinate, "coordinate"))
        object.__setattr__(self, "coordinate2", _pair(self.coordinate2, "coordinate2"))
        if self.button is not None and self.button not in SYSTEM_BUTTONS:
            raise MalformedToolCall(f"unknown system button {self.button!r}")
        if self.status is not None and self.status not in ("success", "failure"):
            raise MalformedToolCall(f"unknown status {self.status!r}")
        if self.time is not None and (isinstance(self.time, bool) or not isinstance(self.time, (int, float))):
            raise MalformedToolCall("time must be a number")
        if self.text is not None and not isinstance(self.text, str):
            raise MalformedToolCall("text must be a string")

    def arguments(self) -> dict[str, Any]:
        args: dict[str, Any] = {"action": self.action}
        for key in ("coordinate", "coordinate2", "text", "time", "button", "status"):
            value = getattr(self, key)
            if value is not None:
                args[key] = list(value) if isinstance(value, tuple) else value
        return args

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "arguments": self.arguments()}

    @classmethod
    def from_dict(cls, doc: Any) -> "ToolAction":
        if not isinstance(doc, dict) or doc.get("name") != TOOL_NAME or not isinstance(doc.get("arguments"), dict):
            raise MalformedToolCall(f'tool call must be {{"name": "{TOOL_NAME}", "arguments": {{...}}}}')
        args = dict(doc["arguments"])
        unknown = set(args) - {"action", "coordinate", "coordinate2", "text", "time", "button", "status"}
        if unknown:
            raise MalformedToolCall(f"unknown arguments {sorted(unknown)}")
        if "action" not in args:
            raise MalformedToolCall("arguments lack an action")
        return cls(**args)

    def to_engine_action(self) -> Action:
        """Compile to the virtual environment's action space; extras become recorded no-ops."""
        a = self.action
        if a == "click":
            return Action.click(*self.coordinate)
        if a == "type":
            if self.coordinate is not None:
                return Action.type(*self.coordinate, self.text)
            return Action.type_focused(self.text)
        if a == "swipe" and self.coordinate2[1] < self.coordinate[1]:
            return Action.scroll()
        if a == "system_button" and self.button == "Back":
            return Action.back()
        if a == "answer":
            return Action.answer(self.text)
        if a == "open":
            return Action.extra("open_app", self.text)
        return Action.extra(a, self.text)


@dataclass(frozen=True)
class StepOutput:
    think: str
    action_desc: str
    memory: str
    tool_call: ToolAction

    def __post_init__(self):
        if _is_none(self.memory):
            object.__setattr__(self, "memory", "")


def _is_none(memory: str) -> bool:
    return memory.strip().lower() == "none"


def _header(line: str) -> Optional[str]:
    s = line.lstrip()
    for h in _HEADERS:
        if s.startswith(h):
            return h
    return None


_ERR_FOR = {_THINK_OPEN: MissingThink, _ACTION: MissingAction, _MEMORY: MissingMemory, _TOOL_OPEN: MissingToolCall}


class _Cursor:
    def __init__(self, text: str):
        self.lines = text.splitlines()
        self.i = 0

    def skip_blank(self) -> None:
        while self.i < len(self.lines) and not self.lines[self.i].strip():
            self.i += 1

    def expect(self, header: str) -> str:
        """Position on ``header`` and return the rest of that line, or raise the matching error."""
        self.skip_blank()
        if self.i < len(self.lines):
            line = self.lines[self.i].lstrip()
            if line.startswith(header):
                self.i += 1
                return line[len(header):]
            found = _header(line)
            if found is not None and any(_header(x) == header for x in self.lines[self.i:]):
                raise WrongOrder(f"expected {header!r} before {found!r}")
            if found is not None and any(_header(x) == header for x in self.lines[:self.i]):
                raise WrongOrder(f"{header!r} appears out of order")
            if found is None and any(_header(x) == header for x in self.lines):
                raise _ERR_FOR[header](f"unexpected text where {header!r} was expected: {line[:60]!r}")
        elif any(_header(x) == header for x in self.lines):
            raise WrongOrder(f"{header!r} appears out of order")
        raise _ERR_FOR[header](f"no {header!r} part")

    def block(self, first: str, close: str, err: type[FormatError]) -> str:
        """Collect text up to ``close``, starting with the remainder of the opening line."""
        if close in first:
            body, _, after = first.partition(close)
            if after.strip():
                raise err(f"text after {close!r} on the same line")
            return body
        parts = [first]
        while self.i < len(self.lines):
            line = self.lines[self.i]
            self.i += 1
            if close in line:
                body, _, after = line.partition(close)
                if after.strip():
                    raise err(f"text after {close!r} on the same line")
                parts.append(body)
                return "\n".join(parts)
            parts.append(line)
        raise err(f"unterminated block, missing {close!r}")

    def until_header(self, first: str) -> str:
        parts = [first]
        while self.i < len(self.lines) and _header(self.lines[self.i]) is None:
            parts.append(self.lines[self.i])
            self.i += 1
        return "\n".join(parts)


def parse_step_output(text: str) -> StepOutput:
    cur = _Cursor(text)
    think = cur.block(cur.expect(_THINK_OPEN), _THINK_CLOSE, MissingThink).strip()
    action_desc = cur.expect(_ACTION).strip()
    if not action_desc:
        raise MissingAction("empty Action line")
    memory = cur.until_header(cur.expect(_MEMORY)).strip()
    body = cur.block(cur.expect(_TOOL_OPEN), _TOOL_CLOSE, MalformedToolCall)
    cur.skip_blank()
    if cur.i < len(cur.lines):
        raise WrongOrder("content after the tool call")
    try:
        doc = json.loads(body)
    except json.JSONDecodeError as exc:
        raise MalformedToolCall(f"tool call body is not JSON: {exc}") from exc
    try:
        tool = ToolAction.from_dict(doc)
    except TypeError as exc:
        raise MalformedToolCall(str(exc)) from exc
    return StepOutput(think, action_desc, "" if _is_none(memory) else memory, tool)


def render_step_output(s: StepOutput) -> str:
    memory = s.memory if s.memory else "none"
    call = json.dumps(s.tool_call.to_dict(), ensure_ascii=False)
    return (f"{_THINK_OPEN}\n{s.think}\n{_THINK_CLOSE}\n{_ACTION} {s.action_desc}\n{_MEMORY} {memory}\n"
            f"{_TOOL_OPEN}\n{call}\n{_TOOL_CLOSE}")


# ---------------------------------------------------------------------------
# history windows and prompts


@dataclass(frozen=True)
class StepIndexWindows:
    recent: tuple[int, ...]
    early: tuple[int, ...]


def windows(t: int, k: int = RECENT_WINDOW) -> StepIndexWindows:
    if t < 1:
        raise ValueError("t must be at least 1")
    return StepIndexWindows(tuple(range(max(1, t - k), t)), tuple(range(1, t - k)))


class HistoryStep(Protocol):
    """Any step record exposing these attributes can feed the prompt builder."""

    index: int
    action_desc: str
    memory: str
    output_text: str
    observation_text: str


def _by_index(steps: Iterable[HistoryStep], needed: Sequence[int]) -> dict[int, HistoryStep]:
    table = {s.index: s for s in steps}
    missing = [i for i in needed if i not in table]
    if missing:
        raise HistoryGap(f"history lacks steps {missing}")
    return table


def compress_history(steps: Iterable[HistoryStep], t: int) -> str:
    early = windows(t).early
    table = _by_index(steps, early)
    return "\n".join(f"Step {i}: {table[i].action_desc}\nMemory: {table[i].memory or 'none'}" for i in early)


@dataclass(frozen=True)
class UserTurn:
    step: int
    text: str
    has_image: bool
    image_ref: Optional[str] = None


@dataclass
class PromptBundle:
    system_text: str
    user_turns: list[UserTurn]
    compressed_history: str
    assistant_turns: list[str] = field(default_factory=list)

    @property
    def image_count(self) -> int:
        return sum(1 for u in self.user_turns if u.has_image)

    def to_messages(self) -> list[dict[str, Any]]:
        """Chat messages with screenshots carried as text stand-ins."""
        msgs: list[dict[str, Any]] = [{"role": "system", "content": self.system_text}]
        for i, turn in enumerate(self.user_turns):
            content = turn.text
            if turn.has_image and turn.image_ref:
                content = f"{content}\n\n<screenshot>\n{turn.image_ref}\n</screenshot>" if content else \
                    f"<screenshot>\n{turn.image_ref}\n</screenshot>"
            msgs.append({"role": "user", "content": content})
            if i < len(self.assistant_turns):
                msgs.append({"role": "assistant", "content": self.assistant_turns[i]})
        return msgs


def user_text(goal: str, history: str) -> str:
    return load_template("user_prompt").replace("{goal}", goal).replace("{history_string}", history)


def assemble_prompt(goal: str, steps: Iterable[HistoryStep], t: int, current_observation: str) -> PromptBundle:
    """Build the prompt for step ``t``: compressed early steps, full recent rounds, current screenshot."""
    win = windows(t)
    steps = list(steps)
    table = _by_index(steps, win.early + win.recent)
    history = compress_history(steps, t)
    indices = list(win.recent) + [t]
    turns: list[UserTurn] = []
    first_image = len(indices) - RECENT_WINDOW  # screenshots only on the last five user turns
    for n, i in enumerate(indices):
        text = user_text(goal, history) if n == 0 else ""
        obs = current_observation if i == t else table[i].observation_text
        has_image = n >= first_image
        turns.append(UserTurn(i, text, has_image, obs if has_image else None))
    return PromptBundle(load_template("system_prompt"), turns, history,
                        [table[i].output_text for i in win.recent])
