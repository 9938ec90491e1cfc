"""Trajectory, step and SFT record types with their JSONL encodings."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Any, Optional

from ..engine import GradeResult
from ..protocol import PromptBundle

TRAJECTORY_SCHEMA = 1


@dataclass
class StepRecord:
    """One executed step.

    ``conclusion`` holds the Action line and ``action`` the tool-call arguments.
    ``visible_facts`` maps fact keys shown in the pre-action observation to
    their values; alignment reads only this field.
    """

    index: int
    screenshot_ref: str
    action: dict[str, Any]
    thought: str = ""
    conclusion: str = ""
    memory: str = ""
    trainable: bool = True
    reason: str = ""
    b: bool = False
    m_tilde: str = ""
    effect: str = ""
    page_id: str = ""
    page_title: str = ""
    observation_text: str = ""
    visible_facts: dict[str, str] = field(default_factory=dict)
    output_text: str = ""
    format_error: str = ""
    action_masked: bool = False
    memory_masked: bool = False

    @property
    def action_desc(self) -> str:
        return self.conclusion

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "StepRecord":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass
class Trajectory:
    goal: str
    steps: list[StepRecord]
    outcome: Optional[GradeResult]
    task_id: str
    traj_id: str
    meta: dict[str, Any] = field(default_factory=dict)

    @property
    def success(self) -> bool:
        return bool(self.outcome and self.outcome.success)

    def check(self) -> None:
        for i, s in enumerate(self.steps, 1):
            if s.index != i:
                raise ValueError(f"step indices must run 1..n, found {s.index} at position {i}")
            if not s.b and s.m_tilde:
                raise ValueError(f"step {s.index} has a memory target without b")

    def to_dict(self) -> dict[str, Any]:
        return {
            "stamp_schema": TRAJECTORY_SCHEMA,
            "goal": self.goal,
            "steps": [s.to_dict() for s in self.steps],
            "outcome": self.outcome.to_dict() if self.outcome else None,
            "ids": {"task_id": self.task_id, "traj_id": self.traj_id},
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Trajectory":
        version = d.get("stamp_schema", TRAJECTORY_SCHEMA)
        if version != TRAJECTORY_SCHEMA:
            raise ValueError(f"unsupported trajectory schema {version}")
        outcome = GradeResult.from_dict(d["outcome"]) if d.get("outcome") else None
        ids = d.get("ids", {})
        return cls(d["goal"], [StepRecord.from_dict(s) for s in d["steps"]], outcome,
                   ids.get("task_id", ""), ids.get("traj_id", ""), d.get("meta", {}))


@dataclass
class SftRecord:
    prompt: PromptBundle
    target: str
    weights: dict[str, float]
    masks: dict[str, bool]
    ids: dict[str, Any]

    def to_dict(self) -> dict[str, Any]:
        return {
            "stamp_schema": TRAJECTORY_SCHEMA,
            "messages": self.prompt.to_messages(),
            "images": [u.has_image for u in self.prompt.user_turns],
            "target": self.target,
            "weights": self.weights,
            "masks": self.masks,
            "ids": self.ids,
        }
