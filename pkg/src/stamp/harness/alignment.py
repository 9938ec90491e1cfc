"""First-reveal memory alignment and critic filtering."""

from __future__ import annotations

import copy
import json
import logging
from dataclasses import dataclass
from typing import Any, Optional, Protocol

from ..clients import ChatClient, parse_json_document, text_message
from .records import Trajectory

log = logging.getLogger(__name__)


class AlignmentError(ValueError):
    pass


def align_memory(trajectory: Trajectory, task_spec: dict[str, Any]) -> Trajectory:
    """Label the first step showing each memory fact with b=True and its ``key=value`` target."""
    out = copy.deepcopy(trajectory)
    items = [m["fact_key"] for m in task_spec.get("task", {}).get("memory_items", [])]
    for s in out.steps:
        s.b, s.m_tilde = False, ""
    pending = list(items)
    for s in out.steps:
        if not pending:
            break
        shown = [k for k in pending if k in s.visible_facts]
        if shown:
            s.b = True
            s.m_tilde = "; ".join(f"{k}={s.visible_facts[k]}" for k in shown)
            pending = [k for k in pending if k not in shown]
    if pending and out.success:
        raise AlignmentError(f"successful trajectory never revealed {pending}")
    return out


def value_tokens(m_tilde: str) -> list[str]:
    return [unit.split("=", 1)[1].strip() for unit in m_tilde.split("; ") if "=" in unit]


@dataclass(frozen=True)
class CriticVerdict:
    step: int
    trainable: bool = True
    reason: str = ""
    action_masked: bool = False
    memory_masked: bool = False


class Critic(Protocol):
    def review(self, trajectory: Trajectory) -> list[CriticVerdict]: ...


class HeuristicCritic:
    """No-op effects lose their action label; memories that disagree with the target are masked."""

    def review(self, trajectory: Trajectory) -> list[CriticVerdict]:
        verdicts = []
        for s in trajectory.steps:
            noop = s.effect == "noop"
            memory_bad = False
            if s.b and s.memory:
                low = s.memory.lower()
                memory_bad = not all(v.lower() in low for v in value_tokens(s.m_tilde))
            reason = "noop_action" if noop else ("memory_mismatch" if memory_bad else "")
            verdicts.append(CriticVerdict(s.index, not noop, reason, noop, memory_bad))
        return verdicts


class ServiceCritic:
    """Critic served over a chat endpoint.

    The service receives the goal and per-step records as JSON and must reply
    with a JSON list of ``{"step", "action_valid", "memory_valid"}`` objects.
    """

    def __init__(self, client: ChatClient):
        self.client = client

    def review(self, trajectory: Trajectory) -> list[CriticVerdict]:
        steps = [{"step": s.index, "screen": s.observation_text, "action": s.action, "action_desc": s.conclusion,
                  "memory": s.memory, "memory_target": s.m_tilde, "effect": s.effect} for s in trajectory.steps]
        prompt = ("Review each step of this mobile-agent trajectory. For every step decide whether the action "
                  "label is valid and whether the memory label is valid. Reply with a JSON list of objects "
                  '{"step": int, "action_valid": bool, "memory_valid": bool}.\n\n'
                  + json.dumps({"goal": trajectory.goal, "steps": steps}, ensure_ascii=False))
        doc = parse_json_document(self.client.complete([text_message("user", prompt)]))
        if not isinstance(doc, list):
            raise ValueError("critic reply is not a list")
        out = []
        for v in doc:
            action_ok, memory_ok = bool(v.get("action_valid", True)), bool(v.get("memory_valid", True))
            out.append(CriticVerdict(int(v["step"]), action_ok, "" if action_ok else "critic_action",
                                     not action_ok, not memory_ok))
        return out


def critic_filter(trajectory: Trajectory, critic: Optional[Critic] = None) -> Trajectory:
    """Apply critic verdicts; a failing critic leaves the trajectory unfiltered."""
    critic = critic or HeuristicCritic()
    out = copy.deepcopy(trajectory)
    try:
        verdicts = critic.review(out)
    except Exception as exc:  # critic failures must not abort collection
        log.warning("critic failed (%s); keeping trajectory unfiltered", exc)
        return out
    by_step = {s.index: s for s in out.steps}
    for v in verdicts:
        s = by_step.get(v.step)
        if s is None:
            continue
        s.trainable = v.trainable
        s.reason = v.reason
        s.action_masked = v.action_masked
        s.memory_masked = v.memory_masked
    return out
