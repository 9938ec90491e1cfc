"""Step-balanced SFT record emission."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator, Optional, Union

from ..protocol import FormatError, StepOutput, ToolAction, assemble_prompt, render_step_output
from .episode import synthesize_thought
from .records import SftRecord, StepRecord, Trajectory

Ratio = Optional[Fraction]


def parse_ratio(spec: Union[str, Fraction, None]) -> Ratio:
    """``"3:1"`` -> Fraction(3); ``"vanilla"`` or None -> no upsampling."""
    if spec is None or isinstance(spec, Fraction):
        return spec
    text = str(spec).strip().lower()
    if text in ("vanilla", "none", ""):
        return None
    mem, sep, ordinary = text.partition(":")
    if not sep:
        raise ValueError(f"ratio must look like 'a:b', got {spec!r}")
    value = Fraction(int(mem), int(ordinary))
    if value <= 0:
        raise ValueError("ratio must be positive")
    return value


def target_output(step: StepRecord) -> StepOutput:
    tool = ToolAction.from_dict({"name": "mobile_use", "arguments": step.action})
    memory = step.m_tilde if step.b else ""
    desc = step.conclusion or "Continue"
    return StepOutput(synthesize_thought(step.page_title, desc, memory), desc, memory, tool)


@dataclass
class _View:
    """History view whose assistant turns are the supervision targets."""

    index: int
    action_desc: str
    memory: str
    output_text: str
    observation_text: str


def _is_memory(step: StepRecord) -> bool:
    return step.b and not step.memory_masked


def emit_sft(trajectories: Iterable[Trajectory], ratio: Union[str, Fraction, None] = None, *,
             w_a: float = 1.0, w_m: float = 1.0, n: float = 1) -> Iterator[SftRecord]:
    """Emit one record per trainable step of successful trajectories, upsampling memory records.

    Memory records are duplicated round-robin until memory:ordinary reaches
    ``ratio``; ``w_bal`` is ``n`` on every b=True step.
    """
    if n <= 0 or w_a < 0 or w_m < 0:
        raise ValueError("weights must be non-negative and n positive")
    r = parse_ratio(ratio)
    base: list[tuple[SftRecord, bool]] = []
    for traj in trajectories:
        if not traj.success:
            continue
        views = []
        for s in traj.steps:
            try:
                out = target_output(s)
                text, memory, desc = render_step_output(out), out.memory, out.action_desc
            except FormatError:
                text, memory, desc = s.output_text, s.memory, s.conclusion
            views.append(_View(s.index, desc, memory, text, s.observation_text))
        for s, view in zip(traj.steps, views):
            if not s.trainable:
                continue
            prompt = assemble_prompt(traj.goal, views, s.index, s.observation_text)
            rec = SftRecord(
                prompt=prompt,
                target=view.output_text,
                weights={"w_bal": n if s.b else 1, "w_a": w_a, "w_m": w_m},
                masks={"action_masked": s.action_masked, "memory_masked": s.memory_masked},
                ids={"task_id": traj.task_id, "traj_id": traj.traj_id, "step_id": s.index, "copy": 0,
                     "memory": _is_memory(s)},
            )
            base.append((rec, _is_memory(s)))
    copies = duplication_plan(sum(1 for _, m in base if m), sum(1 for _, m in base if not m), r)
    j = 0
    for rec, is_mem in base:
        if not is_mem:
            yield rec
            continue
        for c in range(copies[j]):
            yield rec if c == 0 else SftRecord(rec.prompt, rec.target, dict(rec.weights), dict(rec.masks),
                                               {**rec.ids, "copy": c})
        j += 1


def duplication_plan(memory: int, ordinary: int, ratio: Ratio) -> list[int]:
    """Copies per memory record so that total memory records == round(ratio * ordinary)."""
    if ratio is None:
        return [1] * memory
    if memory == 0:
        raise ValueError("target ratio unreachable: corpus has no memory steps")
    target = int(ratio * ordinary + Fraction(1, 2))
    if target <= memory:
        return [1] * memory
    each, extra = divmod(target, memory)
    return [each + (1 if i < extra else 0) for i in range(memory)]


def balance_counts(records: Iterable[SftRecord]) -> tuple[int, int]:
    """(memory, ordinary) record counts of an emitted stream."""
    mem = ordinary = 0
    for rec in records:
        if rec.ids.get("memory"):
            mem += 1
        else:
            ordinary += 1
    return mem, ordinary
