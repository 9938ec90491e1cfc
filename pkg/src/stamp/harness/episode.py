"""Episode runners: planner/worker collection and policy-agent rollouts."""

from __future__ import annotations

import logging
from typing import Any, Optional

from ..engine import Action, Engine, EnvState, GradeResult, Observation
from ..protocol import FormatError, StepOutput, ToolAction, assemble_prompt, parse_step_output, render_step_output
from ..synthesis.bundle import EnvironmentBundle
from .planning import PlannerContext, Planner, Proposal, Worker, WorkerParseError
from .records import StepRecord, Trajectory

log = logging.getLogger(__name__)

SCROLL_SWIPE = ((500, 700), (500, 100))


def engine_to_tool(action: Action) -> dict[str, Any]:
    """Tool-call arguments recorded for an executed engine action."""
    k = action.kind
    if k == "click":
        return {"action": "click", "coordinate": [action.x, action.y]}
    if k == "type":
        return {"action": "type", "coordinate": [action.x, action.y], "text": action.text or ""}
    if k == "type_focused":
        return {"action": "type", "text": action.text or ""}
    if k == "scroll":
        return {"action": "swipe", "coordinate": list(SCROLL_SWIPE[0]), "coordinate2": list(SCROLL_SWIPE[1])}
    if k == "back":
        return {"action": "system_button", "button": "Back"}
    if k == "answer":
        return {"action": "answer", "text": action.text or ""}
    if k == "open":
        return {"action": "open", "text": action.target or ""}
    args: dict[str, Any] = {"action": k}
    if action.text is not None:
        args["text"] = action.text
    return args


def action_line(p: Proposal) -> str:
    if p.kind == "input":
        return f"Type '{p.text}' into {p.description}"
    if p.kind == "scroll":
        return "Scroll down"
    if p.kind == "end":
        return "Finish the task"
    return f"Click {p.description}"


def synthesize_thought(page_title: str, action_desc: str, m_tilde: str = "") -> str:
    """Templated one-sentence reasoning conditioned on state, action and memory target."""
    verb = action_desc[:1].lower() + action_desc[1:] if action_desc else "continue"
    thought = f"I am on the {page_title} screen, so next I {verb}."
    if m_tilde:
        thought += f" This screen shows {m_tilde}, which I must remember for later."
    return thought


def visible_facts(engine: Engine, obs: Observation) -> dict[str, str]:
    facts = {}
    for el in obs.visible_elements:
        if el.kind == "fact_display":
            decl = engine.elements.get(el.testid)
            if decl is not None and decl.fact_key:
                facts[decl.fact_key] = el.value or ""
    return facts


def goal_for(bundle: EnvironmentBundle, variant: str = "natural") -> str:
    task = bundle.task_spec.get("task", {})
    if variant == "guided":
        return task.get("guideline", "")
    if variant == "natural":
        return task.get("natural_language", "")
    raise ValueError(f"unknown instruction variant {variant!r}")


def _finish(state: EnvState, engine: Engine) -> GradeResult:
    if state.terminal is not None:
        return state.terminal
    return GradeResult(False, state.last_submitted or "", engine.gold)


def _record(index: int, obs: Observation, engine: Engine, tool: dict[str, Any], effect: str) -> StepRecord:
    return StepRecord(index=index, screenshot_ref=obs.digest(), action=tool, effect=effect, page_id=obs.page_id,
                      page_title=obs.page_title, observation_text=obs.describe(),
                      visible_facts=visible_facts(engine, obs))


def run_episode(bundle: EnvironmentBundle, planner: Planner, worker: Worker, max_steps: int, *,
                goal: Optional[str] = None, traj_id: str = "0", engine: Optional[Engine] = None) -> Trajectory:
    """Drive the engine with planner proposals grounded by the worker until terminal, End or budget."""
    engine = engine or Engine(bundle)
    goal = goal if goal is not None else goal_for(bundle, "natural")
    guideline = bundle.task_spec.get("task", {}).get("guideline", "")
    state, obs = engine.reset(max_steps)
    steps: list[StepRecord] = []
    history: list[str] = []
    worker_errors: list[str] = []
    while state.terminal is None:
        if state.step_count >= state.max_steps:
            engine.step(state, Action.extra("wait"))  # marks budget exhaustion as terminal
            break
        proposal = planner.propose(PlannerContext(goal, guideline, obs, list(history)))
        if proposal.kind == "end":
            break
        try:
            action = worker.ground(proposal, obs)
        except WorkerParseError as first:
            log.warning("worker output unparseable (%s); retrying once", first)
            try:
                action = worker.ground(proposal, obs)
            except WorkerParseError as second:
                worker_errors.append(str(second))
                action = Action.extra("invalid")
        desc = action_line(proposal)
        tool = engine_to_tool(action)
        before = obs
        state, obs, effect = engine.step(state, action)
        rec = _record(len(steps) + 1, before, engine, tool, effect.kind)
        rec.conclusion = desc
        rec.memory = proposal.memory
        rec.thought = proposal.think or synthesize_thought(before.page_title, desc, proposal.memory)
        if action.kind == "invalid":
            rec.format_error = "worker_unparseable"
        rec.output_text = _render(rec)
        steps.append(rec)
        history.append(desc)
    meta = {"bundle_id": bundle.bundle_id, "runner": "planner_worker"}
    if worker_errors:
        meta["worker_errors"] = worker_errors
    return Trajectory(goal, steps, _finish(state, engine), bundle.bundle_id, traj_id, meta)


def _render(rec: StepRecord) -> str:
    try:
        tool = ToolAction.from_dict({"name": "mobile_use", "arguments": rec.action})
    except FormatError:
        return ""
    return render_step_output(StepOutput(rec.thought, rec.conclusion or "Continue", rec.memory, tool))


def run_agent_episode(bundle: EnvironmentBundle, agent: Any, max_steps: int, *, variant: str = "natural",
                      traj_id: str = "0", engine: Optional[Engine] = None) -> Trajectory:
    """Roll out a policy that emits raw step text; raw outputs are kept for format and HRP scoring."""
    engine = engine or Engine(bundle)
    goal = goal_for(bundle, variant)
    state, obs = engine.reset(max_steps)
    if hasattr(agent, "begin"):
        agent.begin(bundle, goal)
    steps: list[StepRecord] = []
    while state.terminal is None:
        if state.step_count >= state.max_steps:
            engine.step(state, Action.extra("wait"))
            break
        t = len(steps) + 1
        prompt = assemble_prompt(goal, steps, t, obs.describe())
        raw = agent.act(prompt, obs)
        error = ""
        parsed: Optional[StepOutput] = None
        try:
            parsed = parse_step_output(raw)
            action = parsed.tool_call.to_engine_action()
        except FormatError as exc:
            error = exc.cause
            action = Action.extra("invalid")
        before = obs
        stop = parsed is not None and parsed.tool_call.action == "terminate"
        state, obs, effect = engine.step(state, action)
        rec = _record(t, before, engine, parsed.tool_call.arguments() if parsed else {"action": "invalid"},
                      effect.kind)
        rec.output_text = raw
        rec.format_error = error
        if parsed is not None:
            rec.thought, rec.conclusion, rec.memory = parsed.think, parsed.action_desc, parsed.memory
        steps.append(rec)
        if stop:
            break
    meta = {"bundle_id": bundle.bundle_id, "runner": "agent", "variant": variant}
    return Trajectory(goal, steps, _finish(state, engine), bundle.bundle_id, traj_id, meta)
