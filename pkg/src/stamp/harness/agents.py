"""Policy-level agents that turn a prompt into raw step-output text."""

from __future__ import annotations

import random
from typing import Optional, Protocol

from ..clients import ChatClient
from ..engine import Observation
from ..protocol import PromptBundle, StepOutput, ToolAction, render_step_output
from ..synthesis.bundle import EnvironmentBundle
from .episode import action_line, engine_to_tool, synthesize_thought
from .planning import OracleWorker, PlannerContext, ScriptedPlanner


class Agent(Protocol):
    def begin(self, bundle: EnvironmentBundle, goal: str) -> None: ...

    def act(self, prompt: PromptBundle, observation: Observation) -> str: ...


class OracleAgent:
    """Scripted planner plus oracle grounding, emitting the full output grammar.

    With ``emit_memory=False`` the Memory line is always ``none``; the agent
    still solves the task, which decouples task success from memory scoring.
    """

    def __init__(self, *, emit_memory: bool = True):
        self.emit_memory = emit_memory
        self.planner: Optional[ScriptedPlanner] = None
        self.worker = OracleWorker()
        self.history: list[str] = []
        self.goal = ""

    def begin(self, bundle: EnvironmentBundle, goal: str) -> None:
        self.planner = ScriptedPlanner(bundle, emit_memory=self.emit_memory)
        self.history = []
        self.goal = goal

    def act(self, prompt: PromptBundle, observation: Observation) -> str:
        if self.planner is None:
            raise RuntimeError("begin() must be called before act()")
        guideline = self.planner.bundle.task_spec["task"].get("guideline", "")
        proposal = self.planner.propose(PlannerContext(self.goal, guideline, observation, list(self.history)))
        if proposal.kind == "end":
            tool = ToolAction("terminate", status="success")
            desc = "Finish the task"
        else:
            args = engine_to_tool(self.worker.ground(proposal, observation))
            tool = ToolAction.from_dict({"name": "mobile_use", "arguments": args})
            desc = action_line(proposal)
        self.history.append(desc)
        thought = synthesize_thought(observation.page_title, desc, proposal.memory)
        return render_step_output(StepOutput(thought, desc, proposal.memory, tool))


class NoisyOracleAgent(OracleAgent):
    """Oracle that sometimes clicks empty gutter space or drops its memory line."""

    GUTTER = (5, 500)

    def __init__(self, rng: random.Random, *, p_misclick: float = 0.2, p_forget: float = 0.0):
        super().__init__()
        self.rng = rng
        self.p_misclick = p_misclick
        self.p_forget = p_forget

    def act(self, prompt: PromptBundle, observation: Observation) -> str:
        if self.rng.random() < self.p_misclick:
            tool = ToolAction("click", coordinate=self.GUTTER)
            return render_step_output(StepOutput("Let me tap here.", "Click the left edge", "", tool))
        text = super().act(prompt, observation)
        if self.p_forget and self.rng.random() < self.p_forget:
            lines = [("Memory: none" if line.startswith("Memory:") else line) for line in text.split("\n")]
            text = "\n".join(lines)
        return text


class NoopAgent:
    """Valid output every step, but only ever taps the inert chrome band."""

    def begin(self, bundle: EnvironmentBundle, goal: str) -> None:
        pass

    def act(self, prompt: PromptBundle, observation: Observation) -> str:
        tool = ToolAction("click", coordinate=(500, 60))
        return render_step_output(StepOutput("Nothing to do.", "Tap the top bar", "", tool))


class ServiceAgent:
    """Agent served over a chat endpoint; the reply text is returned untouched."""

    def __init__(self, client: ChatClient):
        self.client = client

    def begin(self, bundle: EnvironmentBundle, goal: str) -> None:
        pass

    def act(self, prompt: PromptBundle, observation: Observation) -> str:
        return self.client.complete(prompt.to_messages())
