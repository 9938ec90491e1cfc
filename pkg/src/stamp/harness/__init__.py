"""Episode collection, memory alignment, critic filtering and SFT emission."""

from .agents import NoisyOracleAgent, NoopAgent, OracleAgent, ServiceAgent
from .alignment import AlignmentError, CriticVerdict, HeuristicCritic, ServiceCritic, align_memory, critic_filter
from .episode import engine_to_tool, goal_for, run_agent_episode, run_episode, synthesize_thought
from .planning import (
    OracleWorker,
    Proposal,
    ScriptedPlanner,
    ServicePlanner,
    ServiceWorker,
    WorkerParseError,
    build_plan,
    parse_worker_output,
    scripted_planner,
)
from .records import SftRecord, StepRecord, Trajectory
from .sft import balance_counts, duplication_plan, emit_sft, parse_ratio
from .store import TrajectoryStore, read_jsonl, write_sft

__all__ = [
    "AlignmentError", "CriticVerdict", "HeuristicCritic", "NoisyOracleAgent", "NoopAgent", "OracleAgent",
    "OracleWorker", "Proposal", "ScriptedPlanner", "ServiceAgent", "ServiceCritic", "ServicePlanner",
    "ServiceWorker", "SftRecord", "StepRecord", "Trajectory", "TrajectoryStore", "WorkerParseError",
    "align_memory", "balance_counts", "build_plan", "critic_filter", "duplication_plan", "emit_sft",
    "engine_to_tool", "goal_for", "parse_ratio", "parse_worker_output", "read_jsonl", "run_agent_episode",
    "run_episode", "scripted_planner", "synthesize_thought", "write_sft",
]
