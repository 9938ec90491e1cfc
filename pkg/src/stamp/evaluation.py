"""Benchmark runner and metrics: T-Acc, M-Acc, pass@k and HRP-style memory credit."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Optional, Sequence, Union

from .engine import GradeResult
from .harness.episode import run_agent_episode
from .rl import Judge, OfflineJudge, VERDICTS, gamma
from .synthesis.bundle import EnvironmentBundle
from .synthesis.patterns import pattern_for

log = logging.getLogger(__name__)

PASS_KS = (1, 3)


def reference_memories(bundle: EnvironmentBundle) -> list[str]:
    pattern = pattern_for(bundle.task_seed_id)
    return [pattern.memory_unit(m["fact_key"], bundle.facts[m["fact_key"]]) for m in bundle.memory_items]


def grade_from_verdict(verdict: str) -> float:
    return VERDICTS[verdict]


def score_memory_accuracy(grades: Sequence[float]) -> float:
    if not grades:
        raise ValueError("no grades to average")
    bad = [g for g in grades if g not in (0, 0.5, 1)]
    if bad:
        raise ValueError(f"grades must be 1, 0.5 or 0, got {bad}")
    return sum(grades) / len(grades)


def grade_memory_items(predicted: str, references: Sequence[str], judge: Optional[Judge] = None,
                       task: str = "") -> list[float]:
    """One grade per reference item against the predicted memory text."""
    judge = judge or OfflineJudge()
    return [gamma(judge.verdict(task, [item], predicted)) for item in references]


def hrp_memory_credit(raw_outputs: Sequence[str], references: Sequence[str], judge: Optional[Judge] = None,
                      task: str = "") -> list[float]:
    """Credit each reference item found anywhere in the retained textual outputs."""
    return grade_memory_items("\n".join(raw_outputs), references, judge, task)


def _successes(runs: Sequence[Any]) -> list[bool]:
    out = []
    for r in runs:
        if isinstance(r, EvalRun):
            out.append(r.success)
        else:
            out.append(bool(r))
    return out


def score_pass_at_k(runs_per_task: Mapping[str, Sequence[Any]], k: int) -> float:
    """Fraction of tasks with at least one success among attempts 1..k (runs ordered by attempt)."""
    if k < 1:
        raise ValueError("k must be at least 1")
    if not runs_per_task:
        raise ValueError("no tasks")
    solved = 0
    for task, runs in runs_per_task.items():
        if isinstance(runs, Sequence) and runs and isinstance(runs[0], EvalRun):
            runs = sorted(runs, key=lambda r: r.attempt_index)
        flags = _successes(runs)
        if len(flags) < k:
            raise ValueError(f"task {task} has {len(flags)} attempts, fewer than k={k}")
        solved += any(flags[:k])
    return solved / len(runs_per_task)


@dataclass
class EvalRun:
    task_id: str
    attempt_index: int
    outcome: GradeResult
    predicted_memories: list[str]
    reference_memories: list[str]
    grades: list[float]
    errored: bool = False
    steps: int = 0
    error: str = ""

    @property
    def success(self) -> bool:
        return self.outcome.success

    def to_dict(self) -> dict[str, Any]:
        return {"task_id": self.task_id, "attempt_index": self.attempt_index, "outcome": self.outcome.to_dict(),
                "predicted_memories": self.predicted_memories, "reference_memories": self.reference_memories,
                "grades": self.grades, "errored": self.errored, "steps": self.steps, "error": self.error}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "EvalRun":
        return cls(d["task_id"], d["attempt_index"], GradeResult.from_dict(d["outcome"]),
                   list(d["predicted_memories"]), list(d["reference_memories"]), list(d["grades"]),
                   bool(d.get("errored", False)), int(d.get("steps", 0)), str(d.get("error", "")))


def _metrics(runs: Sequence[EvalRun]) -> dict[str, Optional[float]]:
    by_task: dict[str, list[EvalRun]] = {}
    for r in runs:
        by_task.setdefault(r.task_id, []).append(r)
    grades = [g for r in runs for g in r.grades]
    traj_level = [sum(r.grades) / len(r.grades) for r in runs if r.grades]
    min_attempts = min(len(v) for v in by_task.values())
    out: dict[str, Optional[float]] = {
        "t_acc": sum(r.success for r in runs) / len(runs),
        "m_acc": score_memory_accuracy(grades) if grades else 0.0,
        "m_acc_trajectory": sum(traj_level) / len(traj_level) if traj_level else 0.0,
    }
    for k in PASS_KS:
        out[f"pass@{k}"] = score_pass_at_k(by_task, k) if k <= min_attempts else None
    return out


@dataclass
class BenchmarkReport:
    runs: list[EvalRun]
    meta: dict[str, Any] = field(default_factory=dict)

    @property
    def aggregate(self) -> dict[str, Optional[float]]:
        return _metrics(self.runs)

    @property
    def per_task(self) -> dict[str, dict[str, Optional[float]]]:
        tasks: dict[str, list[EvalRun]] = {}
        for r in self.runs:
            tasks.setdefault(r.task_id, []).append(r)
        return {t: _metrics(rs) for t, rs in sorted(tasks.items())}

    def to_dict(self) -> dict[str, Any]:
        return {"meta": self.meta, "aggregate": self.aggregate, "per_task": self.per_task,
                "runs": [r.to_dict() for r in self.runs]}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "BenchmarkReport":
        return cls([EvalRun.from_dict(r) for r in d["runs"]], dict(d.get("meta", {})))


def default_budget(bundle: EnvironmentBundle) -> int:
    return 3 * (bundle.required_steps + len(bundle.memory_items) + 3)


def run_benchmark(bundles: Sequence[EnvironmentBundle], agent_factory: Callable[[], Any], k: int = 1,
                  variant: str = "natural", *, judge: Optional[Judge] = None, scoring: str = "memory",
                  max_steps: Union[int, Callable[[EnvironmentBundle], int], None] = None,
                  workers: int = 1) -> BenchmarkReport:
    """Run ``k`` fresh attempts per bundle and grade outcomes and memory traces.

    ``scoring="memory"`` grades the agent's Memory fields; ``"hrp"`` grades the
    whole textual transcript for agents without a memory channel.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if scoring not in ("memory", "hrp"):
        raise ValueError(f"unknown scoring {scoring!r}")
    judge = judge or OfflineJudge()

    def budget(b: EnvironmentBundle) -> int:
        if max_steps is None:
            return default_budget(b)
        return max_steps(b) if callable(max_steps) else max_steps

    def attempts(bundle: EnvironmentBundle) -> list[EvalRun]:
        refs = reference_memories(bundle)
        task = bundle.task_spec.get("task", {}).get("natural_language", "")
        out = []
        for attempt in range(1, k + 1):
            try:
                traj = run_agent_episode(bundle, agent_factory(), budget(bundle), variant=variant,
                                         traj_id=str(attempt))
            except Exception as exc:  # isolate per-attempt failures; they count as failures
                log.warning("attempt %d on %s errored: %s", attempt, bundle.bundle_id, exc)
                out.append(EvalRun(bundle.bundle_id, attempt, GradeResult(False, "", bundle.gold), [], refs,
                                   [0.0] * len(refs), errored=True, error=type(exc).__name__))
                continue
            if scoring == "hrp":
                predicted = [s.output_text for s in traj.steps]
            else:
                predicted = [s.memory for s in traj.steps if s.memory]
            grades = grade_memory_items("\n".join(predicted), refs, judge, task)
            out.append(EvalRun(bundle.bundle_id, attempt, traj.outcome, predicted, refs, grades,
                               steps=len(traj.steps)))
        return out

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = list(pool.map(attempts, bundles))
    runs = [r for rs in results for r in rs]
    seeds = [b.provenance.get("master_seed") for b in bundles]
    meta = {"variant": variant, "k": k, "scoring": scoring, "tasks": len(bundles),
            "seed_range": [min(seeds), max(seeds)] if seeds else None}
    return BenchmarkReport(runs, meta)
