"""Trajectory rewards, memory judges, step-GRPO advantages and the on-policy rollout buffer."""

from __future__ import annotations

import json
import logging
import math
import threading
from collections import defaultdict, deque
from dataclasses import dataclass
from typing import Any, Iterable, Optional, Protocol, Sequence, Union

from .clients import ChatClient, TransportError, UnparseableResponse, text_message
from .engine import GradeResult
from .protocol import FormatError, parse_step_output
from .templates import load_template

log = logging.getLogger(__name__)

FORMAT_PENALTY = -0.3
MEMORY_WEIGHT = 0.3
VERDICTS = {"Complete Match": 1.0, "Partial Match": 0.5, "No Match": 0.0}


# ---------------------------------------------------------------------------
# judges


class Judge(Protocol):
    def verdict(self, task: str, reference: Sequence[str], predicted: str) -> str: ...


def core_value(item: str) -> str:
    return item.split("=", 1)[1].strip() if "=" in item else item.strip()


class OfflineJudge:
    """Complete if every reference value occurs in the prediction (case-insensitive), Partial if some do."""

    def verdict(self, task: str, reference: Sequence[str], predicted: str) -> str:
        low = predicted.lower()
        hits = sum(1 for item in reference if core_value(item) and core_value(item).lower() in low)
        if reference and hits == len(reference):
            return "Complete Match"
        return "Partial Match" if hits else "No Match"


def parse_verdict(reply: str) -> str:
    """Exact match of the reply's final non-empty line against the three verdict strings."""
    lines = [ln.strip().strip("\"'`").strip() for ln in reply.strip().splitlines() if ln.strip()]
    if lines and lines[-1] in VERDICTS:
        return lines[-1]
    raise UnparseableResponse(f"judge reply is not a verdict: {reply[:80]!r}")


def judge_prompt(task: str, reference: Sequence[str], predicted: str) -> str:
    return load_template("memory_acc_prompt").format(task, "\n".join(reference), predicted or "(nothing)")


class ServiceJudge:
    """Judge served over a chat endpoint with the fixed memory-accuracy prompt.

    With ``fallback`` set, transport or parse failures fall back to that judge.
    """

    def __init__(self, client: ChatClient, fallback: Optional[Judge] = None):
        self.client = client
        self.fallback = fallback

    def verdict(self, task: str, reference: Sequence[str], predicted: str) -> str:
        try:
            reply = self.client.complete([text_message("user", judge_prompt(task, reference, predicted))])
            return parse_verdict(reply)
        except (TransportError, UnparseableResponse) as exc:
            if self.fallback is None:
                raise
            log.warning("judge failed (%s); using fallback judge", exc)
            return self.fallback.verdict(task, reference, predicted)


def gamma(verdict: str) -> float:
    return VERDICTS[verdict]


# ---------------------------------------------------------------------------
# rewards


@dataclass(frozen=True)
class RewardBreakdown:
    r_task: float
    r_fmt: float
    r_mem: float

    @property
    def total(self) -> float:
        return self.r_task + self.r_fmt + self.r_mem

    def to_dict(self) -> dict[str, float]:
        return {"r_task": self.r_task, "r_fmt": self.r_fmt, "r_mem": self.r_mem, "total": self.total}


def task_reward(outcome: Optional[GradeResult]) -> float:
    if outcome is None:
        raise ValueError("trajectory has not terminated")
    return 1.0 if outcome.success else 0.0


def format_reward(raw_outputs: Iterable[str]) -> float:
    """0 if every step parses, otherwise a single -0.3 for the whole trajectory."""
    for raw in raw_outputs:
        try:
            parse_step_output(raw)
        except FormatError:
            return FORMAT_PENALTY
    return 0.0


def memory_reward(predicted: Union[str, Sequence[str]], reference: Sequence[str], judge: Optional[Judge] = None,
                  task: str = "") -> float:
    if not reference:
        return 0.0
    if not isinstance(predicted, str):
        predicted = "\n".join(p for p in predicted if p)
    return MEMORY_WEIGHT * gamma((judge or OfflineJudge()).verdict(task, list(reference), predicted))


def predicted_memories(trajectory: Any) -> list[str]:
    """Memory fields on aligned steps; every non-empty memory when nothing is aligned."""
    aligned = [s.memory for s in trajectory.steps if s.b and s.memory]
    if any(s.b for s in trajectory.steps):
        return aligned
    return [s.memory for s in trajectory.steps if s.memory]


def total_reward(trajectory: Any, reference: Sequence[str], judge: Optional[Judge] = None) -> RewardBreakdown:
    return RewardBreakdown(
        task_reward(trajectory.outcome),
        format_reward(s.output_text for s in trajectory.steps),
        memory_reward(predicted_memories(trajectory), reference, judge, trajectory.goal),
    )


# ---------------------------------------------------------------------------
# step-GRPO


@dataclass(frozen=True)
class RolloutSample:
    task_id: str
    traj_id: str
    step_id: int
    score: float
    is_final_step: bool
    response_ref: str = ""

    @property
    def key(self) -> tuple[str, str, int]:
        return self.task_id, self.traj_id, self.step_id

    def __post_init__(self):
        if self.step_id < 1:
            raise ValueError("step_id must be at least 1")


@dataclass(frozen=True)
class AdvantageConfig:
    mode: str = "last_step"
    beta: float = 1.0
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.mode not in ("last_step", "each_step"):
            raise ValueError(f"unknown advantage mode {self.mode!r}")
        if not 0 < self.beta <= 1:
            raise ValueError("beta must lie in (0, 1]")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


@dataclass(frozen=True)
class TrainerDefaults:
    """Optimization defaults handed to an external trainer."""

    learning_rate: float = 2e-7
    train_batch: int = 32
    mini_batch: int = 32
    micro_batch_per_device: int = 1
    clip_low: float = 0.05
    clip_high: float = 0.05
    kl_coefficient: float = 0.05
    kl_type: str = "low-variance"
    entropy_coefficient: float = 5e-4
    critic_warmup: int = 0


def samples_for_trajectory(task_id: str, traj_id: str, n_steps: int, total: float,
                           mode: str = "last_step") -> list[RolloutSample]:
    """Per-step scores: the total on the final step only (last_step) or on every step (each_step)."""
    return [RolloutSample(task_id, traj_id, t, total if (mode == "each_step" or t == n_steps) else 0.0,
                          t == n_steps) for t in range(1, n_steps + 1)]


def _normalize(values: list[float], eps: float) -> list[float]:
    mu = sum(values) / len(values)
    sigma = math.sqrt(sum((v - mu) ** 2 for v in values) / len(values))
    return [(v - mu) / (sigma + eps) for v in values]


def step_grpo_advantages(samples: Sequence[RolloutSample],
                         cfg: AdvantageConfig = AdvantageConfig()) -> dict[tuple[str, str, int], float]:
    trajs: dict[tuple[str, str], list[RolloutSample]] = defaultdict(list)
    for s in samples:
        trajs[(s.task_id, s.traj_id)].append(s)
    for key, group in trajs.items():
        finals = [s for s in group if s.is_final_step]
        if len(finals) != 1 or finals[0].step_id != max(s.step_id for s in group):
            raise ValueError(f"trajectory {key} needs exactly one final step with the largest step id")
    out: dict[tuple[str, str, int], float] = {}
    if cfg.mode == "last_step":
        by_task: dict[str, list[tuple[str, str]]] = defaultdict(list)
        for key in trajs:
            by_task[key[0]].append(key)
        for task, keys in by_task.items():
            if len(keys) < 2:
                log.warning("task %s has a single trajectory; advantage set to 0", task)
                normed = [0.0]
            else:
                finals = [next(s for s in trajs[k] if s.is_final_step) for k in keys]
                normed = _normalize([f.score for f in finals], cfg.epsilon)
            for key, s_hat in zip(keys, normed):
                t_max = max(s.step_id for s in trajs[key])
                for s in trajs[key]:
                    out[s.key] = s_hat * cfg.beta ** (t_max - s.step_id)
        return out
    groups: dict[tuple[str, int], list[RolloutSample]] = defaultdict(list)
    for s in samples:
        groups[(s.task_id, s.step_id)].append(s)
    for (task, step), group in groups.items():
        if len(group) < 2:
            log.warning("group (%s, %d) has a single sample; advantage set to 0", task, step)
            out[group[0].key] = 0.0
            continue
        for s, a in zip(group, _normalize([g.score for g in group], cfg.epsilon)):
            out[s.key] = a
    return out


def scores_records(samples: Sequence[RolloutSample], adv: dict[tuple[str, str, int], float]) -> list[dict[str, Any]]:
    return [{"task_id": s.task_id, "traj_id": s.traj_id, "step_id": s.step_id, "score": s.score,
             "advantage": adv[s.key]} for s in samples]


def dumps_scores(samples: Sequence[RolloutSample], adv: dict[tuple[str, str, int], float]) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in scores_records(samples, adv))


# ---------------------------------------------------------------------------
# rollout buffer


class BufferFull(RuntimeError):
    pass


class RolloutBuffer:
    """Bounded FIFO of (policy_version, batch) pairs.

    ``drain(v)`` returns only batches pushed under version ``v`` and discards
    everything else, so a consumer never trains on off-policy data. Safe for
    many producers and one consumer.
    """

    def __init__(self, capacity: int, *, block: bool = True):
        if capacity < 1:
            raise ValueError("capacity must be at least 1")
        self.capacity = capacity
        self.block = block
        self._items: deque[tuple[int, Any]] = deque()
        self._cond = threading.Condition()
        self._closed = False
        self.discarded = 0

    def __len__(self) -> int:
        with self._cond:
            return len(self._items)

    def push(self, batch: Any, policy_version: int, timeout: Optional[float] = None) -> bool:
        """Add a batch; blocks while full, or raises BufferFull when not blocking.

        Returns False if the wait timed out or the buffer was closed.
        """
        with self._cond:
            if len(self._items) >= self.capacity:
                if not self.block:
                    raise BufferFull(f"buffer holds {self.capacity} batches")
                if not self._cond.wait_for(lambda: len(self._items) < self.capacity or self._closed, timeout):
                    return False
            if self._closed:
                return False
            self._items.append((policy_version, batch))
            self._cond.notify_all()
            return True

    def drain(self, policy_version: int) -> list[Any]:
        with self._cond:
            items = list(self._items)
            self._items.clear()
            self._cond.notify_all()
        fresh = [b for v, b in items if v == policy_version]
        stale = len(items) - len(fresh)
        if stale:
            with self._cond:
                self.discarded += stale
        return fresh

    def wait_nonempty(self, timeout: Optional[float] = None) -> bool:
        with self._cond:
            return self._cond.wait_for(lambda: self._items or self._closed, timeout)

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify_all()
