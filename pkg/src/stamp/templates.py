"""Fixed prompt templates shipped as package text assets."""

from __future__ import annotations

from functools import lru_cache
from importlib import resources

TEMPLATE_NAMES = (
    "system_prompt", "user_prompt", "worker_prompt", "planner_prompt", "memory_acc_prompt",
    "scenario_prompt", "task_prompt",
)


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    if name not in TEMPLATE_NAMES:
        raise KeyError(f"unknown template {name!r}")
    return resources.files("stamp.assets").joinpath(f"{name}.txt").read_text(encoding="utf-8")
