"""JSONL persistence for trajectories and SFT records.

Appends take an exclusive lock on a sidecar ``.lock`` file so concurrent
collectors can share one output file.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Any, Iterable, Iterator, Union

from filelock import FileLock

from .records import SftRecord, Trajectory

PathLike = Union[str, os.PathLike]


def append_jsonl(path: PathLike, docs: Iterable[dict[str, Any]]) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [json.dumps(d, ensure_ascii=False, sort_keys=True) + "\n" for d in docs]
    with FileLock(str(path) + ".lock"):
        with path.open("a", encoding="utf-8") as fh:
            fh.writelines(lines)
    return len(lines)


def read_jsonl(path: PathLike) -> Iterator[dict[str, Any]]:
    with Path(path).open(encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if line.strip():
                try:
                    yield json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ValueError(f"{path}:{n}: invalid JSON line") from exc


class TrajectoryStore:
    def __init__(self, path: PathLike):
        self.path = Path(path)

    def append(self, trajectories: Union[Trajectory, Iterable[Trajectory]]) -> int:
        if isinstance(trajectories, Trajectory):
            trajectories = [trajectories]
        return append_jsonl(self.path, (t.to_dict() for t in trajectories))

    def __iter__(self) -> Iterator[Trajectory]:
        if not self.path.exists():
            return iter(())
        return (Trajectory.from_dict(d) for d in read_jsonl(self.path))


def write_sft(path: PathLike, records: Iterable[SftRecord]) -> int:
    return append_jsonl(path, (r.to_dict() for r in records))
