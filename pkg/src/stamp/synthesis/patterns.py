"""Task pattern library.

A pattern owns everything that depends on the task's answer rule: which
facts are drawn, how the gold answer follows from them, what a distractor
may display without changing that answer, and how a reader recomputes the
answer from what the pages show.
"""

from __future__ import annotations

import datetime as dt
import random
from dataclasses import dataclass, field
from typing import Optional

from .catalog import CODE_LETTERS, FIRST_NAMES, LAST_NAMES, TAGS

_EPOCH = dt.date(2024, 1, 1)


@dataclass
class PatternDraw:
    facts: dict[str, str]
    memory_keys: list[str]
    gold: str
    explain: str
    names: dict[str, str] = field(default_factory=dict)


@dataclass
class Reading:
    """What a reader sees on one memory page."""

    suffix: str
    page_id: str
    value: Optional[str]
    name: Optional[str] = None


@dataclass
class Solution:
    predicted: str
    ambiguity_reasons: list[str]
    calculation: str
    conflicts: list[str] = field(default_factory=list)  # distractor testids implicated


class UnsupportedTaskSeed(ValueError):
    pass


def suffix_of(fact_key: str) -> str:
    return fact_key.split("_", 1)[1] if "_" in fact_key else fact_key


def draw_names(rng: random.Random, n: int) -> list[str]:
    pairs = rng.sample([(f, l) for f in FIRST_NAMES for l in LAST_NAMES], n)
    return [f + l for f, l in pairs]


class TaskPattern:
    id: str = ""
    value_key: str = ""
    value_label: str = ""

    def draw(self, rng: random.Random, suffixes: list[str]) -> PatternDraw:
        raise NotImplementedError

    def solve(self, readings: list[Reading], distractors: list[tuple[str, str, Optional[str], str]]) -> Solution:
        """Recompute the answer from page readings.

        ``distractors`` holds (page_id, testid, value, label) for every
        distractor element in comparison scope.
        """
        raise NotImplementedError

    def distractor_value(self, rng: random.Random, facts: dict[str, str], memory_keys: list[str]) -> Optional[str]:
        raise NotImplementedError

    def safe_value(self, facts: dict[str, str], memory_keys: list[str]) -> Optional[str]:
        """A comparable-looking value that can never compete with the gold."""
        raise NotImplementedError

    def fact_label(self, fact_key: str) -> str:
        return "Name" if fact_key.startswith("name_") else self.value_label

    def memory_unit(self, fact_key: str, value: str) -> str:
        return f"{fact_key}={value}"


class ExtremePattern(TaskPattern):
    """Gold is the name of the candidate whose value is extreme (max or min)."""

    def __init__(self, pattern_id: str, value_key: str, value_label: str, largest: bool):
        self.id = pattern_id
        self.value_key = value_key
        self.value_label = value_label
        self.largest = largest

    # value codecs -------------------------------------------------------
    def encode(self, n: int) -> str:
        if self.value_key == "date":
            return (_EPOCH + dt.timedelta(days=n)).isoformat()
        return f"${n // 100}.{n % 100:02d}"

    def parse(self, text: Optional[str]) -> Optional[int]:
        if not text:
            return None
        text = text.strip()
        try:
            if self.value_key == "date":
                return (dt.date.fromisoformat(text) - _EPOCH).days
            if text.startswith("$"):
                whole, _, cents = text[1:].partition(".")
                return int(whole) * 100 + int(cents or 0)
        except ValueError:
            return None
        return None

    def _domain(self) -> range:
        return range(0, 366) if self.value_key == "date" else range(500, 20000)

    def better(self, a: int, b: int) -> bool:
        return a > b if self.largest else a < b

    def draw(self, rng, suffixes):
        values = rng.sample(self._domain(), len(suffixes))
        names = draw_names(rng, len(suffixes))
        facts: dict[str, str] = {}
        for s, v, name in zip(suffixes, values, names):
            facts[f"name_{s}"] = name
            facts[f"{self.value_key}_{s}"] = self.encode(v)
        best = max(values) if self.largest else min(values)
        winner = names[values.index(best)]
        word = "latest" if self.value_key == "date" and self.largest else (
            "earliest" if self.value_key == "date" else ("highest" if self.largest else "lowest"))
        explain = f"{winner} has the {word} {self.value_label.lower()} ({self.encode(best)})"
        return PatternDraw(facts, [f"{self.value_key}_{s}" for s in suffixes], winner, explain,
                           dict(zip(suffixes, names)))

    def _extreme(self, facts: dict[str, str], memory_keys: list[str]) -> Optional[int]:
        vals = [self.parse(facts.get(k)) for k in memory_keys]
        vals = [v for v in vals if v is not None]
        if not vals:
            return None
        return max(vals) if self.largest else min(vals)

    def distractor_value(self, rng, facts, memory_keys):
        best = self._extreme(facts, memory_keys)
        if best is None:
            return None
        lo, hi = self._domain().start, self._domain().stop
        if self.largest:
            return self.encode(rng.randrange(lo, best)) if best > lo else None
        return self.encode(rng.randrange(best + 1, hi + 5000))

    def safe_value(self, facts, memory_keys):
        best = self._extreme(facts, memory_keys)
        if best is None:
            return None
        if self.largest:
            return self.encode(best - 1) if best - 1 >= 0 else None
        return self.encode(best + 100)

    def solve(self, readings, distractors):
        reasons: list[str] = []
        conflicts: list[str] = []
        parsed = []
        for r in readings:
            v = self.parse(r.value)
            if v is None:
                reasons.append(f"page {r.page_id} shows no readable {self.value_label.lower()}")
                continue
            parsed.append((v, r))
        if not parsed:
            return Solution("", reasons or ["no candidates found"], "no comparable values")
        best_v = max(v for v, _ in parsed) if self.largest else min(v for v, _ in parsed)
        winners = [r for v, r in parsed if v == best_v]
        if len(winners) > 1:
            reasons.append("tie between " + ", ".join(f"page {r.page_id}" for r in winners)
                           + f" at {self.encode(best_v)}")
        for page_id, testid, value, _label in distractors:
            v = self.parse(value)
            if v is not None and (v == best_v or self.better(v, best_v)):
                reasons.append(f"distractor {testid} on {page_id} shows {value}, which competes with "
                               f"the {'maximum' if self.largest else 'minimum'} {self.encode(best_v)}")
                conflicts.append(testid)
        calc = ", ".join(f"{r.name or r.suffix}: {r.value}" for _, r in parsed)
        calc += f" -> {'max' if self.largest else 'min'} is {self.encode(best_v)}"
        return Solution(winners[0].name or "", reasons, calc, conflicts)


class JoinPattern(TaskPattern):
    """Gold joins one value per memory page, in page order."""

    def __init__(self, pattern_id: str, value_key: str, value_label: str, sep: str):
        self.id = pattern_id
        self.value_key = value_key
        self.value_label = value_label
        self.sep = sep

    def _draw_values(self, rng: random.Random, n: int) -> list[str]:
        if self.value_key == "tag":
            return rng.sample(TAGS, n)
        out = []
        for i in range(n):
            if i % 2 == 0:
                out.append(rng.choice(CODE_LETTERS) + str(rng.randrange(10)))
            else:
                out.append(f"{rng.randrange(100):02d}")
        return out

    def draw(self, rng, suffixes):
        values = self._draw_values(rng, len(suffixes))
        facts = {f"{self.value_key}_{s}": v for s, v in zip(suffixes, values)}
        gold = self.sep.join(values)
        explain = f"joining the {self.value_label.lower()} values in page order gives {gold}"
        return PatternDraw(facts, [f"{self.value_key}_{s}" for s in suffixes], gold, explain)

    def distractor_value(self, rng, facts, memory_keys):
        used = set(facts.values())
        if self.value_key == "tag":
            pool = [t for t in TAGS if t not in used]
            return rng.choice(pool) if pool else None
        return rng.choice(CODE_LETTERS) + f"{rng.randrange(100, 1000)}"

    def safe_value(self, facts, memory_keys):
        return None

    def solve(self, readings, distractors):
        reasons: list[str] = []
        conflicts: list[str] = []
        values = []
        for r in readings:
            if not r.value:
                reasons.append(f"page {r.page_id} shows no {self.value_label.lower()}")
            values.append(r.value or "")
        memory_pages = {r.page_id for r in readings}
        for page_id, testid, value, label in distractors:
            if page_id in memory_pages and label.strip().lower() == self.value_label.lower() and value:
                reasons.append(f"distractor {testid} on {page_id} is labelled {label!r} like the fact "
                               f"it competes with (shows {value})")
                conflicts.append(testid)
        predicted = self.sep.join(values)
        calc = f"{self.sep!r}.join({values}) = {predicted}"
        return Solution(predicted, reasons, calc, conflicts)


PATTERNS: dict[str, TaskPattern] = {
    "date_compare_latest": ExtremePattern("date_compare_latest", "date", "Publish date", largest=True),
    "price_compare_lowest": ExtremePattern("price_compare_lowest", "price", "Price", largest=False),
    "code_assemble": JoinPattern("code_assemble", "code", "Code fragment", "-"),
    "tag_combine": JoinPattern("tag_combine", "tag", "Interest tag", ";"),
}


def pattern_for(task_seed_id: str) -> TaskPattern:
    try:
        return PATTERNS[task_seed_id]
    except KeyError:
        raise UnsupportedTaskSeed(f"no generator pattern for task seed {task_seed_id!r}") from None
