"""Corpus loading, validation, sampling, and format conversion.

The canonical on-disk format is UTF-8 JSON lines, one query group per line:

    {"query_id": "...", "query": "...", "panes": [
        {"pane_id": "...", "question": "...", "options": ["...", ...],
         "gold": {"quality": 4, ...}}]}

Gold keys are the task names (preference, quality, coverage, diversity,
option_order) mapping to integer labels 1-5.
"""

from __future__ import annotations

import json
import logging
import math
import random
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional

logger = logging.getLogger(__name__)

MIN_OPTIONS = 2
MAX_OPTIONS = 5
MIN_PANES_PER_QUERY = 3


class CorpusError(ValueError):
    """Raised on parse failures or invariant violations while loading."""


class TaskKind(str, Enum):
    PREFERENCE = "preference"
    QUALITY = "quality"
    COVERAGE = "coverage"
    DIVERSITY = "diversity"
    OPTION_ORDER = "option_order"

    @property
    def is_listwise(self) -> bool:
        """Preference is rated over all panes of a query at once; the rest
        are rated one query-clarification pair at a time."""
        return self is TaskKind.PREFERENCE


def check_label(value: int, context: str = "label") -> int:
    value = int(value)
    if not (1 <= value <= 5):
        raise CorpusError(f"{context} {value} out of range [1,5]")
    return value


@dataclass(frozen=True)
class ClarificationPane:
    pane_id: str
    question: str
    options: tuple[str, ...]

    def __post_init__(self):
        if not (MIN_OPTIONS <= len(self.options) <= MAX_OPTIONS):
            raise CorpusError(
                f"pane {self.pane_id}: options length {len(self.options)} "
                f"outside [{MIN_OPTIONS},{MAX_OPTIONS}]"
            )
        for opt in self.options:
            if not opt.strip():
                raise CorpusError(f"pane {self.pane_id}: empty option text")


@dataclass(frozen=True)
class AnnotationUnit:
    """One query-clarification pair, optionally with gold labels per task."""

    unit_id: str
    query_id: str
    query: str
    pane: ClarificationPane
    gold: dict[TaskKind, int] = field(default_factory=dict)

    def __post_init__(self):
        for task, label in self.gold.items():
            check_label(label, f"unit {self.unit_id} gold[{task.value}]")


@dataclass
class Corpus:
    """Immutable after load; safe to share across concurrent readers."""

    units: list[AnnotationUnit]

    def __len__(self) -> int:
        return len(self.units)

    def unit_ids(self) -> list[str]:
        return [u.unit_id for u in self.units]

    def query_groups(self) -> dict[str, list[AnnotationUnit]]:
        """Units grouped by query_id, preserving corpus order."""
        groups: dict[str, list[AnnotationUnit]] = {}
        for unit in self.units:
            groups.setdefault(unit.query_id, []).append(unit)
        return groups

    def gold_label(self, unit_id: str, task: TaskKind) -> Optional[int]:
        unit = self._index().get(unit_id)
        if unit is None:
            return None
        return unit.gold.get(task)

    def _index(self) -> dict[str, AnnotationUnit]:
        if not hasattr(self, "_by_id"):
            object.__setattr__(self, "_by_id", {u.unit_id: u for u in self.units})
        return self._by_id  # type: ignore[attr-defined]


_GOLD_KEYS = {t.value: t for t in TaskKind}


def _parse_pane(raw: dict, query_id: str, line_no: int) -> tuple[ClarificationPane, dict[TaskKind, int]]:
    try:
        pane = ClarificationPane(
            pane_id=str(raw["pane_id"]),
            question=str(raw["question"]),
            options=tuple(str(o) for o in raw["options"]),
        )
    except KeyError as exc:
        raise CorpusError(f"line {line_no}: pane missing field {exc}") from exc
    gold: dict[TaskKind, int] = {}
    for key, value in (raw.get("gold") or {}).items():
        if key not in _GOLD_KEYS:
            raise CorpusError(f"line {line_no}: unknown gold key {key!r}")
        gold[_GOLD_KEYS[key]] = check_label(value, f"line {line_no}: gold[{key}]")
    return pane, gold


def load_corpus(path: str | Path, strict_group_size: bool = False) -> Corpus:
    """Parse the JSON-lines corpus format, checking all invariants.

    Query groups with fewer than 3 panes are warned about (rejected only
    when strict_group_size is set) since list-wise rating wants >= 3.
    """
    path = Path(path)
    units: list[AnnotationUnit] = []
    seen_ids: set[str] = set()
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"line {line_no}: invalid JSON: {exc}") from exc
            try:
                query_id = str(record["query_id"])
                query = str(record["query"])
                panes = record["panes"]
            except KeyError as exc:
                raise CorpusError(f"line {line_no}: record missing field {exc}") from exc
            if not isinstance(panes, list) or not panes:
                raise CorpusError(f"line {line_no}: query {query_id} has no panes")
            if len(panes) < MIN_PANES_PER_QUERY:
                msg = (
                    f"line {line_no}: query {query_id} has {len(panes)} panes "
                    f"(< {MIN_PANES_PER_QUERY}); list-wise rating wants more"
                )
                if strict_group_size:
                    raise CorpusError(msg)
                logger.warning(msg)
            for raw_pane in panes:
                pane, gold = _parse_pane(raw_pane, query_id, line_no)
                unit_id = f"{query_id}/{pane.pane_id}"
                if unit_id in seen_ids:
                    raise CorpusError(f"line {line_no}: duplicate unit id {unit_id}")
                seen_ids.add(unit_id)
                units.append(
                    AnnotationUnit(unit_id=unit_id, query_id=query_id, query=query, pane=pane, gold=gold)
                )
    return Corpus(units=units)


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    """Write the canonical JSON-lines form; load_corpus(save_corpus(c)) == c."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for query_id, group in corpus.query_groups().items():
            record = {
                "query_id": query_id,
                "query": group[0].query,
                "panes": [
                    {
                        "pane_id": u.pane.pane_id,
                        "question": u.pane.question,
                        "options": list(u.pane.options),
                        **(
                            {"gold": {t.value: v for t, v in sorted(u.gold.items(), key=lambda kv: kv[0].value)}}
                            if u.gold
                            else {}
                        ),
                    }
                    for u in group
                ],
            }
            fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")


def sample_subset(corpus: Corpus, fraction: float, seed: int) -> tuple[Corpus, Corpus]:
    """Uniform sample of units without replacement, deterministic per seed.

    Subset size is round-half-up of fraction * |units| with a floor of 1.
    Both halves keep the original corpus order.
    """
    if not (0.0 < fraction <= 1.0):
        raise ValueError(f"fraction {fraction} outside (0, 1]")
    if len(corpus) == 0:
        raise ValueError("corpus is empty")
    n = len(corpus)
    k = max(1, int(math.floor(fraction * n + 0.5)))
    k = min(k, n)
    rng = random.Random(seed)
    chosen = set(rng.sample(range(n), k))
    subset = [u for i, u in enumerate(corpus.units) if i in chosen]
    remainder = [u for i, u in enumerate(corpus.units) if i not in chosen]
    return Corpus(units=subset), Corpus(units=remainder)


# Converter for tab-separated source dumps. Expected header:
# query_id  query  pane_id  question  options  [preference quality coverage diversity option_order]
# with options pipe-separated; gold columns optional and may be blank.
def convert_tsv(in_path: str | Path, out_path: str | Path) -> Corpus:
    in_path = Path(in_path)
    rows: list[dict] = []
    with in_path.open("r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        required = ["query_id", "query", "pane_id", "question", "options"]
        for col in required:
            if col not in header:
                raise CorpusError(f"TSV missing required column {col!r}")
        for line_no, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            values = line.rstrip("\n").split("\t")
            if len(values) < len(required):
                raise CorpusError(f"line {line_no}: expected >= {len(required)} columns")
            rows.append(dict(zip(header, values)))

    units: list[AnnotationUnit] = []
    for row in rows:
        gold = {}
        for key, task in _GOLD_KEYS.items():
            raw = row.get(key, "").strip()
            if raw:
                gold[task] = check_label(raw, f"gold[{key}] for pane {row['pane_id']}")
        pane = ClarificationPane(
            pane_id=row["pane_id"],
            question=row["question"],
            options=tuple(o for o in row["options"].split("|")),
        )
        units.append(
            AnnotationUnit(
                unit_id=f"{row['query_id']}/{row['pane_id']}",
                query_id=row["query_id"],
                query=row["query"],
                pane=pane,
                gold=gold,
            )
        )
    seen: set[str] = set()
    for u in units:
        if u.unit_id in seen:
            raise CorpusError(f"duplicate unit id {u.unit_id}")
        seen.add(u.unit_id)
    corpus = Corpus(units=units)
    save_corpus(corpus, out_path)
    return corpus
