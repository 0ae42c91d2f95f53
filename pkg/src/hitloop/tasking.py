"""Prompt construction for the five labelling tasks.

Guideline wording lives in editable template files (one per task and
prompting mode) and is treated as configuration; the code only assembles
templates, few-shot examples, and the unit rendering deterministically.
Template placeholders: {query} {question} {options} {examples}. Lines
prefixed with '~' are detail lines that the Shortened variant drops.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence, Union

from .corpus import AnnotationUnit, TaskKind, check_label

DEFAULT_TEMPLATE_DIR = Path(__file__).parent / "templates"
DEFAULT_TOKEN_LIMITS = (250, 1000, 2000)


class PromptError(ValueError):
    pass


class PromptMode(str, Enum):
    ZSS = "zss"  # task definition only
    FSS = "fss"  # with worked labelled examples


class Transformation(str, Enum):
    BASELINE = "baseline"
    REPHRASED = "rephrased"
    EXAMPLE_ORDER_SHUFFLED = "example_order_shuffled"
    SHORTENED = "shortened"


@dataclass(frozen=True)
class PromptSetting:
    mode: PromptMode = PromptMode.ZSS
    few_shot_examples: tuple[tuple[str, int], ...] = ()  # (unit rendering, gold label)

    def __post_init__(self):
        for _, label in self.few_shot_examples:
            check_label(label, "few-shot example label")
        if self.mode is PromptMode.ZSS and self.few_shot_examples:
            raise PromptError("zero-shot setting carries no examples")


@dataclass(frozen=True)
class PromptVariant:
    variant_id: str
    transformation: Transformation = Transformation.BASELINE
    max_tokens: int = 1000
    shuffle_seed: int = 0


BASELINE_VARIANT = PromptVariant(variant_id="baseline-1000")


@dataclass(frozen=True)
class PromptText:
    text: str
    task: TaskKind
    unit_ids: tuple[str, ...]
    variant_id: str = "baseline-1000"


def enumerate_variants(
    setting: PromptSetting,
    token_limits: Sequence[int] = DEFAULT_TOKEN_LIMITS,
    shuffle_seed: int = 1,
) -> list[PromptVariant]:
    """All transformation x max-token combinations (4 x 3 = 12 by default)."""
    variants = []
    for transformation in Transformation:
        for limit in token_limits:
            variants.append(
                PromptVariant(
                    variant_id=f"{transformation.value}-{limit}",
                    transformation=transformation,
                    max_tokens=limit,
                    shuffle_seed=shuffle_seed,
                )
            )
    return variants


def render_unit(unit: AnnotationUnit, include_query: bool = True) -> str:
    lines = []
    if include_query:
        lines.append(f"Query: {unit.query}")
    lines.append(f"Clarification question: {unit.pane.question}")
    opts = "  ".join(f"{i + 1}) {opt}" for i, opt in enumerate(unit.pane.options))
    lines.append(f"Options: {opts}")
    return "\n".join(lines)


def _render_options(unit: AnnotationUnit) -> str:
    return "  ".join(f"{i + 1}) {opt}" for i, opt in enumerate(unit.pane.options))


def _render_examples(examples: Sequence[tuple[str, int]]) -> str:
    blocks = []
    for i, (rendering, label) in enumerate(examples, start=1):
        blocks.append(f"Example {i}:\n{rendering}\nLabel: {label}")
    return "\n\n".join(blocks)


def load_template(task: TaskKind, mode: PromptMode, template_dir: Optional[Path] = None) -> str:
    directory = Path(template_dir) if template_dir else DEFAULT_TEMPLATE_DIR
    path = directory / f"{task.value}_{mode.value}.txt"
    if not path.exists():
        raise PromptError(f"no template for task {task.value} in mode {mode.value} at {path}")
    return path.read_text(encoding="utf-8")


def _apply_transformation(template: str, transformation: Transformation) -> str:
    if transformation is Transformation.SHORTENED:
        lines = [ln for ln in template.splitlines() if not ln.startswith("~")]
        return "\n".join(lines)
    # detail lines stay, marker stripped
    lines = [ln[1:] if ln.startswith("~") else ln for ln in template.splitlines()]
    text = "\n".join(lines)
    if transformation is Transformation.REPHRASED:
        # restructure: move the paragraph carrying the unit rendering to the
        # front, keeping all paragraphs otherwise in order
        paragraphs = text.split("\n\n")
        for i, para in enumerate(paragraphs):
            if "{query}" in para:
                paragraphs = [paragraphs[i]] + paragraphs[:i] + paragraphs[i + 1 :]
                break
        text = "\n\n".join(paragraphs)
    return text


Target = Union[AnnotationUnit, Sequence[AnnotationUnit]]


def build_prompt(
    task: TaskKind,
    target: Target,
    setting: PromptSetting = PromptSetting(),
    variant: PromptVariant = BASELINE_VARIANT,
    template_dir: Optional[Path] = None,
) -> PromptText:
    """Render one prompt for a unit (pair-wise tasks) or a whole query group
    (list-wise preference). Deterministic for identical inputs, including
    the shuffle seed on the example-order variant."""
    if task.is_listwise:
        if isinstance(target, AnnotationUnit):
            raise PromptError("preference task needs the full query group, not a single unit")
        group = list(target)
        if not group:
            raise PromptError("empty query group")
        if len({u.query_id for u in group}) != 1:
            raise PromptError("query group spans multiple queries")
        unit_ids = tuple(u.unit_id for u in group)
        query = group[0].query
        question = ""
        panes = []
        for i, unit in enumerate(group, start=1):
            panes.append(
                f"Pane {i}:\n  Clarification question: {unit.pane.question}\n  Options: {_render_options(unit)}"
            )
        options = "\n".join(panes)
    else:
        if not isinstance(target, AnnotationUnit):
            raise PromptError(f"{task.value} task rates a single unit, not a group")
        unit_ids = (target.unit_id,)
        query = target.query
        question = target.pane.question
        options = _render_options(target)

    examples = list(setting.few_shot_examples)
    if setting.mode is PromptMode.FSS:
        if not examples:
            raise PromptError("few-shot setting with an empty example list")
        if task is TaskKind.QUALITY:
            labels = sorted(label for _, label in examples)
            if labels != [1, 2, 3, 4, 5]:
                raise PromptError(
                    f"quality few-shot set must carry one example per label 1-5, got {labels}"
                )
        if variant.transformation is Transformation.EXAMPLE_ORDER_SHUFFLED:
            rng = random.Random(variant.shuffle_seed)
            rng.shuffle(examples)

    template = load_template(task, setting.mode, template_dir)
    template = _apply_transformation(template, variant.transformation)
    text = template.format_map(
        {
            "query": query,
            "question": question,
            "options": options,
            "examples": _render_examples(examples) if examples else "",
        }
    )
    return PromptText(text=text, task=task, unit_ids=unit_ids, variant_id=variant.variant_id)
