"""Shared fixtures for the test suite."""

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hitloop.corpus import AnnotationUnit, ClarificationPane, Corpus, TaskKind


@pytest.fixture
def small_corpus():
    """Three queries, three panes each, gold quality labels on everything."""
    units = []
    gold_cycle = [1, 2, 3, 4, 5, 3, 4, 2, 5]
    i = 0
    for q in range(3):
        for p in range(3):
            pane = ClarificationPane(
                pane_id=f"p{p}",
                question=f"What about topic {q}?",
                options=("reviews", "pricing", "news")[: 2 + p % 2 + 1],
            )
            units.append(
                AnnotationUnit(
                    unit_id=f"q{q}/p{p}",
                    query_id=f"q{q}",
                    query=f"topic {q}",
                    pane=pane,
                    gold={TaskKind.QUALITY: gold_cycle[i], TaskKind.COVERAGE: gold_cycle[-1 - i]},
                )
            )
            i += 1
    return Corpus(units=units)
