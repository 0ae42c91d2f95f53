"""Synthetic corpus generation for simulation runs and fixtures.

Gold labels are drawn from a configurable prior; the default mirrors a
realistic class imbalance where low labels are rare (1: 2.4%, 2: 8.7%,
remaining mass split evenly over 3-5).
"""

from __future__ import annotations

import random
from typing import Optional, Sequence

from .corpus import AnnotationUnit, ClarificationPane, Corpus, TaskKind

IMBALANCED_PRIOR = (0.024, 0.087, 0.29633333, 0.29633333, 0.29633334)

_QUESTIONS = (
    "What would you like to know about {q}?",
    "Which aspect of {q} are you interested in?",
    "Do you want to narrow down {q}?",
)
_OPTIONS = ("reviews", "pricing", "history", "pictures", "locations", "comparison", "news", "guides")


def make_corpus(
    n_queries: int,
    panes_per_query: int = 4,
    seed: int = 0,
    label_prior: Sequence[float] = IMBALANCED_PRIOR,
    tasks: Optional[Sequence[TaskKind]] = None,
) -> Corpus:
    """Deterministic synthetic corpus with gold labels for the given tasks
    (all five by default) drawn independently from label_prior."""
    if tasks is None:
        tasks = list(TaskKind)
    rng = random.Random(seed)
    labels = [1, 2, 3, 4, 5]
    units = []
    for qi in range(n_queries):
        query_id = f"q{qi:04d}"
        query = f"topic {qi}"
        for pi in range(panes_per_query):
            n_opts = rng.randint(2, 5)
            pane = ClarificationPane(
                pane_id=f"p{pi}",
                question=rng.choice(_QUESTIONS).format(q=query),
                options=tuple(rng.sample(_OPTIONS, n_opts)),
            )
            gold = {task: rng.choices(labels, weights=label_prior, k=1)[0] for task in tasks}
            units.append(
                AnnotationUnit(
                    unit_id=f"{query_id}/p{pi}",
                    query_id=query_id,
                    query=query,
                    pane=pane,
                    gold=gold,
                )
            )
    return Corpus(units=units)
