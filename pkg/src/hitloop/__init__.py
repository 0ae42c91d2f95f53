"""Human-in-the-loop annotation pipeline: ensemble labelling with
verbalised confidence, threshold calibration via Pareto-front selection,
and a review queue for flagged units."""

from .corpus import AnnotationUnit, ClarificationPane, Corpus, TaskKind, load_corpus, sample_subset
from .ensemble import EnsembleRecord, HitlDecision, ThresholdPair, aggregate, apply_hitl, decide

__all__ = [
    "AnnotationUnit",
    "ClarificationPane",
    "Corpus",
    "TaskKind",
    "load_corpus",
    "sample_subset",
    "EnsembleRecord",
    "HitlDecision",
    "ThresholdPair",
    "aggregate",
    "apply_hitl",
    "decide",
]

__version__ = "0.1.0"
