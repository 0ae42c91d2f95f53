"""Ensemble aggregation of per-model predictions and the accept/flag rules.

Aggregation is majority voting over labels with an unweighted mean of the
verbalised confidences; the population SD of those confidences acts as the
inter-model disagreement signal driving the review-routing rules.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Optional, Sequence

from .annotators import AnnotatorPrediction
from .corpus import TaskKind


class EnsembleError(ValueError):
    pass


@dataclass(frozen=True)
class ThresholdPair:
    """Candidate (confidence, SD) cutoffs for the accept/flag decision."""

    confidence_threshold: float
    sd_threshold: float

    def __post_init__(self):
        if not (0.0 <= self.confidence_threshold <= 100.0):
            raise EnsembleError(f"confidence threshold {self.confidence_threshold} outside [0,100]")
        if self.sd_threshold < 0.0:
            raise EnsembleError(f"sd threshold {self.sd_threshold} negative")


class HitlDecision(str, Enum):
    AUTO_ACCEPT = "auto_accept"
    FLAG_HIGH_VARIANCE = "flag_high_variance"
    FLAG_LOW_CONFIDENCE = "flag_low_confidence"
    FLAG_INSUFFICIENT_PREDICTIONS = "flag_insufficient_predictions"

    @property
    def is_flag(self) -> bool:
        return self is not HitlDecision.AUTO_ACCEPT


@dataclass
class EnsembleRecord:
    unit_id: str
    task: TaskKind
    aggregated_label: int
    mean_confidence: float
    confidence_sd: float
    contributing: list[AnnotatorPrediction]


def aggregate(predictions: Sequence[AnnotatorPrediction]) -> EnsembleRecord:
    """Majority-vote label with confidence-sum tie-break (then lower label);
    mean and population SD of the contributing confidences."""
    if not predictions:
        raise EnsembleError("no predictions to aggregate")
    unit_ids = {p.unit_id for p in predictions}
    tasks = {p.task for p in predictions}
    if len(unit_ids) != 1 or len(tasks) != 1:
        raise EnsembleError(f"mixed unit ids {unit_ids} or tasks {tasks} in one aggregation")

    votes: dict[int, int] = {}
    conf_sum: dict[int, float] = {}
    for p in predictions:
        votes[p.label] = votes.get(p.label, 0) + 1
        conf_sum[p.label] = conf_sum.get(p.label, 0.0) + p.confidence
    top_count = max(votes.values())
    tied = [lab for lab, c in votes.items() if c == top_count]
    # break vote ties by total confidence behind each label, then lower label
    winner = min(tied, key=lambda lab: (-conf_sum[lab], lab))

    confidences = [p.confidence for p in predictions]
    mean_conf = sum(confidences) / len(confidences)
    var = sum((c - mean_conf) ** 2 for c in confidences) / len(confidences)
    return EnsembleRecord(
        unit_id=predictions[0].unit_id,
        task=predictions[0].task,
        aggregated_label=winner,
        mean_confidence=mean_conf,
        confidence_sd=math.sqrt(var),
        contributing=list(predictions),
    )


def decide(
    record: EnsembleRecord,
    thresholds: ThresholdPair,
    expected_annotators: Optional[int] = None,
) -> HitlDecision:
    """Route one aggregated record: accept only on high confidence AND low
    disagreement; anything else goes to human review. Records left with
    fewer than 2 valid predictions out of a multi-model run are force-flagged.
    """
    if (
        expected_annotators is not None
        and expected_annotators >= 2
        and len(record.contributing) < 2
    ):
        return HitlDecision.FLAG_INSUFFICIENT_PREDICTIONS
    if record.mean_confidence < thresholds.confidence_threshold:
        return HitlDecision.FLAG_LOW_CONFIDENCE
    if record.confidence_sd <= thresholds.sd_threshold:
        return HitlDecision.AUTO_ACCEPT
    return HitlDecision.FLAG_HIGH_VARIANCE


@dataclass
class FinalLabel:
    unit_id: str
    task: TaskKind
    aggregated_label: int
    mean_confidence: float
    confidence_sd: float
    decision: HitlDecision
    final_label: Optional[int]  # None while a flagged unit awaits review
    source: str  # "model" | "human" | "pending"

    def to_dict(self) -> dict:
        return {
            "unit_id": self.unit_id,
            "task": self.task.value,
            "aggregated_label": self.aggregated_label,
            "mean_confidence": self.mean_confidence,
            "confidence_sd": self.confidence_sd,
            "decision": self.decision.value,
            "final_label": self.final_label,
            "source": self.source,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "FinalLabel":
        return cls(
            unit_id=raw["unit_id"],
            task=TaskKind(raw["task"]),
            aggregated_label=int(raw["aggregated_label"]),
            mean_confidence=float(raw["mean_confidence"]),
            confidence_sd=float(raw["confidence_sd"]),
            decision=HitlDecision(raw["decision"]),
            final_label=None if raw["final_label"] is None else int(raw["final_label"]),
            source=raw["source"],
        )


@dataclass
class FinalLabelSet:
    labels: list[FinalLabel] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def flagged_count(self) -> int:
        return sum(1 for f in self.labels if f.decision.is_flag)

    @property
    def pending_count(self) -> int:
        return sum(1 for f in self.labels if f.source == "pending")

    def her(self) -> Optional[float]:
        if not self.labels:
            return None
        return (len(self.labels) - self.flagged_count) * 100.0 / len(self.labels)

    def write_jsonl(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            for f in self.labels:
                fh.write(json.dumps(f.to_dict(), sort_keys=True) + "\n")

    @classmethod
    def read_jsonl(cls, path: str | Path) -> "FinalLabelSet":
        labels = []
        with Path(path).open("r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    labels.append(FinalLabel.from_dict(json.loads(line)))
        return cls(labels=labels)


def apply_hitl(
    records: Sequence[EnsembleRecord],
    thresholds: ThresholdPair,
    gold_provider: Callable[[str, TaskKind], Optional[int]],
    expected_annotators: Optional[int] = None,
) -> FinalLabelSet:
    """Accept or flag each record; flagged records take the human label from
    gold_provider. A flagged unit without an available human label stays
    pending rather than silently keeping the model label.
    """
    finals = []
    for record in records:
        decision = decide(record, thresholds, expected_annotators)
        if decision is HitlDecision.AUTO_ACCEPT:
            final, source = record.aggregated_label, "model"
        else:
            human = gold_provider(record.unit_id, record.task)
            if human is None:
                final, source = None, "pending"
            else:
                final, source = int(human), "human"
        finals.append(
            FinalLabel(
                unit_id=record.unit_id,
                task=record.task,
                aggregated_label=record.aggregated_label,
                mean_confidence=record.mean_confidence,
                confidence_sd=record.confidence_sd,
                decision=decision,
                final_label=final,
                source=source,
            )
        )
    return FinalLabelSet(labels=finals)
