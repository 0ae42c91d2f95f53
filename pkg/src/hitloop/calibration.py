"""Threshold calibration on a labelled subset: exhaustive grid evaluation,
Pareto front over (agreement quality, human effort), and operating-point
selection under a minimum-agreement constraint.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

from .corpus import TaskKind
from .ensemble import EnsembleRecord, HitlDecision, ThresholdPair, apply_hitl
from .metrics import MetricsReport, compute_report

DEFAULT_KW_MIN = 0.7
CONF_STEP = 5.0
SD_STEP = 2.0
_EPS = 1e-9


class CalibrationError(ValueError):
    pass


@dataclass
class CalibrationPoint:
    thresholds: ThresholdPair
    kw: float
    human_effort: float  # flagged fraction in [0,1]
    metrics: MetricsReport
    on_front: bool = False

    def to_dict(self) -> dict:
        return {
            "confidence_threshold": self.thresholds.confidence_threshold,
            "sd_threshold": self.thresholds.sd_threshold,
            "kw": self.kw,
            "human_effort": self.human_effort,
            "on_front": self.on_front,
            "metrics": self.metrics.to_dict(),
        }


@dataclass
class CalibrationOutcome:
    points: list[CalibrationPoint]
    front: list[CalibrationPoint]
    selected: ThresholdPair
    kw_min: float
    meets_constraint: bool
    observed_conf_range: tuple[float, float]
    observed_sd_range: tuple[float, float]
    subset_fraction: Optional[float] = None
    seed: Optional[int] = None

    def to_dict(self) -> dict:
        return {
            "selected": {
                "confidence_threshold": self.selected.confidence_threshold,
                "sd_threshold": self.selected.sd_threshold,
            },
            "kw_min": self.kw_min,
            "meets_constraint": self.meets_constraint,
            "observed_conf_range": list(self.observed_conf_range),
            "observed_sd_range": list(self.observed_sd_range),
            "subset_fraction": self.subset_fraction,
            "seed": self.seed,
            "points": [p.to_dict() for p in self.points],
        }

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n", encoding="utf-8")


def _axis(lo: float, hi: float, step: float, snap_up: bool) -> list[float]:
    if snap_up:
        start = math.ceil(lo / step - _EPS) * step
    else:
        start = math.floor(lo / step + _EPS) * step
    values = []
    v = start
    while v <= hi + _EPS:
        values.append(round(v, 10))
        v += step
    if not values or values[-1] < hi - _EPS:
        values.append(hi)
    return values


def enumerate_grid(
    observed_conf: tuple[float, float],
    observed_sd: tuple[float, float],
) -> list[ThresholdPair]:
    """Candidate cutoffs over the observed ranges: confidence in 5-point
    steps (range floor snapped up to a multiple of 5), SD in 2-point steps
    (snapped down), each axis including the observed maximum itself."""
    conf_lo, conf_hi = observed_conf
    sd_lo, sd_hi = observed_sd
    if conf_lo > conf_hi or sd_lo > sd_hi:
        raise CalibrationError("inverted observed range")
    conf_axis = _axis(conf_lo, conf_hi, CONF_STEP, snap_up=True)
    sd_axis = _axis(sd_lo, sd_hi, SD_STEP, snap_up=False)
    return [ThresholdPair(c, s) for c in conf_axis for s in sd_axis]


def evaluate_pair(
    pair: ThresholdPair,
    records: Sequence[EnsembleRecord],
    gold_provider: Callable[[str, TaskKind], Optional[int]],
    expected_annotators: Optional[int] = None,
) -> CalibrationPoint:
    """Run the accept/flag rules with human substitution from gold, then
    score the resulting final labels against gold."""
    if not records:
        raise CalibrationError("no records to evaluate")
    finals = apply_hitl(records, pair, gold_provider, expected_annotators)
    pred, gold, confs = [], [], []
    flagged = 0
    for f in finals.labels:
        g = gold_provider(f.unit_id, f.task)
        if g is None or f.final_label is None:
            raise CalibrationError(f"gold label missing for unit {f.unit_id} during calibration")
        pred.append(f.final_label)
        gold.append(g)
        confs.append(f.mean_confidence)
        if f.decision is not HitlDecision.AUTO_ACCEPT:
            flagged += 1
    report = compute_report(pred, gold, confidences=confs, flagged=flagged, total=len(finals))
    return CalibrationPoint(
        thresholds=pair,
        kw=report.kw,
        human_effort=flagged / len(finals),
        metrics=report,
    )


def _dominates(p: CalibrationPoint, q: CalibrationPoint) -> bool:
    return (
        p.kw >= q.kw
        and p.human_effort <= q.human_effort
        and (p.kw > q.kw or p.human_effort < q.human_effort)
    )


def pareto_front(points: Sequence[CalibrationPoint]) -> list[CalibrationPoint]:
    """Exact non-dominated subset; coordinate duplicates collapse to the
    representative with the lowest confidence threshold, then lowest SD
    threshold. Input points are marked on_front in place."""
    if not points:
        raise CalibrationError("no points")
    by_coord: dict[tuple[float, float], CalibrationPoint] = {}
    for p in points:
        key = (p.kw, p.human_effort)
        best = by_coord.get(key)
        if best is None or (
            p.thresholds.confidence_threshold,
            p.thresholds.sd_threshold,
        ) < (best.thresholds.confidence_threshold, best.thresholds.sd_threshold):
            by_coord[key] = p
    candidates = list(by_coord.values())
    front = [p for p in candidates if not any(_dominates(q, p) for q in candidates if q is not p)]
    front.sort(key=lambda p: (p.human_effort, -p.kw))
    front_set = {id(p) for p in front}
    for p in points:
        p.on_front = id(p) in front_set
    return front


def select_best(
    front: Sequence[CalibrationPoint], kw_min: float = DEFAULT_KW_MIN
) -> tuple[CalibrationPoint, bool]:
    """Minimum-effort front point meeting the agreement constraint; ties go
    to higher agreement, then lower thresholds. If nothing meets the
    constraint, falls back to the maximum-agreement point (flagged)."""
    if not front:
        raise CalibrationError("empty front")
    eligible = [p for p in front if p.kw >= kw_min]
    if eligible:
        chosen = min(
            eligible,
            key=lambda p: (
                p.human_effort,
                -p.kw,
                p.thresholds.confidence_threshold,
                p.thresholds.sd_threshold,
            ),
        )
        return chosen, True
    chosen = min(
        front,
        key=lambda p: (
            -p.kw,
            p.human_effort,
            p.thresholds.confidence_threshold,
            p.thresholds.sd_threshold,
        ),
    )
    return chosen, False


def calibrate(
    records: Sequence[EnsembleRecord],
    gold_provider: Callable[[str, TaskKind], Optional[int]],
    kw_min: float = DEFAULT_KW_MIN,
    expected_annotators: Optional[int] = None,
    subset_fraction: Optional[float] = None,
    seed: Optional[int] = None,
) -> CalibrationOutcome:
    """Full calibration sweep over the grid implied by the observed
    confidence/SD ranges of `records`."""
    if not records:
        raise CalibrationError("no records to calibrate on")
    confs = [r.mean_confidence for r in records]
    sds = [r.confidence_sd for r in records]
    conf_range = (min(confs), max(confs))
    sd_range = (min(sds), max(sds))
    grid = enumerate_grid(conf_range, sd_range)
    points = [evaluate_pair(pair, records, gold_provider, expected_annotators) for pair in grid]
    front = pareto_front(points)
    chosen, meets = select_best(front, kw_min)
    return CalibrationOutcome(
        points=points,
        front=front,
        selected=chosen.thresholds,
        kw_min=kw_min,
        meets_constraint=meets,
        observed_conf_range=conf_range,
        observed_sd_range=sd_range,
        subset_fraction=subset_fraction,
        seed=seed,
    )
