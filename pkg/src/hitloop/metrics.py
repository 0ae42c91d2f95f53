"""Agreement and error metrics for ordinal (1-5) annotation labels.

All matrix-based metrics operate on a fixed 5x5 confusion matrix
(rows = reference labels, columns = predicted labels) so that macro
averages stay comparable across runs even when some classes are absent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

LABELS = (1, 2, 3, 4, 5)
NUM_CLASSES = 5


class MetricsError(ValueError):
    """Raised on malformed metric inputs (length mismatch, bad labels)."""


def _check_labels(values: Sequence[int], name: str) -> None:
    for v in values:
        if not (1 <= int(v) <= 5):
            raise MetricsError(f"{name} label {v} out of range [1,5]")


def confusion_matrix(pred: Sequence[int], gold: Sequence[int]) -> np.ndarray:
    """5x5 count matrix; cell (t, p) counts units with gold t+1 predicted as p+1."""
    if len(pred) != len(gold):
        raise MetricsError(f"length mismatch: {len(pred)} pred vs {len(gold)} gold")
    if len(pred) == 0:
        raise MetricsError("empty label lists")
    _check_labels(pred, "predicted")
    _check_labels(gold, "gold")
    cm = np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.int64)
    for p, g in zip(pred, gold):
        cm[int(g) - 1, int(p) - 1] += 1
    return cm


def quadratic_weighted_kappa(cm: np.ndarray) -> float:
    """Cohen's kappa with quadratic disagreement weights w_ij = (i-j)^2/(k-1)^2.

    Larger ordinal mismatches are penalised more heavily. When the expected
    weighted disagreement is zero (all mass in a single cell for both sides),
    returns 1.0 if the observed disagreement is also zero, else 0.0.
    """
    total = cm.sum()
    if total <= 0:
        raise MetricsError("empty confusion matrix")
    k = cm.shape[0]
    idx = np.arange(k)
    weights = ((idx[:, None] - idx[None, :]) ** 2) / float((k - 1) ** 2)
    observed = cm / total
    row_marg = observed.sum(axis=1)
    col_marg = observed.sum(axis=0)
    expected = np.outer(row_marg, col_marg)
    num = float((weights * observed).sum())
    den = float((weights * expected).sum())
    if den == 0.0:
        return 1.0 if num == 0.0 else 0.0
    return 1.0 - num / den


def per_class_precision(cm: np.ndarray) -> list[float]:
    col = cm.sum(axis=0)
    diag = np.diag(cm)
    return [float(diag[i] / col[i]) if col[i] > 0 else 0.0 for i in range(cm.shape[0])]


def per_class_recall(cm: np.ndarray) -> list[float]:
    row = cm.sum(axis=1)
    diag = np.diag(cm)
    return [float(diag[i] / row[i]) if row[i] > 0 else 0.0 for i in range(cm.shape[0])]


def per_class_f1(cm: np.ndarray) -> list[float]:
    prec = per_class_precision(cm)
    rec = per_class_recall(cm)
    out = []
    for p, r in zip(prec, rec):
        out.append(2 * p * r / (p + r) if (p + r) > 0 else 0.0)
    return out


def macro_precision(cm: np.ndarray) -> float:
    """Unweighted mean precision over all 5 classes, absent classes counted as 0."""
    if cm.sum() <= 0:
        raise MetricsError("empty confusion matrix")
    return float(np.mean(per_class_precision(cm)))


def macro_f1(cm: np.ndarray) -> float:
    """Unweighted mean F1 over all 5 classes, absent classes counted as 0."""
    if cm.sum() <= 0:
        raise MetricsError("empty confusion matrix")
    return float(np.mean(per_class_f1(cm)))


def mae(pred: Sequence[int], gold: Sequence[int]) -> float:
    if len(pred) != len(gold):
        raise MetricsError(f"length mismatch: {len(pred)} pred vs {len(gold)} gold")
    if len(pred) == 0:
        raise MetricsError("empty label lists")
    return float(np.mean(np.abs(np.asarray(pred, dtype=float) - np.asarray(gold, dtype=float))))


def pearson(pred: Sequence[float], gold: Sequence[float]) -> Optional[float]:
    """Product-moment correlation; None when either side has zero variance."""
    if len(pred) != len(gold):
        raise MetricsError(f"length mismatch: {len(pred)} pred vs {len(gold)} gold")
    if len(pred) < 2:
        raise MetricsError("pearson needs at least 2 points")
    x = np.asarray(pred, dtype=float)
    y = np.asarray(gold, dtype=float)
    sx = x - x.mean()
    sy = y - y.mean()
    denom = math.sqrt(float((sx * sx).sum()) * float((sy * sy).sum()))
    if denom == 0.0:
        return None
    return float((sx * sy).sum() / denom)


def cwa(outcomes: Iterable[tuple[bool, float]]) -> Optional[float]:
    """Confidence-weighted accuracy: confidence mass on correct predictions
    divided by total confidence mass. None when all confidences are zero.
    """
    correct_mass = 0.0
    total_mass = 0.0
    n = 0
    for is_correct, confidence in outcomes:
        if confidence < 0:
            raise MetricsError(f"negative confidence {confidence}")
        total_mass += confidence
        if is_correct:
            correct_mass += confidence
        n += 1
    if n == 0:
        raise MetricsError("empty outcome list")
    if total_mass == 0.0:
        return None
    return correct_mass / total_mass


def her(flagged: int, total: int) -> float:
    """Human effort reduction: percentage of instances not sent for review."""
    if total <= 0:
        raise MetricsError("total must be positive")
    if not (0 <= flagged <= total):
        raise MetricsError(f"flagged {flagged} outside [0, {total}]")
    return (total - flagged) * 100.0 / total


def entropy(labels: Sequence[int]) -> float:
    """Shannon entropy (natural log) of the empirical label distribution."""
    if len(labels) == 0:
        raise MetricsError("empty label list")
    _, counts = np.unique(np.asarray(labels), return_counts=True)
    p = counts / counts.sum()
    return float(-(p * np.log(p)).sum())


def label_sd(labels: Sequence[int]) -> float:
    """Population standard deviation of label values."""
    if len(labels) == 0:
        raise MetricsError("empty label list")
    return float(np.std(np.asarray(labels, dtype=float)))


@dataclass
class MetricsReport:
    """Full metric bundle for one prediction set against reference labels."""

    macro_precision: float
    macro_f1: float
    mae: float
    kw: float
    pearson: Optional[float]
    cwa: Optional[float]
    confusion: np.ndarray
    class_precision: list[float]
    class_f1: list[float]
    her: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "macro_precision": self.macro_precision,
            "macro_f1": self.macro_f1,
            "mae": self.mae,
            "kw": self.kw,
            "pearson": self.pearson,
            "cwa": self.cwa,
            "her": self.her,
            "class_precision": self.class_precision,
            "class_f1": self.class_f1,
            "confusion": self.confusion.tolist(),
        }

    def format_table(self) -> str:
        lines = ["metric            value"]
        for name in ("macro_precision", "macro_f1", "mae", "kw", "pearson", "cwa", "her"):
            v = getattr(self, name)
            lines.append(f"{name:<16} {'n/a' if v is None else format(v, '.4f')}")
        lines.append("confusion (rows=gold T1..T5, cols=pred P1..P5):")
        for row in self.confusion:
            lines.append("  " + " ".join(f"{int(c):4d}" for c in row))
        return "\n".join(lines)


def compute_report(
    pred: Sequence[int],
    gold: Sequence[int],
    confidences: Optional[Sequence[float]] = None,
    flagged: Optional[int] = None,
    total: Optional[int] = None,
) -> MetricsReport:
    """Compute the full metric bundle. `confidences` (aligned with pred)
    enables confidence-weighted accuracy; (flagged, total) enables the
    human-effort figure."""
    cm = confusion_matrix(pred, gold)
    cwa_value = None
    if confidences is not None:
        if len(confidences) != len(pred):
            raise MetricsError("confidences length mismatch")
        cwa_value = cwa([(p == g, c) for p, g, c in zip(pred, gold, confidences)])
    her_value = None
    if flagged is not None and total is not None:
        her_value = her(flagged, total)
    return MetricsReport(
        macro_precision=macro_precision(cm),
        macro_f1=macro_f1(cm),
        mae=mae(pred, gold),
        kw=quadratic_weighted_kappa(cm),
        pearson=pearson(pred, gold) if len(pred) >= 2 else None,
        cwa=cwa_value,
        confusion=cm,
        class_precision=per_class_precision(cm),
        class_f1=per_class_f1(cm),
        her=her_value,
    )


@dataclass
class SensitivityStats:
    """Mean per-unit entropy and label SD across repeated runs, grouped by
    (annotator_id, task name)."""

    runs_per_unit: int
    groups: dict[tuple[str, str], tuple[float, float]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "runs_per_unit": self.runs_per_unit,
            "groups": {
                f"{ann}/{task}": {"mean_entropy": e, "mean_label_sd": s}
                for (ann, task), (e, s) in sorted(self.groups.items())
            },
        }


def sensitivity_report(
    runs: dict[tuple[str, str], dict[str, list[int]]],
) -> SensitivityStats:
    """Aggregate repeated-run labels into per-group uncertainty statistics.

    `runs` maps (annotator_id, task name) to {unit_id: labels across runs};
    every unit must carry the same run count r >= 2.
    """
    run_count: Optional[int] = None
    for key, per_unit in runs.items():
        for unit_id, labels in per_unit.items():
            if run_count is None:
                run_count = len(labels)
            if len(labels) != run_count:
                raise MetricsError(
                    f"ragged run counts: unit {unit_id} in group {key} has "
                    f"{len(labels)} runs, expected {run_count}"
                )
    if run_count is None or run_count < 2:
        raise MetricsError("need at least 2 runs per unit")
    stats = SensitivityStats(runs_per_unit=run_count)
    for key, per_unit in runs.items():
        ents = [entropy(labels) for labels in per_unit.values()]
        sds = [label_sd(labels) for labels in per_unit.values()]
        stats.groups[key] = (float(np.mean(ents)), float(np.mean(sds)))
    return stats
