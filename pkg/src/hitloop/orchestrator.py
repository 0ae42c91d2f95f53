"""End-to-end pipeline: calibrate thresholds on a gold subset, apply the
accept/flag workflow to the remainder, run sensitivity sweeps, and emit
deterministic report files.

Output directory layout:
    calibration/<task>.report   grid points, front, selected thresholds
    final/<task>.labels         one JSON record per unit
    metrics/<task>.report       metric bundle vs gold
    provenance.meta             timestamps, config hash, annotator ids
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import yaml

from . import annotators as ann
from .calibration import DEFAULT_KW_MIN, CalibrationOutcome, calibrate
from .corpus import AnnotationUnit, Corpus, TaskKind, load_corpus, sample_subset
from .ensemble import (
    EnsembleRecord,
    FinalLabelSet,
    HitlDecision,
    ThresholdPair,
    aggregate,
    apply_hitl,
)
from .metrics import MetricsReport, SensitivityStats, compute_report, sensitivity_report
from .review.store import ReviewItem, ReviewStore
from .tasking import (
    PromptMode,
    PromptSetting,
    PromptVariant,
    Transformation,
    build_prompt,
    render_unit,
)

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


class PendingReviewsError(RuntimeError):
    """Raised when a report is requested while flagged units await review."""


@dataclass
class AnnotatorSpec:
    kind: str  # "simulated" | "remote"
    annotator_id: str
    profile: Optional[ann.SimProfile] = None
    provider: Optional[ann.ProviderConfig] = None


@dataclass
class RunConfig:
    corpus_path: Path
    tasks: list[TaskKind]
    annotator_specs: list[AnnotatorSpec]
    mode: str = "simulation"  # "simulation" | "live"
    out_dir: Path = Path("out")
    subset_fraction: float = 0.10
    seed: int = 0
    kw_min: float = DEFAULT_KW_MIN
    prompt_mode: PromptMode = PromptMode.ZSS
    variant: PromptVariant = PromptVariant(variant_id="baseline-1000")
    params: ann.GenerationParams = ann.GenerationParams()
    template_dir: Optional[Path] = None
    cache_dir: Optional[Path] = None
    review_log: Optional[Path] = None
    raw: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (0.0 < self.subset_fraction <= 1.0):
            raise ConfigError(f"subset_fraction {self.subset_fraction} outside (0,1]")
        if not self.annotator_specs:
            raise ConfigError("at least one annotator required")
        if self.mode not in ("simulation", "live"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if not self.tasks:
            raise ConfigError("no tasks configured")

    def config_hash(self) -> str:
        return hashlib.sha256(
            json.dumps(self.raw, sort_keys=True, default=str).encode("utf-8")
        ).hexdigest()[:16]


def _parse_variant(variant_id: str) -> PromptVariant:
    try:
        name, tokens = variant_id.rsplit("-", 1)
        return PromptVariant(
            variant_id=variant_id,
            transformation=Transformation(name),
            max_tokens=int(tokens),
        )
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"bad variant id {variant_id!r} (want e.g. baseline-1000)") from exc


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    try:
        specs = []
        for entry in raw["annotators"]:
            kind = entry.get("type", "simulated")
            if kind == "simulated":
                profile_fields = {
                    k: entry[k]
                    for k in (
                        "hit_rate",
                        "error_spread",
                        "conf_correct_mean",
                        "conf_wrong_mean",
                        "conf_sd",
                        "seed",
                        "difficulty_scale",
                        "miscalibration",
                    )
                    if k in entry
                }
                if "error_spread" in profile_fields:
                    profile_fields["error_spread"] = {
                        int(k): float(v) for k, v in profile_fields["error_spread"].items()
                    }
                specs.append(
                    AnnotatorSpec(
                        kind="simulated",
                        annotator_id=entry["id"],
                        profile=ann.SimProfile(**profile_fields),
                    )
                )
            elif kind == "remote":
                if "providers_file" in entry:
                    for provider in ann.ProviderConfig.load_file(entry["providers_file"]):
                        specs.append(
                            AnnotatorSpec(
                                kind="remote",
                                annotator_id=provider.annotator_id,
                                provider=provider,
                            )
                        )
                else:
                    provider = ann.ProviderConfig(
                        **{k: v for k, v in entry.items() if k != "type"}
                    )
                    specs.append(
                        AnnotatorSpec(
                            kind="remote", annotator_id=provider.annotator_id, provider=provider
                        )
                    )
            else:
                raise ConfigError(f"unknown annotator type {kind!r}")
        prompt = raw.get("prompt", {})
        generation = raw.get("generation", {})
        return RunConfig(
            corpus_path=Path(raw["corpus"]),
            tasks=[TaskKind(t) for t in raw["tasks"]],
            annotator_specs=specs,
            mode=raw.get("mode", "simulation"),
            out_dir=Path(raw.get("out_dir", "out")),
            subset_fraction=float(raw.get("subset_fraction", 0.10)),
            seed=int(raw.get("seed", 0)),
            kw_min=float(raw.get("kw_min", DEFAULT_KW_MIN)),
            prompt_mode=PromptMode(prompt.get("mode", "zss")),
            variant=_parse_variant(prompt.get("variant", "baseline-1000")),
            params=ann.GenerationParams(
                temperature=float(generation.get("temperature", 0.0)),
                max_tokens=int(generation.get("max_tokens", 1000)),
            ),
            template_dir=Path(raw["template_dir"]) if raw.get("template_dir") else None,
            cache_dir=Path(raw["cache_dir"]) if raw.get("cache_dir") else None,
            review_log=Path(raw["review_log"]) if raw.get("review_log") else None,
            raw=raw,
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad config: {exc}") from exc


# ---------------------------------------------------------------------------
# Response cache for remote annotators


class ResponseCache:
    """Disk cache keyed by (annotator, prompt hash, params); remote reruns
    are free and reproducible. Bypass by configuring no cache_dir."""

    def __init__(self, directory: Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def _path(self, key: str) -> Path:
        return self.directory / f"{hashlib.sha256(key.encode('utf-8')).hexdigest()}.json"

    def get(self, key: str) -> Optional[list]:
        path = self._path(key)
        if path.exists():
            return json.loads(path.read_text(encoding="utf-8"))
        return None

    def put(self, key: str, value: list) -> None:
        self._path(key).write_text(json.dumps(value), encoding="utf-8")


class _CachedAnnotator:
    def __init__(self, inner, cache: ResponseCache):
        self.inner = inner
        self.annotator_id = inner.annotator_id
        self.cache = cache

    def annotate(self, prompt, params):
        key = f"{self.annotator_id}|{params.temperature:g}|{params.max_tokens}|{prompt.task.value}|{prompt.text}"
        hit = self.cache.get(key)
        if hit is not None:
            return [
                ann.AnnotatorPrediction(
                    annotator_id=self.annotator_id,
                    unit_id=unit_id,
                    task=prompt.task,
                    label=entry["label"],
                    confidence=entry["confidence"],
                    raw_response=entry["raw"],
                    params=params,
                )
                if entry.get("label") is not None
                else ann.MissingPrediction(self.annotator_id, unit_id, prompt.task, entry["reason"])
                for unit_id, entry in zip(prompt.unit_ids, hit)
            ]
        result = self.inner.annotate(prompt, params)
        self.cache.put(
            key,
            [
                {"label": p.label, "confidence": p.confidence, "raw": p.raw_response}
                if isinstance(p, ann.AnnotatorPrediction)
                else {"label": None, "reason": p.reason}
                for p in result
            ],
        )
        return result


def build_annotators(config: RunConfig, corpus: Corpus) -> list:
    out = []
    cache = ResponseCache(config.cache_dir) if config.cache_dir else None
    for spec in config.annotator_specs:
        if spec.kind == "simulated":
            out.append(ann.SimulatedAnnotator(spec.annotator_id, spec.profile, corpus.gold_label))
        else:
            remote = ann.RemoteAnnotator(spec.provider)
            out.append(_CachedAnnotator(remote, cache) if cache else remote)
    return out


# ---------------------------------------------------------------------------
# Annotation and aggregation passes


def _prompt_targets(corpus: Corpus, task: TaskKind) -> list:
    if task.is_listwise:
        return list(corpus.query_groups().values())
    return list(corpus.units)


def pick_few_shot_examples(
    subset: Corpus, task: TaskKind
) -> tuple[tuple[tuple[str, int], ...], list[str]]:
    """Few-shot examples drawn from the calibration subset: one per label
    1-5 for the quality task, the first five gold-labelled units otherwise.
    Returns (examples, example unit ids) so runs can record them."""
    examples: list[tuple[str, int]] = []
    used: list[str] = []
    if task is TaskKind.QUALITY:
        needed = {1, 2, 3, 4, 5}
        for unit in subset.units:
            gold = unit.gold.get(task)
            if gold in needed:
                examples.append((render_unit(unit), gold))
                used.append(unit.unit_id)
                needed.discard(gold)
        if needed:
            raise ConfigError(
                f"few-shot quality needs one subset example per label 1-5; missing {sorted(needed)}"
            )
        examples.sort(key=lambda e: e[1])
    else:
        for unit in subset.units:
            gold = unit.gold.get(task)
            if gold is not None:
                examples.append((render_unit(unit), gold))
                used.append(unit.unit_id)
            if len(examples) == 5:
                break
        if not examples:
            raise ConfigError(f"no gold-labelled subset units to draw {task.value} examples from")
    return tuple(examples), used


def annotate_task(
    corpus: Corpus,
    task: TaskKind,
    annotator_list: Sequence,
    setting: PromptSetting,
    variant: PromptVariant,
    params: ann.GenerationParams,
    template_dir: Optional[Path] = None,
) -> dict[str, list[ann.AnnotatorPrediction]]:
    """One pass: each annotator labels each unit exactly once. Missing
    predictions are dropped here; units left under-covered get force-flagged
    downstream."""
    targets = _prompt_targets(corpus, task)
    prompts = [build_prompt(task, t, setting, variant, template_dir) for t in targets]
    by_unit: dict[str, list[ann.AnnotatorPrediction]] = {u.unit_id: [] for u in corpus.units}
    for annotator in annotator_list:
        for batch in ann.annotate_many(annotator, prompts, params):
            for prediction in batch:
                if isinstance(prediction, ann.MissingPrediction):
                    logger.warning(
                        "dropping missing prediction from %s for unit %s: %s",
                        prediction.annotator_id,
                        prediction.unit_id,
                        prediction.reason,
                    )
                    continue
                by_unit[prediction.unit_id].append(prediction)
    return by_unit


def aggregate_task(
    corpus: Corpus, predictions_by_unit: dict[str, list[ann.AnnotatorPrediction]]
) -> list[EnsembleRecord]:
    """Ensemble records in stable corpus order; units with zero surviving
    predictions are skipped (reported by the caller as unannotatable)."""
    records = []
    for unit in corpus.units:
        preds = predictions_by_unit.get(unit.unit_id, [])
        if preds:
            records.append(aggregate(preds))
        else:
            logger.warning("unit %s has no valid predictions at all; skipped", unit.unit_id)
    return records


# ---------------------------------------------------------------------------
# Pipeline stages


@dataclass
class RunReport:
    outcomes: dict[TaskKind, CalibrationOutcome] = field(default_factory=dict)
    finals: dict[TaskKind, FinalLabelSet] = field(default_factory=dict)
    metrics: dict[TaskKind, Optional[MetricsReport]] = field(default_factory=dict)
    overall_her: Optional[float] = None
    pending: int = 0


def _resolve_setting(config: RunConfig, subset: Corpus, task: TaskKind, provenance: dict) -> PromptSetting:
    if config.prompt_mode is PromptMode.ZSS:
        return PromptSetting(mode=PromptMode.ZSS)
    examples, used = pick_few_shot_examples(subset, task)
    provenance.setdefault("few_shot_examples", {})[task.value] = used
    return PromptSetting(mode=PromptMode.FSS, few_shot_examples=examples)


def run_calibration(
    config: RunConfig, corpus: Optional[Corpus] = None, provenance: Optional[dict] = None
) -> dict[TaskKind, CalibrationOutcome]:
    corpus = corpus if corpus is not None else load_corpus(config.corpus_path)
    provenance = provenance if provenance is not None else {}
    subset, _ = sample_subset(corpus, config.subset_fraction, config.seed)
    for task in config.tasks:
        for unit in subset.units:
            if task not in unit.gold:
                raise ConfigError(
                    f"calibration subset unit {unit.unit_id} lacks a gold {task.value} label"
                )
    annotator_list = build_annotators(config, corpus)
    outcomes: dict[TaskKind, CalibrationOutcome] = {}
    out_dir = config.out_dir / "calibration"
    out_dir.mkdir(parents=True, exist_ok=True)
    for task in config.tasks:
        setting = _resolve_setting(config, subset, task, provenance)
        preds = annotate_task(
            subset, task, annotator_list, setting, config.variant, config.params, config.template_dir
        )
        records = aggregate_task(subset, preds)
        outcome = calibrate(
            records,
            corpus.gold_label,
            kw_min=config.kw_min,
            expected_annotators=len(annotator_list),
            subset_fraction=config.subset_fraction,
            seed=config.seed,
        )
        if not outcome.meets_constraint:
            logger.warning(
                "task %s: no front point reaches agreement %.2f; using max-agreement point",
                task.value,
                config.kw_min,
            )
        outcome.write_json(out_dir / f"{task.value}.report")
        outcomes[task] = outcome
    return outcomes


def load_selected_thresholds(config: RunConfig) -> dict[TaskKind, ThresholdPair]:
    selected = {}
    for task in config.tasks:
        path = config.out_dir / "calibration" / f"{task.value}.report"
        if not path.exists():
            raise ConfigError(f"no calibration report for task {task.value} at {path}; run calibrate first")
        raw = json.loads(path.read_text(encoding="utf-8"))
        selected[task] = ThresholdPair(
            raw["selected"]["confidence_threshold"], raw["selected"]["sd_threshold"]
        )
    return selected


def _final_paths(config: RunConfig, task: TaskKind) -> tuple[Path, Path]:
    final_dir = config.out_dir / "final"
    metrics_dir = config.out_dir / "metrics"
    final_dir.mkdir(parents=True, exist_ok=True)
    metrics_dir.mkdir(parents=True, exist_ok=True)
    return final_dir / f"{task.value}.labels", metrics_dir / f"{task.value}.report"


def _score_finals(finals: FinalLabelSet, corpus: Corpus) -> Optional[MetricsReport]:
    pred, gold, confs = [], [], []
    flagged = 0
    for f in finals.labels:
        g = corpus.gold_label(f.unit_id, f.task)
        if g is None or f.final_label is None:
            continue
        pred.append(f.final_label)
        gold.append(g)
        confs.append(f.mean_confidence)
        if f.decision is not HitlDecision.AUTO_ACCEPT:
            flagged += 1
    if not pred:
        return None
    return compute_report(pred, gold, confidences=confs, flagged=flagged, total=len(pred))


def _enqueue_flagged(config: RunConfig, corpus: Corpus, finals: FinalLabelSet) -> None:
    if config.review_log is None:
        raise ConfigError("live mode needs a review_log path")
    store = ReviewStore(config.review_log)
    by_id = {u.unit_id: u for u in corpus.units}
    items = []
    for f in finals.labels:
        if f.source != "pending":
            continue
        unit = by_id[f.unit_id]
        items.append(
            ReviewItem(
                item_id=f"{f.unit_id}|{f.task.value}",
                unit_id=f.unit_id,
                task=f.task.value,
                query=unit.query,
                question=unit.pane.question,
                options=list(unit.pane.options),
                aggregated_label=f.aggregated_label,
                mean_confidence=f.mean_confidence,
                confidence_sd=f.confidence_sd,
                predictions=[],
                flag_reason=f.decision.value,
            )
        )
    store.enqueue(items)
    store.set_run_total(len(finals))


def run_apply(
    config: RunConfig,
    selected: Optional[dict[TaskKind, ThresholdPair]] = None,
    corpus: Optional[Corpus] = None,
) -> RunReport:
    """Annotate the remainder once per annotator, decide with the selected
    thresholds, resolve flags (stored gold in simulation, review queue in
    live mode), and write label/metric files."""
    corpus = corpus if corpus is not None else load_corpus(config.corpus_path)
    if selected is None:
        selected = load_selected_thresholds(config)
    subset, remainder = sample_subset(corpus, config.subset_fraction, config.seed)
    annotator_list = build_annotators(config, corpus)
    report = RunReport()
    total_flagged = 0
    total_units = 0
    provenance: dict = {}
    for task in config.tasks:
        setting = _resolve_setting(config, subset, task, provenance)
        final_path, metrics_path = _final_paths(config, task)
        if len(remainder) == 0:
            finals = FinalLabelSet(labels=[])
            finals.write_jsonl(final_path)
            report.finals[task] = finals
            report.metrics[task] = None
            continue
        preds = annotate_task(
            remainder, task, annotator_list, setting, config.variant, config.params, config.template_dir
        )
        records = aggregate_task(remainder, preds)
        if config.mode == "simulation":
            gold_provider = corpus.gold_label
        else:
            gold_provider = lambda unit_id, t: None  # noqa: E731 - resolved via review queue
        finals = apply_hitl(records, selected[task], gold_provider, len(annotator_list))
        if config.mode == "live" and finals.pending_count:
            _enqueue_flagged(config, corpus, finals)
        finals.write_jsonl(final_path)
        task_metrics = _score_finals(finals, corpus)
        if task_metrics is not None:
            metrics_path.write_text(
                json.dumps(task_metrics.to_dict(), sort_keys=True, indent=1) + "\n", encoding="utf-8"
            )
        report.finals[task] = finals
        report.metrics[task] = task_metrics
        report.pending += finals.pending_count
        total_flagged += finals.flagged_count
        total_units += len(finals)
    if total_units:
        report.overall_her = (total_units - total_flagged) * 100.0 / total_units
    _write_provenance(config, provenance)
    return report


def _write_provenance(config: RunConfig, extra: dict) -> None:
    config.out_dir.mkdir(parents=True, exist_ok=True)
    meta = {
        "timestamp": time.time(),
        "config_hash": config.config_hash(),
        "seed": config.seed,
        "subset_fraction": config.subset_fraction,
        "annotators": [s.annotator_id for s in config.annotator_specs],
        "tasks": [t.value for t in config.tasks],
        "mode": config.mode,
        **extra,
    }
    (config.out_dir / "provenance.meta").write_text(
        json.dumps(meta, sort_keys=True, indent=1) + "\n", encoding="utf-8"
    )


def complete_report(config: RunConfig, corpus: Optional[Corpus] = None) -> RunReport:
    """Merge reviewed human labels into pending finals. Raises
    PendingReviewsError while any flagged unit is still unreviewed."""
    corpus = corpus if corpus is not None else load_corpus(config.corpus_path)
    reviewed: dict[str, int] = {}
    if config.review_log is not None and Path(config.review_log).exists():
        reviewed = ReviewStore(config.review_log).reviewed_labels()
    report = RunReport()
    total_flagged = 0
    total_units = 0
    for task in config.tasks:
        final_path, metrics_path = _final_paths(config, task)
        if not final_path.exists():
            raise ConfigError(f"no final labels for task {task.value}; run apply first")
        finals = FinalLabelSet.read_jsonl(final_path)
        still_pending = 0
        for f in finals.labels:
            if f.source == "pending":
                label = reviewed.get(f"{f.unit_id}|{f.task.value}")
                if label is None:
                    still_pending += 1
                else:
                    f.final_label = label
                    f.source = "human"
        report.pending += still_pending
        report.finals[task] = finals
        total_flagged += finals.flagged_count
        total_units += len(finals)
        if still_pending == 0:
            finals.write_jsonl(final_path)
            task_metrics = _score_finals(finals, corpus)
            report.metrics[task] = task_metrics
            if task_metrics is not None:
                metrics_path.write_text(
                    json.dumps(task_metrics.to_dict(), sort_keys=True, indent=1) + "\n",
                    encoding="utf-8",
                )
    if total_units:
        report.overall_her = (total_units - total_flagged) * 100.0 / total_units
    if report.pending:
        raise PendingReviewsError(f"{report.pending} flagged units still await review")
    return report


def run_sensitivity(
    config: RunConfig,
    temperatures: Optional[Sequence[float]] = None,
    variants: Optional[Sequence[PromptVariant]] = None,
) -> SensitivityStats:
    """Repeat the full annotation per temperature (or per prompt variant at
    fixed generation settings) and report per-unit label entropy and SD."""
    if temperatures is None and variants is None:
        temperatures = ann.TEMPERATURE_SWEEP
    settings: list[tuple[PromptVariant, ann.GenerationParams]] = []
    if temperatures is not None:
        if len(temperatures) < 2:
            raise ConfigError("temperature sweep needs at least 2 settings")
        settings = [
            (config.variant, ann.GenerationParams(temperature=t, max_tokens=config.params.max_tokens))
            for t in temperatures
        ]
    else:
        if len(variants) < 2:
            raise ConfigError("variant sweep needs at least 2 variants")
        settings = [
            (v, ann.GenerationParams(temperature=config.params.temperature, max_tokens=v.max_tokens))
            for v in variants
        ]
    corpus = load_corpus(config.corpus_path)
    subset, _ = sample_subset(corpus, config.subset_fraction, config.seed)
    annotator_list = build_annotators(config, corpus)
    runs: dict[tuple[str, str], dict[str, list[int]]] = {}
    for task in config.tasks:
        setting = _resolve_setting(config, subset, task, {})
        for variant, params in settings:
            for annotator in annotator_list:
                preds = annotate_task(
                    subset, task, [annotator], setting, variant, params, config.template_dir
                )
                group = runs.setdefault((annotator.annotator_id, task.value), {})
                for unit_id, plist in preds.items():
                    for p in plist:
                        group.setdefault(unit_id, []).append(p.label)
    stats = sensitivity_report(runs)
    config.out_dir.mkdir(parents=True, exist_ok=True)
    (config.out_dir / "sensitivity.report").write_text(
        json.dumps(stats.to_dict(), sort_keys=True, indent=1) + "\n", encoding="utf-8"
    )
    return stats
