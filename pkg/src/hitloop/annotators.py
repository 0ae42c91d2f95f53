"""Annotator backends: remote LLM endpoints over HTTP and a deterministic
simulated annotator, plus parsing of model responses into predictions.

Every annotator returns, per rated item, either an AnnotatorPrediction or a
MissingPrediction marker (after one retry) so downstream aggregation can
exclude failures explicitly instead of crashing mid-run.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import httpx

from .corpus import TaskKind
from .tasking import PromptText

logger = logging.getLogger(__name__)

TEMPERATURE_SWEEP = (0.0, 0.5, 1.0)


class ResponseParseError(ValueError):
    pass


class AnnotatorTransportError(RuntimeError):
    """Transport failure that persisted through the retry."""


@dataclass(frozen=True)
class GenerationParams:
    temperature: float = 0.0
    max_tokens: int = 1000

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError(f"temperature {self.temperature} negative")
        if self.max_tokens <= 0:
            raise ValueError(f"max_tokens {self.max_tokens} not positive")


@dataclass(frozen=True)
class AnnotatorPrediction:
    annotator_id: str
    unit_id: str
    task: TaskKind
    label: int
    confidence: float
    raw_response: str
    params: GenerationParams

    def __post_init__(self):
        if not (1 <= self.label <= 5):
            raise ValueError(f"label {self.label} out of range [1,5]")
        if not (0.0 <= self.confidence <= 100.0):
            raise ValueError(f"confidence {self.confidence} out of range [0,100]")


@dataclass(frozen=True)
class MissingPrediction:
    """Placeholder for a rated item whose response never parsed."""

    annotator_id: str
    unit_id: str
    task: TaskKind
    reason: str


PredictionOrMissing = Union[AnnotatorPrediction, MissingPrediction]

_TRAILER_RE = re.compile(r"LABEL\s*=\s*(-?\d+)\s+CONFIDENCE\s*=\s*(-?\d+(?:\.\d+)?)")


def parse_response(raw: str, expected_items: int) -> list[tuple[int, float]]:
    """Extract `LABEL=<int> CONFIDENCE=<num>` trailer lines, in order.

    Out-of-range values are a failure, not a clamp: a model that answers 6
    did not follow the scale and its output cannot be trusted.
    """
    matches = _TRAILER_RE.findall(raw)
    if not matches:
        raise ResponseParseError("no LABEL=/CONFIDENCE= trailer found")
    if len(matches) != expected_items:
        raise ResponseParseError(f"expected {expected_items} trailer lines, found {len(matches)}")
    out = []
    for label_str, conf_str in matches:
        label = int(label_str)
        confidence = float(conf_str)
        if not (1 <= label <= 5):
            raise ResponseParseError(f"label {label} out of range [1,5]")
        if not (0.0 <= confidence <= 100.0):
            raise ResponseParseError(f"confidence {confidence} out of range [0,100]")
        out.append((label, confidence))
    return out


# ---------------------------------------------------------------------------
# Simulated annotator


@dataclass(frozen=True)
class SimProfile:
    """Behaviour of a synthetic annotator standing in for a real model.

    On a hit it emits the gold label; on a miss it offsets the gold label by
    a draw from error_spread (offsets reflected back into [1,5] at the
    boundaries so the spread stays symmetric on interior labels).

    Two optional knobs make ensembles of these annotators behave more like
    real model pools, both driven by a unit-level trait shared across all
    annotators so their behaviour correlates per item:

    * difficulty_scale: units get easier/harder for everyone; the per-unit
      hit probability is perturbed symmetrically, so the marginal hit rate
      over many units stays exactly hit_rate.
    * miscalibration: on some units wrong answers come out systematically
      more confident (and correct ones slightly less), population means
      preserved; models overconfident-when-wrong are what make confidence
      thresholds imperfect in practice.
    """

    hit_rate: float
    error_spread: dict[int, float] = field(
        default_factory=lambda: {1: 0.3, -1: 0.3, 2: 0.2, -2: 0.2}
    )
    conf_correct_mean: float = 92.0
    conf_wrong_mean: float = 78.0
    conf_sd: float = 6.0
    seed: int = 0
    difficulty_scale: float = 0.0
    miscalibration: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.hit_rate <= 1.0):
            raise ValueError(f"hit_rate {self.hit_rate} outside [0,1]")
        if not self.error_spread or any(o not in (1, -1, 2, -2) for o in self.error_spread):
            raise ValueError(f"error_spread offsets must be among +/-1, +/-2: {self.error_spread}")
        if not (0.0 <= self.difficulty_scale <= 1.0):
            raise ValueError(f"difficulty_scale {self.difficulty_scale} outside [0,1]")
        if self.miscalibration < 0:
            raise ValueError(f"miscalibration {self.miscalibration} negative")


def _derive_rng(seed: int, stream_key: str) -> random.Random:
    digest = hashlib.sha256(f"{seed}|{stream_key}".encode("utf-8")).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def _reflect_label(value: int) -> int:
    if value > 5:
        value = 10 - value
    elif value < 1:
        value = 2 - value
    return value


def _unit_trait(tag: str, unit_id: str, task: TaskKind) -> float:
    """Deterministic uniform draw on [-1, 1) tied to the unit, not the
    annotator, so every annotator sees the same per-unit trait."""
    digest = hashlib.sha256(f"{tag}|{unit_id}|{task.value}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") / 2**64 * 2 - 1


def sim_predict(
    profile: SimProfile,
    gold: int,
    stream_key: str,
    annotator_id: str = "sim",
    unit_id: str = "",
    task: TaskKind = TaskKind.QUALITY,
    params: GenerationParams = GenerationParams(),
) -> AnnotatorPrediction:
    """One simulated prediction, a pure function of (profile, gold, stream_key)."""
    rng = _derive_rng(profile.seed, stream_key)
    p_hit = profile.hit_rate
    if profile.difficulty_scale:
        margin = min(profile.hit_rate, 1.0 - profile.hit_rate)
        p_hit += profile.difficulty_scale * margin * _unit_trait("difficulty", unit_id, task)
    shift = 0.0
    if profile.miscalibration:
        shift = profile.miscalibration * _unit_trait("calibration", unit_id, task)
    if rng.random() < p_hit:
        label = gold
        conf_mean = profile.conf_correct_mean - 0.5 * shift
    else:
        offsets = sorted(profile.error_spread)
        weights = [profile.error_spread[o] for o in offsets]
        offset = rng.choices(offsets, weights=weights, k=1)[0]
        label = _reflect_label(gold + offset)
        conf_mean = profile.conf_wrong_mean + shift
    confidence = min(100.0, max(0.0, rng.gauss(conf_mean, profile.conf_sd)))
    raw = f"LABEL={label} CONFIDENCE={confidence:.1f}"
    return AnnotatorPrediction(
        annotator_id=annotator_id,
        unit_id=unit_id,
        task=task,
        label=label,
        confidence=confidence,
        raw_response=raw,
        params=params,
    )


class SimulatedAnnotator:
    """Deterministic stand-in for a remote model; needs a gold-label lookup."""

    def __init__(self, annotator_id: str, profile: SimProfile, gold_lookup):
        self.annotator_id = annotator_id
        self.profile = profile
        self._gold_lookup = gold_lookup

    def annotate(self, prompt: PromptText, params: GenerationParams) -> list[PredictionOrMissing]:
        out: list[PredictionOrMissing] = []
        for unit_id in prompt.unit_ids:
            gold = self._gold_lookup(unit_id, prompt.task)
            if gold is None:
                raise ValueError(
                    f"simulated annotator {self.annotator_id} needs a gold "
                    f"{prompt.task.value} label for unit {unit_id}"
                )
            stream_key = f"{self.annotator_id}|{unit_id}|{prompt.task.value}|{prompt.variant_id}|{params.temperature:g}"
            out.append(
                sim_predict(
                    self.profile,
                    gold,
                    stream_key,
                    annotator_id=self.annotator_id,
                    unit_id=unit_id,
                    task=prompt.task,
                    params=params,
                )
            )
        return out


# ---------------------------------------------------------------------------
# Remote HTTP annotator


@dataclass
class ProviderConfig:
    """Declarative remote-provider wiring; new providers need no code changes.

    request_template is the JSON body with `{prompt}`, `{model}`,
    `{temperature}`, `{max_tokens}` placeholders in string values;
    response_path is a dot path (list indices allowed) to the generated text.
    Credentials come only from the environment variable named by auth_env.
    """

    annotator_id: str
    base_url: str
    model: str
    auth_env: str
    request_template: dict
    response_path: str
    timeout_ms: int = 30000
    max_concurrency: int = 4
    rate_per_minute: int = 60
    auth_header: str = "Authorization"
    auth_scheme: str = "Bearer"

    @classmethod
    def load_file(cls, path: str | Path) -> list["ProviderConfig"]:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        entries = raw["providers"] if isinstance(raw, dict) else raw
        return [cls(**entry) for entry in entries]


def _fill_template(node, values: dict):
    if isinstance(node, str):
        out = node
        for key, val in values.items():
            token = "{" + key + "}"
            if out == token and not isinstance(val, str):
                return val  # keep numeric params numeric
            out = out.replace(token, str(val))
        return out
    if isinstance(node, dict):
        return {k: _fill_template(v, values) for k, v in node.items()}
    if isinstance(node, list):
        return [_fill_template(v, values) for v in node]
    return node


def _extract_path(payload, dot_path: str):
    node = payload
    for part in dot_path.split("."):
        if isinstance(node, list):
            node = node[int(part)]
        else:
            node = node[part]
    return node


class _TokenBucket:
    def __init__(self, rate_per_minute: int):
        self.capacity = max(1, rate_per_minute)
        self.tokens = float(self.capacity)
        self.rate = rate_per_minute / 60.0
        self.updated = time.monotonic()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = time.monotonic()
                self.tokens = min(self.capacity, self.tokens + (now - self.updated) * self.rate)
                self.updated = now
                if self.tokens >= 1.0:
                    self.tokens -= 1.0
                    return
                wait = (1.0 - self.tokens) / self.rate
            time.sleep(wait)


class RemoteAnnotator:
    """HTTP adapter for a configured provider. One transport retry, then a
    MissingPrediction; unparseable responses get one fresh request before
    being marked missing as well."""

    def __init__(self, config: ProviderConfig, transport: Optional[httpx.BaseTransport] = None):
        self.config = config
        self.annotator_id = config.annotator_id
        self._bucket = _TokenBucket(config.rate_per_minute)
        self._semaphore = threading.Semaphore(config.max_concurrency)
        self._client = httpx.Client(
            transport=transport,
            timeout=config.timeout_ms / 1000.0,
        )

    def close(self) -> None:
        self._client.close()

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.config.auth_env, "")
        if key:
            value = f"{self.config.auth_scheme} {key}".strip()
            headers[self.config.auth_header] = value
        return headers

    def _call_once(self, prompt: PromptText, params: GenerationParams) -> str:
        body = _fill_template(
            self.config.request_template,
            {
                "prompt": prompt.text,
                "model": self.config.model,
                "temperature": params.temperature,
                "max_tokens": params.max_tokens,
            },
        )
        self._bucket.acquire()
        with self._semaphore:
            response = self._client.post(self.config.base_url, json=body, headers=self._headers())
        response.raise_for_status()
        return str(_extract_path(response.json(), self.config.response_path))

    def _call(self, prompt: PromptText, params: GenerationParams) -> str:
        try:
            return self._call_once(prompt, params)
        except (httpx.TransportError, httpx.HTTPStatusError) as exc:
            logger.warning("annotator %s transport failure, retrying once: %s", self.annotator_id, exc)
            try:
                return self._call_once(prompt, params)
            except (httpx.TransportError, httpx.HTTPStatusError) as exc2:
                raise AnnotatorTransportError(
                    f"annotator {self.annotator_id}: {exc2}"
                ) from exc2

    def annotate(self, prompt: PromptText, params: GenerationParams) -> list[PredictionOrMissing]:
        expected = len(prompt.unit_ids)
        raw = self._call(prompt, params)
        try:
            parsed = parse_response(raw, expected)
        except ResponseParseError as exc:
            logger.warning(
                "annotator %s unparseable response (%s), re-requesting", self.annotator_id, exc
            )
            raw = self._call(prompt, params)
            try:
                parsed = parse_response(raw, expected)
            except ResponseParseError as exc2:
                return [
                    MissingPrediction(self.annotator_id, unit_id, prompt.task, str(exc2))
                    for unit_id in prompt.unit_ids
                ]
        return [
            AnnotatorPrediction(
                annotator_id=self.annotator_id,
                unit_id=unit_id,
                task=prompt.task,
                label=label,
                confidence=confidence,
                raw_response=raw,
                params=params,
            )
            for unit_id, (label, confidence) in zip(prompt.unit_ids, parsed)
        ]


def annotate_many(
    annotator,
    prompts: Sequence[PromptText],
    params: GenerationParams,
    max_workers: Optional[int] = None,
) -> list[list[PredictionOrMissing]]:
    """Fan out one annotator over many prompts; results come back in prompt
    order regardless of completion order."""
    if max_workers is None:
        max_workers = getattr(getattr(annotator, "config", None), "max_concurrency", 1)
    if max_workers <= 1 or len(prompts) <= 1:
        return [annotator.annotate(p, params) for p in prompts]
    results: list[Optional[list[PredictionOrMissing]]] = [None] * len(prompts)
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        futures = {pool.submit(annotator.annotate, p, params): i for i, p in enumerate(prompts)}
        for future, index in futures.items():
            results[index] = future.result()
    return results  # type: ignore[return-value]
