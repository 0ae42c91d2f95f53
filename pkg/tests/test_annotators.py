"""Response parsing, the deterministic simulated annotator, and the
HTTP-backed remote annotator (exercised against a mock transport)."""

import json
import threading

import httpx
import pytest

from hitloop.annotators import (
    AnnotatorPrediction,
    AnnotatorTransportError,
    GenerationParams,
    MissingPrediction,
    ProviderConfig,
    RemoteAnnotator,
    ResponseParseError,
    SimProfile,
    SimulatedAnnotator,
    annotate_many,
    parse_response,
    sim_predict,
)
from hitloop.corpus import TaskKind
from hitloop.tasking import PromptText


# --- response parsing ------------------------------------------------------


def test_parse_single_trailer():
    assert parse_response("Reasoning...\nLABEL=5 CONFIDENCE=90", 1) == [(5, 90.0)]


def test_parse_out_of_range_label_fails():
    with pytest.raises(ResponseParseError, match="out of range"):
        parse_response("LABEL=6 CONFIDENCE=90", 1)


def test_parse_out_of_range_confidence_fails():
    with pytest.raises(ResponseParseError, match="out of range"):
        parse_response("LABEL=3 CONFIDENCE=150", 1)


def test_parse_three_trailers_in_order():
    raw = "Pane ratings:\nLABEL=2 CONFIDENCE=70\nLABEL=4 CONFIDENCE=85.5\nLABEL=1 CONFIDENCE=60"
    assert parse_response(raw, 3) == [(2, 70.0), (4, 85.5), (1, 60.0)]


def test_parse_no_trailer_fails():
    with pytest.raises(ResponseParseError, match="no LABEL"):
        parse_response("I think it deserves a four.", 1)


def test_parse_count_mismatch_fails():
    with pytest.raises(ResponseParseError, match="expected 2"):
        parse_response("LABEL=3 CONFIDENCE=80", 2)


def test_generation_params_validated():
    with pytest.raises(ValueError):
        GenerationParams(temperature=-0.1)
    with pytest.raises(ValueError):
        GenerationParams(max_tokens=0)


def test_prediction_bounds_validated():
    with pytest.raises(ValueError):
        AnnotatorPrediction("a", "u", TaskKind.QUALITY, 6, 50.0, "", GenerationParams())
    with pytest.raises(ValueError):
        AnnotatorPrediction("a", "u", TaskKind.QUALITY, 3, 101.0, "", GenerationParams())


# --- simulated annotator ---------------------------------------------------


def test_sim_profile_validated():
    with pytest.raises(ValueError):
        SimProfile(hit_rate=1.2)
    with pytest.raises(ValueError):
        SimProfile(hit_rate=0.5, error_spread={3: 1.0})
    with pytest.raises(ValueError):
        SimProfile(hit_rate=0.5, difficulty_scale=2.0)
    with pytest.raises(ValueError):
        SimProfile(hit_rate=0.5, miscalibration=-1.0)


def test_perfect_annotator_always_gold():
    profile = SimProfile(hit_rate=1.0, conf_sd=0.0, conf_correct_mean=95.0)
    for gold in (1, 3, 5):
        for key in ("k1", "k2", "k3"):
            p = sim_predict(profile, gold, key)
            assert (p.label, p.confidence) == (gold, 95.0)


def test_sim_deterministic_per_stream_key():
    profile = SimProfile(hit_rate=0.5, seed=12)
    a = sim_predict(profile, 3, "stream-a")
    b = sim_predict(profile, 3, "stream-a")
    c = sim_predict(profile, 3, "stream-b")
    assert (a.label, a.confidence) == (b.label, b.confidence)
    assert (a.label, a.confidence) != (c.label, c.confidence)


def test_boundary_offsets_reflect():
    up = SimProfile(hit_rate=0.0, error_spread={1: 1.0})
    assert sim_predict(up, 5, "x").label == 4  # 6 reflects to 4
    up2 = SimProfile(hit_rate=0.0, error_spread={2: 1.0})
    assert sim_predict(up2, 5, "x").label == 3  # 7 reflects to 3
    down = SimProfile(hit_rate=0.0, error_spread={-1: 1.0})
    assert sim_predict(down, 1, "x").label == 2  # 0 reflects to 2
    down2 = SimProfile(hit_rate=0.0, error_spread={-2: 1.0})
    assert sim_predict(down2, 1, "x").label == 3  # -1 reflects to 3


def test_interior_offsets_unreflected():
    prof = SimProfile(hit_rate=0.0, error_spread={1: 1.0})
    assert sim_predict(prof, 3, "x").label == 4


def test_hit_rate_monte_carlo():
    profile = SimProfile(hit_rate=0.8, seed=5)
    hits = sum(1 for i in range(10000) if sim_predict(profile, 3, f"mc-{i}").label == 3)
    assert abs(hits / 10000 - 0.8) < 0.02


def test_difficulty_scale_preserves_marginal_hit_rate():
    plain = SimProfile(hit_rate=0.6, seed=5)
    varied = SimProfile(hit_rate=0.6, seed=5, difficulty_scale=0.8)
    n = 10000
    plain_hits = sum(
        1 for i in range(n) if sim_predict(plain, 3, f"d-{i}", unit_id=f"u{i}").label == 3
    )
    varied_hits = sum(
        1 for i in range(n) if sim_predict(varied, 3, f"d-{i}", unit_id=f"u{i}").label == 3
    )
    assert abs(plain_hits / n - 0.6) < 0.02
    assert abs(varied_hits / n - 0.6) < 0.02


def test_difficulty_is_shared_across_annotators():
    # per-unit hit probability shifts the same way for differently seeded profiles
    profiles = [SimProfile(hit_rate=0.5, seed=s, difficulty_scale=1.0) for s in (1, 2, 3)]
    rates = {}
    for unit in ("ua", "ub", "uc", "ud"):
        per_unit = []
        for prof in profiles:
            hits = sum(
                1
                for i in range(800)
                if sim_predict(prof, 3, f"{unit}-{i}", unit_id=unit).label == 3
            )
            per_unit.append(hits / 800)
        rates[unit] = per_unit
        spread = max(per_unit) - min(per_unit)
        assert spread < 0.1, f"unit {unit}: annotators disagree on difficulty: {per_unit}"
    assert max(r[0] for r in rates.values()) - min(r[0] for r in rates.values()) > 0.15


def test_miscalibration_shifts_confidence_per_unit():
    base = SimProfile(hit_rate=0.0, conf_sd=0.0)
    skewed = SimProfile(hit_rate=0.0, conf_sd=0.0, miscalibration=20.0)
    deltas = set()
    for unit in ("ua", "ub", "uc"):
        b = sim_predict(base, 3, "k", unit_id=unit).confidence
        s = sim_predict(skewed, 3, "k", unit_id=unit).confidence
        assert b == 78.0
        deltas.add(round(s - b, 6))
    assert len(deltas) > 1  # shift varies by unit
    for d in deltas:
        assert abs(d) <= 20.0


def test_simulated_annotator_over_prompt(small_corpus):
    profile = SimProfile(hit_rate=1.0, conf_sd=0.0)
    annotator = SimulatedAnnotator("sim-x", profile, small_corpus.gold_label)
    group = small_corpus.query_groups()["q0"]
    prompt = PromptText(
        text="ignored",
        task=TaskKind.QUALITY,
        unit_ids=tuple(u.unit_id for u in group),
    )
    preds = annotator.annotate(prompt, GenerationParams())
    assert [p.label for p in preds] == [
        small_corpus.gold_label(u.unit_id, TaskKind.QUALITY) for u in group
    ]
    assert all(p.annotator_id == "sim-x" for p in preds)


def test_simulated_annotator_needs_gold(small_corpus):
    annotator = SimulatedAnnotator("sim-x", SimProfile(hit_rate=1.0), small_corpus.gold_label)
    prompt = PromptText(text="", task=TaskKind.DIVERSITY, unit_ids=(small_corpus.units[0].unit_id,))
    with pytest.raises(ValueError, match="gold"):
        annotator.annotate(prompt, GenerationParams())


# --- remote annotator ------------------------------------------------------


def _provider(**overrides):
    fields = dict(
        annotator_id="remote-a",
        base_url="https://example.test/v1/complete",
        model="test-model",
        auth_env="TEST_PROVIDER_KEY",
        request_template={
            "model": "{model}",
            "prompt": "{prompt}",
            "temperature": "{temperature}",
            "max_tokens": "{max_tokens}",
        },
        response_path="choices.0.text",
        rate_per_minute=100000,
    )
    fields.update(overrides)
    return ProviderConfig(**fields)


def _prompt(n_units=1):
    return PromptText(
        text="rate this",
        task=TaskKind.QUALITY,
        unit_ids=tuple(f"q1/p{i}" for i in range(n_units)),
    )


def _ok_response(text="LABEL=3 CONFIDENCE=85"):
    return httpx.Response(200, json={"choices": [{"text": text}]})


def test_remote_happy_path(monkeypatch):
    monkeypatch.setenv("TEST_PROVIDER_KEY", "sk-test")
    seen = {}

    def handler(request):
        seen["body"] = json.loads(request.content)
        seen["auth"] = request.headers.get("Authorization")
        return _ok_response()

    annotator = RemoteAnnotator(_provider(), transport=httpx.MockTransport(handler))
    preds = annotator.annotate(_prompt(), GenerationParams(temperature=0.5, max_tokens=250))
    assert len(preds) == 1
    assert (preds[0].label, preds[0].confidence) == (3, 85.0)
    assert seen["auth"] == "Bearer sk-test"
    assert seen["body"]["model"] == "test-model"
    assert seen["body"]["prompt"] == "rate this"
    # numeric placeholders stay numeric in the JSON body
    assert seen["body"]["temperature"] == 0.5
    assert seen["body"]["max_tokens"] == 250
    annotator.close()


def test_remote_no_auth_header_without_env(monkeypatch):
    monkeypatch.delenv("TEST_PROVIDER_KEY", raising=False)
    seen = {}

    def handler(request):
        seen["auth"] = request.headers.get("Authorization")
        return _ok_response()

    annotator = RemoteAnnotator(_provider(), transport=httpx.MockTransport(handler))
    annotator.annotate(_prompt(), GenerationParams())
    assert seen["auth"] is None


def test_remote_retries_transport_failure_once():
    calls = {"n": 0}

    def handler(request):
        calls["n"] += 1
        if calls["n"] == 1:
            raise httpx.ConnectError("boom")
        return _ok_response()

    annotator = RemoteAnnotator(_provider(), transport=httpx.MockTransport(handler))
    preds = annotator.annotate(_prompt(), GenerationParams())
    assert preds[0].label == 3
    assert calls["n"] == 2


def test_remote_persistent_failure_raises():
    def handler(request):
        raise httpx.ConnectError("down")

    annotator = RemoteAnnotator(_provider(), transport=httpx.MockTransport(handler))
    with pytest.raises(AnnotatorTransportError, match="remote-a"):
        annotator.annotate(_prompt(), GenerationParams())


def test_remote_http_error_counts_as_transport_failure():
    def handler(request):
        return httpx.Response(500, text="oops")

    annotator = RemoteAnnotator(_provider(), transport=httpx.MockTransport(handler))
    with pytest.raises(AnnotatorTransportError):
        annotator.annotate(_prompt(), GenerationParams())


def test_remote_reprompts_on_parse_failure():
    calls = {"n": 0}

    def handler(request):
        calls["n"] += 1
        if calls["n"] == 1:
            return _ok_response("no trailer here")
        return _ok_response("LABEL=4 CONFIDENCE=70")

    annotator = RemoteAnnotator(_provider(), transport=httpx.MockTransport(handler))
    preds = annotator.annotate(_prompt(), GenerationParams())
    assert preds[0].label == 4
    assert calls["n"] == 2


def test_remote_double_parse_failure_yields_missing():
    def handler(request):
        return _ok_response("still no trailer")

    annotator = RemoteAnnotator(_provider(), transport=httpx.MockTransport(handler))
    preds = annotator.annotate(_prompt(2), GenerationParams())
    assert len(preds) == 2
    assert all(isinstance(p, MissingPrediction) for p in preds)
    assert all(p.unit_id.startswith("q1/p") for p in preds)


def test_remote_multi_unit_response_maps_in_order():
    def handler(request):
        return _ok_response("LABEL=1 CONFIDENCE=60\nLABEL=5 CONFIDENCE=95")

    annotator = RemoteAnnotator(_provider(), transport=httpx.MockTransport(handler))
    preds = annotator.annotate(_prompt(2), GenerationParams())
    assert [(p.unit_id, p.label) for p in preds] == [("q1/p0", 1), ("q1/p1", 5)]


def test_remote_concurrency_respects_semaphore():
    active = {"now": 0, "peak": 0}
    lock = threading.Lock()

    def handler(request):
        with lock:
            active["now"] += 1
            active["peak"] = max(active["peak"], active["now"])
        try:
            return _ok_response()
        finally:
            with lock:
                active["now"] -= 1

    annotator = RemoteAnnotator(
        _provider(max_concurrency=2), transport=httpx.MockTransport(handler)
    )
    prompts = [_prompt() for _ in range(12)]
    results = annotate_many(annotator, prompts, GenerationParams(), max_workers=8)
    assert len(results) == 12
    assert active["peak"] <= 2


def test_annotate_many_preserves_prompt_order(small_corpus):
    profile = SimProfile(hit_rate=1.0, conf_sd=0.0)
    annotator = SimulatedAnnotator("sim-o", profile, small_corpus.gold_label)
    prompts = [
        PromptText(text="", task=TaskKind.QUALITY, unit_ids=(u.unit_id,))
        for u in small_corpus.units
    ]
    results = annotate_many(annotator, prompts, GenerationParams(), max_workers=4)
    assert [batch[0].unit_id for batch in results] == small_corpus.unit_ids()


def test_provider_config_load_file(tmp_path):
    path = tmp_path / "providers.json"
    path.write_text(
        json.dumps(
            {
                "providers": [
                    {
                        "annotator_id": "a1",
                        "base_url": "https://one.test",
                        "model": "m1",
                        "auth_env": "K1",
                        "request_template": {"prompt": "{prompt}"},
                        "response_path": "text",
                    },
                    {
                        "annotator_id": "a2",
                        "base_url": "https://two.test",
                        "model": "m2",
                        "auth_env": "K2",
                        "request_template": {"prompt": "{prompt}"},
                        "response_path": "text",
                        "rate_per_minute": 30,
                    },
                ]
            }
        ),
        encoding="utf-8",
    )
    providers = ProviderConfig.load_file(path)
    assert [p.annotator_id for p in providers] == ["a1", "a2"]
    assert providers[1].rate_per_minute == 30
