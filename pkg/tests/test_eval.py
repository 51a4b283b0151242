import json

import numpy as np
import pytest

from smartinvoke.eval.f3 import ScorerConfig, f3_from_embeddings, f3_proxy, f_beta
from smartinvoke.eval.metrics import Estimate, OfflineReport
from smartinvoke.eval.offline import (
    EncoderTrainer,
    LogisticTrainer,
    OverlapError,
    evaluate_offline,
    split_indices,
)
from smartinvoke.eval.reports import LatencyStats, OnlineReport, format_offline_table, format_online_table, reports_json
from smartinvoke.events import SyntheticConfig, generate_synthetic
from smartinvoke.events.types import SUBCLASSES
from smartinvoke.models.config import ModelConfig, TrainConfig
from smartinvoke.models.encoder import EncoderClassifier
from smartinvoke.tokenizer import Tokenizer


# ---------------------------------------------------------------- F-beta

def test_f_beta_arithmetic():
    assert f_beta(1.0, 0.5, 3) == pytest.approx(10 * 0.5 / 9.5)
    assert f_beta(0.0, 0.0) == 0.0
    with pytest.raises(ValueError):
        f_beta(0.5, 0.5, 0)


def test_recall_dominates_at_beta_three():
    assert f_beta(0.5, 0.9) > f_beta(0.9, 0.5)
    assert f_beta(0.9, 0.5, 1) == pytest.approx(f_beta(0.5, 0.9, 1))
    assert f_beta(0.6, 0.7) < f_beta(0.6, 0.8)


def test_f3_disjoint_one_hot_tokens():
    eye = np.eye(6)
    assert f3_from_embeddings(eye[:3], eye[3:]) == 0.0
    assert f3_from_embeddings(eye[:3], eye[:3]) == pytest.approx(1.0)


def test_f3_clips_negative_similarity():
    assert f3_from_embeddings(np.array([[1.0, 0.0]]), np.array([[-1.0, 0.0]])) == 0.0


def test_f3_partial_overlap():
    eye = np.eye(4)
    # candidate covers both reference tokens plus two extras: P = 0.5, R = 1
    assert f3_from_embeddings(eye, eye[:2]) == pytest.approx(f_beta(0.5, 1.0))


@pytest.fixture(scope="module")
def scorer():
    enc = EncoderClassifier(ModelConfig(layers=2, hidden=32, heads=4, ffn=64, max_positions=64), seed=0)
    return ScorerConfig(enc, Tokenizer())


def test_f3_proxy_self_similarity(scorer):
    assert f3_proxy("foo.bar(baz)", "foo.bar(baz)", scorer) == pytest.approx(1.0)
    assert 0.0 <= f3_proxy("x + 1", "return foo()", scorer) < 1.0


def test_f3_proxy_empty_inputs(scorer):
    assert f3_proxy("", "abc", scorer) == 0.0
    with pytest.raises(ValueError):
        f3_proxy("abc", "", scorer)
    with pytest.raises(ValueError):
        ScorerConfig(scorer.encoder, scorer.tokenizer, beta=0)


# ------------------------------------------------------------- offline

@pytest.fixture(scope="module")
def pools():
    data = list(generate_synthetic(SyntheticConfig(n_events=600, mixture_weight=1.0), seed=6))
    return data[:500], data[500:]


class OracleTrainer:
    name = "oracle"

    def fit(self, samples, seed):
        return lambda xs: [s.positive for s in xs]


def test_perfect_model_scores_100(pools):
    pool, test = pools
    r = evaluate_offline(OracleTrainer(), pool, test, k=1, n_bootstrap=200)
    assert r.macro == 100.0 and all(r.estimates[s].half_width == 0.0 for s in SUBCLASSES)


def test_overlap_is_refused(pools):
    pool, test = pools
    with pytest.raises(OverlapError):
        evaluate_offline(OracleTrainer(), pool, test + pool[:1], k=1)


def test_splits_are_seeded_nine_to_one():
    a = split_indices(100, 3, seed=2)
    assert [len(s) for s in a] == [90, 90, 90]
    assert all(np.array_equal(x, y) for x, y in zip(a, split_indices(100, 3, seed=2)))
    assert not np.array_equal(a[0], a[1])


def test_logistic_evaluation_is_repeatable(pools):
    pool, test = pools
    runs = [evaluate_offline(LogisticTrainer(), pool, test, k=3, n_bootstrap=300, seed=1) for _ in range(2)]
    assert runs[0].estimates == runs[1].estimates
    assert runs[0].macro > 85  # telemetry-driven rule, telemetry-aware model


def test_encoder_evaluation_is_repeatable(pools):
    pool, test = pools
    trainer = EncoderTrainer(
        ModelConfig(layers=1, hidden=32, heads=4, ffn=64, max_positions=32),
        TrainConfig(epochs=1, batch_size=32), window=32, suffix_cap=8,
        extensions={"head_variant": "dense_concat"}, switch_epoch=None,
    )
    runs = [evaluate_offline(trainer, pool[:200], test[:60], k=2, n_bootstrap=200, seed=4) for _ in range(2)]
    assert runs[0].estimates == runs[1].estimates


# ------------------------------------------------------------- reports

def _online(arm="a", received=10, shown=6, accepted=3, rel=1.0, score=0.8):
    hm = None if score is None else 2 * rel * score / (rel + score)
    return OnlineReport(arm, received, received - shown, shown, accepted, rel, score, 2, 1, hm,
                        latency=LatencyStats(0.1, 0.2, 0.3))


def test_online_report_invariants():
    with pytest.raises(ValueError):
        OnlineReport("a", 10, 3, 6, 1, 1.0, None, 0, 0, None)
    with pytest.raises(ValueError):
        OnlineReport("a", 10, 4, 6, 7, 1.0, None, 0, 0, None)
    r = _online()
    assert r.filtered_fraction + r.shown_fraction == 1.0


def test_online_json_latency_is_opt_in():
    r = _online()
    assert "latency_ms" not in r.to_dict()
    assert r.to_dict(include_latency=True)["latency_ms"] == {"p50": 0.1, "p95": 0.2, "p99": 0.3}
    doc = json.loads(reports_json([r]))
    assert doc[0]["arm"] == "a" and doc[0]["shown_fraction"] == 0.6


def test_tables_render():
    off = OfflineReport({s: Estimate(90.0, 1.5) for s in SUBCLASSES}, 10, 100, "m")
    text = format_offline_table([off])
    assert "90.0 ±1.5" in text and "central 50%" in text
    on = format_online_table([_online("none"), _online("lg", score=None)])
    assert "Harmonic mean" in on and "Latency p50" in on
    assert on.splitlines()[0].split() == ["none", "lg"]
