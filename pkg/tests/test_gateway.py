import asyncio
import hashlib
import io
import json
import logging
import math
import socket
import threading
import time
from collections import Counter, defaultdict

import numpy as np
import pytest

from smartinvoke.events import SyntheticConfig, generate_synthetic
from smartinvoke.events.types import Verdict
from smartinvoke.gateway.decide import (
    EncoderArm,
    FilterRequest,
    LogisticArm,
    PassThrough,
    Reason,
    RequestError,
    decide,
    mid_line,
)
from smartinvoke.gateway.replay import replay, route
from smartinvoke.gateway.serve import DecisionService, LatencyHistogram, handle_line
from smartinvoke.gateway.session import SESSION_GAP_MS, assign_arm, sessionize
from smartinvoke.features import fit_scaling
from smartinvoke.models.config import ModelConfig
from smartinvoke.models.encoder import EncoderClassifier
from smartinvoke.models.logistic import copilot_fixture, logistic_train

MIN = 60_000


def request(prefix="x = foo.bar", suffix=")", rid=1, **kw):
    obj = dict(request_id=rid, prefix=prefix, suffix=suffix, time_since_last_completion=500,
               document_length=len(prefix) + len(suffix) + 10, cursor_offset=len(prefix),
               language="python", ide="vscode")
    obj.update(kw)
    return obj


@pytest.fixture(scope="module")
def encoder_arm():
    data = list(generate_synthetic(SyntheticConfig(n_events=100), seed=1))
    model = EncoderClassifier(ModelConfig(layers=1, hidden=32, heads=4, ffn=64, max_positions=64), seed=0)
    model = model.extend(27, "dense_concat", (0,))
    return EncoderArm(model, window=64, suffix_cap=16, scaling=fit_scaling(data))


# --------------------------------------------------------------- decide

def test_nine_characters_are_suppressed_without_model_work(encoder_arm):
    for arm in (PassThrough(), LogisticArm(copilot_fixture()), encoder_arm):
        before = arm.invocations
        d = decide(arm, FilterRequest.from_dict(request("abcdefgh", "i")))
        assert (d.invoke, d.reason, d.score) == (False, Reason.MIN_LENGTH_RULE, None)
        assert arm.invocations == before


def test_pass_through_invokes_at_ten_characters():
    d = decide(PassThrough(), FilterRequest.from_dict(request("abcdefghi", "j")))
    assert (d.invoke, d.reason) == (True, Reason.MODEL) and d.latency_ms >= 0


def test_length_counts_code_points():
    # 9 code points but 18 UTF-8 bytes
    d = decide(PassThrough(), FilterRequest.from_dict(request("ééééééééé", "")))
    assert d.reason is Reason.MIN_LENGTH_RULE


def test_model_arms_score_and_threshold(encoder_arm):
    req = FilterRequest.from_dict(request("def f(x):\n    return x.", ")"))
    for arm in (LogisticArm(copilot_fixture()), encoder_arm):
        d = decide(arm, req)
        assert d.reason is Reason.MODEL and 0.0 <= d.score <= 1.0
        assert d.invoke == (d.score >= arm.threshold)
        assert decide(arm, req).score == d.score  # stateless


class Exploding:
    name, threshold, invocations = "boom", 0.5, 0

    def score(self, request):
        raise RuntimeError("injected fault")


def test_fail_open_on_exception(caplog):
    with caplog.at_level(logging.ERROR):
        d = decide(Exploding(), FilterRequest.from_dict(request()))
    assert (d.invoke, d.reason, d.score) == (True, Reason.ERROR_FALLBACK, None)
    assert "injected fault" in caplog.text


def test_fail_open_on_model_corrupted_mid_flight(encoder_arm):
    arm = EncoderArm(encoder_arm.model.copy(), window=64, suffix_cap=16, scaling=encoder_arm.scaling)
    req = FilterRequest.from_dict(request())
    assert decide(arm, req).reason is Reason.MODEL
    arm.model.params["head.proj.w"].data[:] = np.nan
    d = decide(arm, req)
    assert (d.invoke, d.reason) == (True, Reason.ERROR_FALLBACK)
    lg = LogisticArm(copilot_fixture())
    lg.model.weights = lg.model.weights[:5]
    assert decide(lg, req).reason is Reason.ERROR_FALLBACK


def test_mid_line_rule_is_opt_in():
    req = FilterRequest.from_dict(request("x = foo(", "bar, baz)"))
    assert mid_line(req)
    assert decide(PassThrough(), req).invoke
    d = decide(PassThrough(), req, mid_line_rule=True)
    assert (d.invoke, d.reason) == (False, Reason.MID_LINE_RULE)
    assert not mid_line(FilterRequest.from_dict(request("x = foo(", ")]; \nmore")))


def test_request_validation():
    with pytest.raises(RequestError) as err:
        FilterRequest.from_dict({**request(rid="r9"), "colour": 1})
    assert err.value.request_id == "r9"
    with pytest.raises(RequestError):
        FilterRequest.from_dict({k: v for k, v in request().items() if k != "ide"})
    with pytest.raises(RequestError):
        FilterRequest.from_dict(request(cursor_offset=-1))
    with pytest.raises(RequestError):
        FilterRequest.from_dict(request(ide="emacs"))
    with pytest.raises(RequestError):
        FilterRequest.from_dict(request(rid=True))


# ---------------------------------------------------------------- serve

def test_handle_line_errors_keep_going():
    seen, lat = set(), []
    flt = PassThrough()
    assert "error" in handle_line(flt, "{oops", seen, lat)
    assert handle_line(flt, json.dumps({"request_id": 4}), seen, lat)["request_id"] == 4
    ok = handle_line(flt, json.dumps(request(rid=5)), seen, lat)
    assert ok == {**ok, "request_id": 5, "invoke": True, "reason": "model"}
    dup = handle_line(flt, json.dumps(request(rid=5)), seen, lat)
    assert "duplicate" in dup["error"] and dup["request_id"] == 5
    assert len(lat) == 1


def test_stdio_loop():
    lines = [json.dumps(request(rid=i)) for i in range(5)] + ["", "not json", json.dumps(request("ab", "", rid="s"))]
    out = io.StringIO()
    service = DecisionService(PassThrough())
    service.run_stdio(io.StringIO("\n".join(lines) + "\n"), out)
    replies = [json.loads(x) for x in out.getvalue().splitlines()]
    assert [r["request_id"] for r in replies] == [0, 1, 2, 3, 4, None, "s"]
    assert replies[-1]["reason"] == "min_length_rule"
    assert service.histogram.to_dict()["count"] == 6


def test_histogram_merge_and_percentiles():
    h = LatencyHistogram()
    h.merge([0.05, 0.3, 3.0])
    h.merge([200.0])
    d = h.to_dict()
    assert d["count"] == 4 and sum(d["counts"]) == 4 and d["counts"][-1] == 1
    assert LatencyHistogram().to_dict()["count"] == 0


def _serve_in_thread(service):
    state, ready = {}, threading.Event()

    def runner():
        async def main():
            state["loop"], state["task"] = asyncio.get_running_loop(), asyncio.current_task()
            await service.run_tcp("127.0.0.1", 0, lambda port: (state.update(port=port), ready.set()))

        try:
            asyncio.run(main())
        except asyncio.CancelledError:
            pass

    thread = threading.Thread(target=runner, daemon=True)
    thread.start()
    assert ready.wait(10)
    return state, thread


def test_eight_concurrent_connections_keep_ids():
    service = DecisionService(LogisticArm(copilot_fixture()))
    state, thread = _serve_in_thread(service)
    results = {}

    def client(c):
        with socket.create_connection(("127.0.0.1", state["port"]), timeout=10) as s:
            f = s.makefile("rw", encoding="utf-8", newline="\n")
            got = []
            for i in range(50):
                rid = f"c{c}-{i}"
                f.write(json.dumps(request(rid=rid, prefix="y = x" * (i % 4 + 1))) + "\n")
                f.flush()
                got.append((rid, json.loads(f.readline())))
            results[c] = got

    clients = [threading.Thread(target=client, args=(c,)) for c in range(8)]
    for t in clients:
        t.start()
    for t in clients:
        t.join(30)
    deadline = time.time() + 10
    while service.histogram.to_dict()["count"] < 400 and time.time() < deadline:
        time.sleep(0.01)
    state["loop"].call_soon_threadsafe(state["task"].cancel)
    thread.join(10)

    assert len(results) == 8
    for got in results.values():
        for rid, reply in got:
            assert reply["request_id"] == rid and reply["reason"] in ("model", "min_length_rule")
    assert service.histogram.to_dict()["count"] == 400


# -------------------------------------------------------------- sessions

def test_gap_rule():
    t0 = 1_000_000
    sessions = sessionize([t0, t0 + 10 * MIN, t0 + 50 * MIN], "u", ["a", "b"])
    assert [s.indices for s in sessions] == [(0, 1), (2,)]
    assert len(sessionize([t0], "u", ["a"])) == 1
    # exactly 30 minutes apart still shares a session
    assert len(sessionize([t0, t0 + SESSION_GAP_MS], "u", ["a"])) == 1
    assert len(sessionize([t0, t0 + SESSION_GAP_MS + 1], "u", ["a"])) == 2


def test_unordered_input_is_reordered_with_warning(caplog):
    with caplog.at_level(logging.WARNING):
        sessions = sessionize([5 * MIN, 0, 100 * MIN], "u", ["a"])
    assert "not time-ordered" in caplog.text
    assert [s.indices for s in sessions] == [(1, 0), (2,)]


def test_sessions_partition_events(rng):
    ts = np.sort(rng.integers(0, 10**9, 300)).tolist()
    sessions = sessionize(ts, "u", ["a", "b", "c"], salt="s")
    covered = sorted(i for s in sessions for i in s.indices)
    assert covered == list(range(300))
    for s in sessions:
        assert s.arm == assign_arm("u", s.start, "s", ["a", "b", "c"])


def test_hash_balance_over_users():
    arms = [f"arm{i}" for i in range(5)]
    share = Counter(assign_arm(f"user{u}", 1_700_000_000_000 + u, "exp", arms) for u in range(1000))
    for arm in arms:
        assert abs(share[arm] / 1000 - 0.2) <= 0.05


# ---------------------------------------------------------------- replay

def _oracle(events, arms, seed):
    """Tally by hand: sessions, sha256 arm choice, min-length rule, threshold."""
    names = list(arms)
    by_user = defaultdict(list)
    for i, e in enumerate(events):
        by_user[e.user_id].append(i)
    arm_of = {}
    for user, idx in by_user.items():
        idx = sorted(idx, key=lambda i: events[i].timestamp)
        start = prev = None
        for i in idx:
            t = events[i].timestamp
            if prev is None or t - prev > 30 * MIN:
                start = t
            prev = t
            digest = hashlib.sha256(f"{user}|{start}|replay-{seed}".encode()).digest()
            arm_of[i] = names[int.from_bytes(digest[:8], "big") % len(names)]
    tallies = {n: Counter() for n in names}
    for i, e in enumerate(events):
        name = arm_of[i]
        t = tallies[name]
        t["received"] += 1
        if len(e.prefix) + len(e.suffix) < 10:
            continue
        model = arms[name]
        if isinstance(model, LogisticArm) and model.model.score_event(e) < model.threshold:
            continue
        t["shown"] += 1
        t["accepted"] += e.verdict is Verdict.ACCEPTED
    return tallies


@pytest.fixture(scope="module")
def replay_log():
    cfg = SyntheticConfig(n_events=1500, n_users=25, prefix_lines=(0, 3), suffix_lines=(0, 1))
    return generate_synthetic(cfg, seed=13).events


@pytest.mark.parametrize("seed", [0, 1])
def test_replay_matches_counting_oracle(replay_log, seed):
    train = list(generate_synthetic(SyntheticConfig(n_events=400), seed=99))
    arms = {"none": PassThrough(), "lg": LogisticArm(logistic_train(train), "lg")}
    reports = replay(replay_log, arms, seed)
    oracle = _oracle(replay_log, arms, seed)
    assert sum(1 for e in replay_log if len(e.prefix) + len(e.suffix) < 10) > 0  # the rule is exercised
    for r in reports:
        o = oracle[r.arm]
        assert (r.received, r.shown, r.accepted) == (o["received"], o["shown"], o["accepted"])
        assert r.filtered_out + r.shown == r.received and r.accepted <= r.shown
    none = reports[0]
    assert none.relative_rate == 1.0
    lg = reports[1]
    assert lg.relative_rate == pytest.approx((lg.accepted / lg.received) / (none.accepted / none.received))


def test_route_is_deterministic_and_seeded(replay_log):
    a = route(replay_log, ["x", "y", "z"], 3)
    assert a == route(replay_log, ["x", "y", "z"], 3)
    assert a != route(replay_log, ["x", "y", "z"], 4)


class SuppressAll:
    name, threshold, invocations = "mute", 2.0, 0

    def score(self, request):
        return 0.0


def test_degenerate_arm_and_missing_none(replay_log):
    reports = replay(replay_log[:300], {"none": PassThrough(), "mute": SuppressAll()}, 0)
    mute = reports[1]
    assert mute.shown == 0 and mute.degenerate and mute.harmonic_mean == 0.0 and mute.mean_score is None
    reports = replay(replay_log[:300], {"mute": SuppressAll()}, 0)
    assert reports[0].relative_rate is None


def test_replay_scores_accepted_completions(replay_log):
    from smartinvoke.eval.f3 import ScorerConfig
    from smartinvoke.tokenizer import Tokenizer

    enc = EncoderClassifier(ModelConfig(layers=1, hidden=32, heads=4, ffn=64, max_positions=64), seed=0)
    reports = replay(replay_log[:400], {"none": PassThrough()}, 0, ScorerConfig(enc, Tokenizer()))
    r = reports[0]
    expected_scored = sum(
        1 for e in replay_log[:400]
        if e.verdict is Verdict.ACCEPTED and len(e.prefix) + len(e.suffix) >= 10 and e.completion and e.ground_truth
    )
    assert r.scored == expected_scored and r.scored + r.unscored_accepted == r.accepted
    assert 0.0 < r.mean_score <= 1.0
    assert r.harmonic_mean == pytest.approx(2 * r.mean_score / (1 + r.mean_score))
    assert r.latency.p50 >= 0 and not math.isnan(r.latency.p99)
