"""Offline A/B simulation: route logged requests through per-session arms and tally outcomes."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..eval.f3 import SCORER_NAME, ScorerConfig, f3_proxy
from ..eval.metrics import harmonic_mean
from ..eval.reports import LatencyStats, OnlineReport
from ..events.types import Verdict
from .decide import Filter, FilterRequest, decide
from .session import sessionize

NONE_ARM = "none"


@dataclass
class _Tally:
    received: int = 0
    shown: int = 0
    accepted: int = 0
    scores: list[float] = field(default_factory=list)
    unscored: int = 0
    latencies: list[float] = field(default_factory=list)


def replay_salt(seed: int) -> str:
    return f"replay-{seed}"


def route(events: Sequence, arms: Sequence[str], seed: int) -> list[str]:
    """Arm of every event, by index, after per-user sessionization."""
    by_user: dict[str, list[int]] = defaultdict(list)
    for i, e in enumerate(events):
        by_user[e.user_id].append(i)
    routed = [""] * len(events)
    salt = replay_salt(seed)
    for user in sorted(by_user):
        idx = by_user[user]
        for sess in sessionize([events[i].timestamp for i in idx], user, list(arms), salt):
            for j in sess.indices:
                routed[idx[j]] = sess.arm
    return routed


def replay(
    events: Sequence,
    arms: Mapping[str, Filter],
    seed: int = 0,
    scorer: ScorerConfig | None = None,
    mid_line_rule: bool = False,
) -> list[OnlineReport]:
    """One report per arm, in the order of ``arms``.

    An event counts as accepted when its arm showed the completion and the
    logged verdict is accepted.  Accepted completions with both a completion
    text and ground truth are scored with the proxy scorer.
    """
    events = [getattr(e, "event", e) for e in events]
    names = list(arms)
    routed = route(events, names, seed)
    tallies = {n: _Tally() for n in names}
    for i, (event, arm) in enumerate(zip(events, routed)):
        t = tallies[arm]
        t.received += 1
        d = decide(arms[arm], FilterRequest.from_event(event, i), mid_line_rule)
        t.latencies.append(d.latency_ms)
        if not d.invoke:
            continue
        t.shown += 1
        if event.verdict is Verdict.ACCEPTED:
            t.accepted += 1
            if scorer is not None and event.completion is not None and event.ground_truth:
                t.scores.append(f3_proxy(event.completion, event.ground_truth, scorer))
            else:
                t.unscored += 1

    def rate(t: _Tally) -> float | None:
        return t.accepted / t.received if t.received else None

    base = rate(tallies[NONE_ARM]) if NONE_ARM in tallies else None
    reports = []
    for name in names:
        t = tallies[name]
        r = rate(t)
        relative = None
        if name == NONE_ARM and t.received:
            relative = 1.0
        elif base and r is not None:
            relative = r / base
        score = float(np.mean(t.scores)) if t.scores else None
        degenerate = t.shown == 0
        if degenerate:
            hm = 0.0
        elif relative is None or score is None:
            hm = None
        else:
            hm = harmonic_mean(relative, score)
        lat = None
        if t.latencies:
            p50, p95, p99 = np.percentile(t.latencies, [50, 95, 99])
            lat = LatencyStats(float(p50), float(p95), float(p99))
        reports.append(
            OnlineReport(
                name, t.received, t.received - t.shown, t.shown, t.accepted, relative, score, len(t.scores),
                t.unscored, hm, degenerate, lat, SCORER_NAME if scorer is not None else "",
            )
        )
    return reports
