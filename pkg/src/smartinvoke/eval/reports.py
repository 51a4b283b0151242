"""Online report type and text/JSON rendering of offline and online reports."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Sequence

from ..events.types import SUBCLASSES
from .metrics import INTERVAL_LABEL, OfflineReport


@dataclass(frozen=True)
class LatencyStats:
    p50: float
    p95: float
    p99: float


@dataclass(frozen=True)
class OnlineReport:
    """Completion statistics of one replay arm; fractions are of requests received."""

    arm: str
    received: int
    filtered_out: int
    shown: int
    accepted: int
    relative_rate: float | None
    mean_score: float | None
    scored: int
    unscored_accepted: int
    harmonic_mean: float | None
    degenerate: bool = False
    latency: LatencyStats | None = None
    scorer: str = ""

    def __post_init__(self) -> None:
        if self.filtered_out + self.shown != self.received:
            raise ValueError("filtered_out + shown must equal received")
        if self.accepted > self.shown:
            raise ValueError("accepted cannot exceed shown")

    def _frac(self, n: int) -> float | None:
        return n / self.received if self.received else None

    @property
    def filtered_fraction(self) -> float | None:
        return self._frac(self.filtered_out)

    @property
    def shown_fraction(self) -> float | None:
        return self._frac(self.shown)

    @property
    def accepted_fraction(self) -> float | None:
        return self._frac(self.accepted)

    def to_dict(self, include_latency: bool = False) -> dict:
        out = asdict(self)
        out.pop("latency")
        if include_latency:
            out["latency_ms"] = None if self.latency is None else asdict(self.latency)
        out["filtered_fraction"] = self.filtered_fraction
        out["shown_fraction"] = self.shown_fraction
        out["accepted_fraction"] = self.accepted_fraction
        return out


def _pct(x: float | None, digits: int = 1) -> str:
    return "-" if x is None else f"{100 * x:.{digits}f}%"


def _num(x: float | None, digits: int = 3) -> str:
    return "-" if x is None else f"{x:.{digits}f}"


def format_offline_table(reports: Sequence[OfflineReport]) -> str:
    """Accuracy per subclass and macro average, one row per model."""
    header = ["Model", "Manual", "Auto accepted", "Auto rejected", "Macro"]
    rows = []
    for r in reports:
        cells = [r.name or "-"]
        for sub in SUBCLASSES:
            e = r.estimates.get(sub)
            cells.append("-" if e is None else str(e))
        cells.append("-" if r.macro is None else f"{r.macro:.1f}")
        rows.append(cells)
    widths = [max(len(str(x)) for x in col) for col in zip(header, *rows)]
    line = lambda cells: "  ".join(str(c).ljust(w) for c, w in zip(cells, widths)).rstrip()
    out = [line(header), line(["-" * w for w in widths])] + [line(r) for r in rows]
    if any(r.bootstrap_iterations for r in reports):
        out.append(f"± is the {INTERVAL_LABEL}")
    return "\n".join(out)


def format_online_table(reports: Sequence[OnlineReport], include_latency: bool = True) -> str:
    """Columns are arms; rows follow the completion-statistics layout."""
    names = [r.arm for r in reports]
    spec = [
        ("Received", lambda r: str(r.received)),
        ("Filtered out", lambda r: _pct(r.filtered_fraction)),
        ("Shown", lambda r: _pct(r.shown_fraction)),
        ("Accepted", lambda r: _pct(r.accepted_fraction, 2)),
        ("Relative rate", lambda r: _pct(r.relative_rate)),
        ("Proxy score", lambda r: _num(r.mean_score, 2)),
        ("Harmonic mean", lambda r: _num(r.harmonic_mean)),
    ]
    if include_latency:
        spec.append(("Latency p50 (ms)", lambda r: "-" if r.latency is None else f"{r.latency.p50:.2f}"))
    rows = [[label] + [fn(r) for r in reports] for label, fn in spec]
    header = [""] + names
    widths = [max(len(str(x)) for x in col) for col in zip(header, *rows)]
    line = lambda cells: "  ".join(str(c).rjust(w) if i else str(c).ljust(w) for i, (c, w) in enumerate(zip(cells, widths)))
    out = [line(header)] + [line(r) for r in rows]
    flagged = [r.arm for r in reports if r.degenerate]
    if flagged:
        out.append("degenerate arms (nothing shown): " + ", ".join(flagged))
    if reports and reports[0].scorer:
        out.append(f"proxy score: {reports[0].scorer}")
    return "\n".join(out)


def reports_json(reports: Sequence, include_latency: bool = False) -> str:
    items = [
        r.to_dict(include_latency) if isinstance(r, OnlineReport) else r.to_dict()
        for r in reports
    ]
    return json.dumps(items, indent=2, sort_keys=True) + "\n"
