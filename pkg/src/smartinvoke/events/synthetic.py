"""Seeded synthetic completion logs with a planted invocation rule.

The planted logit mixes two predicates:

* telemetry: a long time since the last completion raises the odds;
* context: the prefix ends on a trigger character (``.`` or ``(``) *and* the
  cursor sits directly before a closing character.

``mixture_weight`` = 1 makes labels depend on telemetry only, 0 on context
only.  Filler code never contains the trigger or closing characters, so the
context predicate is visible only around the cursor: the prefix half needs the
prefix, the suffix half needs the suffix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .types import IDE, CompletionEvent, Dataset, InvocationKind, Provenance, Verdict

TRIGGER_CHARS = (".", "(")
CLOSING_CHARS = (")", "]", "}")

_IDENTS = (
    "count", "total", "value", "index", "result", "items", "name", "buffer", "offset", "config",
    "user", "node", "length", "data", "flag", "cache", "score", "path", "limit", "state",
)
_OPS = (" + ", " - ", " * ", " == ", " = ")
_KEYWORDS = ("return ", "if ", "while ", "yield ", "not ")


class SyntheticConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SyntheticConfig:
    n_events: int = 3000
    n_users: int = 40
    languages: dict[str, float] = field(
        default_factory=lambda: {
            "python": 0.3, "java": 0.15, "javascript": 0.15, "typescript": 0.1, "go": 0.05,
            "csharp": 0.05, "php": 0.05, "rust": 0.05, "kotlin": 0.05, "c": 0.05,
        }
    )
    mixture_weight: float = 0.5
    sharpness: float = 6.0
    # reference gap (ms) at which the telemetry predicate is neutral
    telemetry_pivot_ms: float = 4000.0
    manual_share: float = 0.55
    manual_accept_rate: float = 0.53
    ground_truth_fraction: float = 0.8
    trigger_rate: float = 0.5
    closer_rate: float = 0.5
    prefix_lines: tuple[int, int] = (2, 30)
    suffix_lines: tuple[int, int] = (0, 12)
    start_timestamp: int = 1_700_000_000_000

    def validate(self) -> None:
        if self.n_events < 1 or self.n_users < 1:
            raise SyntheticConfigError("n_events and n_users must be positive")
        if not 0.0 <= self.mixture_weight <= 1.0:
            raise SyntheticConfigError("mixture_weight must lie in [0, 1]")
        if not self.languages or any(w < 0 for w in self.languages.values()) or sum(self.languages.values()) <= 0:
            raise SyntheticConfigError("languages must be a nonempty mix of nonnegative weights")
        for name in ("manual_share", "manual_accept_rate", "ground_truth_fraction", "trigger_rate", "closer_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise SyntheticConfigError(f"{name} must lie in [0, 1]")
        for name in ("prefix_lines", "suffix_lines"):
            lo, hi = getattr(self, name)
            if lo < 0 or hi < lo:
                raise SyntheticConfigError(f"{name} must be an ordered nonnegative range")
        if self.sharpness <= 0:
            raise SyntheticConfigError("sharpness must be positive")

    @classmethod
    def from_dict(cls, obj: dict) -> "SyntheticConfig":
        obj = dict(obj)
        for key in ("prefix_lines", "suffix_lines"):
            if key in obj:
                obj[key] = tuple(obj[key])
        try:
            return cls(**obj)
        except TypeError as exc:
            raise SyntheticConfigError(str(exc)) from exc


def telemetry_score(gap_ms: int, pivot_ms: float) -> float:
    """Signed telemetry predicate in roughly [-2, 2]."""
    return float(np.clip(math.log(max(gap_ms, 1) / pivot_ms) / 1.5, -2.0, 2.0))


def context_score(prefix: str, suffix: str) -> float:
    hit = prefix.endswith(TRIGGER_CHARS) and suffix[:1] in CLOSING_CHARS
    return 1.0 if hit else -1.0


def planted_logit(event: CompletionEvent, config: SyntheticConfig) -> float:
    t = telemetry_score(event.time_since_last_completion, config.telemetry_pivot_ms)
    c = context_score(event.prefix, event.suffix)
    m = config.mixture_weight
    return config.sharpness * (m * t + (1.0 - m) * c)


def _ident(rng: np.random.Generator) -> str:
    name = _IDENTS[rng.integers(len(_IDENTS))]
    if rng.random() < 0.4:
        name += f"_{rng.integers(100)}"
    return name


def _filler_line(rng: np.random.Generator) -> str:
    indent = "    " * int(rng.integers(0, 3))
    kind = rng.integers(4)
    if kind == 0:
        body = f"{_ident(rng)} = {_ident(rng)}{_OPS[rng.integers(4)]}{rng.integers(1000)}"
    elif kind == 1:
        body = f"{_KEYWORDS[rng.integers(len(_KEYWORDS))]}{_ident(rng)}{_OPS[rng.integers(len(_OPS))]}{_ident(rng)}"
    elif kind == 2:
        body = f"# {_ident(rng)} {_ident(rng)}"
    else:
        body = f"{_ident(rng)} = {rng.integers(10_000)}"
    return indent + body


def _lines(rng: np.random.Generator, lo: int, hi: int) -> list[str]:
    return [_filler_line(rng) for _ in range(int(rng.integers(lo, hi + 1)))]


def _context(rng: np.random.Generator, config: SyntheticConfig) -> tuple[str, str]:
    head = _lines(rng, *config.prefix_lines)
    indent = "    " * int(rng.integers(0, 3))
    if rng.random() < config.trigger_rate:
        last = indent + _ident(rng) + TRIGGER_CHARS[rng.integers(len(TRIGGER_CHARS))]
    else:
        word = _ident(rng)
        last = indent + word[: max(1, int(rng.integers(1, len(word) + 1)))]
    prefix = "\n".join(head + [last])

    tail = _lines(rng, *config.suffix_lines)
    if rng.random() < config.closer_rate:
        first = CLOSING_CHARS[rng.integers(len(CLOSING_CHARS))] + (":" if rng.random() < 0.5 else "")
    else:
        r = rng.random()
        first = "" if r < 0.2 else (" = 0" if r < 0.5 else _ident(rng))
    suffix = "\n".join([first] + tail) if tail or first else ""
    return prefix, suffix


def generate_synthetic(config: SyntheticConfig | None = None, seed: int = 0) -> Dataset:
    """Generate ``config.n_events`` labeled events, deterministic in ``seed``."""
    config = config or SyntheticConfig()
    config.validate()
    rng = np.random.default_rng(seed)
    langs = list(config.languages)
    weights = np.asarray([config.languages[k] for k in langs], dtype=float)
    weights /= weights.sum()
    clocks = [config.start_timestamp + int(rng.integers(0, 3_600_000)) for _ in range(config.n_users)]
    user_ide = [IDE.JETBRAINS if rng.random() < 0.5 else IDE.VSCODE for _ in range(config.n_users)]

    events = []
    for _ in range(config.n_events):
        u = int(rng.integers(config.n_users))
        # log-uniform gap between 50 ms and 2 h
        gap = int(round(math.exp(rng.uniform(math.log(50), math.log(7_200_000)))))
        clocks[u] += gap
        prefix, suffix = _context(rng, config)
        tail_pad = int(rng.integers(0, 200))
        doc_len = len(prefix) + len(suffix) + tail_pad
        language = langs[int(rng.choice(len(langs), p=weights))]

        m = config.mixture_weight
        logit = config.sharpness * (
            m * telemetry_score(gap, config.telemetry_pivot_ms) + (1 - m) * context_score(prefix, suffix)
        )
        positive = rng.random() < 1.0 / (1.0 + math.exp(-logit))
        if positive and rng.random() < config.manual_share:
            kind = InvocationKind.MANUAL
            verdict = Verdict.ACCEPTED if rng.random() < config.manual_accept_rate else Verdict.REJECTED
        else:
            kind = InvocationKind.AUTOMATIC
            verdict = Verdict.ACCEPTED if positive else Verdict.REJECTED

        completion = _ident(rng) + ("()" if rng.random() < 0.5 else "")
        ground_truth = None
        if rng.random() < config.ground_truth_fraction:
            if verdict is Verdict.ACCEPTED:
                ground_truth = completion if rng.random() < 0.7 else completion + f" + {_ident(rng)}"
            else:
                ground_truth = _filler_line(rng).strip()

        events.append(
            CompletionEvent(
                prefix=prefix,
                suffix=suffix,
                timestamp=clocks[u],
                time_since_last_completion=gap,
                document_length=doc_len,
                cursor_offset=len(prefix),
                language=language,
                ide=user_ide[u],
                invocation_kind=kind,
                verdict=verdict,
                user_id=f"user-{u:04d}",
                ground_truth=ground_truth,
                completion=completion,
            )
        )
    return Dataset.from_events(events, Provenance.SYNTHETIC, seed)
