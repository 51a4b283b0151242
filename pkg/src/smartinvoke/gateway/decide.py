"""Per-request invoke decision with the minimum-length rule and fail-open semantics."""

from __future__ import annotations

import enum
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from ..events.types import IDE, CompletionEvent
from ..features import JONBERTA, ScalingSpec, assemble, extract_textual, telemetry_from_fields
from ..models.checkpoint import Checkpoint
from ..models.encoder import EncoderClassifier
from ..models.logistic import LogisticFilter, logistic_predict
from ..tokenizer import Tokenizer

log = logging.getLogger(__name__)

MIN_PROMPT_CHARS = 10
DEFAULT_THRESHOLD = 0.5
# characters that may follow the cursor without counting as mid-line
LINE_CLOSERS = frozenset(")]}>\"'`;,: \t")


class Reason(str, enum.Enum):
    MODEL = "model"
    MIN_LENGTH_RULE = "min_length_rule"
    MID_LINE_RULE = "mid_line_rule"
    ERROR_FALLBACK = "error_fallback"


class RequestError(ValueError):
    def __init__(self, message: str, request_id=None):
        super().__init__(message)
        self.request_id = request_id


@dataclass(frozen=True)
class FilterRequest:
    request_id: str | int
    prefix: str
    suffix: str
    time_since_last_completion: int
    document_length: int
    cursor_offset: int
    language: str
    ide: IDE
    timestamp: int | None = None

    FIELDS = ("request_id", "prefix", "suffix", "time_since_last_completion", "document_length",
              "cursor_offset", "language", "ide", "timestamp")

    @classmethod
    def from_dict(cls, obj) -> "FilterRequest":
        if not isinstance(obj, dict):
            raise RequestError("request must be a JSON object")
        rid = obj.get("request_id")
        unknown = set(obj) - set(cls.FIELDS)
        if unknown:
            raise RequestError(f"unknown request field(s): {sorted(unknown)}", rid)
        missing = [k for k in cls.FIELDS[:-1] if k not in obj]
        if missing:
            raise RequestError(f"missing request field(s): {missing}", rid)
        if not isinstance(rid, (str, int)) or isinstance(rid, bool):
            raise RequestError("request_id must be a string or integer", None)
        try:
            return cls(
                rid,
                _text(obj["prefix"], "prefix"),
                _text(obj["suffix"], "suffix"),
                _count(obj["time_since_last_completion"], "time_since_last_completion"),
                _count(obj["document_length"], "document_length"),
                _count(obj["cursor_offset"], "cursor_offset"),
                _text(obj["language"], "language"),
                IDE(obj["ide"]),
                None if obj.get("timestamp") is None else _count(obj["timestamp"], "timestamp"),
            )
        except ValueError as exc:
            raise RequestError(str(exc), rid) from exc

    @classmethod
    def from_event(cls, event: CompletionEvent, request_id) -> "FilterRequest":
        return cls(
            request_id, event.prefix, event.suffix, event.time_since_last_completion, event.document_length,
            event.cursor_offset, event.language, event.ide, event.timestamp,
        )


def _text(v, name: str) -> str:
    if not isinstance(v, str):
        raise ValueError(f"{name} must be a string")
    return v


def _count(v, name: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int) or v < 0:
        raise ValueError(f"{name} must be a nonnegative integer")
    return v


@dataclass(frozen=True)
class FilterDecision:
    invoke: bool
    score: float | None
    latency_ms: float
    reason: Reason

    def to_dict(self, request_id) -> dict:
        score = None if self.score is None or math.isnan(self.score) else self.score
        return {
            "request_id": request_id,
            "invoke": self.invoke,
            "score": score,
            "latency_ms": self.latency_ms,
            "reason": self.reason.value,
        }


class Filter(Protocol):
    name: str
    threshold: float
    invocations: int

    def score(self, request: FilterRequest) -> float: ...


@dataclass
class PassThrough:
    """The "none" arm: every request that survives the hard rules is invoked."""

    name: str = "none"
    threshold: float = 0.0
    invocations: int = 0

    def score(self, request: FilterRequest) -> float:
        self.invocations += 1
        return 1.0


@dataclass
class LogisticArm:
    model: LogisticFilter
    name: str = "logistic"
    invocations: int = 0

    @property
    def threshold(self) -> float:
        return self.model.threshold

    def score(self, request: FilterRequest) -> float:
        self.invocations += 1
        tel = telemetry_from_fields(
            request.time_since_last_completion, request.document_length, request.cursor_offset, request.language, request.ide
        )
        fv = assemble(tel, extract_textual(request.prefix, request.suffix), self.model.scaling, self.model.include)
        return logistic_predict(self.model, fv)


@dataclass
class EncoderArm:
    model: EncoderClassifier
    tokenizer: Tokenizer = field(default_factory=Tokenizer)
    window: int = 512
    suffix_cap: int = 128
    strategy: str = "joint"
    scaling: ScalingSpec | None = None
    name: str = "encoder"
    threshold: float = DEFAULT_THRESHOLD
    invocations: int = 0

    def __post_init__(self) -> None:
        if self.model.config.has_extensions and self.scaling is None:
            raise ValueError("an extended encoder needs the telemetry scaling it was trained with")
        self._engine = self.model.inference_engine()

    def score(self, request: FilterRequest) -> float:
        self.invocations += 1
        ctx = self.tokenizer.encode_context(request.prefix, request.suffix, self.strategy, self.window, self.suffix_cap)
        feats = None
        if self.model.config.has_extensions:
            tel = telemetry_from_fields(
                request.time_since_last_completion, request.document_length, request.cursor_offset,
                request.language, request.ide,
            )
            feats = assemble(tel, None, self.scaling, JONBERTA).values[None, :]
        p = self.model.predict_proba(ctx.ids[None, :], ctx.attention_mask[None, :], feats, engine=self._engine)
        return float(p[0])


def arm_from_checkpoint(ckpt: Checkpoint, name: str, threshold: float = DEFAULT_THRESHOLD):
    if isinstance(ckpt.model, LogisticFilter):
        ckpt.model.threshold = threshold
        return LogisticArm(ckpt.model, name)
    return EncoderArm(
        ckpt.model,
        window=ckpt.window or 512,
        suffix_cap=ckpt.suffix_cap or 128,
        strategy=ckpt.strategy or "joint",
        scaling=ckpt.scaling,
        name=name,
        threshold=threshold,
    )


def prompt_too_short(request: FilterRequest) -> bool:
    return len(request.prefix) + len(request.suffix) < MIN_PROMPT_CHARS


def mid_line(request: FilterRequest) -> bool:
    """Cursor sits before code on its line, other than closing characters."""
    rest = request.suffix.split("\n", 1)[0]
    return any(ch not in LINE_CLOSERS for ch in rest)


def decide(flt: Filter, request: FilterRequest, mid_line_rule: bool = False) -> FilterDecision:
    """Invoke iff the filter's score reaches its threshold; any failure invokes."""
    start = time.perf_counter()
    try:
        if prompt_too_short(request):
            invoke, score, reason = False, None, Reason.MIN_LENGTH_RULE
        elif mid_line_rule and mid_line(request):
            invoke, score, reason = False, None, Reason.MID_LINE_RULE
        else:
            score = float(flt.score(request))
            if not np.isfinite(score):
                raise FloatingPointError(f"non-finite score {score}")
            invoke, reason = score >= flt.threshold, Reason.MODEL
    except Exception:
        log.exception("filter %s failed; invoking", getattr(flt, "name", "?"))
        invoke, score, reason = True, None, Reason.ERROR_FALLBACK
    return FilterDecision(bool(invoke), score, (time.perf_counter() - start) * 1000.0, reason)
