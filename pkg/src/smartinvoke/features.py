"""Telemetry (T1-T6) and textual (C1-C5) features of a completion request.

The feature vector layout is: scaled scalars, the whitespace-after-cursor bit,
then one-hot blocks for language, IDE, last prefix character and last
non-whitespace prefix character, each restricted to the groups named in the
feature mask.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .events.types import IDE, CompletionEvent

LANGUAGE_MAP_VERSION = 1
# The 20 document languages of the reverse-engineered Copilot filter (VS Code ids).
LANGUAGES: tuple[str, ...] = (
    "javascript", "typescript", "typescriptreact", "python", "vue", "php", "dart", "javascriptreact",
    "go", "css", "cpp", "html", "scss", "markdown", "csharp", "java", "json", "rust", "ruby", "c",
)
UNKNOWN_LANGUAGE = len(LANGUAGES)
N_LANGUAGES = len(LANGUAGES) + 1
_LANG_INDEX = {name: i for i, name in enumerate(LANGUAGES)}

IDES: tuple[IDE, ...] = (IDE.JETBRAINS, IDE.VSCODE)

CHAR_LOW, CHAR_HIGH = 32, 125
CHAR_OTHER = CHAR_HIGH - CHAR_LOW + 1
CHAR_NONE = CHAR_OTHER + 1
N_CHARS = CHAR_NONE + 1

SCALAR_FEATURES = ("t1", "t2", "t3", "t4", "c1", "c2")
ONEHOT_FEATURES = ("t5", "t6", "c4", "c5")
ALL_GROUPS = ("t1", "t2", "t3", "t4", "t5", "t6", "c1", "c2", "c3", "c4", "c5")

# feature masks for the model families
TELEMETRY_T1_5 = ("t1", "t2", "t3", "t4", "t5")
TEXTUAL_C1_4 = TELEMETRY_T1_5 + ("c1", "c2", "c3", "c4")
COPILOT_C5 = TEXTUAL_C1_4 + ("c5",)
BASELINE = COPILOT_C5 + ("t6",)
JONBERTA = ("t1", "t2", "t3", "t4", "t5", "t6")
MASKS = {
    "telemetry": TELEMETRY_T1_5,
    "textual": TEXTUAL_C1_4,
    "copilot": COPILOT_C5,
    "baseline": BASELINE,
    "jonberta": JONBERTA,
}

DEFAULT_TRANSFORMS = {"t1": "log1p", "t2": "log1p", "t3": "log1p", "t4": "none", "c1": "log1p", "c2": "log1p"}
STD_FLOOR = 1e-8


class LayoutMismatch(ValueError):
    pass


def language_index(language: str) -> int:
    return _LANG_INDEX.get(language.lower(), UNKNOWN_LANGUAGE)


def char_index(ch: str | None) -> int:
    if ch is None:
        return CHAR_NONE
    code = ord(ch)
    if CHAR_LOW <= code <= CHAR_HIGH:
        return code - CHAR_LOW
    return CHAR_OTHER


@dataclass(frozen=True)
class TelemetryFeatures:
    t1_time_since_last: float
    t2_document_length: float
    t3_cursor_offset: float
    t4_offset_percent: float
    t5_language: int
    t6_ide: int


@dataclass(frozen=True)
class TextualFeatures:
    c1_last_line_len: int
    c2_last_line_len_nows: int
    c3_whitespace_after_cursor: bool
    c4_last_char: int
    c5_last_nonws_char: int


def extract_telemetry(event: CompletionEvent) -> TelemetryFeatures:
    return telemetry_from_fields(
        event.time_since_last_completion, event.document_length, event.cursor_offset, event.language, event.ide
    )


def telemetry_from_fields(
    time_since_last: int, document_length: int, cursor_offset: int, language: str, ide: IDE | str
) -> TelemetryFeatures:
    t4 = cursor_offset / max(document_length, 1)
    return TelemetryFeatures(
        t1_time_since_last=float(time_since_last),
        t2_document_length=float(document_length),
        t3_cursor_offset=float(cursor_offset),
        t4_offset_percent=min(max(t4, 0.0), 1.0),
        t5_language=language_index(language),
        t6_ide=IDES.index(IDE(ide)),
    )


def extract_textual(prefix: str, suffix: str) -> TextualFeatures:
    last_line = prefix.rsplit("\n", 1)[-1]
    c1 = len(last_line)
    c2 = c1 - sum(1 for ch in last_line if ch.isspace())
    c3 = suffix == "" or suffix[0].isspace()
    c4 = char_index(prefix[-1] if prefix else None)
    stripped = prefix.rstrip()
    c5 = char_index(stripped[-1] if stripped else None)
    return TextualFeatures(c1, c2, c3, c4, c5)


@dataclass(frozen=True)
class ScalingSpec:
    """Per-feature transforms plus optional standardization statistics."""

    transforms: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_TRANSFORMS))
    mean: dict[str, float] | None = None
    std: dict[str, float] | None = None

    @property
    def standardized(self) -> bool:
        return self.mean is not None

    def to_dict(self) -> dict:
        return {"transforms": dict(self.transforms), "mean": self.mean, "std": self.std}

    @classmethod
    def from_dict(cls, obj: dict) -> "ScalingSpec":
        return cls(dict(obj["transforms"]), obj.get("mean"), obj.get("std"))


def _raw_scalars(tel: TelemetryFeatures, txt: TextualFeatures | None) -> dict[str, float]:
    out = {
        "t1": tel.t1_time_since_last,
        "t2": tel.t2_document_length,
        "t3": tel.t3_cursor_offset,
        "t4": tel.t4_offset_percent,
    }
    if txt is not None:
        out["c1"] = float(txt.c1_last_line_len)
        out["c2"] = float(txt.c2_last_line_len_nows)
    return out


def _transform(value: float, how: str) -> float:
    if how == "log1p":
        return math.log1p(value)
    if how == "none":
        return value
    raise ValueError(f"unknown transform {how!r}")


def fit_scaling(samples: Iterable, transforms: dict[str, str] | None = None) -> ScalingSpec:
    """Population mean/stddev of every post-transform scalar feature."""
    transforms = dict(transforms or DEFAULT_TRANSFORMS)
    columns: dict[str, list[float]] = {k: [] for k in SCALAR_FEATURES}
    for s in samples:
        event = getattr(s, "event", s)
        row = _raw_scalars(extract_telemetry(event), extract_textual(event.prefix, event.suffix))
        for k in SCALAR_FEATURES:
            columns[k].append(_transform(row[k], transforms[k]))
    if not columns["t1"]:
        raise ValueError("cannot fit scaling on an empty dataset")
    mean = {k: float(np.mean(v)) for k, v in columns.items()}
    std = {k: max(float(np.std(v)), STD_FLOOR) for k, v in columns.items()}
    return ScalingSpec(transforms, mean, std)


def layout_for(include: Sequence[str]) -> tuple[str, ...]:
    """Names of every position of a feature vector built with ``include``."""
    unknown = set(include) - set(ALL_GROUPS)
    if unknown:
        raise LayoutMismatch(f"unknown feature group(s): {sorted(unknown)}")
    names: list[str] = [k for k in SCALAR_FEATURES if k in include]
    if "c3" in include:
        names.append("c3")
    if "t5" in include:
        names += [f"t5={lang}" for lang in LANGUAGES] + ["t5=<unknown>"]
    if "t6" in include:
        names += [f"t6={ide.value}" for ide in IDES]
    for group in ("c4", "c5"):
        if group in include:
            names += [f"{group}={code}" for code in range(CHAR_LOW, CHAR_HIGH + 1)]
            names += [f"{group}=<other>", f"{group}=<none>"]
    return tuple(names)


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    layout: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.values) != len(self.layout):
            raise LayoutMismatch(f"{len(self.values)} values for a {len(self.layout)}-position layout")


def assemble(
    telemetry: TelemetryFeatures,
    textual: TextualFeatures | None,
    spec: ScalingSpec,
    include: Sequence[str],
) -> FeatureVector:
    include = tuple(include)
    layout = layout_for(include)
    if textual is None and any(g.startswith("c") for g in include):
        raise LayoutMismatch("textual features requested but none supplied")
    raw = _raw_scalars(telemetry, textual)
    values: list[float] = []
    for k in SCALAR_FEATURES:
        if k not in include:
            continue
        v = _transform(raw[k], spec.transforms.get(k, "none"))
        if spec.standardized:
            v = (v - spec.mean[k]) / spec.std[k]
        values.append(v)
    if "c3" in include:
        values.append(1.0 if textual.c3_whitespace_after_cursor else 0.0)
    blocks = []
    if "t5" in include:
        blocks.append((N_LANGUAGES, telemetry.t5_language))
    if "t6" in include:
        blocks.append((len(IDES), telemetry.t6_ide))
    if "c4" in include:
        blocks.append((N_CHARS, textual.c4_last_char))
    if "c5" in include:
        blocks.append((N_CHARS, textual.c5_last_nonws_char))
    for width, hot in blocks:
        onehot = [0.0] * width
        onehot[hot] = 1.0
        values += onehot
    return FeatureVector(np.asarray(values, dtype=np.float64), layout)


def event_vector(event: CompletionEvent, spec: ScalingSpec, include: Sequence[str]) -> FeatureVector:
    return assemble(extract_telemetry(event), extract_textual(event.prefix, event.suffix), spec, include)


def feature_matrix(samples: Iterable, spec: ScalingSpec, include: Sequence[str]) -> np.ndarray:
    rows = [event_vector(getattr(s, "event", s), spec, include).values for s in samples]
    if not rows:
        return np.zeros((0, len(layout_for(include))))
    return np.stack(rows)
