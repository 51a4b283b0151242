"""Completion events, labeled samples and datasets."""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass, field, fields
from typing import Iterable, Sequence


class InvariantViolation(ValueError):
    """An event or dataset breaks one of its structural invariants."""


class InvocationKind(str, enum.Enum):
    MANUAL = "manual"
    AUTOMATIC = "automatic"


class Verdict(str, enum.Enum):
    ACCEPTED = "accepted"
    REJECTED = "rejected"


class IDE(str, enum.Enum):
    JETBRAINS = "jetbrains"
    VSCODE = "vscode"


class Subclass(str, enum.Enum):
    MANUAL = "manual"
    AUTO_ACCEPTED = "auto_accepted"
    AUTO_REJECTED = "auto_rejected"


class Label(str, enum.Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"


class Provenance(str, enum.Enum):
    REAL_LOG = "real_log"
    SYNTHETIC = "synthetic"


SUBCLASSES: tuple[Subclass, ...] = (Subclass.MANUAL, Subclass.AUTO_ACCEPTED, Subclass.AUTO_REJECTED)


@dataclass(frozen=True)
class CompletionEvent:
    prefix: str
    suffix: str
    timestamp: int
    time_since_last_completion: int
    document_length: int
    cursor_offset: int
    language: str
    ide: IDE
    invocation_kind: InvocationKind
    verdict: Verdict
    user_id: str
    ground_truth: str | None = None
    completion: str | None = None
    session_hint: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "ide", IDE(self.ide))
        object.__setattr__(self, "invocation_kind", InvocationKind(self.invocation_kind))
        object.__setattr__(self, "verdict", Verdict(self.verdict))
        if not 0 <= self.cursor_offset <= self.document_length:
            raise InvariantViolation(
                f"cursor_offset={self.cursor_offset} outside [0, document_length={self.document_length}]"
            )
        if self.time_since_last_completion < 0:
            raise InvariantViolation(f"negative time_since_last_completion={self.time_since_last_completion}")
        if len(self.prefix) + len(self.suffix) > self.document_length:
            raise InvariantViolation(
                f"prefix+suffix length {len(self.prefix) + len(self.suffix)} exceeds "
                f"document_length={self.document_length}"
            )

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            out[f.name] = value.value if isinstance(value, enum.Enum) else value
        return out


EVENT_FIELDS: tuple[str, ...] = tuple(f.name for f in fields(CompletionEvent))
REQUIRED_EVENT_FIELDS: tuple[str, ...] = tuple(
    f.name for f in fields(CompletionEvent) if f.name not in ("ground_truth", "completion", "session_hint")
)


@dataclass(frozen=True)
class LabeledSample:
    event: CompletionEvent
    subclass: Subclass
    label: Label

    def __post_init__(self) -> None:
        positive = self.subclass in (Subclass.MANUAL, Subclass.AUTO_ACCEPTED)
        if positive != (self.label is Label.POSITIVE):
            raise InvariantViolation(f"label {self.label.value} inconsistent with subclass {self.subclass.value}")
        if (self.subclass is Subclass.MANUAL) != (self.event.invocation_kind is InvocationKind.MANUAL):
            raise InvariantViolation("subclass manual must coincide with a manual invocation")

    @property
    def positive(self) -> bool:
        return self.label is Label.POSITIVE


def label(event: CompletionEvent) -> LabeledSample:
    """Assign the training target of an invocation.

    Manual invocations are positive whatever the verdict; automatic ones are
    positive only when the suggestion was accepted.
    """
    if event.invocation_kind is InvocationKind.MANUAL:
        subclass = Subclass.MANUAL
    elif event.verdict is Verdict.ACCEPTED:
        subclass = Subclass.AUTO_ACCEPTED
    else:
        subclass = Subclass.AUTO_REJECTED
    lab = Label.NEGATIVE if subclass is Subclass.AUTO_REJECTED else Label.POSITIVE
    return LabeledSample(event=event, subclass=subclass, label=lab)


@dataclass(frozen=True)
class Diagnostic:
    line: int
    message: str


@dataclass(frozen=True)
class Dataset:
    samples: tuple[LabeledSample, ...]
    provenance: Provenance = Provenance.REAL_LOG
    seed: int | None = None
    diagnostics: tuple[Diagnostic, ...] = field(default=(), compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "samples", tuple(self.samples))
        object.__setattr__(self, "provenance", Provenance(self.provenance))

    @classmethod
    def from_events(
        cls, events: Iterable[CompletionEvent], provenance: Provenance = Provenance.REAL_LOG, seed: int | None = None
    ) -> "Dataset":
        return cls(tuple(label(e) for e in events), provenance, seed)

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __getitem__(self, idx):
        return self.samples[idx]

    @property
    def events(self) -> list[CompletionEvent]:
        return [s.event for s in self.samples]

    def subclass_counts(self) -> dict[Subclass, int]:
        counts = Counter(s.subclass for s in self.samples)
        return {sc: counts.get(sc, 0) for sc in SUBCLASSES}

    def subset(self, indices: Sequence[int]) -> "Dataset":
        return Dataset(tuple(self.samples[i] for i in indices), self.provenance, self.seed)

    def labels(self) -> list[int]:
        return [int(s.positive) for s in self.samples]
