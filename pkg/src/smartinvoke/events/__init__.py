from .balance import EmptySubclassError, Strategy, balance
from .logio import LogParseError, MissingFieldError, event_from_dict, read_log, write_log
from .synthetic import SyntheticConfig, SyntheticConfigError, generate_synthetic, planted_logit
from .types import (
    IDE,
    SUBCLASSES,
    CompletionEvent,
    Dataset,
    Diagnostic,
    InvariantViolation,
    InvocationKind,
    Label,
    LabeledSample,
    Provenance,
    Subclass,
    Verdict,
    label,
)

__all__ = [
    "IDE",
    "SUBCLASSES",
    "CompletionEvent",
    "Dataset",
    "Diagnostic",
    "EmptySubclassError",
    "InvariantViolation",
    "InvocationKind",
    "Label",
    "LabeledSample",
    "LogParseError",
    "MissingFieldError",
    "Provenance",
    "Strategy",
    "Subclass",
    "SyntheticConfig",
    "SyntheticConfigError",
    "Verdict",
    "balance",
    "event_from_dict",
    "generate_synthetic",
    "label",
    "planted_logit",
    "read_log",
    "write_log",
]
