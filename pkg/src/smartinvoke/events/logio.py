"""JSON-lines event logs.

Each line holds one ``CompletionEvent``.  An optional first line of the form
``{"_meta": {"provenance": ..., "seed": ...}}`` carries dataset-level fields so
that a write/read round trip is lossless.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

from .types import (
    Dataset,
    Diagnostic,
    EVENT_FIELDS,
    REQUIRED_EVENT_FIELDS,
    CompletionEvent,
    InvariantViolation,
    Provenance,
    label,
)

META_KEY = "_meta"
_INT_FIELDS = ("timestamp", "time_since_last_completion", "document_length", "cursor_offset")
_STR_FIELDS = ("prefix", "suffix", "language", "user_id")


class LogParseError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.message = message


class MissingFieldError(LogParseError):
    def __init__(self, line: int, field_name: str):
        super().__init__(line, f"missing field {field_name!r}")
        self.field = field_name


def event_from_dict(obj: dict, line: int = 0, strict: bool = True) -> CompletionEvent:
    if not isinstance(obj, dict):
        raise LogParseError(line, "expected a JSON object")
    for name in REQUIRED_EVENT_FIELDS:
        if name not in obj:
            raise MissingFieldError(line, name)
    unknown = sorted(set(obj) - set(EVENT_FIELDS))
    if unknown and strict:
        raise LogParseError(line, f"unknown field(s): {', '.join(unknown)}")
    for name in _INT_FIELDS:
        if not isinstance(obj[name], int) or isinstance(obj[name], bool):
            raise LogParseError(line, f"field {name!r} must be an integer")
    for name in _STR_FIELDS:
        if not isinstance(obj[name], str):
            raise LogParseError(line, f"field {name!r} must be a string")
    kwargs = {k: obj.get(k) for k in EVENT_FIELDS}
    try:
        return CompletionEvent(**kwargs)
    except InvariantViolation as exc:
        raise InvariantViolation(f"line {line}: {exc}") from exc
    except ValueError as exc:
        raise LogParseError(line, str(exc)) from exc


def write_log(dataset: Dataset, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        meta = {"provenance": dataset.provenance.value, "seed": dataset.seed}
        fh.write(json.dumps({META_KEY: meta}, sort_keys=True, ensure_ascii=False) + "\n")
        for s in dataset.samples:
            fh.write(json.dumps(s.event.to_dict(), sort_keys=True, ensure_ascii=False) + "\n")


def read_log(path: str | os.PathLike, strict: bool = True) -> Dataset:
    """Read a JSON-lines event log.

    In strict mode the first bad line raises (``LogParseError``,
    ``MissingFieldError`` or ``InvariantViolation``) and unknown fields are
    rejected.  In lenient mode bad lines are skipped and reported in
    ``Dataset.diagnostics`` and unknown fields are ignored.
    """
    samples = []
    diagnostics = []
    provenance, seed = Provenance.REAL_LOG, None
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise LogParseError(lineno, f"invalid JSON ({exc.msg})") from exc
            if isinstance(obj, dict) and META_KEY in obj:
                meta = obj[META_KEY]
                provenance = Provenance(meta.get("provenance", "real_log"))
                seed = meta.get("seed")
                continue
            samples.append(label(event_from_dict(obj, lineno, strict)))
        except (LogParseError, InvariantViolation) as exc:
            if strict:
                raise
            diagnostics.append(Diagnostic(lineno, str(exc)))
    return Dataset(tuple(samples), provenance, seed, tuple(diagnostics))
