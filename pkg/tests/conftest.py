import numpy as np
import pytest

from smartinvoke.events import CompletionEvent, Dataset, IDE, InvocationKind, Verdict, label


def make_event(
    prefix="def f(x):\n    return x.",
    suffix=")\n",
    *,
    kind="automatic",
    verdict="accepted",
    timestamp=1_700_000_000_000,
    gap=1000,
    language="python",
    ide="vscode",
    user="u0",
    ground_truth=None,
    completion=None,
    pad=5,
):
    doc = len(prefix) + len(suffix) + pad
    return CompletionEvent(
        prefix=prefix,
        suffix=suffix,
        timestamp=timestamp,
        time_since_last_completion=gap,
        document_length=doc,
        cursor_offset=len(prefix),
        language=language,
        ide=IDE(ide),
        invocation_kind=InvocationKind(kind),
        verdict=Verdict(verdict),
        user_id=user,
        ground_truth=ground_truth,
        completion=completion,
    )


def make_dataset(counts: dict[tuple[str, str], int], seed: int = 0) -> Dataset:
    """Dataset with ``counts[(kind, verdict)]`` events of each combination."""
    rng = np.random.default_rng(seed)
    events = []
    t = 1_700_000_000_000
    for (kind, verdict), n in counts.items():
        for _ in range(n):
            t += int(rng.integers(1, 10_000))
            events.append(make_event(f"x = {int(rng.integers(1000))}\ny.", "", kind=kind, verdict=verdict, timestamp=t))
    return Dataset(tuple(label(e) for e in events))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# (criterion number, part, "PASS"/"FAIL", one-line detail), filled by test_acceptance
ACCEPTANCE: list[tuple[int, str, str, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n, part, verdict, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {n}{part}: {verdict}  {detail}")
