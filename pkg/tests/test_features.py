import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smartinvoke.events import SyntheticConfig, generate_synthetic
from smartinvoke.features import (
    BASELINE,
    CHAR_NONE,
    CHAR_OTHER,
    COPILOT_C5,
    JONBERTA,
    LANGUAGES,
    UNKNOWN_LANGUAGE,
    LayoutMismatch,
    ScalingSpec,
    assemble,
    char_index,
    extract_telemetry,
    extract_textual,
    fit_scaling,
    layout_for,
    telemetry_from_fields,
)

from conftest import make_event


def test_offset_percent():
    assert telemetry_from_fields(0, 100, 50, "python", "vscode").t4_offset_percent == 0.5
    assert telemetry_from_fields(0, 0, 0, "python", "vscode").t4_offset_percent == 0.0


def test_language_map():
    assert len(LANGUAGES) == 20
    assert telemetry_from_fields(0, 1, 0, "brainfuck", "jetbrains").t5_language == UNKNOWN_LANGUAGE
    assert telemetry_from_fields(0, 1, 0, "python", "jetbrains").t5_language == LANGUAGES.index("python")


def test_textual_examples():
    t = extract_textual("def f():\n    x.", "")
    assert (t.c1_last_line_len, t.c2_last_line_len_nows) == (6, 2)
    assert t.c4_last_char == t.c5_last_nonws_char == char_index(".")
    empty = extract_textual("", "x")
    assert (empty.c1_last_line_len, empty.c2_last_line_len_nows) == (0, 0)
    assert empty.c4_last_char == empty.c5_last_nonws_char == CHAR_NONE
    assert extract_textual("a", " )").c3_whitespace_after_cursor
    assert not extract_textual("a", ")").c3_whitespace_after_cursor
    assert extract_textual("a", "").c3_whitespace_after_cursor


def test_last_nonwhitespace_char_skips_trailing_blanks():
    t = extract_textual("foo(  \t", "")
    assert t.c4_last_char == char_index("\t") == CHAR_OTHER
    assert t.c5_last_nonws_char == char_index("(")


def test_non_ascii_maps_to_other():
    assert char_index("é") == char_index("~") == CHAR_OTHER  # '~' is 126, just past the range
    assert char_index(" ") == 0 and char_index("}") == 93


def test_log1p_scaling_values():
    spec = ScalingSpec()
    tel = telemetry_from_fields(0, 10, 5, "python", "vscode")
    assert assemble(tel, None, spec, ("t1",)).values[0] == 0.0
    tel = telemetry_from_fields(math.e - 1, 10, 5, "python", "vscode")
    assert assemble(tel, None, spec, ("t1",)).values[0] == pytest.approx(1.0, abs=1e-15)


def test_layout_and_onehots():
    e = make_event(language="go", ide="jetbrains")
    fv = assemble(extract_telemetry(e), extract_textual(e.prefix, e.suffix), ScalingSpec(), BASELINE)
    assert len(fv.values) == len(fv.layout) == len(layout_for(BASELINE))
    for group in ("t5", "t6", "c4", "c5"):
        sel = [i for i, name in enumerate(fv.layout) if name.startswith(group + "=")]
        assert fv.values[sel].sum() == 1.0
    assert fv.values[fv.layout.index("t5=go")] == 1.0
    assert fv.values[fv.layout.index("t6=jetbrains")] == 1.0


def test_jonberta_mask_excludes_textual():
    assert not any(name.startswith("c") for name in layout_for(JONBERTA))
    e = make_event()
    fv = assemble(extract_telemetry(e), None, ScalingSpec(), JONBERTA)
    assert len(fv.values) == 4 + 21 + 2


def test_textual_mask_without_textual_features_is_an_error():
    e = make_event()
    with pytest.raises(LayoutMismatch):
        assemble(extract_telemetry(e), None, ScalingSpec(), COPILOT_C5)
    with pytest.raises(LayoutMismatch):
        layout_for(("t1", "t9"))


def test_mask_order_does_not_change_the_vector():
    e = make_event()
    tel, txt = extract_telemetry(e), extract_textual(e.prefix, e.suffix)
    a = assemble(tel, txt, ScalingSpec(), COPILOT_C5)
    b = assemble(tel, txt, ScalingSpec(), tuple(reversed(COPILOT_C5)))
    assert a.layout == b.layout and np.array_equal(a.values, b.values)


def test_fit_scaling_two_point_and_constant():
    events = [make_event(gap=0), make_event(gap=0)]
    spec = fit_scaling(events, {**ScalingSpec().transforms, "t1": "none"})
    assert spec.std["t1"] == 1e-8
    fv = assemble(extract_telemetry(events[0]), None, spec, ("t1",))
    assert fv.values[0] == 0.0
    events = [make_event(gap=0), make_event(gap=2)]
    spec = fit_scaling(events, {**ScalingSpec().transforms, "t1": "none"})
    assert (spec.mean["t1"], spec.std["t1"]) == (1.0, 1.0)


def test_fit_scaling_matches_single_pass_reference():
    data = generate_synthetic(seed=7)
    spec = fit_scaling(data)
    # Welford's single-pass algorithm over log1p'd raw values
    stats = {}
    for s in data:
        e = s.event
        last = e.prefix.rsplit("\n", 1)[-1]
        raw = {
            "t1": math.log1p(e.time_since_last_completion),
            "t2": math.log1p(e.document_length),
            "t3": math.log1p(e.cursor_offset),
            "t4": e.cursor_offset / max(e.document_length, 1),
            "c1": math.log1p(len(last)),
            "c2": math.log1p(len(last) - sum(ch.isspace() for ch in last)),
        }
        for k, x in raw.items():
            n, mean, m2 = stats.get(k, (0, 0.0, 0.0))
            n += 1
            d = x - mean
            mean += d / n
            m2 += d * (x - mean)
            stats[k] = (n, mean, m2)
    for k, (n, mean, m2) in stats.items():
        assert spec.mean[k] == pytest.approx(mean, rel=1e-12, abs=1e-12)
        assert spec.std[k] == pytest.approx(max(math.sqrt(m2 / n), 1e-8), rel=1e-9)


@settings(max_examples=300, deadline=None)
@given(st.text(max_size=60), st.text(max_size=10))
def test_textual_invariants(prefix, suffix):
    t = extract_textual(prefix, suffix)
    assert 0 <= t.c2_last_line_len_nows <= t.c1_last_line_len
    assert (t.c4_last_char == CHAR_NONE) == (prefix == "")
    # c3 only looks at the first suffix character
    assert t.c3_whitespace_after_cursor == extract_textual(prefix, suffix[:1]).c3_whitespace_after_cursor


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**9), st.integers(0, 10**9))
def test_log1p_is_monotone(x, y):
    spec = ScalingSpec()
    a = assemble(telemetry_from_fields(x, 1, 0, "c", "vscode"), None, spec, ("t1",)).values[0]
    b = assemble(telemetry_from_fields(y, 1, 0, "c", "vscode"), None, spec, ("t1",)).values[0]
    assert (x < y) == (a < b)
