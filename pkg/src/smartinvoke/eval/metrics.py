"""Per-subclass accuracy, multi-model bootstrap and online-metric arithmetic."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..events.types import SUBCLASSES, Subclass

log = logging.getLogger(__name__)

INTERVAL_LABEL = "half-width of the central 50% bootstrap interval"


@dataclass(frozen=True)
class Estimate:
    value: float
    half_width: float | None = None

    def __str__(self) -> str:
        if self.half_width is None:
            return f"{self.value:.1f}"
        return f"{self.value:.1f} ±{self.half_width:.1f}"


@dataclass(frozen=True)
class OfflineReport:
    """Accuracy (in percent) per subclass; absent subclasses map to None."""

    estimates: dict[Subclass, Estimate | None]
    n_samples: int = 0
    bootstrap_iterations: int | None = None
    name: str = ""
    warnings: tuple[str, ...] = field(default=())

    @property
    def macro(self) -> float | None:
        present = [e.value for e in self.estimates.values() if e is not None]
        return float(np.mean(present)) if present else None

    def accuracy(self, subclass: Subclass | str) -> float | None:
        e = self.estimates.get(Subclass(subclass))
        return None if e is None else e.value

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "n_samples": self.n_samples,
            "bootstrap_iterations": self.bootstrap_iterations,
            "interval": INTERVAL_LABEL if self.bootstrap_iterations else None,
            "subclasses": {
                s.value: (None if e is None else {"accuracy": e.value, "half_width": e.half_width})
                for s, e in self.estimates.items()
            },
            "macro": self.macro,
            "warnings": list(self.warnings),
        }


def _codes(samples: Sequence) -> np.ndarray:
    index = {s: i for i, s in enumerate(SUBCLASSES)}
    return np.array([index[s.subclass] for s in samples], dtype=np.int64)


def _correct(predictions, samples: Sequence) -> np.ndarray:
    predictions = np.asarray(predictions, dtype=bool)
    if len(predictions) != len(samples):
        raise ValueError(f"{len(predictions)} predictions for {len(samples)} samples")
    truth = np.array([s.positive for s in samples], dtype=bool)
    return predictions == truth


def subclass_accuracy(predictions, samples: Sequence, name: str = "") -> OfflineReport:
    """Fraction of correct invoke decisions within each subclass, in percent."""
    samples = list(samples)
    correct = _correct(predictions, samples)
    codes = _codes(samples)
    estimates: dict[Subclass, Estimate | None] = {}
    warnings = []
    for i, sub in enumerate(SUBCLASSES):
        sel = codes == i
        if not sel.any():
            estimates[sub] = None
            warnings.append(f"no {sub.value} samples; accuracy undefined and left out of the macro average")
            log.warning(warnings[-1])
        else:
            estimates[sub] = Estimate(100.0 * float(correct[sel].mean()))
    return OfflineReport(estimates, len(samples), None, name, tuple(warnings))


def macro_average(values: Sequence[float | None]) -> float:
    present = [v for v in values if v is not None]
    if not present:
        raise ValueError("no subclass accuracy to average")
    return float(np.mean(present))


def bootstrap(
    prediction_sets: Sequence,
    samples: Sequence,
    n: int = 10_000,
    seed: int = 0,
    name: str = "",
) -> OfflineReport:
    """Resample the test set ``n`` times, scoring iteration ``i`` with model ``i mod k``.

    Each iteration draws ``rng.integers(0, N, N)`` from ``default_rng(seed)``.
    A subclass absent from a resample contributes nothing to that iteration.
    Reports the mean over iterations and half the width of the central 50%
    interval.
    """
    if n <= 0:
        raise ValueError("bootstrap needs n >= 1 iterations")
    if len(prediction_sets) == 0:
        raise ValueError("bootstrap needs at least one prediction set")
    samples = list(samples)
    N = len(samples)
    if N == 0:
        raise ValueError("bootstrap needs a nonempty test set")
    codes = _codes(samples)
    # cell id = 2 * subclass + correct, so one bincount gives hits and totals
    cells = np.stack([2 * codes + _correct(p, samples) for p in prediction_sets])
    k = len(prediction_sets)
    rng = np.random.default_rng(seed)
    acc = np.full((n, len(SUBCLASSES)), np.nan)
    for i in range(n):
        idx = rng.integers(0, N, N)
        counts = np.bincount(cells[i % k][idx], minlength=2 * len(SUBCLASSES)).reshape(-1, 2)
        totals = counts.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            acc[i] = 100.0 * counts[:, 1] / totals
    estimates: dict[Subclass, Estimate | None] = {}
    warnings = []
    for j, sub in enumerate(SUBCLASSES):
        col = acc[:, j]
        col = col[~np.isnan(col)]
        if col.size == 0:
            estimates[sub] = None
            warnings.append(f"no {sub.value} samples; accuracy undefined and left out of the macro average")
            continue
        q25, q75 = np.percentile(col, [25, 75])
        estimates[sub] = Estimate(float(col.mean()), float((q75 - q25) / 2.0))
    return OfflineReport(estimates, N, n, name, tuple(warnings))


def harmonic_mean(relative_rate: float, score: float) -> float:
    """2ab / (a + b); zero when both arguments are zero."""
    a, b = float(relative_rate), float(score)
    if a < 0 or b < 0 or math.isnan(a) or math.isnan(b):
        raise ValueError("harmonic mean needs nonnegative arguments")
    if a + b == 0:
        return 0.0
    return 2.0 * a * b / (a + b)
