"""Training-distribution balancing by seeded undersampling."""

from __future__ import annotations

import enum

import numpy as np

from .types import Dataset, Label, Subclass, SUBCLASSES, Verdict


class Strategy(str, enum.Enum):
    UNBALANCED = "unbalanced"
    CLASSES = "classes"
    SUBCLASSES = "subclasses"
    BIASED = "biased"


class EmptySubclassError(ValueError):
    pass


def _sample(rng: np.random.Generator, pool: list[int], k: int) -> list[int]:
    if k >= len(pool):
        return list(pool)
    picked = rng.choice(len(pool), size=k, replace=False)
    return [pool[i] for i in picked]


def balance(dataset: Dataset, strategy: Strategy | str, seed: int = 0) -> Dataset:
    """Undersample ``dataset`` according to ``strategy``.

    The result is always a subset of the input in original order.
    ``biased`` behaves like ``subclasses`` except that the manual quota is
    filled with manual-accepted events first and topped up with uniformly
    drawn manual-rejected ones.
    """
    strategy = Strategy(strategy)
    if len(dataset) == 0:
        raise ValueError("cannot balance an empty dataset")
    if strategy is Strategy.UNBALANCED:
        return dataset

    rng = np.random.default_rng(seed)
    by_sub: dict[Subclass, list[int]] = {sc: [] for sc in SUBCLASSES}
    for i, s in enumerate(dataset.samples):
        by_sub[s.subclass].append(i)

    keep: list[int] = []
    if strategy is Strategy.CLASSES:
        pos = [i for i, s in enumerate(dataset.samples) if s.label is Label.POSITIVE]
        neg = [i for i, s in enumerate(dataset.samples) if s.label is Label.NEGATIVE]
        if not pos or not neg:
            missing = "positive" if not pos else "negative"
            raise EmptySubclassError(f"class balancing needs both labels; no {missing} samples")
        n = min(len(pos), len(neg))
        keep = _sample(rng, pos, n) + _sample(rng, neg, n)
    else:
        empty = [sc.value for sc in SUBCLASSES if not by_sub[sc]]
        if empty:
            raise EmptySubclassError(f"subclass(es) with zero members: {', '.join(empty)}")
        n = min(len(v) for v in by_sub.values())
        for sc in SUBCLASSES:
            if strategy is Strategy.BIASED and sc is Subclass.MANUAL:
                accepted = [i for i in by_sub[sc] if dataset.samples[i].event.verdict is Verdict.ACCEPTED]
                rejected = [i for i in by_sub[sc] if dataset.samples[i].event.verdict is not Verdict.ACCEPTED]
                chosen = _sample(rng, accepted, n)
                chosen += _sample(rng, rejected, n - len(chosen))
                keep += chosen
            else:
                keep += _sample(rng, by_sub[sc], n)
    return dataset.subset(sorted(keep))
