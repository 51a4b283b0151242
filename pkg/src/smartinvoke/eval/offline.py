"""k-split offline evaluation: train k filters on 9:1 splits, bootstrap on a held-out test set."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from typing import Callable, Protocol, Sequence

import numpy as np

from ..events.balance import Strategy, balance
from ..events.types import Dataset, LabeledSample
from ..features import COPILOT_C5, JONBERTA, fit_scaling
from ..models.config import ModelConfig, TrainConfig
from ..models.encoder import EncoderClassifier
from ..models.logistic import LogisticConfig, logistic_train
from ..models.train import encode_samples, predict, train, two_stage
from ..tokenizer import Tokenizer
from .metrics import OfflineReport, bootstrap

Predictor = Callable[[Sequence[LabeledSample]], np.ndarray]


class OverlapError(ValueError):
    pass


class Trainer(Protocol):
    name: str

    def fit(self, samples: Sequence[LabeledSample], seed: int) -> Predictor: ...


def sample_key(sample) -> str:
    event = getattr(sample, "event", sample)
    blob = json.dumps(event.to_dict(), sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def check_disjoint(train: Sequence, test: Sequence) -> None:
    seen = {sample_key(s) for s in train}
    shared = sum(1 for s in test if sample_key(s) in seen)
    if shared:
        raise OverlapError(f"{shared} test sample(s) also occur in the training pool")


@dataclass
class LogisticTrainer:
    include: tuple[str, ...] = COPILOT_C5
    config: LogisticConfig = LogisticConfig()
    strategy: Strategy = Strategy.SUBCLASSES
    name: str = "logistic"

    def fit(self, samples, seed: int) -> Predictor:
        data = balance(Dataset(tuple(samples)), self.strategy, seed)
        model = logistic_train(list(data), self.include, self.config)
        return lambda xs: model.predict(list(xs))


@dataclass
class EncoderTrainer:
    """Trains a fresh encoder; ``extensions`` turns it into a telemetry-aware variant.

    With ``switch_epoch`` set, the base model trains for that many epochs before
    the extensions are added; otherwise the extended model trains from the start.
    """

    model_config: ModelConfig = field(default_factory=ModelConfig)
    train_config: TrainConfig = field(default_factory=TrainConfig)
    tokenizer: Tokenizer = field(default_factory=Tokenizer)
    tokenization: str = "joint"
    window: int = 512
    suffix_cap: int = 128
    strategy: Strategy = Strategy.SUBCLASSES
    extensions: dict | None = None
    switch_epoch: int | None = None
    name: str = "encoder"

    def fit(self, samples, seed: int) -> Predictor:
        data = list(balance(Dataset(tuple(samples)), self.strategy, seed))
        scaling = fit_scaling(data) if self.extensions else None
        enc = encode_samples(data, self.tokenizer, self.tokenization, self.window, self.suffix_cap, scaling, JONBERTA)
        cfg = replace(self.train_config, seed=seed)
        model = EncoderClassifier(self.model_config, seed=seed)
        if self.extensions and self.switch_epoch:
            model = two_stage(model, enc, cfg, self.switch_epoch, **self.extensions).model
        else:
            if self.extensions:
                model = model.extend(enc.features.shape[1], seed=seed, **self.extensions)
            train(model, enc, cfg)

        def run(xs):
            test = encode_samples(list(xs), self.tokenizer, self.tokenization, self.window, self.suffix_cap, scaling, JONBERTA)
            return predict(model, test)

        return run


def split_indices(n: int, k: int, seed: int, train_fraction: float = 0.9) -> list[np.ndarray]:
    """Index sets of the k training splits (each a seeded 9:1 cut of the pool)."""
    out = []
    for j in range(k):
        order = np.random.default_rng([seed, j]).permutation(n)
        out.append(np.sort(order[: int(round(train_fraction * n))]))
    return out


def evaluate_offline(
    trainer: Trainer,
    pool: Sequence[LabeledSample],
    test: Sequence[LabeledSample],
    k: int = 5,
    n_bootstrap: int = 10_000,
    seed: int = 0,
    train_fraction: float = 0.9,
) -> OfflineReport:
    """Train ``k`` filters on splits of ``pool`` and bootstrap their decisions on ``test``."""
    pool, test = list(pool), list(test)
    if k < 1:
        raise ValueError("k must be at least 1")
    check_disjoint(pool, test)
    prediction_sets = []
    for j, idx in enumerate(split_indices(len(pool), k, seed, train_fraction)):
        predictor = trainer.fit([pool[i] for i in idx], seed + j)
        prediction_sets.append(np.asarray(predictor(test), dtype=bool))
    return bootstrap(prediction_sets, test, n_bootstrap, seed, name=getattr(trainer, "name", ""))
