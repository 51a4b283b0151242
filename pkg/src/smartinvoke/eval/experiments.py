"""Direction-of-effect experiments on planted-rule synthetic data.

``modality_separation`` trains a telemetry-only logistic filter and encoders
under the three tokenization strategies, then scores each on a held-out
split.  ``two_stage_comparison`` contrasts a base run with a run that adds
the telemetry extensions halfway through, at equal total epochs.

Both run at a reduced window (32 tokens) so that a single CPU core finishes
in minutes; the planted rule only needs the characters next to the cursor.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..events.balance import Strategy, balance
from ..events.synthetic import SyntheticConfig, generate_synthetic
from ..features import JONBERTA, TELEMETRY_T1_5, fit_scaling
from ..models.config import ModelConfig, TrainConfig
from ..models.encoder import EncoderClassifier
from ..models.logistic import logistic_train
from ..models.train import TrainingDiverged, encode_samples, predict, train, training_loss, two_stage
from ..tokenizer import Tokenizer
from .metrics import OfflineReport, subclass_accuracy

EXPERIMENT_WINDOW = 32
EXPERIMENT_SUFFIX_CAP = 8
EXPERIMENT_MODEL = ModelConfig(layers=2, max_positions=EXPERIMENT_WINDOW)
EXPERIMENT_TRAIN = TrainConfig(learning_rate=5e-4, batch_size=16, epochs=12)


@dataclass
class SeparationResult:
    seed: int
    reports: dict[str, OfflineReport] = field(default_factory=dict)

    def macro(self, name: str) -> float:
        return self.reports[name].macro


def modality_separation(
    seed: int,
    n_events: int = 8000,
    mixture_weight: float = 0.2,
    strategies: tuple[str, ...] = ("joint", "prefix", "suffix"),
    model_config: ModelConfig = EXPERIMENT_MODEL,
    train_config: TrainConfig = EXPERIMENT_TRAIN,
    test_fraction: float = 0.2,
) -> SeparationResult:
    """Telemetry-only logistic vs context-only encoders on a context-weighted rule."""
    data = generate_synthetic(SyntheticConfig(n_events=n_events, mixture_weight=mixture_weight), seed=seed)
    order = np.random.default_rng(seed).permutation(len(data))
    n_test = int(round(test_fraction * len(data)))
    test = list(data.subset(sorted(order[:n_test])))
    pool = balance(data.subset(sorted(order[n_test:])), Strategy.SUBCLASSES, seed)
    result = SeparationResult(seed)

    lg = logistic_train(list(pool), TELEMETRY_T1_5)
    result.reports["telemetry_logistic"] = subclass_accuracy(lg.predict(test), test, "telemetry_logistic")

    tok = Tokenizer()
    cfg = replace(train_config, seed=seed)
    for strategy in strategies:
        enc_train = encode_samples(list(pool), tok, strategy, EXPERIMENT_WINDOW, EXPERIMENT_SUFFIX_CAP)
        enc_test = encode_samples(test, tok, strategy, EXPERIMENT_WINDOW, EXPERIMENT_SUFFIX_CAP)
        model = EncoderClassifier(model_config, seed=seed)
        train(model, enc_train, cfg)
        name = f"encoder_{strategy}"
        result.reports[name] = subclass_accuracy(predict(model, enc_test), test, name)
    return result


@dataclass
class TwoStageResult:
    seed: int
    variant: str
    base_loss: float
    two_stage_loss: float
    base_curve: list[float]
    two_stage_curve: list[float]
    diverged: bool = False


VARIANTS = {
    "head": {"head_variant": "dense_concat"},
    "attn": {"attn_layers": (0,), "feature_dim": 16},
}


def two_stage_comparison(
    seed: int,
    variant: str = "head",
    n_events: int = 6000,
    mixture_weight: float = 0.5,
    epochs: int = 6,
    switch_epoch: int = 3,
    model_config: ModelConfig = EXPERIMENT_MODEL,
    train_config: TrainConfig = EXPERIMENT_TRAIN,
) -> TwoStageResult:
    """Final training loss of a base run vs a run extended at ``switch_epoch``."""
    data = list(balance(generate_synthetic(SyntheticConfig(n_events=n_events, mixture_weight=mixture_weight), seed=seed), Strategy.SUBCLASSES, seed))
    scaling = fit_scaling(data)
    enc = encode_samples(data, Tokenizer(), "joint", EXPERIMENT_WINDOW, EXPERIMENT_SUFFIX_CAP, scaling, JONBERTA)
    cfg = replace(train_config, seed=seed, epochs=epochs)

    base = train(EncoderClassifier(model_config, seed=seed), enc, cfg)
    try:
        staged = two_stage(EncoderClassifier(model_config, seed=seed), enc, cfg, switch_epoch, **VARIANTS[variant])
    except TrainingDiverged:
        return TwoStageResult(seed, variant, training_loss(base.model, enc), float("nan"), base.epoch_losses, [], True)
    return TwoStageResult(
        seed,
        variant,
        training_loss(base.model, enc),
        training_loss(staged.model, enc),
        base.epoch_losses,
        staged.epoch_losses,
        not np.all(np.isfinite(staged.epoch_losses)),
    )
