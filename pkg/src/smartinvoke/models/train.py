"""Mini-batch training of encoder classifiers with Adam."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from ..events.types import Label
from ..features import JONBERTA, ScalingSpec, feature_matrix, fit_scaling, layout_for
from ..tokenizer import DEFAULT_SUFFIX_CAP, DEFAULT_WINDOW, Tokenizer
from . import autograd as ag
from .config import HeadVariant, TrainConfig
from .encoder import EncoderClassifier


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, step: int, loss: float):
        super().__init__(f"non-finite loss {loss} at epoch {epoch}, step {step}")
        self.epoch, self.step, self.loss = epoch, step, loss


@dataclass(frozen=True)
class EncodedSet:
    """Model-ready arrays for a list of labeled samples."""

    ids: np.ndarray
    mask: np.ndarray
    labels: np.ndarray
    features: np.ndarray | None = None
    subclasses: tuple = ()

    def __len__(self) -> int:
        return len(self.labels)

    def take(self, idx) -> "EncodedSet":
        idx = np.asarray(idx)
        return EncodedSet(
            self.ids[idx],
            self.mask[idx],
            self.labels[idx],
            None if self.features is None else self.features[idx],
            tuple(self.subclasses[i] for i in idx) if self.subclasses else (),
        )


def encode_samples(
    samples: Sequence,
    tokenizer: Tokenizer,
    strategy: str = "joint",
    window: int = DEFAULT_WINDOW,
    suffix_cap: int = DEFAULT_SUFFIX_CAP,
    scaling: ScalingSpec | None = None,
    include: Sequence[str] | None = None,
) -> EncodedSet:
    """Tokenize every sample; attach telemetry features when ``scaling`` is given."""
    samples = list(samples)
    ctxs = [tokenizer.encode_context(s.event.prefix, s.event.suffix, strategy, window, suffix_cap) for s in samples]
    if ctxs:
        ids, mask = tokenizer.batch(ctxs)
    else:
        ids = mask = np.zeros((0, window), dtype=np.int64)
    labels = np.array([s.label is Label.POSITIVE for s in samples], dtype=np.int64)
    feats = None
    if scaling is not None:
        feats = feature_matrix(samples, scaling, include or JONBERTA)
    return EncodedSet(ids, mask, labels, feats, tuple(s.subclass for s in samples))


class Adam:
    def __init__(self, params: dict[str, ag.Tensor], lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr, self.b1, self.b2, self.eps = lr, betas[0], betas[1], eps
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.t = 0

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for k, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            m, v = self.m[k], self.v[k]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * (g * g)
            p.data -= (self.lr / c1) * m / (np.sqrt(v / c2) + self.eps)


@dataclass
class TrainResult:
    model: EncoderClassifier
    epoch_losses: list[float] = field(default_factory=list)
    step_losses: list[float] = field(default_factory=list)
    checkpoints: dict[int, dict[str, np.ndarray]] = field(default_factory=dict)


def batch_loss(model: EncoderClassifier, data: EncodedSet, rng: np.random.Generator | None = None) -> ag.Tensor:
    logits = model.forward(data.ids, data.mask, data.features if model.config.has_extensions else None, rng=rng)
    return ag.cross_entropy(logits, data.labels)


def train(
    model: EncoderClassifier,
    data: EncodedSet,
    config: TrainConfig,
    *,
    first_epoch: int = 1,
    on_epoch: Callable[[int, float], None] | None = None,
    result: TrainResult | None = None,
) -> TrainResult:
    """Train ``model`` in place for ``config.epochs`` epochs.

    Epochs are numbered from ``first_epoch`` so a continued run keeps a single
    timeline; parameter snapshots are taken after each epoch listed in
    ``config.checkpoint_epochs``.
    """
    if len(data) == 0:
        raise ValueError("cannot train on an empty set")
    if model.config.has_extensions and data.features is None:
        raise ValueError("extended model needs feature columns in the training set")
    result = result or TrainResult(model)
    result.model = model
    opt = Adam(model.params, config.learning_rate, config.betas, config.eps)
    rng = np.random.default_rng([config.seed, first_epoch])
    n = len(data)
    for epoch in range(first_epoch, first_epoch + config.epochs):
        order = rng.permutation(n)
        total, count = 0.0, 0
        for step, start in enumerate(range(0, n, config.batch_size)):
            batch = data.take(order[start : start + config.batch_size])
            model.zero_grad()
            loss = batch_loss(model, batch, rng if model.config.dropout > 0 else None)
            value = float(loss.data)
            if not math.isfinite(value):
                raise TrainingDiverged(epoch, step, value)
            loss.backward()
            if config.grad_clip is not None:
                _clip(model, config.grad_clip)
            opt.step()
            total += value * len(batch)
            count += len(batch)
            result.step_losses.append(value)
        mean = total / count
        result.epoch_losses.append(mean)
        if on_epoch is not None:
            on_epoch(epoch, mean)
        if epoch in config.checkpoint_epochs:
            result.checkpoints[epoch] = model.state()
    return result


def _clip(model: EncoderClassifier, max_norm: float) -> None:
    grads = [p.grad for p in model.params.values() if p.grad is not None]
    norm = math.sqrt(sum(float((g * g).sum()) for g in grads))
    if norm > max_norm:
        for g in grads:
            g *= max_norm / norm


def training_loss(model: EncoderClassifier, data: EncodedSet, batch_size: int = 64) -> float:
    """Mean cross-entropy over ``data`` without dropout."""
    engine = model.inference_engine()
    total = 0.0
    for start in range(0, len(data), batch_size):
        b = data.take(np.arange(start, min(start + batch_size, len(data))))
        z = model.logits(b.ids, b.mask, b.features if model.config.has_extensions else None, engine=engine)
        z = z.astype(np.float64)
        logp = z - np.logaddexp(z[:, :1], z[:, 1:])
        total += -logp[np.arange(len(b)), b.labels].sum()
    return total / len(data)


def predict(model: EncoderClassifier, data: EncodedSet, batch_size: int = 64, threshold: float = 0.5) -> np.ndarray:
    engine = model.inference_engine()
    out = []
    for start in range(0, len(data), batch_size):
        b = data.take(np.arange(start, min(start + batch_size, len(data))))
        feats = b.features if model.config.has_extensions else None
        out.append(model.predict_proba(b.ids, b.mask, feats, engine=engine) >= threshold)
    return np.concatenate(out) if out else np.zeros(0, dtype=bool)


def two_stage(
    model: EncoderClassifier,
    data: EncodedSet,
    config: TrainConfig,
    switch_epoch: int,
    head_variant: HeadVariant | str | None = None,
    attn_layers: Sequence[int] = (),
    feature_dim: int | None = None,
    reinit_head: bool = True,
) -> TrainResult:
    """Train the base model for ``switch_epoch`` epochs, then extend it and finish the run.

    The total number of epochs is ``config.epochs``.
    """
    if not 1 <= switch_epoch < config.epochs:
        raise ValueError(f"switch epoch {switch_epoch} must lie in [1, {config.epochs})")
    if data.features is None:
        raise ValueError("two-stage training needs feature columns")
    result = train(model, data, replace(config, epochs=switch_epoch))
    extended = model.extend(
        data.features.shape[1], head_variant, attn_layers, feature_dim, reinit_head, seed=config.seed
    )
    return train(extended, data, replace(config, epochs=config.epochs - switch_epoch), first_epoch=switch_epoch + 1, result=result)


def jonberta_scaling(samples: Sequence) -> tuple[ScalingSpec, tuple[str, ...]]:
    """Standardization statistics and layout for the telemetry input of the extensions."""
    return fit_scaling(samples), layout_for(JONBERTA)
