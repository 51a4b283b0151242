"""Logistic-regression invocation filter over hand-engineered features."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..events.types import Label
from ..features import (
    COPILOT_C5,
    LayoutMismatch,
    ScalingSpec,
    FeatureVector,
    event_vector,
    feature_matrix,
    fit_scaling,
    layout_for,
)


class SingleClassError(ValueError):
    pass


@dataclass(frozen=True)
class LogisticConfig:
    l2: float = 1e-3
    max_iter: int = 5000
    tol: float = 1e-6
    standardize: bool = True


@dataclass
class LogisticFilter:
    weights: np.ndarray
    bias: float
    scaling: ScalingSpec
    include: tuple[str, ...]
    threshold: float = 0.5
    layout: tuple[str, ...] = field(default=())
    iterations: int = 0

    def __post_init__(self) -> None:
        self.include = tuple(self.include)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if not self.layout:
            self.layout = layout_for(self.include)
        self.layout = tuple(self.layout)
        if len(self.weights) != len(self.layout):
            raise LayoutMismatch(f"{len(self.weights)} weights for a {len(self.layout)}-position layout")

    def score(self, fv: FeatureVector) -> float:
        return logistic_predict(self, fv)

    def score_event(self, event) -> float:
        return logistic_predict(self, event_vector(event, self.scaling, self.include))

    def score_matrix(self, X: np.ndarray) -> np.ndarray:
        return _sigmoid(X @ self.weights + self.bias)

    def predict(self, samples) -> np.ndarray:
        """Boolean invoke decisions for a sequence of samples or events."""
        return self.score_matrix(feature_matrix(samples, self.scaling, self.include)) >= self.threshold

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "bias": self.bias,
            "scaling": self.scaling.to_dict(),
            "include": list(self.include),
            "threshold": self.threshold,
            "layout": list(self.layout),
            "iterations": self.iterations,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "LogisticFilter":
        return cls(
            np.asarray(obj["weights"], dtype=np.float64),
            float(obj["bias"]),
            ScalingSpec.from_dict(obj["scaling"]),
            tuple(obj["include"]),
            float(obj.get("threshold", 0.5)),
            tuple(obj.get("layout", ())),
            int(obj.get("iterations", 0)),
        )


def _sigmoid(z):
    # split by sign so exp never overflows
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def logistic_predict(model: LogisticFilter, fv: FeatureVector) -> float:
    """sigmoid(w . x + b)."""
    if tuple(fv.layout) != model.layout:
        raise LayoutMismatch("feature vector layout differs from the model's")
    z = float(np.dot(model.weights, fv.values)) + model.bias
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


def _objective(X, y, w, b, l2):
    z = X @ w + b
    # log(1 + exp(z)) - y z, computed stably
    loss = np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * (w @ w)
    r = _sigmoid(z) - y
    gw = X.T @ r / len(y) + l2 * w
    gb = r.mean()
    return loss, gw, gb


def fit_logistic(X: np.ndarray, y: np.ndarray, config: LogisticConfig = LogisticConfig()) -> tuple[np.ndarray, float, int]:
    """Full-batch gradient descent with Armijo backtracking; returns (w, b, iterations)."""
    y = np.asarray(y, dtype=np.float64)
    if len(np.unique(y)) < 2:
        raise SingleClassError("logistic training needs both classes")
    w = np.zeros(X.shape[1])
    b = 0.0
    step = 1.0
    loss, gw, gb = _objective(X, y, w, b, config.l2)
    it = 0
    for it in range(1, config.max_iter + 1):
        gnorm2 = gw @ gw + gb * gb
        if math.sqrt(gnorm2) < config.tol:
            break
        while True:
            w_new, b_new = w - step * gw, b - step * gb
            new_loss, ngw, ngb = _objective(X, y, w_new, b_new, config.l2)
            if new_loss <= loss - 0.5 * step * gnorm2 or step < 1e-12:
                break
            step *= 0.5
        w, b, loss, gw, gb = w_new, b_new, new_loss, ngw, ngb
        step = min(step * 2.0, 64.0)
    return w, b, it


def logistic_train(
    samples: Sequence,
    include: Sequence[str] = COPILOT_C5,
    config: LogisticConfig = LogisticConfig(),
    threshold: float = 0.5,
) -> LogisticFilter:
    """Fit on labeled samples; scaling statistics come from the same samples."""
    samples = list(samples)
    if not samples:
        raise SingleClassError("empty training set")
    y = np.array([s.label is Label.POSITIVE for s in samples], dtype=np.float64)
    if y.min() == y.max():
        raise SingleClassError("logistic training needs both classes")
    scaling = fit_scaling(samples) if config.standardize else ScalingSpec()
    X = feature_matrix(samples, scaling, include)
    w, b, iters = fit_logistic(X, y, config)
    return LogisticFilter(w, float(b), scaling, tuple(include), threshold, iterations=iters)


# Coefficients of the reverse-engineered Copilot filter (scalar features only).
COPILOT_SCALAR_WEIGHTS = {
    "t1": -0.174,
    "t2": -0.007,
    "t3": 0.005,
    "t4": 0.419,
    "c1": -0.230,
    "c2": 0.134,
    "c3": 0.700,
}


def copilot_fixture(bias: float = 0.0) -> LogisticFilter:
    """Copilot-shaped filter: published scalar weights, zero map weights, unstandardized."""
    layout = layout_for(COPILOT_C5)
    w = np.array([COPILOT_SCALAR_WEIGHTS.get(name, 0.0) for name in layout])
    return LogisticFilter(w, bias, ScalingSpec(), COPILOT_C5)
