"""Token-embedding similarity score between a completion and what the user kept.

Precision is the mean, over candidate tokens, of the best clipped cosine
similarity to any reference token; recall swaps the roles.  The two combine
into an F-beta score with beta = 3 by default, so recall dominates.  The
embeddings come from this package's own encoder, so values are not
comparable with scores from an external pretrained model.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..models.encoder import EncoderClassifier
from ..tokenizer import Tokenizer

SCORER_NAME = "f3-proxy (own encoder embeddings)"


def f_beta(precision: float, recall: float, beta: float = 3.0) -> float:
    if beta <= 0:
        raise ValueError("beta must be positive")
    b2 = beta * beta
    den = b2 * precision + recall
    return 0.0 if den == 0 else (1.0 + b2) * precision * recall / den


def f3_from_embeddings(candidate: np.ndarray, reference: np.ndarray, beta: float = 3.0) -> float:
    """F-beta over (n_c, d) candidate and (n_r, d) reference token embeddings."""
    candidate = np.asarray(candidate, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if len(reference) == 0:
        raise ValueError("reference must contain at least one token")
    if len(candidate) == 0:
        return 0.0

    def unit(a):
        norm = np.linalg.norm(a, axis=1, keepdims=True)
        return a / np.where(norm == 0, 1.0, norm)

    sim = np.clip(unit(candidate) @ unit(reference).T, 0.0, 1.0)
    precision = float(sim.max(axis=1).mean())
    recall = float(sim.max(axis=0).mean())
    return f_beta(precision, recall, beta)


@dataclass
class ScorerConfig:
    encoder: EncoderClassifier
    tokenizer: Tokenizer
    layer: int | None = None
    beta: float = 3.0

    def __post_init__(self) -> None:
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.layer is None:
            self.layer = self.encoder.config.layers
        self._embed = lru_cache(maxsize=4096)(self._embed_uncached)
        self._engine = self.encoder.inference_engine()

    def _embed_uncached(self, text: str) -> np.ndarray:
        vocab = self.tokenizer.vocab
        ids = self.tokenizer.encode(text)[: self.encoder.config.max_positions - 2]
        if not ids:
            return np.zeros((0, self.encoder.config.hidden))
        seq = np.array([[vocab.cls_id, *ids, vocab.sep_id]])
        states = self._engine.hidden_states(seq, np.ones_like(seq), self.layer)
        return states[0, 1:-1].astype(np.float64)

    def embed(self, text: str) -> np.ndarray:
        return self._embed(text)


def f3_proxy(candidate: str, reference: str, scorer: ScorerConfig) -> float:
    if not reference:
        raise ValueError("reference must be nonempty")
    if not candidate:
        return 0.0
    return f3_from_embeddings(scorer.embed(candidate), scorer.embed(reference), scorer.beta)
