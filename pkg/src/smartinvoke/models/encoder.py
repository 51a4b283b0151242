"""Encoder sequence classifier and its two telemetry extensions.

The base model is a post-norm transformer encoder with learned absolute
positions whose first-token output goes through ``dense -> tanh -> proj``.

* head extension: telemetry is concatenated to the pooled token before the
  dense layer (and/or the projection), widening that matrix along its input
  axis.  The widened part is kept as a separate block so that zeroing it
  leaves the base computation bit-for-bit unchanged.
* attention extension: in the selected layers each telemetry scalar ``x_i``
  becomes an embedding ``slope_i * x_i + intercept_i``, layer-normalized and
  projected to extra keys and values that every token query can attend to.
  Feature slots emit no queries and carry no position embedding.
"""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from . import autograd as ag
from .autograd import Tensor, no_grad
from .config import ConfigError, HeadVariant, ModelConfig
from .inference import InferenceEncoder

INIT_STD = 0.02
NEG_INF = -1e9


class FeatureInputError(ValueError):
    pass


def _feature_prefix(config: ModelConfig, layer: int) -> str:
    return "feat" if config.share_feature_embeddings else f"layer{layer}.feat"


def init_params(config: ModelConfig, rng: np.random.Generator, dtype=np.float32) -> dict[str, np.ndarray]:
    c, f = config.hidden, config.ffn

    def normal(*shape):
        return rng.normal(0.0, INIT_STD, size=shape)

    p: dict[str, np.ndarray] = {
        "embed.tok": normal(config.vocab_size, c),
        "embed.pos": normal(config.max_positions, c),
        "embed.ln.g": np.ones(c),
        "embed.ln.b": np.zeros(c),
    }
    for i in range(config.layers):
        pre = f"layer{i}"
        for name in ("q", "k", "v", "o"):
            p[f"{pre}.attn.{name}.w"] = normal(c, c)
            p[f"{pre}.attn.{name}.b"] = np.zeros(c)
        p[f"{pre}.ln1.g"] = np.ones(c)
        p[f"{pre}.ln1.b"] = np.zeros(c)
        p[f"{pre}.ffn.w1"] = normal(c, f)
        p[f"{pre}.ffn.b1"] = np.zeros(f)
        p[f"{pre}.ffn.w2"] = normal(f, c)
        p[f"{pre}.ffn.b2"] = np.zeros(c)
        p[f"{pre}.ln2.g"] = np.ones(c)
        p[f"{pre}.ln2.b"] = np.zeros(c)
    p["head.dense.w"] = normal(c, c)
    p["head.dense.b"] = np.zeros(c)
    p["head.proj.w"] = normal(c, 2)
    p["head.proj.b"] = np.zeros(2)
    p.update(init_extension_params(config, rng))
    return {k: v.astype(dtype) for k, v in p.items()}


def init_extension_params(config: ModelConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    F, c, d = config.n_features, config.hidden, config.feature_dim
    p: dict[str, np.ndarray] = {}
    if config.head_variant in (HeadVariant.DENSE_CONCAT, HeadVariant.DENSE_PROJ_CONCAT):
        p["head.dense.wf"] = rng.normal(0.0, INIT_STD, size=(F, c))
    if config.head_variant in (HeadVariant.PROJ_CONCAT, HeadVariant.DENSE_PROJ_CONCAT):
        p["head.proj.wf"] = rng.normal(0.0, INIT_STD, size=(F, 2))
    for i in config.attn_layers:
        pre = _feature_prefix(config, i)
        if f"{pre}.slope" not in p:
            p[f"{pre}.slope"] = rng.normal(0.0, INIT_STD, size=(F, d))
            p[f"{pre}.intercept"] = np.zeros((F, d))
        p[f"layer{i}.feat.k.w"] = rng.normal(0.0, INIT_STD, size=(d, c))
        p[f"layer{i}.feat.k.b"] = np.zeros(c)
        p[f"layer{i}.feat.v.w"] = rng.normal(0.0, INIT_STD, size=(d, c))
        p[f"layer{i}.feat.v.b"] = np.zeros(c)
    return p


def _key_bias(mask: np.ndarray, dtype) -> np.ndarray | None:
    """Additive attention bias hiding padded keys; None when nothing is padded."""
    if mask.all():
        return None
    return np.where(mask[:, None, None, :] > 0, 0.0, NEG_INF).astype(dtype)


class EncoderClassifier:
    """Binary invocation classifier over a tokenized context (and optional telemetry)."""

    def __init__(self, config: ModelConfig, params: dict[str, np.ndarray] | None = None, seed: int = 0, dtype=np.float32):
        self.config = config
        if params is None:
            params = init_params(config, np.random.default_rng(seed), dtype)
        self.params: dict[str, Tensor] = {k: Tensor(np.asarray(v), requires_grad=True) for k, v in params.items()}
        expected = init_params_shapes(config)
        if set(self.params) != set(expected):
            missing, extra = set(expected) - set(self.params), set(self.params) - set(expected)
            raise ConfigError(f"parameter set mismatch; missing={sorted(missing)} extra={sorted(extra)}")
        for name, shape in expected.items():
            if self.params[name].shape != shape:
                raise ConfigError(f"parameter {name} has shape {self.params[name].shape}, expected {shape}")

    # ------------------------------------------------------------------ utils
    @property
    def dtype(self):
        return self.params["embed.tok"].data.dtype

    def named_parameters(self) -> Iterator[tuple[str, Tensor]]:
        return iter(self.params.items())

    def parameter_count(self) -> int:
        return sum(t.data.size for t in self.params.values())

    def state(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self.params.items()}

    def copy(self) -> "EncoderClassifier":
        return EncoderClassifier(self.config, self.state())

    def astype(self, dtype) -> "EncoderClassifier":
        return EncoderClassifier(self.config, {k: v.astype(dtype) for k, v in self.state().items()})

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None

    def extend(
        self,
        n_features: int,
        head_variant: HeadVariant | str | None = None,
        attn_layers=(),
        feature_dim: int | None = None,
        reinit_head: bool = True,
        share_feature_embeddings: bool = False,
        seed: int = 0,
    ) -> "EncoderClassifier":
        """Copy of this model with telemetry extensions switched on."""
        if self.config.has_extensions:
            raise ConfigError("model already carries extensions")
        cfg = ModelConfig.from_dict(
            {
                **self.config.to_dict(),
                "n_features": n_features,
                "head_variant": head_variant,
                "attn_layers": tuple(attn_layers),
                "feature_dim": feature_dim or self.config.feature_dim,
                "reinit_head": reinit_head,
                "share_feature_embeddings": share_feature_embeddings,
            }
        )
        rng = np.random.default_rng(seed)
        params = self.state()
        params.update({k: v.astype(self.dtype) for k, v in init_extension_params(cfg, rng).items()})
        if cfg.head_variant is not None and reinit_head:
            c = cfg.hidden
            if cfg.head_variant in (HeadVariant.DENSE_CONCAT, HeadVariant.DENSE_PROJ_CONCAT):
                params["head.dense.w"] = rng.normal(0.0, INIT_STD, size=(c, c)).astype(self.dtype)
                params["head.dense.b"] = np.zeros(c, dtype=self.dtype)
            if cfg.head_variant in (HeadVariant.PROJ_CONCAT, HeadVariant.DENSE_PROJ_CONCAT):
                params["head.proj.w"] = rng.normal(0.0, INIT_STD, size=(c, 2)).astype(self.dtype)
                params["head.proj.b"] = np.zeros(2, dtype=self.dtype)
        return EncoderClassifier(cfg, params)

    # ---------------------------------------------------------------- forward
    def _check_inputs(self, ids: np.ndarray, features) -> None:
        if ids.ndim != 2:
            raise ConfigError("ids must be a (batch, window) array")
        if ids.shape[1] > self.config.max_positions:
            raise ConfigError(f"window {ids.shape[1]} exceeds max_positions {self.config.max_positions}")
        if ids.size and (ids.max() >= self.config.vocab_size or ids.min() < 0):
            raise ConfigError("token id outside the model vocabulary")
        if self.config.has_extensions:
            if features is None:
                raise FeatureInputError("this model needs a telemetry feature matrix")
            if features.shape != (ids.shape[0], self.config.n_features):
                raise FeatureInputError(
                    f"feature matrix shape {features.shape} != ({ids.shape[0]}, {self.config.n_features})"
                )
        elif features is not None:
            raise FeatureInputError("base model takes no telemetry features")

    def forward(
        self,
        ids: np.ndarray,
        mask: np.ndarray,
        features: np.ndarray | None = None,
        feature_mask: np.ndarray | None = None,
        rng: np.random.Generator | None = None,
        attn_probs: list | None = None,
    ) -> Tensor:
        """Logits of shape ``(batch, 2)``.

        ``mask`` is the 0/1 padding mask (a prefix of ones per row).  Padded
        positions never influence the first token, so the batch is cut to its
        longest row before the pass.  ``feature_mask`` (batch, F) marks which
        telemetry slots may be attended to; by default all of them.  Dropout is
        active only when ``rng`` is given.
        """
        ids = np.asarray(ids)
        mask = np.asarray(mask)
        features = None if features is None else np.asarray(features, dtype=self.dtype)
        self._check_inputs(ids, features)
        cfg, P = self.config, self.params
        T = max(int(mask.sum(axis=1).max()), 1) if mask.size else 1
        ids, mask = ids[:, :T], mask[:, :T]
        B = ids.shape[0]
        rate = cfg.dropout if rng is not None else 0.0

        key_bias = _key_bias(mask, self.dtype)
        feat_bias = None
        use_features = features is not None and cfg.attn_layers
        if use_features and feature_mask is not None:
            feature_mask = np.asarray(feature_mask)
            if not feature_mask.any():
                use_features = False
            else:
                feat_bias = np.where(feature_mask[:, None, None, :] > 0, 0.0, NEG_INF).astype(self.dtype)

        x = ag.add(ag.embedding(P["embed.tok"], ids), ag.getitem(P["embed.pos"], slice(0, T)))
        x = ag.layer_norm(x, P["embed.ln.g"], P["embed.ln.b"], cfg.layer_norm_eps)
        x = ag.dropout(x, rate, rng)

        feat_const = Tensor(features) if use_features else None
        for i in range(cfg.layers):
            last = i == cfg.layers - 1
            x = self._layer(i, x, key_bias, feat_const if i in cfg.attn_layers else None, feat_bias, last, rate, rng, attn_probs)

        pooled = ag.reshape(x, (B, cfg.hidden))
        pooled = ag.dropout(pooled, rate, rng)
        h = ag.linear(pooled, P["head.dense.w"], P["head.dense.b"])
        if "head.dense.wf" in P:
            h = ag.add(h, ag.linear(Tensor(features), P["head.dense.wf"]))
        h = ag.tanh(h)
        h = ag.dropout(h, rate, rng)
        logits = ag.linear(h, P["head.proj.w"], P["head.proj.b"])
        if "head.proj.wf" in P:
            logits = ag.add(logits, ag.linear(Tensor(features), P["head.proj.wf"]))
        return logits

    def _split_heads(self, t: Tensor) -> Tensor:
        B, T, _ = t.shape
        h, dh = self.config.heads, self.config.head_dim
        return ag.transpose(ag.reshape(t, (B, T, h, dh)), (0, 2, 1, 3))

    def _layer(self, i, x, key_bias, features, feat_bias, last, rate, rng, attn_probs) -> Tensor:
        cfg, P = self.config, self.params
        pre = f"layer{i}"
        B, T, c = x.shape
        # only the first token leaves the last layer, so only it needs a query
        xq = ag.getitem(x, (slice(None), slice(0, 1))) if last else x
        Tq = xq.shape[1]
        q = self._split_heads(ag.linear(xq, P[f"{pre}.attn.q.w"], P[f"{pre}.attn.q.b"]))
        k = self._split_heads(ag.linear(x, P[f"{pre}.attn.k.w"], P[f"{pre}.attn.k.b"]))
        v = self._split_heads(ag.linear(x, P[f"{pre}.attn.v.w"], P[f"{pre}.attn.v.b"]))
        # scaling the queries is cheaper than scaling the (T x T) scores
        q = ag.scale(q, 1.0 / math.sqrt(cfg.head_dim))

        fk = fv = fscores = None
        if features is not None:
            fpre = _feature_prefix(cfg, i)
            emb = ag.add(
                ag.mul(ag.reshape(features, (B, cfg.n_features, 1)), P[f"{fpre}.slope"]),
                P[f"{fpre}.intercept"],
            )
            emb = ag.layer_norm(emb, eps=cfg.layer_norm_eps)
            fk = self._split_heads(ag.linear(emb, P[f"{pre}.feat.k.w"], P[f"{pre}.feat.k.b"]))
            fv = self._split_heads(ag.linear(emb, P[f"{pre}.feat.v.w"], P[f"{pre}.feat.v.b"]))

        scores = ag.matmul(q, ag.transpose(k, (0, 1, 3, 2)))
        if key_bias is not None:
            scores = ag.add(scores, Tensor(key_bias))
        if fk is None:
            probs = ag.softmax(scores, axis=-1)
            ctx = ag.matmul(probs, v)
        else:
            fscores = ag.matmul(q, ag.transpose(fk, (0, 1, 3, 2)))
            if feat_bias is not None:
                fscores = ag.add(fscores, Tensor(feat_bias))
            probs = ag.softmax(ag.concat([scores, fscores], axis=-1), axis=-1)
            p_tok = ag.getitem(probs, (Ellipsis, slice(0, T)))
            p_feat = ag.getitem(probs, (Ellipsis, slice(T, None)))
            ctx = ag.add(ag.matmul(p_tok, v), ag.matmul(p_feat, fv))
        if attn_probs is not None:
            attn_probs.append(probs.data)

        ctx = ag.reshape(ag.transpose(ctx, (0, 2, 1, 3)), (B, Tq, c))
        attn_out = ag.dropout(ag.linear(ctx, P[f"{pre}.attn.o.w"], P[f"{pre}.attn.o.b"]), rate, rng)
        h = ag.layer_norm(ag.add(xq, attn_out), P[f"{pre}.ln1.g"], P[f"{pre}.ln1.b"], cfg.layer_norm_eps)
        f = ag.gelu(ag.linear(h, P[f"{pre}.ffn.w1"], P[f"{pre}.ffn.b1"]))
        f = ag.dropout(ag.linear(f, P[f"{pre}.ffn.w2"], P[f"{pre}.ffn.b2"]), rate, rng)
        return ag.layer_norm(ag.add(h, f), P[f"{pre}.ln2.g"], P[f"{pre}.ln2.b"], cfg.layer_norm_eps)

    def inference_engine(self) -> InferenceEncoder:
        """Snapshot of the current weights for graph-free evaluation."""
        return InferenceEncoder(self.config, {k: t.data for k, t in self.params.items()})

    def logits(self, ids, mask, features=None, feature_mask=None, engine: InferenceEncoder | None = None) -> np.ndarray:
        ids, mask = np.asarray(ids), np.asarray(mask)
        features = None if features is None else np.asarray(features, dtype=self.dtype)
        self._check_inputs(ids, features)
        T = max(int(mask.sum(axis=1).max()), 1) if mask.size else 1
        engine = engine or self.inference_engine()
        return engine.logits(ids[:, :T], mask[:, :T], features, feature_mask)

    def predict_proba(self, ids, mask, features=None, feature_mask=None, engine: InferenceEncoder | None = None) -> np.ndarray:
        """Probability of the positive class (invoke)."""
        z = self.logits(ids, mask, features, feature_mask, engine).astype(np.float64)
        z = z - z.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e[:, 1] / e.sum(axis=1)

    def hidden_states(self, ids: np.ndarray, mask: np.ndarray, layer: int) -> np.ndarray:
        """Token representations after ``layer`` blocks (0 = embeddings), base path only."""
        cfg, P = self.config, self.params
        if not 0 <= layer <= cfg.layers:
            raise ConfigError(f"layer {layer} outside [0, {cfg.layers}]")
        ids, mask = np.asarray(ids), np.asarray(mask)
        T = max(int(mask.sum(axis=1).max()), 1)
        ids, mask = ids[:, :T], mask[:, :T]
        return self.inference_engine().hidden_states(ids, mask, layer)


def init_params_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    c, f, F, d = config.hidden, config.ffn, config.n_features, config.feature_dim
    shapes = {
        "embed.tok": (config.vocab_size, c),
        "embed.pos": (config.max_positions, c),
        "embed.ln.g": (c,),
        "embed.ln.b": (c,),
    }
    for i in range(config.layers):
        pre = f"layer{i}"
        for name in ("q", "k", "v", "o"):
            shapes[f"{pre}.attn.{name}.w"] = (c, c)
            shapes[f"{pre}.attn.{name}.b"] = (c,)
        shapes.update({
            f"{pre}.ln1.g": (c,), f"{pre}.ln1.b": (c,),
            f"{pre}.ffn.w1": (c, f), f"{pre}.ffn.b1": (f,),
            f"{pre}.ffn.w2": (f, c), f"{pre}.ffn.b2": (c,),
            f"{pre}.ln2.g": (c,), f"{pre}.ln2.b": (c,),
        })
    shapes.update({"head.dense.w": (c, c), "head.dense.b": (c,), "head.proj.w": (c, 2), "head.proj.b": (2,)})
    if config.head_variant in (HeadVariant.DENSE_CONCAT, HeadVariant.DENSE_PROJ_CONCAT):
        shapes["head.dense.wf"] = (F, c)
    if config.head_variant in (HeadVariant.PROJ_CONCAT, HeadVariant.DENSE_PROJ_CONCAT):
        shapes["head.proj.wf"] = (F, 2)
    for i in config.attn_layers:
        pre = _feature_prefix(config, i)
        shapes[f"{pre}.slope"] = (F, d)
        shapes[f"{pre}.intercept"] = (F, d)
        for name in ("k", "v"):
            shapes[f"layer{i}.feat.{name}.w"] = (d, c)
            shapes[f"layer{i}.feat.{name}.b"] = (c,)
    return shapes
