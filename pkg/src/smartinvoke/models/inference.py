"""Graph-free forward pass used for serving and evaluation.

Computes the same function as ``EncoderClassifier.forward`` on raw arrays:
Q/K/V projections are fused into one matmul, layer norms run in place, and
attention is evaluated in blocks of query rows so the score block stays in
cache.  Row normalization happens after the value product (a ones column is
appended to the values), and the max-subtraction is skipped whenever a
norm bound proves the exponentials cannot overflow.
"""

from __future__ import annotations

import math
import threading

import numpy as np

from .config import ModelConfig

# exp(s) cannot overflow float32 for |s| below this
SAFE_EXP = 40.0
QUERY_BLOCK = 64
NEG_INF = -1e9


def _layer_norm_(x: np.ndarray, g: np.ndarray | None, b: np.ndarray | None, eps: float) -> np.ndarray:
    x -= x.mean(axis=-1, keepdims=True)
    var = np.einsum("...i,...i->...", x, x)[..., None]
    var /= x.shape[-1]
    var += eps
    np.sqrt(var, out=var)
    x /= var
    if g is not None:
        x *= g
    if b is not None:
        x += b
    return x


def _gelu_(x: np.ndarray) -> np.ndarray:
    # 0.5 * x * (1 + tanh(u)) == x / (1 + exp(-2u)); exp is far cheaper than tanh
    t = x * x
    t *= x
    t *= -2.0 * 0.044715 * math.sqrt(2.0 / math.pi)
    t -= 2.0 * math.sqrt(2.0 / math.pi) * x
    with np.errstate(over="ignore"):
        np.exp(t, out=t)
    t += 1.0
    x /= t
    return x


def _max_norm(a: np.ndarray) -> float:
    return float(np.sqrt(np.einsum("...i,...i->...", a, a).max())) if a.size else 0.0


_scratch = threading.local()


def _buffer(shape: tuple[int, ...], dtype) -> np.ndarray:
    """Per-thread reusable array; fresh large allocations cost page faults on every call."""
    pool = getattr(_scratch, "pool", None)
    if pool is None:
        pool = _scratch.pool = {}
    key = (shape, np.dtype(dtype).str)
    buf = pool.get(key)
    if buf is None:
        if len(pool) > 64:
            pool.clear()
        buf = pool[key] = np.empty(shape, dtype=dtype)
    return buf


def attend(q, k, v, key_bias=None, fk=None, fv=None, feat_bias=None, block: int = QUERY_BLOCK) -> np.ndarray:
    """Softmax attention of ``q`` over token keys and optional feature keys.

    Shapes: q (B, h, Tq, d), k/v (B, h, T, d), fk/fv (B, h, F, d); biases
    broadcast against (B, h, Tq, T) and (B, h, Tq, F).
    """
    B, h, Tq, d = q.shape
    q = np.ascontiguousarray(q)
    kt = np.ascontiguousarray(np.swapaxes(k, -1, -2))
    va = np.concatenate([v, np.ones(v.shape[:-1] + (1,), v.dtype)], axis=-1)
    fkt = fva = None
    bound = _max_norm(q) * _max_norm(k)
    if fk is not None:
        fkt = np.ascontiguousarray(np.swapaxes(fk, -1, -2))
        fva = np.concatenate([fv, np.ones(fv.shape[:-1] + (1,), fv.dtype)], axis=-1)
        bound = max(bound, _max_norm(q) * _max_norm(fk))
    safe = bound < SAFE_EXP
    out = np.empty((B, h, Tq, d + 1), dtype=q.dtype)
    for s in range(0, Tq, block):
        e = min(s + block, Tq)
        qb = q[:, :, s:e]
        sc = np.matmul(qb, kt, out=_buffer((B, h, e - s, kt.shape[-1]), q.dtype))
        if key_bias is not None:
            sc += key_bias
        fsc = None
        if fkt is not None:
            fsc = qb @ fkt
            if feat_bias is not None:
                fsc += feat_bias
        if not safe:
            shift = sc.max(axis=-1, keepdims=True)
            if fsc is not None:
                np.maximum(shift, fsc.max(axis=-1, keepdims=True), out=shift)
                fsc -= shift
            sc -= shift
        np.exp(sc, out=sc)
        np.matmul(sc, va, out=out[:, :, s:e])
        if fsc is not None:
            np.exp(fsc, out=fsc)
            out[:, :, s:e] += fsc @ fva
    num = out[..., :d]
    num /= out[..., d:]
    return num


class InferenceEncoder:
    """Read-only snapshot of encoder parameters arranged for fast evaluation."""

    def __init__(self, config: ModelConfig, params: dict[str, np.ndarray]):
        self.config = config
        self.p = params
        c = config.hidden
        scale = 1.0 / math.sqrt(config.head_dim)
        self.qkv = []
        for i in range(config.layers):
            pre = f"layer{i}.attn"
            # the query scale is folded into the fused projection
            w = np.concatenate([params[f"{pre}.q.w"] * scale, params[f"{pre}.k.w"], params[f"{pre}.v.w"]], axis=1)
            b = np.concatenate([params[f"{pre}.q.b"] * scale, params[f"{pre}.k.b"], params[f"{pre}.v.b"]])
            self.qkv.append((w.astype(params[f"{pre}.q.w"].dtype), b.astype(params[f"{pre}.q.b"].dtype)))
        self.c = c

    def _heads(self, x: np.ndarray) -> np.ndarray:
        B, T, _ = x.shape
        return x.reshape(B, T, self.config.heads, self.config.head_dim).transpose(0, 2, 1, 3)

    def _feature_kv(self, i: int, features: np.ndarray):
        cfg, p = self.config, self.p
        fpre = "feat" if cfg.share_feature_embeddings else f"layer{i}.feat"
        emb = features[:, :, None] * p[f"{fpre}.slope"] + p[f"{fpre}.intercept"]
        emb = _layer_norm_(emb, None, None, cfg.layer_norm_eps)
        fk = emb @ p[f"layer{i}.feat.k.w"] + p[f"layer{i}.feat.k.b"]
        fv = emb @ p[f"layer{i}.feat.v.w"] + p[f"layer{i}.feat.v.b"]
        return self._heads(fk), self._heads(fv)

    def layer(self, i: int, x: np.ndarray, key_bias, features, feat_bias, last: bool) -> np.ndarray:
        cfg, p, c = self.config, self.p, self.c
        pre = f"layer{i}"
        B, T, _ = x.shape
        w, b = self.qkv[i]
        h, dh = cfg.heads, cfg.head_dim
        if last:
            xq = x[:, :1]
            q = self._heads(xq @ w[:, :c] + b[:c])
            kv = (x @ w[:, c:] + b[c:]).reshape(B, T, 2, h, dh).transpose(2, 0, 3, 1, 4)
            k, v = np.ascontiguousarray(kv)
        else:
            xq = x
            qkv = (x @ w + b).reshape(B, T, 3, h, dh).transpose(2, 0, 3, 1, 4)
            q, k, v = np.ascontiguousarray(qkv)
        fk = fv = None
        if features is not None:
            fk, fv = self._feature_kv(i, features)
        ctx = attend(q, k, v, key_bias, fk, fv, feat_bias)
        Tq = xq.shape[1]
        ctx = ctx.transpose(0, 2, 1, 3).reshape(B, Tq, c)
        hid = ctx @ p[f"{pre}.attn.o.w"]
        hid += p[f"{pre}.attn.o.b"]
        hid += xq
        hid = _layer_norm_(hid, p[f"{pre}.ln1.g"], p[f"{pre}.ln1.b"], cfg.layer_norm_eps)
        f = hid @ p[f"{pre}.ffn.w1"]
        f += p[f"{pre}.ffn.b1"]
        f = _gelu_(f)
        out = f @ p[f"{pre}.ffn.w2"]
        out += p[f"{pre}.ffn.b2"]
        out += hid
        return _layer_norm_(out, p[f"{pre}.ln2.g"], p[f"{pre}.ln2.b"], cfg.layer_norm_eps)

    def embed(self, ids: np.ndarray) -> np.ndarray:
        p = self.p
        x = p["embed.tok"][ids]
        x += p["embed.pos"][: ids.shape[1]]
        return _layer_norm_(x, p["embed.ln.g"], p["embed.ln.b"], self.config.layer_norm_eps)

    def logits(self, ids, mask, features=None, feature_mask=None) -> np.ndarray:
        """Inputs are already validated and cut to the longest row."""
        cfg, p = self.config, self.p
        dtype = p["embed.tok"].dtype
        key_bias = None if mask.all() else np.where(mask[:, None, None, :] > 0, 0.0, NEG_INF).astype(dtype)
        feat_bias = None
        use_features = features is not None and bool(cfg.attn_layers)
        if use_features and feature_mask is not None:
            feature_mask = np.asarray(feature_mask)
            if not feature_mask.any():
                use_features = False
            else:
                feat_bias = np.where(feature_mask[:, None, None, :] > 0, 0.0, NEG_INF).astype(dtype)
        x = self.embed(ids)
        for i in range(cfg.layers):
            f = features if use_features and i in cfg.attn_layers else None
            x = self.layer(i, x, key_bias, f, feat_bias, i == cfg.layers - 1)
        pooled = x[:, 0]
        h = pooled @ p["head.dense.w"] + p["head.dense.b"]
        if "head.dense.wf" in p:
            h = h + features @ p["head.dense.wf"]
        np.tanh(h, out=h)
        z = h @ p["head.proj.w"] + p["head.proj.b"]
        if "head.proj.wf" in p:
            z = z + features @ p["head.proj.wf"]
        return z

    def hidden_states(self, ids, mask, layer: int) -> np.ndarray:
        dtype = self.p["embed.tok"].dtype
        key_bias = None if mask.all() else np.where(mask[:, None, None, :] > 0, 0.0, NEG_INF).astype(dtype)
        x = self.embed(ids)
        for i in range(layer):
            x = self.layer(i, x, key_bias, None, None, False)
        return x
