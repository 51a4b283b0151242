"""Single-file checkpoints.

Layout: the 4-byte magic ``SMIV``, a little-endian uint32 header length, a
UTF-8 JSON header, then the parameters as little-endian float32 blocks in
the order listed by the header.  The header carries a SHA-256 digest of the
parameter bytes.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..features import LayoutMismatch, ScalingSpec
from .config import ModelConfig
from .encoder import EncoderClassifier
from .logistic import LogisticFilter

MAGIC = b"SMIV"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


class CheckpointCorrupt(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


@dataclass
class Checkpoint:
    model: EncoderClassifier | LogisticFilter
    layout: tuple[str, ...] = ()
    scaling: ScalingSpec | None = None
    metadata: dict[str, Any] = field(default_factory=dict)
    window: int | None = None
    suffix_cap: int | None = None
    strategy: str = "joint"

    @property
    def kind(self) -> str:
        return "encoder" if isinstance(self.model, EncoderClassifier) else "logistic"


def save(ckpt: Checkpoint, path: str | os.PathLike) -> None:
    model = ckpt.model
    if isinstance(model, EncoderClassifier):
        arrays = [(k, t.data) for k, t in model.params.items()]
        body = {"config": model.config.to_dict()}
        if model.config.has_extensions and len(ckpt.layout) != model.config.n_features:
            raise LayoutMismatch(f"layout has {len(ckpt.layout)} positions, model expects {model.config.n_features}")
    elif isinstance(model, LogisticFilter):
        arrays = [("weights", model.weights), ("bias", np.array([model.bias]))]
        body = {"logistic": {k: v for k, v in model.to_dict().items() if k not in ("weights", "bias")}}
    else:
        raise CheckpointError(f"cannot checkpoint {type(model).__name__}")
    blobs = [np.ascontiguousarray(a, dtype="<f4").tobytes() for _, a in arrays]
    payload = b"".join(blobs)
    header = {
        "version": FORMAT_VERSION,
        "kind": ckpt.kind,
        **body,
        "layout": list(ckpt.layout),
        "scaling": None if ckpt.scaling is None else ckpt.scaling.to_dict(),
        "metadata": ckpt.metadata,
        "tokenization": {"window": ckpt.window, "suffix_cap": ckpt.suffix_cap, "strategy": ckpt.strategy},
        "params": [{"name": k, "shape": list(np.shape(a))} for k, a in arrays],
        "payload_bytes": len(payload),
        "sha256": hashlib.sha256(payload).hexdigest(),
    }
    raw = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<I", len(raw)) + raw + payload)


def read_header(path: str | os.PathLike) -> dict:
    with open(path, "rb") as fh:
        header, _ = _split(fh.read())
    return header


def _split(data: bytes) -> tuple[dict, bytes]:
    if len(data) < 8 or data[:4] != MAGIC:
        raise CheckpointCorrupt("not a checkpoint file (bad magic)")
    (n,) = struct.unpack("<I", data[4:8])
    if len(data) < 8 + n:
        raise CheckpointCorrupt("checkpoint header truncated")
    try:
        header = json.loads(data[8 : 8 + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointCorrupt(f"unreadable checkpoint header: {exc}") from exc
    return header, data[8 + n :]


def load(path: str | os.PathLike, expected_layout: tuple[str, ...] | None = None) -> Checkpoint:
    with open(path, "rb") as fh:
        header, payload = _split(fh.read())
    if header.get("version") != FORMAT_VERSION:
        raise CheckpointVersionError(f"checkpoint version {header.get('version')} != supported {FORMAT_VERSION}")
    if hashlib.sha256(payload).hexdigest() != header.get("sha256") or len(payload) != header.get("payload_bytes"):
        raise CheckpointCorrupt("checksum mismatch: checkpoint truncated or modified")
    arrays: dict[str, np.ndarray] = {}
    offset = 0
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arrays[entry["name"]] = np.frombuffer(payload, dtype="<f4", count=count, offset=offset).reshape(shape).astype(np.float32)
        offset += 4 * count
    layout = tuple(header.get("layout", ()))
    if expected_layout is not None and tuple(expected_layout) != layout:
        raise LayoutMismatch("checkpoint feature layout differs from the requested one")
    scaling = ScalingSpec.from_dict(header["scaling"]) if header.get("scaling") else None
    tok = header.get("tokenization") or {}
    if header["kind"] == "encoder":
        config = ModelConfig.from_dict(header["config"])
        if config.has_extensions and len(layout) != config.n_features:
            raise LayoutMismatch(f"layout has {len(layout)} positions, model expects {config.n_features}")
        model = EncoderClassifier(config, arrays)
    elif header["kind"] == "logistic":
        obj = dict(header["logistic"])
        obj["weights"] = arrays["weights"].astype(np.float64)
        obj["bias"] = float(arrays["bias"][0])
        model = LogisticFilter.from_dict(obj)
        if model.layout != layout and layout:
            raise LayoutMismatch("logistic weights disagree with the stored layout")
    else:
        raise CheckpointError(f"unknown checkpoint kind {header['kind']!r}")
    return Checkpoint(
        model,
        layout,
        scaling,
        header.get("metadata", {}),
        tok.get("window"),
        tok.get("suffix_cap"),
        tok.get("strategy", "joint"),
    )
