from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field, replace


class HeadVariant(str, enum.Enum):
    DENSE_CONCAT = "dense_concat"
    PROJ_CONCAT = "proj_concat"
    DENSE_PROJ_CONCAT = "dense_proj_concat"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    hidden: int = 64
    layers: int = 4
    heads: int = 4
    ffn: int = 256
    vocab_size: int = 260
    max_positions: int = 512
    dropout: float = 0.0
    n_features: int = 0
    feature_dim: int = 16
    attn_layers: tuple[int, ...] = ()
    head_variant: HeadVariant | None = None
    reinit_head: bool = True
    share_feature_embeddings: bool = False
    layer_norm_eps: float = 1e-5

    def __post_init__(self) -> None:
        object.__setattr__(self, "attn_layers", tuple(sorted(set(int(i) for i in self.attn_layers))))
        if self.head_variant is not None:
            object.__setattr__(self, "head_variant", HeadVariant(self.head_variant))
        self.validate()

    def validate(self) -> None:
        if self.hidden % self.heads:
            raise ConfigError(f"hidden size {self.hidden} not divisible by {self.heads} heads")
        if any(i < 0 or i >= self.layers for i in self.attn_layers):
            raise ConfigError(f"attn_layers {self.attn_layers} outside [0, {self.layers})")
        if self.attn_layers and self.feature_dim < 1:
            raise ConfigError("feature_dim must be >= 1 when the attention extension is active")
        if self.has_extensions and self.n_features < 1:
            raise ConfigError("extensions need n_features >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")

    @property
    def head_dim(self) -> int:
        return self.hidden // self.heads

    @property
    def has_extensions(self) -> bool:
        return self.head_variant is not None or bool(self.attn_layers)

    def base(self) -> "ModelConfig":
        return replace(self, head_variant=None, attn_layers=())

    def to_dict(self) -> dict:
        out = asdict(self)
        out["attn_layers"] = list(self.attn_layers)
        out["head_variant"] = self.head_variant.value if self.head_variant else None
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "ModelConfig":
        try:
            return cls(**obj)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def desk_config(**overrides) -> ModelConfig:
    return replace(ModelConfig(), **overrides)


# 6-layer, 768-wide encoder of the public small code checkpoint; used for parameter counts only
FULL_SCALE_CONFIG = ModelConfig(
    hidden=768, layers=6, heads=12, ffn=3072, vocab_size=52_000, max_positions=514,
    dropout=0.1, n_features=27, feature_dim=204,
)


def count_extension_params(config: ModelConfig) -> int:
    """Parameters added by the head and attention extensions of ``config``."""
    F, c, d = config.n_features, config.hidden, config.feature_dim
    if F == 0:
        return 0
    total = 0
    if config.head_variant in (HeadVariant.DENSE_CONCAT, HeadVariant.DENSE_PROJ_CONCAT):
        total += F * c
    if config.head_variant in (HeadVariant.PROJ_CONCAT, HeadVariant.DENSE_PROJ_CONCAT):
        total += F * 2
    n_attn = len(config.attn_layers)
    if n_attn:
        embed = 2 * F * d
        total += (embed if config.share_feature_embeddings else n_attn * embed)
        total += n_attn * 2 * (d * c + c)
    return total


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 16
    epochs: int = 6
    seed: int = 0
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    checkpoint_epochs: tuple[int, ...] = field(default=())
    grad_clip: float | None = None

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        object.__setattr__(self, "betas", tuple(self.betas))
        object.__setattr__(self, "checkpoint_epochs", tuple(self.checkpoint_epochs))

    @classmethod
    def from_dict(cls, obj: dict) -> "TrainConfig":
        try:
            return cls(**obj)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


FULL_SCALE_TRAIN = TrainConfig(learning_rate=2e-5, batch_size=16, epochs=6)
