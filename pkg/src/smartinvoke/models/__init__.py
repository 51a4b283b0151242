from .checkpoint import Checkpoint, CheckpointCorrupt, CheckpointError, CheckpointVersionError, load, save
from .config import (
    FULL_SCALE_CONFIG,
    FULL_SCALE_TRAIN,
    ConfigError,
    HeadVariant,
    ModelConfig,
    TrainConfig,
    count_extension_params,
    desk_config,
)
from .encoder import EncoderClassifier, FeatureInputError
from .logistic import (
    LogisticConfig,
    LogisticFilter,
    SingleClassError,
    copilot_fixture,
    logistic_predict,
    logistic_train,
)
from .train import EncodedSet, TrainingDiverged, TrainResult, encode_samples, predict, train, training_loss, two_stage

__all__ = [
    "FULL_SCALE_CONFIG",
    "FULL_SCALE_TRAIN",
    "Checkpoint",
    "CheckpointCorrupt",
    "CheckpointError",
    "CheckpointVersionError",
    "ConfigError",
    "EncodedSet",
    "EncoderClassifier",
    "FeatureInputError",
    "HeadVariant",
    "LogisticConfig",
    "LogisticFilter",
    "ModelConfig",
    "SingleClassError",
    "TrainConfig",
    "TrainResult",
    "TrainingDiverged",
    "copilot_fixture",
    "count_extension_params",
    "desk_config",
    "encode_samples",
    "load",
    "logistic_predict",
    "logistic_train",
    "predict",
    "save",
    "train",
    "training_loss",
    "two_stage",
]
