from .f3 import SCORER_NAME, ScorerConfig, f3_from_embeddings, f3_proxy, f_beta
from .metrics import Estimate, OfflineReport, bootstrap, harmonic_mean, macro_average, subclass_accuracy
from .offline import EncoderTrainer, LogisticTrainer, OverlapError, check_disjoint, evaluate_offline
from .reports import LatencyStats, OnlineReport, format_offline_table, format_online_table, reports_json

__all__ = [
    "SCORER_NAME",
    "EncoderTrainer",
    "Estimate",
    "LatencyStats",
    "LogisticTrainer",
    "OfflineReport",
    "OnlineReport",
    "OverlapError",
    "ScorerConfig",
    "bootstrap",
    "check_disjoint",
    "evaluate_offline",
    "f3_from_embeddings",
    "f3_proxy",
    "f_beta",
    "format_offline_table",
    "format_online_table",
    "harmonic_mean",
    "macro_average",
    "subclass_accuracy",
    "reports_json",
]
