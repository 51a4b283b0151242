from .decide import (
    MIN_PROMPT_CHARS,
    EncoderArm,
    FilterDecision,
    FilterRequest,
    LogisticArm,
    PassThrough,
    Reason,
    RequestError,
    arm_from_checkpoint,
    decide,
)
from .replay import NONE_ARM, replay, route
from .serve import DecisionService, LatencyHistogram, handle_line
from .session import SESSION_GAP_MS, SessionAssignment, assign_arm, sessionize

__all__ = [
    "MIN_PROMPT_CHARS",
    "NONE_ARM",
    "SESSION_GAP_MS",
    "DecisionService",
    "EncoderArm",
    "FilterDecision",
    "FilterRequest",
    "LatencyHistogram",
    "LogisticArm",
    "PassThrough",
    "Reason",
    "RequestError",
    "SessionAssignment",
    "arm_from_checkpoint",
    "assign_arm",
    "decide",
    "handle_line",
    "replay",
    "route",
    "sessionize",
]
