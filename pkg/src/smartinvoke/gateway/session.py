"""Split a user's requests into sessions and pin each session to one experiment arm."""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from typing import Sequence

log = logging.getLogger(__name__)

SESSION_GAP_MS = 30 * 60 * 1000


@dataclass(frozen=True)
class SessionAssignment:
    session_id: str
    user_id: str
    arm: str
    start: int
    end: int
    indices: tuple[int, ...]


def assign_arm(user_id: str, start: int, salt: str, arms: Sequence[str]) -> str:
    if not arms:
        raise ValueError("no arms to assign")
    digest = hashlib.sha256(f"{user_id}|{start}|{salt}".encode("utf-8")).digest()
    return arms[int.from_bytes(digest[:8], "big") % len(arms)]


def sessionize(
    timestamps: Sequence[int],
    user_id: str,
    arms: Sequence[str],
    salt: str = "",
    gap_ms: int = SESSION_GAP_MS,
) -> list[SessionAssignment]:
    """Sessions of one user's requests; ``indices`` point into ``timestamps``.

    A gap strictly longer than ``gap_ms`` starts a new session.  Unordered
    input is sorted (stably) with a warning.
    """
    order = sorted(range(len(timestamps)), key=lambda i: timestamps[i])
    if order != list(range(len(timestamps))):
        log.warning("requests of user %s were not time-ordered; reordering", user_id)
    sessions: list[list[int]] = []
    for i in order:
        if sessions and timestamps[i] - timestamps[sessions[-1][-1]] <= gap_ms:
            sessions[-1].append(i)
        else:
            sessions.append([i])
    out = []
    for members in sessions:
        start, end = timestamps[members[0]], timestamps[members[-1]]
        out.append(
            SessionAssignment(
                f"{user_id}:{start}", user_id, assign_arm(user_id, start, salt, arms), start, end, tuple(members)
            )
        )
    return out
