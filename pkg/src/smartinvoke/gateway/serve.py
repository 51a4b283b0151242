"""Newline-delimited JSON decision service over TCP or standard streams.

Each request line is a ``FilterRequest`` object; each reply line is
``{request_id, invoke, score, latency_ms, reason}`` or, for a bad line,
``{request_id, error}``.  Connections stay open after bad lines.  Latencies
are accumulated per connection and merged into a shared histogram when the
connection closes; the histogram is written out on shutdown.
"""

from __future__ import annotations

import asyncio
import json
import signal
import sys
import threading
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .decide import Filter, FilterRequest, RequestError, decide

BUCKETS_MS = (0.1, 0.25, 0.5, 1.0, 2.5, 5.0, 10.0, 25.0, 50.0, 100.0)


@dataclass
class LatencyHistogram:
    samples: list[float] = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def merge(self, latencies: list[float]) -> None:
        with self._lock:
            self.samples.extend(latencies)

    def to_dict(self) -> dict:
        with self._lock:
            data = np.asarray(self.samples, dtype=float)
        counts = np.histogram(data, bins=(0.0, *BUCKETS_MS, np.inf))[0] if data.size else np.zeros(len(BUCKETS_MS) + 1)
        out = {
            "count": int(data.size),
            "buckets_ms": [f"<={b}" for b in BUCKETS_MS] + [f">{BUCKETS_MS[-1]}"],
            "counts": [int(c) for c in counts],
        }
        if data.size:
            p50, p95, p99 = np.percentile(data, [50, 95, 99])
            out.update(p50=float(p50), p95=float(p95), p99=float(p99))
        return out


def handle_line(flt: Filter, line: str, seen: set, latencies: list[float], mid_line_rule: bool = False) -> dict:
    """Reply object for one request line."""
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        return {"request_id": None, "error": f"malformed JSON: {exc.msg}"}
    rid = obj.get("request_id") if isinstance(obj, dict) else None
    try:
        req = FilterRequest.from_dict(obj)
    except RequestError as exc:
        return {"request_id": exc.request_id, "error": str(exc)}
    if req.request_id in seen:
        return {"request_id": rid, "error": "duplicate request_id on this connection"}
    seen.add(req.request_id)
    decision = decide(flt, req, mid_line_rule)
    latencies.append(decision.latency_ms)
    return decision.to_dict(req.request_id)


class DecisionService:
    def __init__(self, flt: Filter, mid_line_rule: bool = False):
        self.filter = flt
        self.mid_line_rule = mid_line_rule
        self.histogram = LatencyHistogram()

    async def handle(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        seen: set = set()
        latencies: list[float] = []
        try:
            while True:
                raw = await reader.readline()
                if not raw:
                    break
                line = raw.decode("utf-8", errors="replace").strip()
                if not line:
                    continue
                reply = handle_line(self.filter, line, seen, latencies, self.mid_line_rule)
                writer.write((json.dumps(reply) + "\n").encode("utf-8"))
                await writer.drain()
        except (ConnectionResetError, BrokenPipeError):
            pass
        finally:
            self.histogram.merge(latencies)
            writer.close()

    async def run_tcp(self, host: str, port: int, ready: Callable[[int], None] | None = None) -> None:
        server = await asyncio.start_server(self.handle, host, port)
        bound = server.sockets[0].getsockname()[1]
        if ready is not None:
            ready(bound)
        stop = asyncio.Event()
        _install_stop(stop)
        async with server:
            await stop.wait()

    def run_stdio(self, stdin=None, stdout=None) -> None:
        """Blocking loop over text streams; ends at end of input."""
        stdin = stdin or sys.stdin
        stdout = stdout or sys.stdout
        seen: set = set()
        latencies: list[float] = []
        try:
            for line in stdin:
                line = line.strip()
                if not line:
                    continue
                stdout.write(json.dumps(handle_line(self.filter, line, seen, latencies, self.mid_line_rule)) + "\n")
                stdout.flush()
        finally:
            self.histogram.merge(latencies)


def _install_stop(stop: asyncio.Event) -> None:
    loop = asyncio.get_running_loop()
    for sig in (signal.SIGINT, signal.SIGTERM):
        try:
            loop.add_signal_handler(sig, stop.set)
        except (NotImplementedError, RuntimeError, ValueError):
            # not the main thread (e.g. tests); the caller cancels the task instead
            pass
