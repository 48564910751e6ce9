"""Per-packet compression gating by payload size and estimated queue wait."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .packet import ParsedPacket

DEFAULT_SIZE_THRESHOLD = 500
DEFAULT_EWMA_ALPHA = 0.1
DEFAULT_MIN_WINDOW = 1e-3


class GateMode(str, Enum):
    ALWAYS = "always"
    SIZE_THRESHOLD = "size"
    QUEUE_WAIT = "queue_wait"
    SIZE_AND_QUEUE_WAIT = "size_and_queue_wait"


class ColdStart(Exception):
    """Drain rate has not been measured yet."""


@dataclass(frozen=True)
class GatePolicy:
    mode: GateMode = GateMode.SIZE_THRESHOLD
    size_threshold_bytes: int = DEFAULT_SIZE_THRESHOLD
    # Fixed wait threshold in seconds. None derives it per packet from the
    # measured compression service time (see QueueState.wait_threshold).
    wait_threshold: float | None = None
    service_time_factor: float = 1.0

    def __post_init__(self) -> None:
        if self.size_threshold_bytes <= 0:
            raise ValueError("size_threshold_bytes must be > 0")
        object.__setattr__(self, "mode", GateMode(self.mode))


class QueueState:
    """Egress backlog plus EWMA estimates of drain rate and compression cost.

    Owned by the switch's packet loop. ``record_departure`` folds egress
    throughput into the drain-rate average once at least ``min_window``
    seconds of departures have accumulated.
    """

    def __init__(self, alpha: float = DEFAULT_EWMA_ALPHA, min_window: float = DEFAULT_MIN_WINDOW) -> None:
        if not 0.0 < alpha <= 1.0:
            raise ValueError("alpha must be in (0, 1]")
        self.alpha = alpha
        self.min_window = min_window
        self.backlog_bytes = 0
        self.drain_rate: float | None = None
        self.service_time: float | None = None
        self._window_start: float | None = None
        self._window_bytes = 0

    def _ewma(self, old: float | None, sample: float) -> float:
        return sample if old is None else old + self.alpha * (sample - old)

    def record_enqueue(self, nbytes: int) -> None:
        self.backlog_bytes += nbytes

    def record_departure(self, nbytes: int, now: float) -> None:
        self.backlog_bytes = max(0, self.backlog_bytes - nbytes)
        if self._window_start is None:
            self._window_start = now
            self._window_bytes = nbytes
            return
        self._window_bytes += nbytes
        elapsed = now - self._window_start
        if elapsed >= self.min_window:
            self.drain_rate = self._ewma(self.drain_rate, self._window_bytes / elapsed)
            self._window_start = now
            self._window_bytes = 0

    def record_service_time(self, seconds: float) -> None:
        self.service_time = self._ewma(self.service_time, max(0.0, seconds))


def estimate_wait(q: QueueState) -> float:
    """Seconds a newly queued packet would wait: backlog / drain rate."""
    if not q.drain_rate or q.drain_rate <= 0:
        raise ColdStart("drain rate not measured yet")
    return q.backlog_bytes / q.drain_rate


def wait_threshold(policy: GatePolicy, q: QueueState) -> float:
    if policy.wait_threshold is not None:
        return policy.wait_threshold
    return (q.service_time or 0.0) * policy.service_time_factor


def should_compress(p: ParsedPacket, policy: GatePolicy, q: QueueState) -> bool:
    if not p.cdp.tag or p.cdp.compressed:
        return False
    mode = policy.mode
    if mode is GateMode.ALWAYS:
        return True
    big_enough = p.cdp.original_length > policy.size_threshold_bytes
    if mode is GateMode.SIZE_THRESHOLD:
        return big_enough
    try:
        waiting = estimate_wait(q) > wait_threshold(policy, q)
    except ColdStart:
        return big_enough
    if mode is GateMode.QUEUE_WAIT:
        return waiting
    return big_enough and waiting
