"""Where an extern actually runs: inline, on a worker thread, or on remote workers."""

from __future__ import annotations

import logging
import queue
import socket
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

from ..async_extern import Backpressure, ExternCompletion, ExternRequest, NoWorkerAvailable
from ..codec import CodecDevice, CodecDeviceConfig, CodecOp, EncryptionSession, OpKind, Status, run_op
from .frame import FrameError, MsgType, OffloadFrame, encode_frame, read_frame

log = logging.getLogger(__name__)

DEFAULT_REQUEST_TIMEOUT = 0.1
DEFAULT_PROBE_INTERVAL = 1.0
DEFAULT_MAX_IN_FLIGHT = 64


class BackendKind(str, Enum):
    INLINE = "inline"
    WORKER = "worker"
    REMOTE = "remote"


class WorkerConnectError(NoWorkerAvailable):
    """No remote worker could be reached when the backend started."""


@dataclass(frozen=True)
class BackendConfig:
    kind: BackendKind = BackendKind.INLINE
    remote: tuple[tuple[str, int], ...] = ()
    request_timeout: float = DEFAULT_REQUEST_TIMEOUT
    max_in_flight: int = DEFAULT_MAX_IN_FLIGHT
    probe_interval: float = DEFAULT_PROBE_INTERVAL
    # Artificial per-op delay, for latency experiments.
    op_delay: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", BackendKind(self.kind))
        object.__setattr__(self, "remote", tuple((h, int(p)) for h, p in self.remote))
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if self.kind is BackendKind.REMOTE and not self.remote:
            raise ValueError("remote backend needs at least one endpoint")
        if self.request_timeout <= 0:
            raise ValueError("request_timeout must be positive")


def _completion(result) -> ExternCompletion:
    return ExternCompletion(result.request_id, result.status, result.dst, result.was_transformed)


def _op(req: ExternRequest) -> CodecOp:
    return CodecOp(req.request_id, req.op_kind, req.payload, req.offset, req.aux_length)


class InlineBackend:
    """Runs the codec on the caller's stream; results wait in the device ring."""

    kind = BackendKind.INLINE

    def __init__(self, codec: CodecDeviceConfig | None = None, max_in_flight: int = DEFAULT_MAX_IN_FLIGHT, op_delay: float = 0.0) -> None:
        base = codec or CodecDeviceConfig()
        self.device = CodecDevice(
            CodecDeviceConfig(base.device_id, max_in_flight, base.level, base.checksum, base.mode, base.session_key)
        )
        self.op_delay = op_delay
        self.completed = 0
        self.failed = 0

    @property
    def in_flight(self) -> int:
        return len(self.device)

    def start(self) -> None:
        pass

    def close(self) -> None:
        pass

    def submit(self, req: ExternRequest) -> None:
        if self.device.free_slots <= 0:
            raise Backpressure("device ring full")
        if self.op_delay:
            time.sleep(self.op_delay)
        self.device.enqueue_burst([_op(req)])

    def poll(self, max_results: int) -> list[ExternCompletion]:
        out = [_completion(r) for r in self.device.dequeue_burst(max_results)]
        for c in out:
            if c.status == Status.OK:
                self.completed += 1
            else:
                self.failed += 1
        return out

    def stats(self) -> dict[str, dict[str, int]]:
        return {"inline": {"completed": self.completed, "failed": self.failed}}


class WorkerBackend:
    """Runs the codec on one dedicated thread behind two bounded FIFOs."""

    kind = BackendKind.WORKER

    def __init__(self, codec: CodecDeviceConfig | None = None, max_in_flight: int = DEFAULT_MAX_IN_FLIGHT, op_delay: float = 0.0) -> None:
        self.codec = codec or CodecDeviceConfig()
        self.codec.validate()
        self.session = EncryptionSession(self.codec.session_key) if self.codec.session_key else None
        self.max_in_flight = max_in_flight
        self.op_delay = op_delay
        self._requests: queue.Queue[ExternRequest | None] = queue.Queue(max_in_flight)
        self._done: queue.Queue[ExternCompletion] = queue.Queue(max_in_flight)
        self._submitted = 0
        self._polled = 0
        self.completed = 0
        self.failed = 0
        self._thread: threading.Thread | None = None

    @property
    def in_flight(self) -> int:
        return self._submitted - self._polled

    def start(self) -> None:
        if self._thread is None:
            self._thread = threading.Thread(target=self._run, name="extern-worker", daemon=True)
            self._thread.start()

    def close(self) -> None:
        if self._thread is not None:
            self._requests.put(None)
            self._thread.join(timeout=5)
            self._thread = None

    def _run(self) -> None:
        while True:
            req = self._requests.get()
            if req is None:
                return
            if self.op_delay:
                time.sleep(self.op_delay)
            self._done.put(_completion(run_op(_op(req), self.codec, self.session)))

    def submit(self, req: ExternRequest) -> None:
        if self._thread is None:
            self.start()
        if self.in_flight >= self.max_in_flight:
            raise Backpressure(f"{self.in_flight} requests in flight")
        self._requests.put_nowait(req)
        self._submitted += 1

    def poll(self, max_results: int) -> list[ExternCompletion]:
        out = []
        while len(out) < max_results:
            try:
                c = self._done.get_nowait()
            except queue.Empty:
                break
            out.append(c)
            if c.status == Status.OK:
                self.completed += 1
            else:
                self.failed += 1
        self._polled += len(out)
        return out

    def stats(self) -> dict[str, dict[str, int]]:
        return {"worker": {"completed": self.completed, "failed": self.failed}}


@dataclass
class EndpointState:
    endpoint: tuple[str, int]
    healthy: bool = True
    next_probe: float = 0.0
    completed: int = 0
    failed: int = 0
    conn: "_Connection | None" = field(default=None, repr=False)

    @property
    def name(self) -> str:
        return f"{self.endpoint[0]}:{self.endpoint[1]}"


def worker_select(states: Sequence[EndpointState], now: float) -> EndpointState:
    """First endpoint in configured order that is healthy or due for a re-probe."""
    for state in states:
        if state.healthy or now >= state.next_probe:
            return state
    raise NoWorkerAvailable("all remote workers are down")


@dataclass
class _Pending:
    state: EndpointState
    deadline: float
    op_kind: OpKind
    input_length: int


class _Connection:
    """One socket with a reader thread and a writer thread."""

    def __init__(self, sock: socket.socket, on_frame: Callable[[OffloadFrame], None], on_lost: Callable[["_Connection"], None]) -> None:
        self.sock = sock
        self._on_frame = on_frame
        self._on_lost = on_lost
        self._out: queue.SimpleQueue[bytes | None] = queue.SimpleQueue()
        self._closed = threading.Event()
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._writer = threading.Thread(target=self._write_loop, daemon=True)
        self._reader.start()
        self._writer.start()

    def send(self, data: bytes) -> None:
        self._out.put(data)

    def _read_loop(self) -> None:
        stream = self.sock.makefile("rb")
        try:
            while True:
                frame = read_frame(stream)
                if frame is None:
                    break
                self._on_frame(frame)
        except (OSError, FrameError, ValueError) as exc:
            log.info("connection read failed: %s", exc)
        finally:
            stream.close()
            self.close()
            self._on_lost(self)

    def _write_loop(self) -> None:
        while True:
            data = self._out.get()
            if data is None:
                return
            try:
                self.sock.sendall(data)
            except OSError as exc:
                log.info("connection write failed: %s", exc)
                self.close()
                return

    def close(self) -> None:
        if self._closed.is_set():
            return
        self._closed.set()
        self._out.put(None)
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()


class RemoteBackend:
    """Sends requests to external workers over the frame protocol.

    Endpoints are tried in configured order. An endpoint is marked down on a
    connect failure, a lost connection, or a request timeout; its pending
    requests fail immediately and it is re-probed every ``probe_interval``.
    In-flight requests are never retried elsewhere.
    """

    kind = BackendKind.REMOTE

    def __init__(
        self,
        endpoints: Sequence[tuple[str, int]],
        request_timeout: float = DEFAULT_REQUEST_TIMEOUT,
        max_in_flight: int = DEFAULT_MAX_IN_FLIGHT,
        probe_interval: float = DEFAULT_PROBE_INTERVAL,
        connect_timeout: float | None = None,
        clock: Callable[[], float] = time.monotonic,
    ) -> None:
        if not endpoints:
            raise ValueError("remote backend needs at least one endpoint")
        self.states = [EndpointState(tuple(ep)) for ep in endpoints]
        self.request_timeout = request_timeout
        self.max_in_flight = max_in_flight
        self.probe_interval = probe_interval
        self.connect_timeout = connect_timeout if connect_timeout is not None else max(request_timeout, 0.5)
        self.clock = clock
        self._lock = threading.Lock()
        self._pending: dict[int, _Pending] = {}
        self._done: deque[ExternCompletion] = deque()
        self._submitted = 0
        self._polled = 0

    @property
    def in_flight(self) -> int:
        return self._submitted - self._polled

    def pending_on(self, index: int) -> int:
        state = self.states[index]
        with self._lock:
            return sum(1 for p in self._pending.values() if p.state is state)

    def start(self) -> None:
        """Connect to every endpoint; fails only if none is reachable."""
        now = self.clock()
        for state in self.states:
            self._connect(state, now)
        if not any(s.healthy for s in self.states):
            names = ", ".join(s.name for s in self.states)
            raise WorkerConnectError(f"no remote worker reachable ({names})")

    def close(self) -> None:
        for state in self.states:
            conn = state.conn
            if conn is not None:
                conn.close()

    def _mark_down(self, state: EndpointState, now: float) -> None:
        state.healthy = False
        state.next_probe = now + self.probe_interval

    def _connect(self, state: EndpointState, now: float) -> bool:
        try:
            sock = socket.create_connection(state.endpoint, timeout=self.connect_timeout)
        except OSError as exc:
            log.info("worker %s unreachable: %s", state.name, exc)
            with self._lock:
                self._mark_down(state, now)
            return False
        sock.settimeout(None)
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        conn = _Connection(sock, self._on_frame, lambda c, s=state: self._on_lost(s, c))
        with self._lock:
            state.conn = conn
            state.healthy = True
        return True

    def _fail_locked(self, rid: int, pend: _Pending) -> None:
        pend.state.failed += 1
        self._done.append(ExternCompletion(rid, Status.FAILED))

    def _on_frame(self, frame: OffloadFrame) -> None:
        if frame.msg_type != MsgType.RESPONSE:
            log.warning("ignoring non-response frame from worker")
            return
        with self._lock:
            pend = self._pending.pop(frame.request_id, None)
            if pend is None:
                return  # late reply after timeout or failover
            if frame.status != Status.OK:
                self._fail_locked(frame.request_id, pend)
                return
            if pend.op_kind == OpKind.COMPRESS:
                transformed = len(frame.payload) < pend.input_length
            else:
                transformed = True
            pend.state.completed += 1
            self._done.append(ExternCompletion(frame.request_id, Status.OK, frame.payload, transformed))

    def _on_lost(self, state: EndpointState, conn: _Connection) -> None:
        with self._lock:
            if state.conn is conn:
                state.conn = None
                self._mark_down(state, self.clock())
            lost = [rid for rid, p in self._pending.items() if p.state is state]
            for rid in lost:
                self._fail_locked(rid, self._pending.pop(rid))

    def submit(self, req: ExternRequest) -> None:
        if self.in_flight >= self.max_in_flight:
            raise Backpressure(f"{self.in_flight} requests in flight")
        frame = encode_frame(
            OffloadFrame(MsgType.REQUEST, req.request_id, req.op_kind, Status.OK, req.offset, req.aux_length, req.payload)
        )
        while True:
            now = self.clock()
            with self._lock:
                state = worker_select(self.states, now)
                conn = state.conn
            if conn is None and not self._connect(state, now):
                continue
            with self._lock:
                conn = state.conn
                if conn is None:
                    continue
                self._pending[req.request_id] = _Pending(
                    state, now + self.request_timeout, req.op_kind, len(req.payload)
                )
            conn.send(frame)
            self._submitted += 1
            return

    def _expire(self, now: float) -> None:
        stale: list[_Connection] = []
        with self._lock:
            for rid, pend in list(self._pending.items()):
                if now >= pend.deadline:
                    del self._pending[rid]
                    self._fail_locked(rid, pend)
                    state = pend.state
                    if state.healthy:
                        self._mark_down(state, now)
                    if state.conn is not None:
                        stale.append(state.conn)
                        state.conn = None
        for conn in stale:
            conn.close()

    def poll(self, max_results: int) -> list[ExternCompletion]:
        self._expire(self.clock())
        out = []
        with self._lock:
            while self._done and len(out) < max_results:
                out.append(self._done.popleft())
        self._polled += len(out)
        return out

    def stats(self) -> dict[str, dict[str, int]]:
        return {s.name: {"completed": s.completed, "failed": s.failed} for s in self.states}


def make_backend(config: BackendConfig, codec: CodecDeviceConfig | None = None):
    if config.kind is BackendKind.INLINE:
        return InlineBackend(codec, config.max_in_flight, config.op_delay)
    if config.kind is BackendKind.WORKER:
        return WorkerBackend(codec, config.max_in_flight, config.op_delay)
    return RemoteBackend(config.remote, config.request_timeout, config.max_in_flight, config.probe_interval)
