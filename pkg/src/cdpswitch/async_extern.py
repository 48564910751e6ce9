"""Suspend/resume of packets around an asynchronous extern.

The packet loop calls :meth:`AsyncExtern.suspend` and moves on; the extern runs
on whatever backend is plugged in. Later, :meth:`AsyncExtern.poll_completions`
joins finished work with the saved context and :func:`resume` rebuilds the
packet for egress. Completions can come back in any order.
"""

from __future__ import annotations

import itertools
import logging
import time
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Iterable, Protocol

from .codec import OpKind, Status
from .packet import FlowKey, ParsedPacket

log = logging.getLogger(__name__)

DEFAULT_CONTEXT_CAPACITY = 4096


class ExternUnavailable(Exception):
    """The extern cannot take this packet right now; the caller falls back."""


class Backpressure(ExternUnavailable):
    pass


class NoWorkerAvailable(ExternUnavailable):
    pass


class UnknownExtern(Exception):
    pass


@dataclass(frozen=True)
class PacketContext:
    request_id: int
    egress_port: int
    next_hop: int
    flow_key: FlowKey
    suspend_time: float
    origin: OpKind
    # Headers and original payload of the suspended packet.
    packet: ParsedPacket


@dataclass(frozen=True)
class ExternRequest:
    request_id: int
    op_kind: OpKind
    payload: bytes
    offset: int = 0
    # original_length for decompress requests
    aux_length: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.offset <= len(self.payload):
            raise ValueError("offset must not exceed payload length")


@dataclass(frozen=True)
class ExternCompletion:
    request_id: int
    status: Status
    payload: bytes = b""
    was_transformed: bool = False

    @property
    def output_length(self) -> int:
        return len(self.payload)


class ExternBackend(Protocol):
    def submit(self, req: ExternRequest) -> None: ...

    def poll(self, max_results: int) -> list[ExternCompletion]: ...


class EgressAction(str, Enum):
    FORWARD = "forward"
    DROP = "drop"


class Cause(str, Enum):
    """Why a packet left the normal path. Only some causes are drops."""

    NONE = ""
    NO_ROUTE = "no_route"
    PARSE_ERROR = "parse_error"
    COMPRESS_FAILED = "compress_failed"
    DECOMPRESS_FAILED = "decompress_failed"
    ENCRYPT_FAILED = "encrypt_failed"
    EXTERN_UNAVAILABLE = "extern_unavailable"
    LINK_OVERFLOW = "link_overflow"


@dataclass(frozen=True)
class EgressDecision:
    action: EgressAction
    packet: ParsedPacket
    egress_port: int
    cause: Cause = Cause.NONE


def resume(completion: ExternCompletion, ctx: PacketContext) -> EgressDecision:
    """Rebuild the suspended packet from its completion.

    A failed compress forwards the original payload uncompressed; a failed
    decompress or encrypt is dropped.
    """
    p = ctx.packet
    if completion.status != Status.OK:
        if ctx.origin == OpKind.COMPRESS:
            return EgressDecision(EgressAction.FORWARD, p, ctx.egress_port, Cause.COMPRESS_FAILED)
        cause = Cause.DECOMPRESS_FAILED if ctx.origin == OpKind.DECOMPRESS else Cause.ENCRYPT_FAILED
        return EgressDecision(EgressAction.DROP, p, ctx.egress_port, cause)

    if ctx.origin == OpKind.COMPRESS:
        if completion.was_transformed:
            out = p.with_payload(completion.payload, compressed=True)
        else:
            out = p
    elif ctx.origin == OpKind.DECOMPRESS:
        if len(completion.payload) != p.cdp.original_length:
            return EgressDecision(EgressAction.DROP, p, ctx.egress_port, Cause.DECOMPRESS_FAILED)
        out = p.with_payload(completion.payload, compressed=False)
    else:
        out = replace(p, payload=bytes(completion.payload))
    return EgressDecision(EgressAction.FORWARD, out, ctx.egress_port)


class AsyncExtern:
    """Context store plus request/completion plumbing for one switch.

    Only the packet loop touches the store. Counters:

    * ``suspends`` contexts stored
    * ``resumes`` ok completions joined with a context
    * ``failures`` failed completions joined with a context
    * ``orphans`` completions with no stored context (dropped)

    so ``len(self) == suspends - resumes - failures`` at all times.
    """

    def __init__(
        self,
        backend: ExternBackend,
        capacity: int = DEFAULT_CONTEXT_CAPACITY,
        ops: Iterable[OpKind] = (OpKind.COMPRESS, OpKind.DECOMPRESS, OpKind.ENCRYPT),
        clock: Callable[[], float] = time.monotonic,
    ) -> None:
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.backend = backend
        self.capacity = capacity
        self.ops = frozenset(ops)
        self.clock = clock
        self._ids = itertools.count(1)
        self._store: dict[int, PacketContext] = {}
        self.suspends = 0
        self.resumes = 0
        self.failures = 0
        self.orphans = 0

    def __len__(self) -> int:
        return len(self._store)

    @property
    def in_flight(self) -> int:
        return len(self._store)

    def suspend(
        self,
        p: ParsedPacket,
        op_kind: OpKind,
        *,
        egress_port: int,
        next_hop: int = 0,
        offset: int = 0,
    ) -> int:
        if op_kind not in self.ops:
            raise UnknownExtern(op_kind)
        if len(self._store) >= self.capacity:
            raise Backpressure("context store full")
        request_id = next(self._ids)
        aux = p.cdp.original_length if op_kind == OpKind.DECOMPRESS else 0
        # Raises Backpressure / NoWorkerAvailable before anything is stored.
        self.backend.submit(ExternRequest(request_id, op_kind, p.payload, offset, aux))
        self._store[request_id] = PacketContext(
            request_id=request_id,
            egress_port=egress_port,
            next_hop=next_hop,
            flow_key=p.flow_key,
            suspend_time=self.clock(),
            origin=op_kind,
            packet=p,
        )
        self.suspends += 1
        return request_id

    def poll_completions(self, max_results: int = 32) -> list[tuple[ExternCompletion, PacketContext]]:
        out: list[tuple[ExternCompletion, PacketContext]] = []
        while len(out) < max_results:
            batch = self.backend.poll(max_results - len(out))
            if not batch:
                break
            for c in batch:
                ctx = self._store.pop(c.request_id, None)
                if ctx is None:
                    self.orphans += 1
                    log.warning("orphan completion for request %d dropped", c.request_id)
                    continue
                if c.status == Status.OK:
                    self.resumes += 1
                else:
                    self.failures += 1
                out.append((c, ctx))
        return out

    def pending_ids(self) -> list[int]:
        return list(self._store)
