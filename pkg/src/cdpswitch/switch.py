"""One software switch: parse -> gate -> cache/tables -> extern or egress."""

from __future__ import annotations

import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Hashable

from .async_extern import (
    DEFAULT_CONTEXT_CAPACITY,
    AsyncExtern,
    Cause,
    EgressAction,
    EgressDecision,
    ExternBackend,
    ExternUnavailable,
    resume,
)
from .codec import OpKind
from .flow_cache import DEFAULT_CAPACITY, DEFAULT_TTL, FlowCache
from .gating import DEFAULT_EWMA_ALPHA, GatePolicy, QueueState, should_compress
from .packet import PacketError, PacketMeta, ParsedPacket, parse
from .pipeline import ActionKind, Forward, Pipeline, Role, RouteContext, TableEntry, L2_TABLE


@dataclass(frozen=True)
class SwitchConfig:
    role: Role = Role.COMPRESS
    ports: tuple[int, ...] = (0, 1, 2, 3)
    gate: GatePolicy = field(default_factory=GatePolicy)
    ewma_alpha: float = DEFAULT_EWMA_ALPHA
    cache_enabled: bool = True
    cache_ttl: float = DEFAULT_TTL
    cache_capacity: int = DEFAULT_CAPACITY
    context_capacity: int = DEFAULT_CONTEXT_CAPACITY
    offset: int = 0
    burst: int = 32

    def __post_init__(self) -> None:
        object.__setattr__(self, "role", Role(self.role))


class Switch:
    """Single logical packet loop around a pipeline and an extern backend.

    ``process`` never waits on the extern: packets steered to it are suspended
    and come back through ``poll``. Everything else is decided immediately.
    """

    def __init__(
        self,
        config: SwitchConfig,
        backend: ExternBackend,
        clock: Callable[[], float] = time.monotonic,
        name: str = "",
    ) -> None:
        self.config = config
        self.name = name or config.role.value
        self.clock = clock
        self.pipeline = Pipeline(config.role, config.ports)
        self.cache: FlowCache[RouteContext] | None = (
            FlowCache(config.cache_ttl, config.cache_capacity) if config.cache_enabled else None
        )
        self.queue = QueueState(config.ewma_alpha)
        self.backend = backend
        self.engine = AsyncExtern(backend, config.context_capacity, clock=clock)
        self.counters: Counter[str] = Counter()
        self.drops: Counter[Cause] = Counter()

    # -- control plane -------------------------------------------------------

    def add_route(self, dst_mac: bytes, egress_port: int, next_hop: int = 0) -> None:
        self.table_insert(L2_TABLE, TableEntry(dst_mac, Forward(egress_port, next_hop)))

    def table_insert(self, table_id: Hashable, entry: TableEntry) -> None:
        """Apply immediately. Use only while no packet is being processed."""
        self.pipeline.table_insert(table_id, entry)
        if self.cache is not None:
            self.cache.flush()

    def control_insert(self, table_id: Hashable, entry: TableEntry) -> None:
        """Queue a table change; the packet loop applies it before the next packet."""
        self.pipeline.enqueue_mutation(lambda: self.table_insert(table_id, entry))

    # -- data plane ----------------------------------------------------------

    @property
    def in_flight(self) -> int:
        return self.engine.in_flight

    def _drop(self, p: ParsedPacket | None, cause: Cause, port: int = -1) -> list[EgressDecision]:
        self.drops[cause] += 1
        return [EgressDecision(EgressAction.DROP, p, port, cause)] if p is not None else []

    def ingest(self, frame: bytes, ingress_port: int = 0) -> list[EgressDecision]:
        try:
            p = parse(frame, PacketMeta(ingress_port, self.clock()))
        except PacketError:
            self.counters["received"] += 1
            self.drops[Cause.PARSE_ERROR] += 1
            return []
        return self.process(p)

    def process(self, p: ParsedPacket) -> list[EgressDecision]:
        self.pipeline.apply_pending()
        self.counters["received"] += 1
        now = self.clock()
        cdp = p.cdp
        verdict = self.config.role is Role.COMPRESS and should_compress(p, self.config.gate, self.queue)

        cached = self.cache.lookup(p.flow_key, now) if self.cache is not None else None
        decision = self.pipeline.run_ingress(p, verdict, cached)
        if self.cache is not None and decision.cacheable and decision.context is not None:
            self.cache.insert(p.flow_key, decision.context, now)

        action = decision.action
        if action.kind is ActionKind.DROP or action.egress_port is None:
            return self._drop(p, Cause.NO_ROUTE)
        if action.kind is ActionKind.FORWARD:
            if self.config.role is Role.COMPRESS and cdp.tag and not cdp.compressed:
                self.counters["bypassed"] += 1
            return [self._emit(EgressDecision(EgressAction.FORWARD, p, action.egress_port))]

        op = OpKind[action.extern_id.upper()]
        # Both ends are configured with the same offset; the header does not carry it.
        offset = min(self.config.offset, len(p.payload))
        try:
            self.engine.suspend(p, op, egress_port=action.egress_port, next_hop=action.next_hop, offset=offset)
        except ExternUnavailable:
            if op == OpKind.COMPRESS:
                self.counters["fallback"] += 1
                self.counters["bypassed"] += 1
                return [self._emit(EgressDecision(EgressAction.FORWARD, p, action.egress_port, Cause.EXTERN_UNAVAILABLE))]
            return self._drop(p, Cause.EXTERN_UNAVAILABLE, action.egress_port)
        self.counters[f"suspended_{op.name.lower()}"] += 1
        return []

    def poll(self, max_results: int | None = None) -> list[EgressDecision]:
        out = []
        now = self.clock()
        for completion, ctx in self.engine.poll_completions(max_results or self.config.burst):
            if ctx.origin == OpKind.COMPRESS:
                self.queue.record_service_time(now - ctx.suspend_time)
            d = resume(completion, ctx)
            if d.action is EgressAction.DROP:
                out.extend(self._drop(d.packet, d.cause, d.egress_port))
                continue
            if d.cause is Cause.COMPRESS_FAILED:
                self.counters["fallback"] += 1
                self.counters["bypassed"] += 1
            elif ctx.origin == OpKind.COMPRESS:
                self.counters["compressed" if d.packet.cdp.compressed else "bypassed"] += 1
            out.append(self._emit(d))
        return out

    def _emit(self, d: EgressDecision) -> EgressDecision:
        self.counters["forwarded"] += 1
        return d

    def stats(self) -> dict[str, int]:
        out = dict(self.counters)
        out["table_lookups"] = self.pipeline.lookups
        out["dropped"] = sum(self.drops.values())
        if self.cache is not None:
            out["cache_hits"] = self.cache.hits
            out["cache_misses"] = self.cache.misses
            out["cache_evictions"] = self.cache.evictions
        out["orphans"] = self.engine.orphans
        return out
