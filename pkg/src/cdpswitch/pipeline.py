"""Exact-match tables and the ingress decision stage."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Hashable, Iterable

from .packet import FlowKey, ParsedPacket

L2_TABLE = "l2"
L2_KEY_WIDTH = 6


class ActionKind(str, Enum):
    FORWARD = "forward"
    DROP = "drop"
    TO_EXTERN = "to_extern"


class Role(str, Enum):
    COMPRESS = "compress"
    DECOMPRESS = "decompress"


class PipelineError(Exception):
    pass


class UnknownTable(PipelineError, KeyError):
    pass


class KeyWidthMismatch(PipelineError, ValueError):
    pass


class InvalidAction(PipelineError, ValueError):
    pass


@dataclass(frozen=True)
class ActionSpec:
    kind: ActionKind
    egress_port: int | None = None
    next_hop: int = 0
    extern_id: str | None = None


def Forward(egress_port: int, next_hop: int = 0) -> ActionSpec:
    return ActionSpec(ActionKind.FORWARD, egress_port=egress_port, next_hop=next_hop)


def Drop() -> ActionSpec:
    return ActionSpec(ActionKind.DROP)


def ToExtern(extern_id: str, egress_port: int | None = None, next_hop: int = 0) -> ActionSpec:
    return ActionSpec(ActionKind.TO_EXTERN, egress_port=egress_port, next_hop=next_hop, extern_id=extern_id)


@dataclass(frozen=True)
class TableEntry:
    key: bytes
    action: ActionSpec
    table_id: Hashable = L2_TABLE


@dataclass(frozen=True)
class RouteContext:
    """Forwarding state resolved for a packet; what the flow cache stores."""

    egress_port: int
    next_hop: int
    flow_key: FlowKey


@dataclass(frozen=True)
class IngressDecision:
    action: ActionSpec
    context: RouteContext | None
    from_cache: bool = False
    # True when the route came from a plain Forward entry and may be cached.
    cacheable: bool = False


class Table:
    def __init__(self, table_id: Hashable, key_width: int, default_action: ActionSpec | None = None) -> None:
        self.table_id = table_id
        self.key_width = key_width
        self.default_action = default_action or Drop()
        self._entries: dict[bytes, ActionSpec] = {}

    def __len__(self) -> int:
        return len(self._entries)

    def insert(self, key: bytes, action: ActionSpec) -> None:
        if len(key) != self.key_width:
            raise KeyWidthMismatch(f"key of {len(key)} bytes, table {self.table_id!r} expects {self.key_width}")
        self._entries[bytes(key)] = action

    def delete(self, key: bytes) -> bool:
        return self._entries.pop(bytes(key), None) is not None

    def lookup(self, key: bytes) -> ActionSpec | None:
        return self._entries.get(bytes(key))


class Pipeline:
    """Decision stage of one switch.

    Both switch roles share this engine; ``role`` only changes which extern a
    tagged or compressed packet is steered to. ``lookups`` counts full table
    lookups, so cache hits are observable as lookups that did not happen.
    """

    def __init__(
        self,
        role: Role | str = Role.COMPRESS,
        ports: Iterable[int] = (0, 1, 2, 3),
        externs: Iterable[str] = ("compress", "decompress", "encrypt"),
    ) -> None:
        self.role = Role(role)
        self.ports = frozenset(ports)
        self.externs = frozenset(externs)
        self.tables: dict[Hashable, Table] = {L2_TABLE: Table(L2_TABLE, L2_KEY_WIDTH)}
        self.lookups = 0
        self._pending: deque[Callable[[], None]] = deque()

    def add_table(self, table_id: Hashable, key_width: int, default_action: ActionSpec | None = None) -> Table:
        table = Table(table_id, key_width, default_action)
        self.tables[table_id] = table
        return table

    def _table(self, table_id: Hashable) -> Table:
        try:
            return self.tables[table_id]
        except KeyError:
            raise UnknownTable(table_id) from None

    def _check_action(self, action: ActionSpec) -> None:
        if action.kind is ActionKind.FORWARD and action.egress_port not in self.ports:
            raise InvalidAction(f"egress port {action.egress_port} is not configured")
        if action.kind is ActionKind.TO_EXTERN:
            if action.extern_id not in self.externs:
                raise InvalidAction(f"extern {action.extern_id!r} is not registered")
            if action.egress_port is not None and action.egress_port not in self.ports:
                raise InvalidAction(f"egress port {action.egress_port} is not configured")

    def table_insert(self, table_id: Hashable, entry: TableEntry) -> None:
        self._check_action(entry.action)
        self._table(table_id).insert(entry.key, entry.action)

    def table_delete(self, table_id: Hashable, key: bytes) -> bool:
        return self._table(table_id).delete(key)

    def table_lookup(self, table_id: Hashable, key: bytes) -> ActionSpec | None:
        """Exact-match lookup; ``None`` is a miss (the table default then applies)."""
        return self._table(table_id).lookup(key)

    # Control-plane mutations requested while packets are in flight are queued
    # and applied by the packet loop between packets.
    def enqueue_mutation(self, fn: Callable[[], None]) -> None:
        self._pending.append(fn)

    def apply_pending(self) -> int:
        n = 0
        while self._pending:
            self._pending.popleft()()
            n += 1
        return n

    def resolve_l2(self, p: ParsedPacket) -> ActionSpec:
        table = self._table(L2_TABLE)
        self.lookups += 1
        action = table.lookup(p.eth.dst_mac)
        return table.default_action if action is None else action

    def run_ingress(
        self, p: ParsedPacket, gate_verdict: bool, cached: RouteContext | None = None
    ) -> IngressDecision:
        """Decide what happens to ``p``.

        With ``cached`` the L2 lookup is skipped and the cached route is used.
        A packet whose route resolves to Drop is dropped before any extern.
        """
        flow = p.flow_key
        if cached is not None:
            route = ActionSpec(ActionKind.FORWARD, egress_port=cached.egress_port, next_hop=cached.next_hop)
        else:
            route = self.resolve_l2(p)
        if route.kind is ActionKind.DROP:
            return IngressDecision(route, None)
        ctx = RouteContext(route.egress_port, route.next_hop, flow) if route.egress_port is not None else None
        if route.kind is ActionKind.TO_EXTERN:
            return IngressDecision(route, ctx, cached is not None)
        from_cache = cached is not None

        cdp = p.cdp
        if self.role is Role.COMPRESS and gate_verdict and cdp.tag and not cdp.compressed:
            action = ToExtern("compress", route.egress_port, route.next_hop)
        elif self.role is Role.DECOMPRESS and cdp.compressed:
            action = ToExtern("decompress", route.egress_port, route.next_hop)
        else:
            action = route
        return IngressDecision(action, ctx, from_cache, cacheable=not from_cache)
