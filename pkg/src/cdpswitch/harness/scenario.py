"""End-to-end run: traffic -> compression switch -> link -> decompression switch -> sink."""

from __future__ import annotations

import logging
import time
from collections import defaultdict, deque
from dataclasses import dataclass
from typing import Callable, Mapping

from ..async_extern import Cause, EgressAction, EgressDecision
from ..offload.backends import InlineBackend, make_backend
from ..packet import FLAG_COMPRESSED, ParsedPacket, deparse
from ..pipeline import TableEntry, Forward, L2_TABLE
from ..switch import Switch
from .config import ScenarioConfig
from .link import InprocLink, LinkOverflow, TcpLink
from .metrics import MetricsReport, compression_ratio, percentile
from .traffic import GeneratedPacket, flow_dst_mac, generate_traffic

log = logging.getLogger(__name__)

# Offset of the CDP flags byte in a raw frame.
FLAGS_AT = 15


@dataclass
class _Record:
    index: int
    payload: bytes
    sent_at: float


class Sink:
    """Matches delivered packets to what was sent.

    Packets are identified by flow label and payload bytes; the oldest
    outstanding packet with identical bytes is taken. A delivered payload that
    matches nothing outstanding in its flow is an integrity failure and is
    charged to the oldest outstanding packet of that flow.
    """

    def __init__(self, keep_payloads: bool = False) -> None:
        # When set, every delivered payload is appended here in arrival order.
        self.delivered: list[bytes] | None = [] if keep_payloads else None
        self._flows: dict[int, dict[bytes, deque[_Record]]] = defaultdict(dict)
        self._highest: dict[int, int] = {}
        self.received = 0
        self.integrity_failures = 0
        self.reorders = 0
        self.latency_extern: list[float] = []
        self.latency_passthrough: list[float] = []

    def expect(self, flow: int, index: int, payload: bytes, sent_at: float) -> None:
        self._flows[flow].setdefault(payload, deque()).append(_Record(index, payload, sent_at))

    def _oldest(self, flow: int) -> _Record | None:
        groups = self._flows.get(flow)
        if not groups:
            return None
        payload = min(groups, key=lambda k: groups[k][0].index)
        return groups[payload][0]

    def deliver(self, p: ParsedPacket, extern: bool, now: float) -> None:
        self.received += 1
        if self.delivered is not None:
            self.delivered.append(p.payload)
        flow = p.cdp.flow_label
        groups = self._flows.get(flow, {})
        matches = groups.get(p.payload) if not p.cdp.compressed else None
        if matches:
            rec = matches[0]
        else:
            self.integrity_failures += 1
            rec = self._oldest(flow)
            if rec is None:
                return
        queue_ = groups[rec.payload]
        queue_.popleft()
        if not queue_:
            del groups[rec.payload]
        if rec.index < self._highest.get(flow, -1):
            self.reorders += 1
        else:
            self._highest[flow] = rec.index
        latency_us = (now - rec.sent_at) * 1e6
        (self.latency_extern if extern else self.latency_passthrough).append(latency_us)

    @property
    def outstanding(self) -> int:
        return sum(len(q) for groups in self._flows.values() for q in groups.values())


class ScenarioRuntime:
    """Mutable state of one run; scenario hooks receive this object."""

    def __init__(
        self, config: ScenarioConfig, clock: Callable[[], float] = time.perf_counter, sink: Sink | None = None
    ) -> None:
        self.config = config
        self.clock = clock
        self.compress_backend = make_backend(config.backend, config.codec)
        if config.backend_scope == "both":
            self.decompress_backend = make_backend(config.backend, config.codec)
        else:
            self.decompress_backend = InlineBackend(config.codec, config.backend.max_in_flight)
        self.compressor = Switch(config.compressor, self.compress_backend, clock, "compressor")
        self.decompressor = Switch(config.decompressor, self.decompress_backend, clock, "decompressor")
        self.link = TcpLink() if config.link == "tcp" else InprocLink()
        self.sink = sink if sink is not None else Sink()
        # Compressed frames that arrived while the decompressor's extern was full.
        self._held: deque[tuple[bytes, bool]] = deque()
        self._extern_room = min(config.backend.max_in_flight, config.decompressor.context_capacity)
        self.sent = 0
        self.link_drops = 0
        self.bytes_original = 0
        self.bytes_on_link = 0
        self.frame_bytes_on_link = 0
        self._buckets: dict[int, dict[str, float]] = {}
        self._start = clock()
        self._install_routes()

    def start(self) -> None:
        self.compress_backend.start()
        if self.decompress_backend is not self.compress_backend:
            self.decompress_backend.start()

    def close(self) -> None:
        for backend in (self.compress_backend, self.decompress_backend):
            backend.close()
        self.link.close()

    def _install_routes(self) -> None:
        cfg = self.config
        if cfg.auto_routes:
            for flow in range(cfg.traffic.flow_count):
                self.compressor.add_route(flow_dst_mac(flow), cfg.compress_port)
                self.decompressor.add_route(flow_dst_mac(flow), cfg.decompress_port)
        for dst_mac, port in cfg.routes:
            for sw in (self.compressor, self.decompressor):
                sw.table_insert(L2_TABLE, TableEntry(dst_mac, Forward(port)))

    # -- packet movement ----------------------------------------------------

    def _to_link(self, decisions: list[EgressDecision], extern: bool) -> None:
        for d in decisions:
            if d.action is not EgressAction.FORWARD:
                continue
            frame = deparse(d.packet)
            try:
                self.link.send(frame, extern or d.cause is not Cause.NONE)
            except LinkOverflow:
                self.link_drops += 1
                continue
            self.compressor.queue.record_enqueue(len(frame))
            self.bytes_original += d.packet.cdp.original_length
            self.bytes_on_link += d.packet.cdp.payload_length
            self.frame_bytes_on_link += len(frame)

    def _to_sink(self, decisions: list[EgressDecision], extern: bool, now: float) -> None:
        for d in decisions:
            if d.action is EgressAction.FORWARD:
                self.sink.deliver(d.packet, extern, now)

    def inject(self, gp: GeneratedPacket) -> None:
        now = self.clock()
        self.sink.expect(gp.flow, gp.index, gp.packet.payload, now)
        self.sent += 1
        self._to_link(self.compressor.ingest(deparse(gp.packet), ingress_port=0), extern=False)
        self.service()

    def service(self) -> int:
        """Move everything that is ready one hop further; returns packets moved."""
        moved = 0
        out = self.compressor.poll()
        self._to_link(out, extern=True)
        moved += len(out)
        for frame, extern in self.link.receive():
            self.compressor.queue.record_departure(len(frame), self.clock())
            self._held.append((frame, extern))
        moved += self._deliver_held()
        out = self.decompressor.poll()
        self._to_sink(out, True, self.clock())
        moved += len(out)
        if self.config.timeseries:
            self._tick()
        return moved

    def _deliver_held(self) -> int:
        """Hand received frames to the decompressor.

        The link doubles as the decompressor's receive queue: a compressed
        frame waits there while the decompress extern has no room, since the
        switch would otherwise drop it. Uncompressed frames never wait.
        """
        moved, waiting = 0, deque()
        while self._held:
            frame, extern = self._held.popleft()
            needs_extern = len(frame) > FLAGS_AT and frame[FLAGS_AT] & FLAG_COMPRESSED
            if needs_extern and (waiting or self.decompressor.in_flight >= self._extern_room):
                waiting.append((frame, extern))
                continue
            self._to_sink(self.decompressor.ingest(frame, ingress_port=1), extern, self.clock())
            moved += 1
        self._held = waiting
        return moved

    @property
    def in_flight(self) -> int:
        return self.compressor.in_flight + self.decompressor.in_flight + self.link.pending + len(self._held)

    def drain(self, timeout: float) -> None:
        deadline = self.clock() + timeout
        while self.in_flight and self.clock() < deadline:
            if not self.service():
                time.sleep(0.0002)

    @property
    def dropped(self) -> int:
        return sum(self.compressor.drops.values()) + sum(self.decompressor.drops.values()) + self.link_drops

    def _tick(self) -> None:
        second = int(self.clock() - self._start)
        self._buckets[second] = {
            "sent": self.sent,
            "received": self.sink.received,
            "dropped": self.dropped,
            "bytes_on_link": self.bytes_on_link,
        }

    def _timeseries(self) -> list[dict[str, float]]:
        rows, prev = [], {"sent": 0, "received": 0, "dropped": 0, "bytes_on_link": 0}
        for second in sorted(self._buckets):
            cur = self._buckets[second]
            rows.append({"second": second, **{k: cur[k] - prev[k] for k in prev}})
            prev = cur
        return rows

    def report(self) -> MetricsReport:
        a, b = self.compressor, self.decompressor
        sa, sb = a.stats(), b.stats()
        causes: dict[str, int] = defaultdict(int)
        for sw in (a, b):
            for cause, n in sw.drops.items():
                causes[cause.value] += n
        if self.link_drops:
            causes[Cause.LINK_OVERFLOW.value] += self.link_drops
        per_backend = {}
        for role, backend in (("compressor", self.compress_backend), ("decompressor", self.decompress_backend)):
            for name, counts in backend.stats().items():
                per_backend[f"{role}/{name}"] = dict(counts)
        lat_e, lat_p = self.sink.latency_extern, self.sink.latency_passthrough
        return MetricsReport(
            packets_sent=self.sent,
            packets_received=self.sink.received,
            packets_dropped=self.dropped,
            in_flight_at_shutdown=self.in_flight,
            payload_integrity_failures=self.sink.integrity_failures,
            bytes_original=self.bytes_original,
            bytes_on_link_compressed_segment=self.bytes_on_link,
            frame_bytes_on_link=self.frame_bytes_on_link,
            compression_ratio=compression_ratio(self.bytes_on_link, self.bytes_original),
            compressed_count=sa.get("compressed", 0),
            bypassed_count=sa.get("bypassed", 0),
            fallback_count=sa.get("fallback", 0) + sb.get("fallback", 0),
            cache_hits=sa.get("cache_hits", 0),
            cache_misses=sa.get("cache_misses", 0),
            table_lookups=sa["table_lookups"],
            latency_extern_p50_us=percentile(lat_e, 50),
            latency_extern_p95_us=percentile(lat_e, 95),
            latency_extern_p99_us=percentile(lat_e, 99),
            latency_passthrough_p50_us=percentile(lat_p, 50),
            latency_passthrough_p95_us=percentile(lat_p, 95),
            latency_passthrough_p99_us=percentile(lat_p, 99),
            reorder_count=self.sink.reorders,
            backend_failures=sum(c.get("failed", 0) for c in per_backend.values()),
            orphan_completions=sa["orphans"] + sb["orphans"],
            duration_s=self.clock() - self._start,
            drop_causes=dict(causes),
            per_backend=per_backend,
            switches={"compressor": sa, "decompressor": sb},
            timeseries=self._timeseries() if self.config.timeseries else [],
        )


Hook = Callable[[ScenarioRuntime], None]


def run_scenario(
    config: ScenarioConfig,
    hooks: Mapping[int, Hook] | None = None,
    packets: list[GeneratedPacket] | None = None,
    sink: Sink | None = None,
) -> MetricsReport:
    """Run one scenario to completion.

    ``hooks[n]`` runs right after the n-th packet has been injected.
    ``packets`` replaces the generated traffic when given; ``sink`` lets the
    caller inspect what was delivered.
    """
    hooks = hooks or {}
    rt = ScenarioRuntime(config, sink=sink)
    try:
        rt.start()
        stream = packets if packets is not None else generate_traffic(config.traffic, config.seed)
        rate = config.traffic.send_rate
        t0 = rt.clock()
        for i, gp in enumerate(stream):
            if rate:
                due = t0 + i / rate
                while rt.clock() < due:
                    if not rt.service():
                        time.sleep(min(0.0005, max(0.0, due - rt.clock())))
            rt.inject(gp)
            hook = hooks.get(rt.sent)
            if hook is not None:
                hook(rt)
        rt.drain(config.drain_timeout)
        if rt.in_flight:
            log.warning("%d packets still in flight at shutdown", rt.in_flight)
        return rt.report()
    finally:
        rt.close()
