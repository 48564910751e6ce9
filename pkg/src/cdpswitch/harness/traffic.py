"""Deterministic, seeded traffic for the two-switch topology."""

from __future__ import annotations

import random
import re
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Iterator

from ..packet import MAX_PAYLOAD, ParsedPacket, deparse

GENERATOR_MAC = bytes.fromhex("020000000001")
SRC_BASE = 0x0A000000
DST_BASE = 0x0A800000

_WORDS = (
    b"packet", b"switch", b"table", b"match", b"action", b"flow", b"cache", b"header",
    b"payload", b"extern", b"deflate", b"egress", b"ingress", b"queue", b"context", b"port",
)


class TrafficError(ValueError):
    pass


class CorpusEmpty(TrafficError):
    pass


@dataclass(frozen=True)
class LengthDist:
    """One of ``fixed(n)``, ``uniform(a,b)``, ``bimodal(small,large,ratio)``,
    ``sweep(start,stop,step)``. ``ratio`` is the share of small packets;
    ``sweep`` cycles through ``range(start, stop + 1, step)`` in order."""

    kind: str
    args: tuple[float, ...]

    @classmethod
    def parse(cls, text: str) -> "LengthDist":
        m = re.fullmatch(r"\s*(\w+)\s*\(([^)]*)\)\s*", text)
        if not m:
            raise TrafficError(f"bad length distribution {text!r}")
        kind = m.group(1)
        args = tuple(float(a) for a in m.group(2).split(",") if a.strip())
        want = {"fixed": 1, "uniform": 2, "bimodal": 3, "sweep": 3}.get(kind)
        if want is None or len(args) != want:
            raise TrafficError(f"bad length distribution {text!r}")
        dist = cls(kind, args)
        dist.validate()
        return dist

    def validate(self) -> None:
        lengths = self.args[:2] if self.kind in ("bimodal", "sweep", "uniform") else self.args
        if any(not 0 <= a <= MAX_PAYLOAD for a in lengths):
            raise TrafficError(f"payload lengths must lie in [0, {MAX_PAYLOAD}]")
        if self.kind == "bimodal" and not 0 <= self.args[2] <= 1:
            raise TrafficError("bimodal ratio must be in [0, 1]")
        if self.kind == "sweep" and self.args[2] <= 0:
            raise TrafficError("sweep step must be positive")

    def sample(self, rng: random.Random, index: int) -> int:
        a = self.args
        if self.kind == "fixed":
            return int(a[0])
        if self.kind == "uniform":
            return rng.randint(int(a[0]), int(a[1]))
        if self.kind == "bimodal":
            return int(a[0]) if rng.random() < a[2] else int(a[1])
        values = range(int(a[0]), int(a[1]) + 1, int(a[2]))
        return values[index % len(values)]

    def __str__(self) -> str:
        return f"{self.kind}({','.join(f'{x:g}' for x in self.args)})"


@dataclass(frozen=True)
class TrafficSpec:
    flow_count: int = 1
    packets_per_flow: int = 10
    length: LengthDist = LengthDist("fixed", (1000.0,))
    # repeated_byte | fixed_seed_random | mixed | corpus:<dir>
    content: str = "repeated_byte"
    tag_probability: float = 1.0
    # packets/second; None sends as fast as the loop runs
    send_rate: float | None = None

    def validate(self) -> None:
        if self.flow_count < 0 or self.packets_per_flow < 0:
            raise TrafficError("counts must be non-negative")
        if not 0.0 <= self.tag_probability <= 1.0:
            raise TrafficError("tag_probability must be in [0, 1]")
        if self.send_rate is not None and self.send_rate <= 0:
            raise TrafficError("send_rate must be positive")
        if self.content not in ("repeated_byte", "fixed_seed_random", "mixed") and not self.content.startswith("corpus:"):
            raise TrafficError(f"unknown payload content {self.content!r}")
        self.length.validate()

    @property
    def total(self) -> int:
        return self.flow_count * self.packets_per_flow


@dataclass(frozen=True)
class GeneratedPacket:
    index: int
    flow: int
    seq: int
    packet: ParsedPacket


def flow_dst_mac(flow: int) -> bytes:
    return bytes((0x02, 0xCD, 0x00)) + (flow & 0xFFFFFF).to_bytes(3, "big")


def _load_corpus(directory: str) -> bytes:
    root = Path(directory)
    files = sorted(p for p in root.rglob("*") if p.is_file()) if root.is_dir() else []
    blob = b"".join(p.read_bytes() for p in files)
    if not blob:
        raise CorpusEmpty(f"no corpus bytes under {directory!r}")
    return blob


def _text(rng: random.Random, n: int) -> bytes:
    out = bytearray()
    while len(out) < n:
        out += rng.choice(_WORDS) + b" "
    return bytes(out[:n])


def _payload(kind: str, rng: random.Random, n: int, index: int, corpus: bytes | None) -> bytes:
    if kind == "repeated_byte":
        return bytes((0x41 + index % 26,)) * n
    if kind == "fixed_seed_random":
        return rng.randbytes(n)
    if kind == "mixed":
        pick = rng.randrange(3)
        if pick == 0:
            return bytes((rng.randrange(256),)) * n
        if pick == 1:
            return rng.randbytes(n)
        return _text(rng, n)
    assert corpus is not None
    if n == 0:
        return b""
    reps = -(-n // len(corpus)) + 1
    start = rng.randrange(len(corpus))
    return (corpus * reps)[start : start + n]


def generate_traffic(spec: TrafficSpec, seed: int = 0) -> Iterator[GeneratedPacket]:
    """Flows interleave round-robin. Flow ``i`` has flow_label ``i`` and fixed
    addresses derived from ``i``. Same (spec, seed) -> identical stream."""
    spec.validate()
    corpus = _load_corpus(spec.content.partition(":")[2]) if spec.content.startswith("corpus:") else None
    rng = random.Random(seed)
    index = 0
    for seq in range(spec.packets_per_flow):
        for flow in range(spec.flow_count):
            n = spec.length.sample(rng, index)
            payload = _payload(spec.content, rng, n, index, corpus)
            tag = rng.random() < spec.tag_probability
            p = ParsedPacket.build(
                payload,
                dst_mac=flow_dst_mac(flow),
                src_mac=GENERATOR_MAC,
                src_addr=(SRC_BASE + flow) & 0xFFFFFFFF,
                dst_addr=(DST_BASE + flow) & 0xFFFFFFFF,
                flow_label=flow,
                tag=tag,
            )
            yield GeneratedPacket(index, flow, seq, p)
            index += 1


_FRAME_LEN = struct.Struct("!I")


def write_frames(stream: BinaryIO, packets: Iterator[GeneratedPacket]) -> int:
    """Write each packet as a 32-bit big-endian length followed by the raw frame."""
    n = 0
    for gp in packets:
        frame = deparse(gp.packet)
        stream.write(_FRAME_LEN.pack(len(frame)))
        stream.write(frame)
        n += 1
    return n


def read_frames(stream: BinaryIO) -> Iterator[bytes]:
    while True:
        head = stream.read(_FRAME_LEN.size)
        if not head:
            return
        if len(head) != _FRAME_LEN.size:
            raise TrafficError("truncated frame length")
        (n,) = _FRAME_LEN.unpack(head)
        frame = stream.read(n)
        if len(frame) != n:
            raise TrafficError("truncated frame")
        yield frame
