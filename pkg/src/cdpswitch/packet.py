"""Wire format of the experimental protocol: Ethernet + CDP header + payload.

Byte layout (all multi-byte fields big-endian)::

    offset  size  field
    0       6     eth.dst_mac
    6       6     eth.src_mac
    12      2     eth.ethertype          (0x88B5)
    14      1     cdp.version            (1)
    15      1     cdp.flags              bit0 tag, bit1 compressed, bits 2-7 zero
    16      4     cdp.src_addr
    20      4     cdp.dst_addr
    24      4     cdp.flow_label
    28      2     cdp.payload_length     bytes of payload as carried
    30      2     cdp.original_length    payload length before compression
    32      n     payload
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from typing import NamedTuple

ETHERTYPE_CDP = 0x88B5
CDP_VERSION = 1

FLAG_TAG = 0x01
FLAG_COMPRESSED = 0x02
_RESERVED_MASK = 0xFC

_ETH = struct.Struct("!6s6sH")
_CDP = struct.Struct("!BBIIIHH")
ETH_HEADER_LEN = _ETH.size
CDP_HEADER_LEN = _CDP.size
HEADER_LEN = ETH_HEADER_LEN + CDP_HEADER_LEN
MAX_PAYLOAD = 0xFFFF

assert HEADER_LEN == 32


class PacketError(ValueError):
    """Base class for parse/deparse failures."""


class TooShort(PacketError):
    pass


class BadEthertype(PacketError):
    pass


class BadVersion(PacketError):
    pass


class ReservedBitsSet(PacketError):
    pass


class LengthMismatch(PacketError):
    pass


class InvariantViolation(PacketError):
    pass


class FlowKey(NamedTuple):
    src_addr: int
    dst_addr: int
    flow_label: int


@dataclass(frozen=True)
class EthernetHeader:
    dst_mac: bytes
    src_mac: bytes
    ethertype: int = ETHERTYPE_CDP


@dataclass(frozen=True)
class CdpHeader:
    src_addr: int
    dst_addr: int
    flow_label: int
    payload_length: int
    original_length: int
    tag: bool = False
    compressed: bool = False
    version: int = CDP_VERSION

    @property
    def flags(self) -> int:
        return (FLAG_TAG if self.tag else 0) | (FLAG_COMPRESSED if self.compressed else 0)


@dataclass(frozen=True)
class PacketMeta:
    ingress_port: int = 0
    arrival_time: float = 0.0


@dataclass(frozen=True)
class ParsedPacket:
    eth: EthernetHeader
    cdp: CdpHeader
    payload: bytes
    meta: PacketMeta = field(default_factory=PacketMeta)

    @classmethod
    def build(
        cls,
        payload: bytes,
        *,
        dst_mac: bytes,
        src_mac: bytes,
        src_addr: int,
        dst_addr: int,
        flow_label: int,
        tag: bool = False,
        meta: PacketMeta | None = None,
    ) -> "ParsedPacket":
        """Uncompressed packet with lengths filled in from ``payload``."""
        cdp = CdpHeader(
            src_addr=src_addr,
            dst_addr=dst_addr,
            flow_label=flow_label,
            payload_length=len(payload),
            original_length=len(payload),
            tag=tag,
        )
        return cls(EthernetHeader(dst_mac, src_mac), cdp, bytes(payload), meta or PacketMeta())

    @property
    def flow_key(self) -> FlowKey:
        return FlowKey(self.cdp.src_addr, self.cdp.dst_addr, self.cdp.flow_label)

    def with_payload(self, payload: bytes, *, compressed: bool) -> "ParsedPacket":
        """Copy carrying ``payload``; ``original_length`` is kept when compressed."""
        if compressed:
            cdp = replace(self.cdp, compressed=True, payload_length=len(payload))
        else:
            cdp = replace(
                self.cdp, compressed=False, payload_length=len(payload), original_length=len(payload)
            )
        return replace(self, cdp=cdp, payload=bytes(payload))


def check_invariants(p: ParsedPacket) -> None:
    """Raise :class:`InvariantViolation` if ``p`` cannot be put on the wire."""
    eth, cdp = p.eth, p.cdp
    if len(eth.dst_mac) != 6 or len(eth.src_mac) != 6:
        raise InvariantViolation("MAC addresses must be 6 bytes")
    if eth.ethertype != ETHERTYPE_CDP:
        raise InvariantViolation(f"ethertype {eth.ethertype:#06x} is not {ETHERTYPE_CDP:#06x}")
    if cdp.version != CDP_VERSION:
        raise InvariantViolation(f"unsupported version {cdp.version}")
    for name in ("src_addr", "dst_addr", "flow_label"):
        value = getattr(cdp, name)
        if not 0 <= value <= 0xFFFFFFFF:
            raise InvariantViolation(f"{name} out of 32-bit range: {value}")
    if not 0 <= cdp.original_length <= MAX_PAYLOAD:
        raise InvariantViolation(f"original_length out of range: {cdp.original_length}")
    if cdp.payload_length != len(p.payload):
        raise InvariantViolation(
            f"payload_length {cdp.payload_length} != actual payload size {len(p.payload)}"
        )
    if cdp.compressed:
        if cdp.payload_length >= cdp.original_length:
            raise InvariantViolation("compressed payload must be shorter than the original")
    elif cdp.payload_length != cdp.original_length:
        raise InvariantViolation("uncompressed packet must have payload_length == original_length")


def deparse(p: ParsedPacket) -> bytes:
    check_invariants(p)
    cdp = p.cdp
    return b"".join(
        (
            _ETH.pack(p.eth.dst_mac, p.eth.src_mac, p.eth.ethertype),
            _CDP.pack(
                cdp.version,
                cdp.flags,
                cdp.src_addr,
                cdp.dst_addr,
                cdp.flow_label,
                cdp.payload_length,
                cdp.original_length,
            ),
            p.payload,
        )
    )


def parse(frame: bytes, meta: PacketMeta | None = None) -> ParsedPacket:
    """Decode one frame. Bytes past ``32 + payload_length`` are treated as link padding."""
    if len(frame) < HEADER_LEN:
        raise TooShort(f"frame of {len(frame)} bytes, need at least {HEADER_LEN}")
    dst, src, ethertype = _ETH.unpack_from(frame, 0)
    if ethertype != ETHERTYPE_CDP:
        raise BadEthertype(f"ethertype {ethertype:#06x}")
    version, flags, src_addr, dst_addr, label, plen, olen = _CDP.unpack_from(frame, ETH_HEADER_LEN)
    if version != CDP_VERSION:
        raise BadVersion(f"version {version}")
    if flags & _RESERVED_MASK:
        raise ReservedBitsSet(f"flags {flags:#04x}")
    if len(frame) < HEADER_LEN + plen:
        raise LengthMismatch(f"payload_length {plen} but only {len(frame) - HEADER_LEN} bytes follow")
    p = ParsedPacket(
        EthernetHeader(dst, src, ethertype),
        CdpHeader(
            src_addr=src_addr,
            dst_addr=dst_addr,
            flow_label=label,
            payload_length=plen,
            original_length=olen,
            tag=bool(flags & FLAG_TAG),
            compressed=bool(flags & FLAG_COMPRESSED),
            version=version,
        ),
        bytes(frame[HEADER_LEN : HEADER_LEN + plen]),
        meta or PacketMeta(),
    )
    check_invariants(p)
    return p


def mac(text: str) -> bytes:
    """``"aa:bb:cc:dd:ee:ff"`` -> 6 bytes."""
    raw = bytes.fromhex(text.replace(":", "").replace("-", ""))
    if len(raw) != 6:
        raise ValueError(f"not a MAC address: {text!r}")
    return raw


def mac_str(raw: bytes) -> str:
    return ":".join(f"{b:02x}" for b in raw)
