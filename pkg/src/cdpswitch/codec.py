"""Payload codecs and the burst-oriented virtual codec device.

Compression is raw DEFLATE (RFC 1951, no zlib/gzip container). Encryption is
a keystream XOR built from SHA-256 in counter mode; it exists to exercise a
session-based device lifecycle and offers no real security.
"""

from __future__ import annotations

import hashlib
import zlib
from collections import deque
from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import Iterable

DEFAULT_LEVEL = 6
KEY_LEN = 16
_ADLER_LEN = 4


class OpKind(IntEnum):
    COMPRESS = 1
    DECOMPRESS = 2
    ENCRYPT = 3


class Status(IntEnum):
    OK = 0
    FAILED = 1


class Checksum(str, Enum):
    NONE = "none"
    ADLER32 = "adler32"


class CodecError(Exception):
    pass


class CorruptStream(CodecError):
    pass


class LengthMismatch(CodecError):
    pass


class ChecksumMismatch(CorruptStream):
    pass


class NoSession(CodecError):
    pass


class InvalidConfig(CodecError, ValueError):
    pass


def _check_offset(src: bytes, offset: int) -> None:
    if not 0 <= offset <= len(src):
        raise ValueError(f"offset {offset} outside payload of {len(src)} bytes")


def deflate_raw(data: bytes, level: int = DEFAULT_LEVEL) -> bytes:
    c = zlib.compressobj(level, zlib.DEFLATED, -15)
    return c.compress(data) + c.flush()


def compress_payload(
    src: bytes, offset: int = 0, *, level: int = DEFAULT_LEVEL, checksum: str = Checksum.NONE
) -> tuple[bytes, bool]:
    """Return ``(dst, was_transformed)``.

    ``dst`` is ``src[:offset]`` followed by the raw-DEFLATE stream of the rest
    (plus a big-endian adler32 trailer of the uncompressed region when
    ``checksum == "adler32"``). If that is not strictly shorter than ``src``
    the input comes back untouched with ``was_transformed=False``.
    """
    _check_offset(src, offset)
    src = bytes(src)
    region = src[offset:]
    if not region:
        return src, False
    body = deflate_raw(region, level)
    if checksum == Checksum.ADLER32:
        body += zlib.adler32(region).to_bytes(_ADLER_LEN, "big")
    dst = src[:offset] + body
    if len(dst) >= len(src):
        return src, False
    return dst, True


def decompress_payload(
    src: bytes, offset: int, original_length: int, *, checksum: str = Checksum.NONE
) -> bytes:
    _check_offset(src, offset)
    d = zlib.decompressobj(-15)
    try:
        out = d.decompress(bytes(src[offset:]))
    except zlib.error as exc:
        raise CorruptStream(str(exc)) from None
    if not d.eof:
        raise CorruptStream("deflate stream ended before its final block")
    trailer = d.unused_data
    if checksum == Checksum.ADLER32:
        if len(trailer) != _ADLER_LEN:
            raise CorruptStream("missing adler32 trailer")
        if int.from_bytes(trailer, "big") != zlib.adler32(out):
            raise ChecksumMismatch("adler32 mismatch")
    elif trailer:
        raise CorruptStream(f"{len(trailer)} trailing bytes after deflate stream")
    dst = bytes(src[:offset]) + out
    if len(dst) != original_length:
        raise LengthMismatch(f"inflated to {len(dst)} bytes, expected {original_length}")
    return dst


@dataclass(frozen=True)
class EncryptionSession:
    key: bytes

    def __post_init__(self) -> None:
        if len(self.key) != KEY_LEN:
            raise InvalidConfig(f"session key must be {KEY_LEN} bytes")

    def keystream(self, n: int) -> bytes:
        blocks = []
        for counter in range(-(-n // 32)):
            blocks.append(hashlib.sha256(self.key + counter.to_bytes(8, "big")).digest())
        return b"".join(blocks)[:n]


def encrypt_payload(session: EncryptionSession | None, src: bytes, offset: int = 0) -> bytes:
    """XOR ``src[offset:]`` with the session keystream; applying it twice is the identity."""
    if session is None:
        raise NoSession("encryption requires an established session")
    _check_offset(src, offset)
    region = src[offset:]
    ks = session.keystream(len(region))
    mixed = int.from_bytes(region, "big") ^ int.from_bytes(ks, "big")
    return bytes(src[:offset]) + mixed.to_bytes(len(region), "big")


@dataclass(frozen=True)
class CodecDeviceConfig:
    device_id: int = 0
    queue_depth: int = 64
    level: int = DEFAULT_LEVEL
    checksum: str = Checksum.NONE
    mode: str = "stateless"
    session_key: bytes | None = None

    def validate(self) -> None:
        if self.queue_depth < 1:
            raise InvalidConfig("queue_depth must be >= 1")
        if self.mode != "stateless":
            raise InvalidConfig(f"only stateless mode is supported, got {self.mode!r}")
        if self.checksum not in (Checksum.NONE, Checksum.ADLER32):
            raise InvalidConfig(f"unknown checksum {self.checksum!r}")
        if not 0 <= self.level <= 9:
            raise InvalidConfig(f"deflate level {self.level} outside 0..9")
        if self.session_key is not None and len(self.session_key) != KEY_LEN:
            raise InvalidConfig(f"session key must be {KEY_LEN} bytes")


@dataclass(frozen=True)
class CodecOp:
    request_id: int
    kind: OpKind
    src: bytes
    offset: int = 0
    expected_output_length: int | None = None


@dataclass(frozen=True)
class CodecResult:
    request_id: int
    status: Status
    dst: bytes
    was_transformed: bool


def run_op(op: CodecOp, config: CodecDeviceConfig, session: EncryptionSession | None) -> CodecResult:
    """Execute one op. Codec errors become a FAILED result, never an exception."""
    try:
        if op.kind == OpKind.COMPRESS:
            dst, transformed = compress_payload(
                op.src, op.offset, level=config.level, checksum=config.checksum
            )
        elif op.kind == OpKind.DECOMPRESS:
            if op.expected_output_length is None:
                raise LengthMismatch("decompress op needs expected_output_length")
            dst = decompress_payload(
                op.src, op.offset, op.expected_output_length, checksum=config.checksum
            )
            transformed = True
        elif op.kind == OpKind.ENCRYPT:
            dst, transformed = encrypt_payload(session, op.src, op.offset), True
        else:
            raise CodecError(f"unknown op kind {op.kind!r}")
    except (CodecError, ValueError):
        return CodecResult(op.request_id, Status.FAILED, b"", False)
    return CodecResult(op.request_id, Status.OK, dst, transformed)


class CodecDevice:
    """Virtual codec device with a bounded result ring.

    Ops run synchronously inside :meth:`enqueue_burst`; their results wait in
    the ring until :meth:`dequeue_burst` takes them, FIFO.
    """

    def __init__(self, config: CodecDeviceConfig) -> None:
        config.validate()
        self.config = config
        self.session = EncryptionSession(config.session_key) if config.session_key else None
        self._ring: deque[CodecResult] = deque()

    @property
    def free_slots(self) -> int:
        return self.config.queue_depth - len(self._ring)

    def __len__(self) -> int:
        return len(self._ring)

    def enqueue_burst(self, ops: Iterable[CodecOp]) -> int:
        accepted = 0
        for op in ops:
            if len(self._ring) >= self.config.queue_depth:
                break
            self._ring.append(run_op(op, self.config, self.session))
            accepted += 1
        return accepted

    def dequeue_burst(self, max_results: int) -> list[CodecResult]:
        out = []
        while self._ring and len(out) < max_results:
            out.append(self._ring.popleft())
        return out


def device_create(config: CodecDeviceConfig) -> CodecDevice:
    return CodecDevice(config)
