"""Length-prefixed frames exchanged with remote extern workers.

Layout, big-endian::

    offset  size  field
    0       4     length       bytes following this field (15 + len(payload))
    4       1     msg_type     1 = request, 2 = response
    5       8     request_id
    13      1     op_kind      1 = compress, 2 = decompress, 3 = encrypt
    14      1     status       0 = ok, 1 = failed (always 0 in requests)
    15      2     offset       bytes of payload left untransformed
    17      2     aux_length   request: original_length for decompress
                               response: length of the output payload
    19      n     payload

A compress request for ``b"abc"`` with id 1 encodes as::

    00 00 00 12  01  00 00 00 00 00 00 00 01  01  00  00 00  00 00  61 62 63
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import BinaryIO, Iterator

from ..codec import OpKind, Status

LENGTH = struct.Struct("!I")
HEADER = struct.Struct("!BQBBHH")
PREFIX_LEN = LENGTH.size
HEADER_LEN = HEADER.size
MAX_FRAME = HEADER_LEN + 0xFFFF

assert HEADER_LEN == 15


class MsgType(IntEnum):
    REQUEST = 1
    RESPONSE = 2


class FrameError(ValueError):
    pass


class Truncated(FrameError):
    pass


class UnknownType(FrameError):
    pass


class LengthFieldMismatch(FrameError):
    pass


@dataclass(frozen=True)
class OffloadFrame:
    msg_type: MsgType
    request_id: int
    op_kind: OpKind
    status: Status = Status.OK
    offset: int = 0
    aux_length: int = 0
    payload: bytes = b""


def encode_frame(msg: OffloadFrame) -> bytes:
    if len(msg.payload) > 0xFFFF:
        raise FrameError("payload exceeds 65535 bytes")
    try:
        header = HEADER.pack(
            MsgType(msg.msg_type),
            msg.request_id,
            OpKind(msg.op_kind),
            Status(msg.status),
            msg.offset,
            msg.aux_length,
        )
    except (struct.error, ValueError) as exc:
        raise FrameError(str(exc)) from None
    return LENGTH.pack(HEADER_LEN + len(msg.payload)) + header + msg.payload


def _decode_body(body: bytes) -> OffloadFrame:
    mtype, rid, op, status, offset, aux = HEADER.unpack_from(body, 0)
    try:
        mtype, op, status = MsgType(mtype), OpKind(op), Status(status)
    except ValueError as exc:
        raise UnknownType(str(exc)) from None
    return OffloadFrame(mtype, rid, op, status, offset, aux, bytes(body[HEADER_LEN:]))


def _body_length(buf: bytes | bytearray | memoryview) -> int:
    (length,) = LENGTH.unpack_from(buf, 0)
    if length < HEADER_LEN or length > MAX_FRAME:
        raise LengthFieldMismatch(f"length field {length} outside [{HEADER_LEN}, {MAX_FRAME}]")
    return length


def decode_frame(buf: bytes) -> OffloadFrame:
    """Decode exactly one complete frame."""
    if len(buf) < PREFIX_LEN:
        raise Truncated("missing length prefix")
    length = _body_length(buf)
    available = len(buf) - PREFIX_LEN
    if length > available:
        raise Truncated(f"length field says {length} bytes, {available} available")
    if length < available:
        raise LengthFieldMismatch(f"length field says {length} bytes, {available} present")
    return _decode_body(bytes(buf[PREFIX_LEN:]))


class FrameBuffer:
    """Incremental decoder for a byte stream carrying back-to-back frames."""

    def __init__(self) -> None:
        self._buf = bytearray()

    def feed(self, data: bytes) -> Iterator[OffloadFrame]:
        self._buf += data
        while len(self._buf) >= PREFIX_LEN:
            length = _body_length(self._buf)
            end = PREFIX_LEN + length
            if len(self._buf) < end:
                return
            body = bytes(self._buf[PREFIX_LEN:end])
            del self._buf[:end]
            yield _decode_body(body)

    def __len__(self) -> int:
        return len(self._buf)


def read_exact(stream: BinaryIO, n: int) -> bytes | None:
    """Read ``n`` bytes; ``None`` on clean EOF at a frame boundary."""
    chunks = []
    got = 0
    while got < n:
        chunk = stream.read(n - got)
        if not chunk:
            if got == 0:
                return None
            raise Truncated(f"stream ended after {got} of {n} bytes")
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


def read_frame(stream: BinaryIO) -> OffloadFrame | None:
    prefix = read_exact(stream, PREFIX_LEN)
    if prefix is None:
        return None
    length = _body_length(prefix)
    body = read_exact(stream, length)
    if body is None:
        raise Truncated("stream ended after length prefix")
    return _decode_body(body)
