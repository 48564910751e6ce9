"""Pure-Python raw DEFLATE decoder used as a test oracle.

Written straight from RFC 1951; shares no code with the zlib library that the
codec under test uses.
"""

from __future__ import annotations


class InflateError(ValueError):
    pass


_LEN_BASE = (3, 4, 5, 6, 7, 8, 9, 10, 11, 13, 15, 17, 19, 23, 27, 31,
             35, 43, 51, 59, 67, 83, 99, 115, 131, 163, 195, 227, 258)
_LEN_EXTRA = (0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2,
              3, 3, 3, 3, 4, 4, 4, 4, 5, 5, 5, 5, 0)
_DIST_BASE = (1, 2, 3, 4, 5, 7, 9, 13, 17, 25, 33, 49, 65, 97, 129, 193,
              257, 385, 513, 769, 1025, 1537, 2049, 3073, 4097, 6145,
              8193, 12289, 16385, 24577)
_DIST_EXTRA = (0, 0, 0, 0, 1, 1, 2, 2, 3, 3, 4, 4, 5, 5, 6, 6,
               7, 7, 8, 8, 9, 9, 10, 10, 11, 11, 12, 12, 13, 13)
_CL_ORDER = (16, 17, 18, 0, 8, 7, 9, 6, 10, 5, 11, 4, 12, 3, 13, 2, 14, 1, 15)


class _Bits:
    def __init__(self, data: bytes) -> None:
        self.data = data
        self.pos = 0  # bit position

    def bit(self) -> int:
        byte = self.pos >> 3
        if byte >= len(self.data):
            raise InflateError("unexpected end of stream")
        b = (self.data[byte] >> (self.pos & 7)) & 1
        self.pos += 1
        return b

    def bits(self, n: int) -> int:
        v = 0
        for i in range(n):
            v |= self.bit() << i
        return v

    def align(self) -> None:
        self.pos = (self.pos + 7) & ~7


class _Huffman:
    """Canonical Huffman decoder built from code lengths."""

    def __init__(self, lengths: list[int]) -> None:
        self.counts = [0] * 16
        for n in lengths:
            self.counts[n] += 1
        self.counts[0] = 0
        offs = [0] * 16
        for i in range(1, 16):
            offs[i] = offs[i - 1] + self.counts[i - 1]
        self.symbols = [0] * len(lengths)
        for sym, n in enumerate(lengths):
            if n:
                self.symbols[offs[n]] = sym
                offs[n] += 1
        # symbols are now sorted by (length, value)
        self.symbols = self.symbols[: sum(self.counts)]

    def decode(self, bits: _Bits) -> int:
        code = first = index = 0
        for length in range(1, 16):
            code |= bits.bit()
            count = self.counts[length]
            if code - first < count:
                return self.symbols[index + code - first]
            index += count
            first = (first + count) << 1
            code <<= 1
        raise InflateError("invalid Huffman code")


def _fixed() -> tuple[_Huffman, _Huffman]:
    lit = [8] * 144 + [9] * 112 + [7] * 24 + [8] * 8
    return _Huffman(lit), _Huffman([5] * 30)


def _dynamic(bits: _Bits) -> tuple[_Huffman, _Huffman]:
    hlit = bits.bits(5) + 257
    hdist = bits.bits(5) + 1
    hclen = bits.bits(4) + 4
    cl = [0] * 19
    for i in range(hclen):
        cl[_CL_ORDER[i]] = bits.bits(3)
    cl_huff = _Huffman(cl)
    lengths: list[int] = []
    while len(lengths) < hlit + hdist:
        sym = cl_huff.decode(bits)
        if sym < 16:
            lengths.append(sym)
        elif sym == 16:
            if not lengths:
                raise InflateError("repeat with no previous length")
            lengths += [lengths[-1]] * (3 + bits.bits(2))
        elif sym == 17:
            lengths += [0] * (3 + bits.bits(3))
        else:
            lengths += [0] * (11 + bits.bits(7))
    if len(lengths) > hlit + hdist:
        raise InflateError("code lengths overrun")
    return _Huffman(lengths[:hlit]), _Huffman(lengths[hlit:])


def _codes(bits: _Bits, out: bytearray, lit: _Huffman, dist: _Huffman) -> None:
    while True:
        sym = lit.decode(bits)
        if sym < 256:
            out.append(sym)
        elif sym == 256:
            return
        else:
            sym -= 257
            if sym >= 29:
                raise InflateError("bad length symbol")
            length = _LEN_BASE[sym] + bits.bits(_LEN_EXTRA[sym])
            dsym = dist.decode(bits)
            if dsym >= 30:
                raise InflateError("bad distance symbol")
            d = _DIST_BASE[dsym] + bits.bits(_DIST_EXTRA[dsym])
            if d > len(out):
                raise InflateError("distance too far back")
            for _ in range(length):
                out.append(out[-d])


def inflate(data: bytes) -> tuple[bytes, int]:
    """Decode one raw DEFLATE stream; returns (output, bytes consumed)."""
    bits = _Bits(bytes(data))
    out = bytearray()
    while True:
        final = bits.bit()
        btype = bits.bits(2)
        if btype == 0:
            bits.align()
            i = bits.pos >> 3
            if i + 4 > len(bits.data):
                raise InflateError("truncated stored block header")
            n = bits.data[i] | bits.data[i + 1] << 8
            nn = bits.data[i + 2] | bits.data[i + 3] << 8
            if n != (~nn & 0xFFFF):
                raise InflateError("stored block length check failed")
            if i + 4 + n > len(bits.data):
                raise InflateError("truncated stored block")
            out += bits.data[i + 4 : i + 4 + n]
            bits.pos = (i + 4 + n) * 8
        elif btype == 1:
            _codes(bits, out, *_fixed())
        elif btype == 2:
            _codes(bits, out, *_dynamic(bits))
        else:
            raise InflateError("reserved block type")
        if final:
            return bytes(out), (bits.pos + 7) >> 3
