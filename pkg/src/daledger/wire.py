"""Small binary helpers shared by the canonical encodings."""

from __future__ import annotations


def encode_varint(n: int) -> bytes:
    """Unsigned LEB128."""
    if n < 0:
        raise ValueError("varint must be non-negative")
    out = bytearray()
    while True:
        b = n & 0x7F
        n >>= 7
        if n:
            out.append(b | 0x80)
        else:
            out.append(b)
            return bytes(out)


def decode_varint(buf: bytes, pos: int = 0) -> tuple[int, int]:
    """Return (value, new position). Raises ValueError on truncation."""
    result = 0
    shift = 0
    while True:
        if pos >= len(buf):
            raise ValueError("truncated varint")
        b = buf[pos]
        pos += 1
        result |= (b & 0x7F) << shift
        if not b & 0x80:
            return result, pos
        shift += 7
        if shift > 63:
            raise ValueError("varint too long")


def u32le(n: int) -> bytes:
    return n.to_bytes(4, "little")


def read_u32le(buf: bytes, pos: int) -> tuple[int, int]:
    if pos + 4 > len(buf):
        raise ValueError("truncated u32")
    return int.from_bytes(buf[pos:pos + 4], "little"), pos + 4
