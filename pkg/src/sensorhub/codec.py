"""Block payload codec: delta-of-delta timestamps + zig-zag value deltas.

Payload layout (all integers LEB128 varints):

    count
    first_ts            (plain varint, epoch ms)
    first_delta         (plain varint; timestamps strictly increase)
    dod[2..count-1]     (zig-zag: second-order timestamp deltas)
    zz(first_value)
    zz(value_delta[1..count-1])

The timestamp section is emitted in full before the value section. With
2-second cadences and slowly moving readings this lands around 2-3 bytes
per point, well inside the 10 bytes/point storage ceiling.
"""

from __future__ import annotations

import zlib

from .errors import CorruptBlock

BLOCK_POINT_LIMIT = 4096


def _zigzag(n: int) -> int:
    # formulated for Python's arbitrary-precision ints
    return (-n << 1) - 1 if n < 0 else n << 1


def _unzigzag(n: int) -> int:
    return (n >> 1) ^ -(n & 1)


def encode_block(points: list[tuple[int, int]]) -> bytes:
    """Encode time-ordered (ts_ms, value_scaled) pairs; inverse of decode_block."""
    out = bytearray()
    write = out.append
    count = len(points)

    def put_uvarint(n: int) -> None:
        while n > 0x7F:
            write((n & 0x7F) | 0x80)
            n >>= 7
        write(n)

    put_uvarint(count)
    if count == 0:
        return bytes(out)

    first_ts, first_val = points[0]
    put_uvarint(first_ts)
    prev_ts = first_ts
    prev_delta = None
    for i in range(1, count):
        ts = points[i][0]
        delta = ts - prev_ts
        if delta <= 0:
            raise ValueError("points must be strictly increasing in time")
        if prev_delta is None:
            put_uvarint(delta)
        else:
            dod = delta - prev_delta
            put_uvarint((-dod << 1) - 1 if dod < 0 else dod << 1)
        prev_delta = delta
        prev_ts = ts

    put_uvarint((-first_val << 1) - 1 if first_val < 0 else first_val << 1)
    prev_val = first_val
    for i in range(1, count):
        val = points[i][1]
        d = val - prev_val
        put_uvarint((-d << 1) - 1 if d < 0 else d << 1)
        prev_val = val
    return bytes(out)


def decode_block(payload: bytes) -> list[tuple[int, int]]:
    """Decode an encode_block payload; raises CorruptBlock on any underflow."""
    pos = 0
    end = len(payload)

    def get_uvarint() -> int:
        nonlocal pos
        shift = 0
        result = 0
        while True:
            if pos >= end:
                raise CorruptBlock("varint underflow")
            b = payload[pos]
            pos += 1
            result |= (b & 0x7F) << shift
            if not b & 0x80:
                return result
            shift += 7
            if shift > 70:
                raise CorruptBlock("varint overflow")

    count = get_uvarint()
    if count == 0:
        if pos != end:
            raise CorruptBlock("trailing bytes after empty block")
        return []

    first_ts = get_uvarint()
    deltas = []
    if count > 1:
        deltas.append(get_uvarint())
        for _ in range(count - 2):
            deltas.append(_unzigzag(get_uvarint()))

    ts = first_ts
    timestamps = [ts]
    prev_delta = None
    for dod in deltas:
        delta = dod if prev_delta is None else prev_delta + dod
        if delta <= 0:
            raise CorruptBlock("non-increasing timestamp on decode")
        ts += delta
        timestamps.append(ts)
        prev_delta = delta

    val = _unzigzag(get_uvarint())
    values = [val]
    for _ in range(count - 1):
        val += _unzigzag(get_uvarint())
        values.append(val)
    if pos != end:
        raise CorruptBlock("trailing bytes after block payload")
    return list(zip(timestamps, values))


def checksum(payload: bytes) -> int:
    return zlib.crc32(payload) & 0xFFFFFFFF
