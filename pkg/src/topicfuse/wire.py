"""Compact binary payloads for sharing a robot's map and topic descriptors.

Layout (little-endian). Header, 30 bytes:

    offset size field
    0      1    version (currently 1)
    1      3    magic b"TFM"
    4      4    robot_id      u32
    8      4    timestep      u32
    12     4    grid_cells    u32
    16     2    K             u16  number of topics
    18     4    V             u32  vocabulary size
    22     4    body_len      u32  length of the compressed body
    26     4    crc32         u32  of the compressed body

Body, zlib-compressed:

    K * V u16   descriptors, each row quantized to sum to exactly 65535
    varint      number of label runs
    runs        (label + 1, run length) varint pairs over all grid cells in
                row-major order; label value 0 marks unobserved cells
    varints     zigzag-encoded timestamp deltas of the labeled cells, in cell order

Varints are unsigned LEB128.
"""
from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .rost import LocalSemanticMap

VERSION = 1
MAGIC = b"TFM"
HEADER = struct.Struct("<B3sIIIHIII")
HEADER_SIZE = HEADER.size
QMAX = 65535
MAX_VARINT_BYTES = 10


class WireError(ValueError):
    """Payload cannot be decoded."""


class VersionError(WireError):
    pass


class TruncatedError(WireError):
    pass


class CorruptError(WireError):
    pass


@dataclass
class MapPayload:
    robot_id: int
    timestep: int
    grid_cells: int
    local_map: LocalSemanticMap
    descriptors: np.ndarray
    version: int = VERSION


def quantize(descriptors: np.ndarray) -> np.ndarray:
    """Largest-remainder rounding of each row to integers summing to ``QMAX``."""
    d = np.asarray(descriptors, dtype=np.float64)
    if d.size == 0:
        return np.zeros(d.shape, dtype=np.uint16)
    if np.any(d < 0) or not np.all(np.isfinite(d)):
        raise ValueError("descriptors must be finite and non-negative")
    sums = d.sum(axis=1, keepdims=True)
    if np.any(sums <= 0):
        raise ValueError("descriptor rows must have positive mass")
    scaled = d / sums * QMAX
    q = np.floor(scaled).astype(np.int64)
    short = QMAX - q.sum(axis=1)
    frac = scaled - q
    for i in np.nonzero(short)[0]:
        # stable sort keeps the split deterministic under equal remainders
        top = np.argsort(-frac[i], kind="stable")[: short[i]]
        q[i, top] += 1
    return q.astype(np.uint16)


def dequantize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    if q.size == 0:
        return q
    s = q.sum(axis=1, keepdims=True)
    if np.any(s <= 0):
        raise CorruptError("descriptor row with zero mass")
    return q / s


def _put_varint(out: bytearray, v: int):
    while v >= 0x80:
        out.append((v & 0x7F) | 0x80)
        v >>= 7
    out.append(v)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def remaining(self) -> int:
        return len(self.buf) - self.pos

    def take(self, n: int) -> bytes:
        if n > self.remaining():
            raise CorruptError("body shorter than its declared contents")
        b = self.buf[self.pos:self.pos + n]
        self.pos += n
        return b

    def varint(self) -> int:
        v = shift = 0
        for _ in range(MAX_VARINT_BYTES):
            if self.pos >= len(self.buf):
                raise CorruptError("varint runs past the end of the body")
            b = self.buf[self.pos]
            self.pos += 1
            v |= (b & 0x7F) << shift
            if not b & 0x80:
                return v
            shift += 7
        raise CorruptError("overlong varint")


def _zigzag(v: int) -> int:
    return (v << 1) if v >= 0 else ((-v << 1) - 1)


def _unzigzag(v: int) -> int:
    return (v >> 1) if not v & 1 else -((v + 1) >> 1)


def encode(local_map: LocalSemanticMap, descriptors, grid_cells: int,
           timestep: Optional[int] = None, level: int = 9) -> bytes:
    """Serialize one robot's local map and descriptors.

    ``timestep`` defaults to the latest visit in the map (0 when empty).
    """
    d = np.asarray(descriptors, dtype=np.float64)
    if d.ndim != 2:
        raise ValueError("descriptors must be a K x V array")
    K, V = d.shape
    if K > 0xFFFF:
        raise ValueError("too many topics for the payload format")
    cells = np.asarray(local_map.cells, dtype=np.int64)
    labels = np.asarray(local_map.labels, dtype=np.int64)
    stamps = np.asarray(local_map.timesteps, dtype=np.int64)
    if len(cells) and (cells.min() < 0 or cells.max() >= grid_cells):
        raise ValueError("map cells fall outside the grid")
    if len(np.unique(cells)) != len(cells):
        raise ValueError("map lists a cell twice")
    if len(labels) and (labels.min() < 0 or labels.max() >= K):
        raise ValueError("map labels must index the descriptor rows")
    if len(stamps) and stamps.min() < 0:
        raise ValueError("timestamps must be non-negative")
    if timestep is None:
        timestep = int(stamps.max()) if len(stamps) else 0
    for name, v in (("robot_id", local_map.robot_id), ("timestep", timestep),
                    ("grid_cells", grid_cells), ("V", V)):
        if not 0 <= int(v) <= 0xFFFFFFFF:
            raise ValueError(f"{name} does not fit the u32 header field")

    order = np.argsort(cells, kind="stable")
    cells, labels, stamps = cells[order], labels[order], stamps[order]

    body = bytearray(quantize(d).astype("<u2").tobytes())
    dense = np.zeros(grid_cells, dtype=np.int64)
    dense[cells] = labels + 1
    if grid_cells:
        starts = np.flatnonzero(np.r_[True, dense[1:] != dense[:-1]])
        lengths = np.diff(np.r_[starts, grid_cells])
        values = dense[starts]
    else:
        starts = lengths = values = np.zeros(0, dtype=np.int64)
    _put_varint(body, len(starts))
    for v, n in zip(values.tolist(), lengths.tolist()):
        _put_varint(body, v)
        _put_varint(body, n)
    prev = 0
    for t in stamps.tolist():
        _put_varint(body, _zigzag(t - prev))
        prev = t

    packed = zlib.compress(bytes(body), level)
    header = HEADER.pack(VERSION, MAGIC, local_map.robot_id, timestep, grid_cells, K, V,
                         len(packed), zlib.crc32(packed))
    return header + packed


def decode_payload(blob: bytes) -> MapPayload:
    """Parse a payload; any malformed input raises a ``WireError`` subclass."""
    blob = bytes(blob)
    if not blob:
        raise TruncatedError("empty payload")
    if blob[0] != VERSION or blob[1:4] != MAGIC[:len(blob) - 1]:
        raise VersionError(f"unsupported payload version {blob[0]} / magic {blob[1:4]!r}")
    if len(blob) < 4:
        raise TruncatedError("payload shorter than the version field and magic")
    if len(blob) < HEADER_SIZE:
        raise TruncatedError("payload shorter than its header")
    _, _, robot_id, timestep, grid_cells, K, V, body_len, crc = HEADER.unpack_from(blob)
    body = blob[HEADER_SIZE:]
    if len(body) < body_len:
        raise TruncatedError(f"body has {len(body)} of {body_len} bytes")
    if len(body) > body_len:
        raise CorruptError("trailing bytes after the body")
    if zlib.crc32(body) != crc:
        raise CorruptError("checksum mismatch")

    # descriptors, then per cell at most two 5-byte run varints and one 10-byte timestamp
    limit = 2 * K * V + 20 * grid_cells + 16
    inflater = zlib.decompressobj()
    try:
        raw = inflater.decompress(body, limit + 1)
    except zlib.error as exc:
        raise CorruptError(f"body does not inflate: {exc}") from None
    if len(raw) > limit or inflater.unconsumed_tail or not inflater.eof or inflater.unused_data:
        raise CorruptError("body inflates to an inconsistent size")

    r = _Reader(raw)
    q = np.frombuffer(r.take(2 * K * V), dtype="<u2").reshape(K, V)
    descriptors = dequantize(q) if K else np.zeros((0, V))

    n_runs = r.varint()
    if n_runs > r.remaining() // 2:
        raise CorruptError("run count exceeds the body size")
    cells, labels = [], []
    pos = 0
    n_labeled = 0
    for _ in range(n_runs):
        v, n = r.varint(), r.varint()
        if n == 0 or pos + n > grid_cells:
            raise CorruptError("label runs do not tile the grid")
        if v > K:
            raise CorruptError("label outside the topic range")
        if v:
            n_labeled += n
            # each labeled cell needs at least one timestamp byte
            if n_labeled > len(raw):
                raise CorruptError("more labeled cells than the body can describe")
            cells.append(np.arange(pos, pos + n, dtype=np.int64))
            labels.append(np.full(n, v - 1, dtype=np.int64))
        pos += n
    if pos != grid_cells:
        raise CorruptError("label runs do not tile the grid")

    stamps = np.empty(n_labeled, dtype=np.int64)
    prev = 0
    for i in range(n_labeled):
        prev += _unzigzag(r.varint())
        if prev < 0 or prev >= 2 ** 63:
            raise CorruptError("timestamp out of range")
        stamps[i] = prev
    if r.remaining():
        raise CorruptError("unused bytes at the end of the body")

    empty = np.zeros(0, dtype=np.int64)
    lm = LocalSemanticMap(robot_id, np.concatenate(cells) if cells else empty,
                          np.concatenate(labels) if labels else empty, stamps, K)
    return MapPayload(robot_id, timestep, grid_cells, lm, descriptors, VERSION)


def decode(blob: bytes) -> tuple[LocalSemanticMap, np.ndarray]:
    p = decode_payload(blob)
    return p.local_map, p.descriptors
