"""Binary stream files.

Little-endian layout::

    magic        4s   b"CSWM"
    version      u8   1
    matrix_kind  u8   0 Hadamard, 1 S-matrix
    S            u32  operator order (pixel count)
    L            u32  original measurement count
    seed         u64  column-permutation seed
    stream_kind  u8   0 original (int16 values), 1 marked (int32 values)
    n            u8   insertion levels, 0 for original streams
    tail_bits    u16  payload bits still pending when the stream ended
    map_count    u32  number of location-map entries
    checksum     u32  CRC-32 of the original int16 values (see below)
    map          map_count x u32, strictly increasing
    values       L x i16 (original) or (L - map_count) x i32 (marked)

The checksum covers the original stream's int16 little-endian bytes, with
payload positions that were not fully embedded set to zero, so a recovered
stream can be checked even when its final payload is truncated.
"""
from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from .sensing import MatrixKind, OperatorDescriptor

MAGIC = b"CSWM"
VERSION = 1
HEADER = struct.Struct("<4sBBIIQBBHII")
ORIGINAL = 0
MARKED = 1


class StreamFormatError(ValueError):
    pass


@dataclass(eq=False)
class StreamFile:
    matrix_kind: MatrixKind
    order: int
    length: int
    seed: int
    stream_kind: int
    values: np.ndarray
    n: int = 0
    tail_bits: int = 0
    location_map: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    checksum: int = 0

    @property
    def descriptor(self):
        return OperatorDescriptor(MatrixKind(self.matrix_kind), self.order, self.length, self.seed)

    @property
    def value_bytes(self):
        """Size of the value section alone (what the volume ratio counts)."""
        width = 2 if self.stream_kind == ORIGINAL else 4
        return width * int(np.asarray(self.values).shape[0])


def stream_checksum(values, zeroed=()):
    v = np.asarray(values, dtype=np.int64).copy()
    if len(zeroed):
        v[np.asarray(zeroed, dtype=np.int64)] = 0
    return zlib.crc32(v.astype("<i2").tobytes()) & 0xFFFFFFFF


def original_file(stream_values, descriptor):
    values = np.asarray(stream_values, dtype=np.int64)
    return StreamFile(
        matrix_kind=MatrixKind(descriptor.kind), order=descriptor.order, length=int(values.size),
        seed=descriptor.seed, stream_kind=ORIGINAL, values=values,
        checksum=stream_checksum(values),
    )


def marked_file(marked, descriptor, original_values):
    """Package a :class:`~cswm.rdh.MarkedStream` with its integrity checksum."""
    incomplete = marked.location_map[marked.complete_payloads:]
    return StreamFile(
        matrix_kind=MatrixKind(descriptor.kind), order=descriptor.order, length=marked.length,
        seed=descriptor.seed, stream_kind=MARKED, values=np.asarray(marked.values, dtype=np.int64),
        n=marked.n, tail_bits=marked.tail_bits, location_map=np.asarray(marked.location_map),
        checksum=stream_checksum(original_values, incomplete),
    )


def to_bytes(sf):
    values = np.asarray(sf.values, dtype=np.int64)
    locmap = np.asarray(sf.location_map, dtype=np.int64)
    if sf.stream_kind == ORIGINAL:
        if locmap.size:
            raise StreamFormatError("original streams carry no location map")
        if values.size != sf.length:
            raise StreamFormatError("original stream length mismatch")
        if values.size and (values.min() < -(2**15) or values.max() > 2**15 - 1):
            raise StreamFormatError("original values must fit in int16")
        body = values.astype("<i2").tobytes()
    elif sf.stream_kind == MARKED:
        if values.size + locmap.size != sf.length:
            raise StreamFormatError("marked values + map entries must equal L")
        if values.size and (values.min() < -(2**31) or values.max() > 2**31 - 1):
            raise StreamFormatError("marked values must fit in int32")
        body = values.astype("<i4").tobytes()
    else:
        raise StreamFormatError(f"unknown stream kind {sf.stream_kind}")
    if locmap.size and np.any(np.diff(locmap) <= 0):
        raise StreamFormatError("location map must be strictly increasing")
    head = HEADER.pack(MAGIC, VERSION, int(sf.matrix_kind), sf.order, sf.length, sf.seed,
                       sf.stream_kind, sf.n, sf.tail_bits, int(locmap.size), sf.checksum)
    return head + locmap.astype("<u4").tobytes() + body


def from_bytes(data):
    if len(data) < HEADER.size:
        raise StreamFormatError("file too short for header")
    (magic, version, kind, order, length, seed, stream_kind, n, tail_bits, map_count,
     checksum) = HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise StreamFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise StreamFormatError(f"unsupported version {version}")
    if kind not in (0, 1):
        raise StreamFormatError(f"unknown matrix kind {kind}")
    offset = HEADER.size
    map_end = offset + 4 * map_count
    if len(data) < map_end:
        raise StreamFormatError("truncated location map")
    locmap = np.frombuffer(data, dtype="<u4", count=map_count, offset=offset).astype(np.int64)
    if stream_kind == ORIGINAL:
        count, dtype = length, "<i2"
    elif stream_kind == MARKED:
        count, dtype = length - map_count, "<i4"
    else:
        raise StreamFormatError(f"unknown stream kind {stream_kind}")
    if count < 0 or len(data) != map_end + count * np.dtype(dtype).itemsize:
        raise StreamFormatError("value section length does not match header")
    values = np.frombuffer(data, dtype=dtype, count=count, offset=map_end).astype(np.int64)
    if locmap.size and np.any(np.diff(locmap) <= 0):
        raise StreamFormatError("location map must be strictly increasing")
    return StreamFile(MatrixKind(kind), order, length, seed, stream_kind, values, n, tail_bits,
                      locmap, checksum)


def write_stream(path, sf):
    with open(path, "wb") as fh:
        fh.write(to_bytes(sf))


def read_stream(path):
    with open(path, "rb") as fh:
        return from_bytes(fh.read())
