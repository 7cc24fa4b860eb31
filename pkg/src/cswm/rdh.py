"""On-the-fly reversible embedding of protected measurements.

A measurement is taken out of the stream as *payload* whenever no full
n-bit chunk is waiting; its 16-bit two's-complement code, XORed with the
keystream, is sliced MSB-first into n-bit chunks (leftover bits wait for
the next payload). Every following measurement with prediction error
``d = y - c`` inside ``[-T, T]`` absorbs one chunk by expansion,
``2**n * d + bn``; the others are shifted out of the expanded range.

``threshold=None`` means loose thresholds: every carrier is expanded.
"""
from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .keystream import KeySpec, keystream_bits, keystream_words

INT32_MIN = -(2**31)
INT32_MAX = 2**31 - 1
_T_LIMIT = 2**40


class MarkClass(enum.Enum):
    EXPANDED = "expanded"
    SHIFTED_UP = "shifted_up"
    SHIFTED_DOWN = "shifted_down"


@dataclass(frozen=True)
class EmbedParams:
    n: int
    threshold: int | None = None
    predictor_offset: int = 0

    def __post_init__(self):
        if not 1 <= self.n <= 16:
            raise ValueError(f"insertion levels must be in 1..16, got {self.n}")
        if self.threshold is not None and not 0 <= self.threshold <= _T_LIMIT:
            raise ValueError(f"threshold must be a non-negative integer, got {self.threshold}")

    @property
    def bn_max(self):
        return (1 << self.n) - 1

    def is_loose(self, order):
        """True when every measurement of an order-``order`` operator is eligible."""
        return self.threshold is None or self.threshold >= order // 2


def encode_payload(value, key_bits=None):
    """16-bit two's-complement code of ``value``, MSB first, XOR ``key_bits``."""
    value = int(value)
    if not -(2**15) <= value <= 2**15 - 1:
        raise ValueError(f"payload {value} does not fit in 16 bits")
    word = value & 0xFFFF
    bits = np.array([(word >> (15 - i)) & 1 for i in range(16)], dtype=np.uint8)
    if key_bits is not None:
        pad = np.asarray(key_bits, dtype=np.uint8)
        if pad.shape != (16,):
            raise ValueError("need exactly 16 key bits")
        bits ^= pad
    return bits


def decode_payload(bits, key_bits=None):
    bits = np.asarray(bits, dtype=np.uint8)
    if key_bits is not None:
        bits = bits ^ np.asarray(key_bits, dtype=np.uint8)
    word = 0
    for b in bits.tolist():
        word = (word << 1) | b
    return word - 0x10000 if word & 0x8000 else word


@dataclass
class ChunkBuffer:
    pending: deque = field(default_factory=deque)
    remainder: list = field(default_factory=list)


def chunk(buffer, bits, n):
    """Append ``remainder + bits`` to ``buffer`` as MSB-first n-bit chunks.

    The leftover (< n bits) becomes the new remainder. The buffer is
    updated in place and returned.
    """
    if n < 1:
        raise ValueError("chunk length must be positive")
    stream = list(buffer.remainder) + [int(b) for b in bits]
    full = len(stream) // n
    for c in range(full):
        value = 0
        for b in stream[c * n:(c + 1) * n]:
            value = (value << 1) | b
        buffer.pending.append(value)
    buffer.remainder = stream[full * n:]
    return buffer


def expand_or_shift(d, bn, n, T):
    """Marked value for prediction error ``d`` (``bn`` given iff eligible)."""
    bn_max = (1 << n) - 1
    if T is None or -T <= d <= T:
        if bn is None:
            raise ValueError(f"eligible prediction error {d} needs a chunk")
        if not 0 <= bn <= bn_max:
            raise ValueError(f"chunk {bn} out of range for n={n}")
        return (1 << n) * d + bn
    if bn is not None:
        raise ValueError(f"prediction error {d} is not eligible for a chunk")
    if d > T:
        return d + bn_max * T + bn_max
    return d - bn_max * T


def classify_marked_value(D, n, T):
    if T is None:
        return MarkClass.EXPANDED
    bn_max = (1 << n) - 1
    if -(T << n) <= D <= (T << n) + bn_max:
        return MarkClass.EXPANDED
    if D > (T << n) + bn_max:
        return MarkClass.SHIFTED_UP
    return MarkClass.SHIFTED_DOWN


def invert_expansion(D, n, T):
    """Return ``(d, bn)``; ``bn`` is None for shifted values."""
    bn_max = (1 << n) - 1
    cls = classify_marked_value(D, n, T)
    if cls is MarkClass.EXPANDED:
        d = D >> n  # floor division, correct for negative D
        return d, D - (d << n)
    if cls is MarkClass.SHIFTED_UP:
        return D - bn_max * T - bn_max, None
    return D + bn_max * T, None


@dataclass(frozen=True, eq=False)
class MarkedStream:
    """Marked carriers plus the side information needed to undo them."""

    values: np.ndarray
    location_map: np.ndarray
    n: int
    tail_bits: int
    length: int
    expanded: int

    @property
    def payload_count(self):
        return int(self.location_map.shape[0])

    @property
    def key_bits_used(self):
        return 16 * self.payload_count

    @property
    def complete_payloads(self):
        """Payloads whose 16 bits all reached a carrier."""
        return (16 * self.payload_count - self.tail_bits) // 16

    @property
    def shifted(self):
        return int(self.values.shape[0]) - self.expanded


@dataclass(frozen=True, eq=False)
class Recovery:
    values: np.ndarray
    truncated_positions: np.ndarray

    @property
    def exact(self):
        return self.truncated_positions.size == 0


class Embedder:
    """Streaming embedder: feed measurements one at a time.

    ``push`` returns the marked value to transmit, or None when the
    measurement was taken as payload. Bit handling goes through
    :func:`encode_payload` / :func:`chunk`, independent of the batch kernels.
    """

    def __init__(self, params, key):
        self.params = params
        self.key = key
        self.buffer = ChunkBuffer()
        self.index = 0
        self.values = []
        self.location_map = []
        self.expanded = 0
        self._bits = np.zeros(0, dtype=np.uint8)
        self._fetched = 0

    def _next_key_bits(self):
        if self._bits.shape[0] < 16:
            more = keystream_bits(self.key.advanced(self._fetched), 512)
            self._fetched += 512
            self._bits = np.concatenate([self._bits, more])
        out, self._bits = self._bits[:16], self._bits[16:]
        return out

    def push(self, y):
        p = self.params
        i = self.index
        self.index += 1
        if not self.buffer.pending:
            bits = encode_payload(y, self._next_key_bits())
            chunk(self.buffer, bits, p.n)
            self.location_map.append(i)
            return None
        d = int(y) - p.predictor_offset
        if p.threshold is None or -p.threshold <= d <= p.threshold:
            bn = self.buffer.pending.popleft()
            self.expanded += 1
            D = expand_or_shift(d, bn, p.n, p.threshold)
        else:
            D = expand_or_shift(d, None, p.n, p.threshold)
        self.values.append(D)
        return D

    def finish(self):
        if self.index == 0:
            raise ValueError("empty measurement stream")
        tail = len(self.buffer.remainder) + self.params.n * len(self.buffer.pending)
        return MarkedStream(
            values=np.array(self.values, dtype=np.int64),
            location_map=np.array(self.location_map, dtype=np.int64),
            n=self.params.n,
            tail_bits=tail,
            length=self.index,
            expanded=self.expanded,
        )


def _check_int32(values, allow_overflow):
    if values.size and not allow_overflow:
        lo, hi = int(values.min()), int(values.max())
        if lo < INT32_MIN or hi > INT32_MAX:
            raise OverflowError(
                f"marked values span [{lo}, {hi}], outside signed 32-bit range; "
                "lower the threshold or allow overflow explicitly"
            )


def embed_stream(source, params, key, *, allow_overflow=False, backend=None):
    """Embed ``source`` (any iterable of integers) into itself."""
    y = np.fromiter((int(v) for v in source), dtype=np.int64) if not isinstance(
        source, np.ndarray) else np.asarray(source, dtype=np.int64).ravel()
    if y.size == 0:
        raise ValueError("empty measurement stream")
    if y.min() < -(2**15) or y.max() > 2**15:
        raise ValueError("measurements outside the declared 16-bit range")
    kern = _backend.get(backend)
    words = keystream_words(key, y.size)
    marked, locmap, tail, expanded, bad = kern.embed_kernel(
        y, params.n, params.threshold, params.predictor_offset, words)
    if bad >= 0:
        raise ValueError(f"payload measurement {int(y[bad])} at index {bad} does not fit in 16 bits")
    marked = np.asarray(marked, dtype=np.int64)
    _check_int32(marked, allow_overflow)
    return MarkedStream(
        values=marked,
        location_map=np.asarray(locmap, dtype=np.int64),
        n=params.n,
        tail_bits=int(tail),
        length=int(y.size),
        expanded=int(expanded),
    )


def extract_stream(marked, params, key, location_map=None, *, backend=None):
    """Recover the original measurements (authorized side).

    Payload positions that never fully reached a carrier come back with
    only their recovered high bits and are listed in
    ``Recovery.truncated_positions``.
    """
    if params.n != marked.n:
        raise ValueError(f"stream was marked with n={marked.n}, got n={params.n}")
    locmap = marked.location_map if location_map is None else np.asarray(location_map, dtype=np.int64)
    values = np.asarray(marked.values, dtype=np.int64)
    length = marked.length
    if values.size + locmap.size != length:
        raise ValueError(
            f"{values.size} marked values + {locmap.size} map entries != {length} measurements")
    if locmap.size and (np.any(np.diff(locmap) <= 0) or locmap[0] < 0 or locmap[-1] >= length):
        raise ValueError("location map must be strictly increasing and within the stream")
    kern = _backend.get(backend)
    words = keystream_words(key, locmap.size)
    carriers, payloads, partial, partial_bits, total = kern.extract_kernel(
        values, params.n, params.threshold, params.predictor_offset, words, int(locmap.size))
    expected = 16 * locmap.size - marked.tail_bits
    if total != expected:
        raise ValueError(
            f"recovered {total} payload bits, expected {expected}: wrong threshold or corrupt stream")
    payload_values = np.zeros(locmap.size, dtype=np.int64)
    k = len(payloads)
    payload_values[:k] = payloads
    if partial_bits and k < locmap.size:
        payload_values[k] = partial
    out = np.empty(length, dtype=np.int64)
    is_payload = np.zeros(length, dtype=bool)
    is_payload[locmap] = True
    out[is_payload] = payload_values
    out[~is_payload] = carriers
    return Recovery(out, locmap[k:].copy())


__all__ = [
    "ChunkBuffer",
    "EmbedParams",
    "Embedder",
    "KeySpec",
    "MarkClass",
    "MarkedStream",
    "Recovery",
    "chunk",
    "classify_marked_value",
    "decode_payload",
    "embed_stream",
    "encode_payload",
    "expand_or_shift",
    "extract_stream",
    "invert_expansion",
]
