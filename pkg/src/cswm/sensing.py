"""Scrambled Hadamard and S-matrix sensing operators.

The base matrix is the Sylvester Hadamard matrix in natural order,
``H[i, j] = (-1) ** popcount(i & j)``. Its all-ones first row is never
used. Columns are permuted by a seeded Fisher-Yates shuffle, so the
scrambled matrix is ``M[:, j] = base[:, perm[j]]`` and applying it to an
image ``x`` amounts to a Walsh-Hadamard transform of ``z`` with
``z[perm] = x``.

Permutation contract (part of the stream-file format): a splitmix64
generator seeded with the 64-bit seed drives a Fisher-Yates shuffle of
``range(S)``; for ``i = S-1 .. 1`` the swap partner is ``next() % (i+1)``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
import scipy.linalg

from . import _backend

MASK64 = (1 << 64) - 1
INT16_MAX = 2**15 - 1


class MatrixKind(enum.IntEnum):
    HADAMARD = 0
    SMATRIX = 1


def splitmix64(state):
    """Advance a splitmix64 state; returns ``(new_state, output)``."""
    state = (state + 0x9E3779B97F4A7C15) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


@lru_cache(maxsize=32)
def _permutation(size, seed):
    perm = list(range(size))
    state = seed & MASK64
    for i in range(size - 1, 0, -1):
        state, r = splitmix64(state)
        j = r % (i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    out = np.array(perm, dtype=np.int64)
    out.flags.writeable = False
    return out


def column_permutation(size, seed):
    """Seed-determined permutation of ``range(size)``."""
    return _permutation(int(size), int(seed))


def is_power_of_two(value):
    return value >= 1 and value & (value - 1) == 0


@dataclass(frozen=True)
class OperatorDescriptor:
    kind: MatrixKind
    order: int
    row_count: int
    seed: int


@dataclass(frozen=True, eq=False)
class SensingOperator:
    """Row subset of a column-scrambled Hadamard or S-matrix.

    ``rows`` are indexes into the base Hadamard matrix (row 0, the
    all-ones row, is never among them). ``row_count`` after construction
    is ``L``; :func:`reduce_operator` deletes rows while keeping order.
    """

    kind: MatrixKind
    order: int
    seed: int
    permutation: np.ndarray = field(repr=False)
    rows: np.ndarray = field(repr=False)

    @property
    def row_count(self):
        return int(self.rows.shape[0])

    @property
    def descriptor(self):
        return OperatorDescriptor(self.kind, self.order, self.row_count, self.seed)

    def dense(self):
        """Explicit ``row_count x order`` matrix (float64)."""
        base = scipy.linalg.hadamard(self.order).astype(np.float64)
        if self.kind == MatrixKind.SMATRIX:
            base = (base + 1.0) / 2.0
            base[:, 0] = 0.0
        return base[np.asarray(self.rows)][:, np.asarray(self.permutation)]


@dataclass(frozen=True, eq=False)
class MeasurementStream:
    values: np.ndarray
    descriptor: OperatorDescriptor

    def __len__(self):
        return int(self.values.shape[0])


def build_operator(kind, order, row_count, seed, *, scramble=True):
    """Construct the first ``row_count`` usable rows of the scrambled matrix.

    With ``scramble=False`` the column permutation is the identity
    (useful for inspecting the unscrambled structure).
    """
    kind = MatrixKind(kind)
    order = int(order)
    row_count = int(row_count)
    if order < 2 or not is_power_of_two(order):
        raise ValueError(f"order must be a power of two >= 2, got {order}")
    if not 1 <= row_count <= order - 1:
        raise ValueError(f"row_count must lie in [1, {order - 1}], got {row_count}")
    if not 0 <= int(seed) <= MASK64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    if scramble:
        perm = column_permutation(order, seed)
    else:
        perm = np.arange(order, dtype=np.int64)
    rows = np.arange(1, row_count + 1, dtype=np.int64)
    return SensingOperator(kind, order, int(seed), perm, rows)


def measurement_bounds(order):
    """Theoretical measurement range ``(-S/2, S/2)`` for a Hadamard operator."""
    if not is_power_of_two(order):
        raise ValueError("order must be a power of two")
    half = order // 2
    return -half, half


def reduce_operator(op, location_map):
    """Drop the rows at positions ``location_map`` (indexes into the current rows)."""
    idx = np.asarray(list(location_map), dtype=np.int64)
    if idx.size == 0:
        return op
    if idx.min() < 0 or idx.max() >= op.row_count:
        raise ValueError("location map index out of range")
    if np.unique(idx).size != idx.size:
        raise ValueError("duplicate index in location map")
    keep = np.ones(op.row_count, dtype=bool)
    keep[idx] = False
    return replace(op, rows=op.rows[keep])


def _as_vector(op, img):
    x = np.asarray(img, dtype=np.float64).ravel()
    if x.shape[0] != op.order:
        raise ValueError(f"image has {x.shape[0]} pixels, operator expects {op.order}")
    return x


def _quantize(values, order):
    q = np.sign(values) * np.floor(np.abs(values) + 0.5)
    # S = 65536 can reach +2**15 exactly, one past the int16 range
    return np.clip(q, -(2**15), INT16_MAX).astype(np.int64)


def apply_fast(op, img):
    """Real-valued ``op @ x`` through the Walsh-Hadamard transform."""
    x = _as_vector(op, img)
    z = np.empty_like(x)
    z[op.permutation] = x
    if op.kind == MatrixKind.SMATRIX:
        z[0] = 0.0
        w = _backend.kernels.fwht(z)
        return (z.sum() + w[op.rows]) / 2.0
    w = _backend.kernels.fwht(z)
    return w[op.rows]


def project(op, img):
    """Integer measurements of ``img`` via the fast transform."""
    return MeasurementStream(_quantize(apply_fast(op, img), op.order), op.descriptor)


def project_dense(op, img):
    """Reference projection by explicit row-by-row dot products."""
    x = _as_vector(op, img)
    return MeasurementStream(_quantize(op.dense() @ x, op.order), op.descriptor)


def adjoint_apply(op, stream):
    """``op.T @ stream`` through the fast transform."""
    y = np.asarray(getattr(stream, "values", stream), dtype=np.float64).ravel()
    if y.shape[0] != op.row_count:
        raise ValueError(f"stream has {y.shape[0]} values, operator has {op.row_count} rows")
    v = np.zeros(op.order, dtype=np.float64)
    v[op.rows] = y
    w = _backend.kernels.fwht(v)
    if op.kind == MatrixKind.SMATRIX:
        w = (y.sum() + w) / 2.0
        w[0] = 0.0
    return w[op.permutation]


def adjoint_dense(op, stream):
    y = np.asarray(getattr(stream, "values", stream), dtype=np.float64).ravel()
    if y.shape[0] != op.row_count:
        raise ValueError(f"stream has {y.shape[0]} values, operator has {op.row_count} rows")
    return op.dense().T @ y
