# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: Walsh-Hadamard butterfly and the embed/extract loops.

Same signatures and results as ``cswm._pure``.
"""
import numpy as np
cimport numpy as cnp
from libc.stdint cimport int64_t, uint64_t, uint16_t

cnp.import_array()


def fwht(values):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] arr = np.array(values, dtype=np.float64).ravel()
    cdef double[::1] a = arr
    cdef Py_ssize_t size = a.shape[0]
    cdef Py_ssize_t h = 1, i, j
    cdef double x, y
    if size & (size - 1):
        raise ValueError("length must be a power of two")
    while h < size:
        i = 0
        while i < size:
            for j in range(i, i + h):
                x = a[j]
                y = a[j + h]
                a[j] = x + y
                a[j + h] = x - y
            i += 2 * h
        h *= 2
    return arr


def embed_kernel(y, int n, threshold, int64_t offset, keywords):
    cdef int64_t[::1] ys = np.ascontiguousarray(y, dtype=np.int64)
    cdef uint16_t[::1] keys = np.ascontiguousarray(keywords, dtype=np.uint16)
    cdef Py_ssize_t count = ys.shape[0]
    cdef bint loose = threshold is None
    cdef int64_t T = 0 if loose else threshold
    cdef int64_t mask = (1 << n) - 1
    cdef int64_t scale = 1 << n
    cdef int64_t up_shift = mask * T + mask
    cdef int64_t down_shift = mask * T
    cdef uint64_t acc = 0
    cdef int nacc = 0
    cdef Py_ssize_t k = 0, i, out = 0, nmap = 0
    cdef int64_t v, d, bn
    cdef Py_ssize_t expanded = 0

    marked_arr = np.empty(count, dtype=np.int64)
    map_arr = np.empty(count, dtype=np.int64)
    cdef int64_t[::1] marked = marked_arr
    cdef int64_t[::1] locmap = map_arr

    for i in range(count):
        v = ys[i]
        if nacc < n:
            if v < -32768 or v > 32767:
                return marked_arr[:out], map_arr[:nmap], nacc, expanded, i
            acc = (acc << 16) | ((<uint64_t>(v & 0xFFFF)) ^ keys[k])
            k += 1
            nacc += 16
            locmap[nmap] = i
            nmap += 1
            continue
        d = v - offset
        if loose or (-T <= d and d <= T):
            nacc -= n
            bn = <int64_t>(acc >> nacc)
            acc &= ((<uint64_t>1) << nacc) - 1
            marked[out] = d * scale + bn
            expanded += 1
        elif d > T:
            marked[out] = d + up_shift
        else:
            marked[out] = d - down_shift
        out += 1
    return marked_arr[:out], map_arr[:nmap], nacc, expanded, -1


def extract_kernel(marked, int n, threshold, int64_t offset, keywords, Py_ssize_t n_payloads):
    cdef int64_t[::1] ms = np.ascontiguousarray(marked, dtype=np.int64)
    cdef uint16_t[::1] keys = np.ascontiguousarray(keywords, dtype=np.uint16)
    cdef Py_ssize_t count = ms.shape[0]
    cdef bint loose = threshold is None
    cdef int64_t T = 0 if loose else threshold
    cdef int64_t mask = (1 << n) - 1
    cdef int64_t scale = 1 << n
    cdef int64_t low = -T * scale
    cdef int64_t high = T * scale + mask
    cdef int64_t up_shift = mask * T + mask
    cdef int64_t down_shift = mask * T
    cdef uint64_t acc = 0, word, keep
    cdef int nacc = 0
    cdef Py_ssize_t k = 0, i
    cdef int64_t D, d, bn, total_bits = 0

    carrier_arr = np.empty(count, dtype=np.int64)
    payload_arr = np.empty(n_payloads, dtype=np.int64)
    cdef int64_t[::1] carriers = carrier_arr
    cdef int64_t[::1] payloads = payload_arr

    for i in range(count):
        D = ms[i]
        if loose or (low <= D and D <= high):
            bn = D & mask
            d = (D - bn) / scale
            acc = (acc << n) | <uint64_t>bn
            nacc += n
            total_bits += n
            while nacc >= 16 and k < n_payloads:
                nacc -= 16
                word = (acc >> nacc) ^ keys[k]
                acc &= ((<uint64_t>1) << nacc) - 1
                payloads[k] = <int64_t>word - 0x10000 if word & 0x8000 else <int64_t>word
                k += 1
        elif D > high:
            d = D - up_shift
        else:
            d = D + down_shift
        carriers[i] = d + offset

    cdef int64_t partial_value = 0
    cdef int partial_bits = 0
    if 0 < nacc < 16 and k < n_payloads:
        keep = (((<uint64_t>1) << nacc) - 1) << (16 - nacc)
        word = ((acc << (16 - nacc)) ^ keys[k]) & keep
        partial_value = <int64_t>word - 0x10000 if word & 0x8000 else <int64_t>word
        partial_bits = nacc
    return carrier_arr, payload_arr[:k], partial_value, partial_bits, total_bits
