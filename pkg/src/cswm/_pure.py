"""Pure-Python kernels, used when the compiled extension is unavailable.

Signatures and return values mirror ``cswm._kernels`` exactly.
"""
import numpy as np


def fwht(values):
    """Walsh-Hadamard transform in natural (Sylvester) order.

    Returns ``H @ values`` as a new float64 array, where ``H[i, j] =
    (-1) ** popcount(i & j)``. No normalisation is applied.
    """
    a = np.array(values, dtype=np.float64)
    size = a.shape[0]
    if size & (size - 1):
        raise ValueError("length must be a power of two")
    h = 1
    while h < size:
        blocks = a.reshape(-1, 2, h)
        top = blocks[:, 0, :].copy()
        bottom = blocks[:, 1, :]
        blocks[:, 0, :] += bottom
        blocks[:, 1, :] = top - bottom
        h *= 2
    return a


def embed_kernel(y, n, threshold, offset, keywords):
    """Run the greedy embedding state machine over ``y``.

    ``threshold`` is None for loose thresholds. ``keywords`` holds one
    16-bit keystream word per potential payload.

    Returns ``(marked, location_map, tail_bits, expanded, bad_index)``;
    ``bad_index`` is the index of a payload outside the signed 16-bit
    range (embedding stops there), or -1.
    """
    mask = (1 << n) - 1
    loose = threshold is None
    T = 0 if loose else int(threshold)
    up_shift = mask * T + mask
    down_shift = mask * T
    keys = keywords.tolist() if hasattr(keywords, "tolist") else list(keywords)

    acc = 0
    nacc = 0
    k = 0
    expanded = 0
    marked = []
    location_map = []
    for i, v in enumerate(y.tolist() if hasattr(y, "tolist") else y):
        v = int(v)
        if nacc < n:
            if v < -32768 or v > 32767:
                return (np.array(marked, dtype=np.int64),
                        np.array(location_map, dtype=np.int64), nacc, expanded, i)
            acc = (acc << 16) | ((v & 0xFFFF) ^ keys[k])
            k += 1
            nacc += 16
            location_map.append(i)
            continue
        d = v - offset
        if loose or -T <= d <= T:
            nacc -= n
            bn = acc >> nacc
            acc &= (1 << nacc) - 1
            marked.append(d * (1 << n) + bn)
            expanded += 1
        elif d > T:
            marked.append(d + up_shift)
        else:
            marked.append(d - down_shift)
    return (np.array(marked, dtype=np.int64),
            np.array(location_map, dtype=np.int64), nacc, expanded, -1)


def extract_kernel(marked, n, threshold, offset, keywords, n_payloads):
    """Invert ``embed_kernel`` on the marked values.

    Returns ``(carriers, payloads, partial_value, partial_bits,
    total_bits)``. ``payloads`` holds the fully recovered payload values
    in order; ``partial_value`` carries the high ``partial_bits`` bits of
    the next payload (low bits zero) when the chunk stream ends mid-word.
    """
    mask = (1 << n) - 1
    loose = threshold is None
    T = 0 if loose else int(threshold)
    low = -(T << n)
    high = (T << n) + mask
    up_shift = mask * T + mask
    down_shift = mask * T
    keys = keywords.tolist() if hasattr(keywords, "tolist") else list(keywords)

    acc = 0
    nacc = 0
    k = 0
    total_bits = 0
    carriers = []
    payloads = []
    for D in marked.tolist() if hasattr(marked, "tolist") else marked:
        D = int(D)
        if loose or low <= D <= high:
            d = D >> n
            acc = (acc << n) | (D & mask)
            nacc += n
            total_bits += n
            while nacc >= 16 and k < n_payloads:
                nacc -= 16
                word = (acc >> nacc) ^ keys[k]
                acc &= (1 << nacc) - 1
                payloads.append(word - 0x10000 if word & 0x8000 else word)
                k += 1
        elif D > high:
            d = D - up_shift
        else:
            d = D + down_shift
        carriers.append(d + offset)

    partial_value = 0
    partial_bits = 0
    if 0 < nacc < 16 and k < n_payloads:
        keep = ((1 << nacc) - 1) << (16 - nacc)
        word = ((acc << (16 - nacc)) ^ keys[k]) & keep
        partial_value = word - 0x10000 if word & 0x8000 else word
        partial_bits = nacc
    return (np.array(carriers, dtype=np.int64), np.array(payloads, dtype=np.int64),
            partial_value, partial_bits, total_bits)
