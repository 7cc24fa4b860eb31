"""Seeded keystream and XOR protection.

The keystream is ChaCha20 (RFC 8439) keyed with ``SHA-256(key material)``,
a 96-bit all-zero nonce and a block counter starting at 0; the stream is
the cipher applied to zero bytes. Bits are read most-significant first
within each byte. Bit offset ``p`` of the stream is bit ``7 - p % 8`` of
byte ``p // 8``.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms

MIN_KEY_BYTES = 16
_BLOCK = 64


@dataclass(frozen=True)
class KeySpec:
    material: bytes
    position: int = 0

    def __post_init__(self):
        if len(self.material) < MIN_KEY_BYTES:
            raise ValueError(f"key material must be at least {MIN_KEY_BYTES} bytes")
        if self.position < 0:
            raise ValueError("stream position must be non-negative")

    def advanced(self, bits):
        """The same key with its cursor moved ``bits`` further along."""
        return replace(self, position=self.position + int(bits))


def load_key(path):
    """Read a raw key file (no header)."""
    with open(path, "rb") as fh:
        return KeySpec(fh.read())


def chacha20_stream(key32, byte_offset, count):
    """Raw ChaCha20 keystream for a 32-byte key, zero nonce, from ``byte_offset``."""
    if count <= 0:
        return b""
    block, skip = divmod(int(byte_offset), _BLOCK)
    nonce = block.to_bytes(4, "little") + bytes(12)
    enc = Cipher(algorithms.ChaCha20(key32, nonce), mode=None).encryptor()
    return enc.update(bytes(skip + count))[skip:]


def keystream_bytes(material, byte_offset, count):
    """``count`` keystream bytes starting at ``byte_offset``."""
    return chacha20_stream(hashlib.sha256(material).digest(), byte_offset, count)


def keystream_bits(key, count):
    """``count`` keystream bits (uint8 0/1) from ``key.position``."""
    count = int(count)
    if count < 0:
        raise ValueError("count must be non-negative")
    if count == 0:
        return np.zeros(0, dtype=np.uint8)
    first, lead = divmod(key.position, 8)
    nbytes = (lead + count + 7) // 8
    raw = np.frombuffer(keystream_bytes(key.material, first, nbytes), dtype=np.uint8)
    return np.unpackbits(raw)[lead:lead + count]


def keystream_words(key, count):
    """``count`` consecutive 16-bit keystream words, MSB-first (uint16)."""
    bits = keystream_bits(key, 16 * int(count))
    return np.packbits(bits).view(">u2").astype(np.uint16)


def xor_protect(plain_bits, key_bits):
    plain = np.asarray(plain_bits, dtype=np.uint8)
    pad = np.asarray(key_bits, dtype=np.uint8)
    if plain.shape != pad.shape:
        raise ValueError(f"length mismatch: {plain.shape[0]} plain bits, {pad.shape[0]} key bits")
    return np.bitwise_xor(plain, pad)
