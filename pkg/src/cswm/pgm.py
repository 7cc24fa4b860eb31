"""Minimal 8-bit PGM (P2/P5) reading and writing."""
import numpy as np


class PGMError(ValueError):
    pass


def _tokens(data):
    """Yield header tokens, skipping ``#`` comments; returns end offset via StopIteration."""
    pos = 0
    while True:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            return
        yield data[start:pos], pos


def read_pgm(path):
    """Return the image as float64 in [0, 1] (divided by maxval)."""
    with open(path, "rb") as fh:
        data = fh.read()
    toks = _tokens(data)
    try:
        magic, _ = next(toks)
        width, _ = next(toks)
        height, _ = next(toks)
        maxval, end = next(toks)
        width, height, maxval = int(width), int(height), int(maxval)
    except (StopIteration, ValueError) as exc:
        raise PGMError("malformed PGM header") from exc
    if magic not in (b"P2", b"P5"):
        raise PGMError(f"not a grayscale PGM (magic {magic!r})")
    if width <= 0 or height <= 0 or not 0 < maxval <= 255:
        raise PGMError("PGM must be 8-bit with positive dimensions")
    count = width * height
    if magic == b"P5":
        raster = data[end + 1:end + 1 + count]
        if len(raster) != count:
            raise PGMError("truncated PGM raster")
        pixels = np.frombuffer(raster, dtype=np.uint8)
    else:
        try:
            pixels = np.array([int(t) for t in data[end:].split()[:count]], dtype=np.int64)
        except ValueError as exc:
            raise PGMError("non-numeric PGM raster") from exc
        if pixels.size != count:
            raise PGMError("truncated PGM raster")
    if pixels.max(initial=0) > maxval:
        raise PGMError("pixel exceeds maxval")
    return pixels.reshape(height, width).astype(np.float64) / maxval


def write_pgm(path, image):
    """Write a [0, 1] image as binary 8-bit PGM."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise PGMError("image must be 2-D")
    pixels = np.clip(np.floor(img * 255.0 + 0.5), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (img.shape[1], img.shape[0]))
        fh.write(pixels.tobytes())


def center_crop_pow2(image):
    """Largest centred square whose side is a power of two."""
    h, w = image.shape
    side = 1
    while side * 2 <= min(h, w):
        side *= 2
    top = (h - side) // 2
    left = (w - side) // 2
    return image[top:top + side, left:left + side]


def tile_patches(image, size):
    """Non-overlapping ``size x size`` patches in row-major order (edges dropped)."""
    h, w = image.shape
    return [image[r:r + size, c:c + size]
            for r in range(0, h - size + 1, size)
            for c in range(0, w - size + 1, size)]
