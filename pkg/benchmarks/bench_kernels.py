"""Compiled vs pure-Python kernel timings.

Usage: python3 benchmarks/bench_kernels.py [--repeat 5] [--sizes 4096 65536]
"""
import argparse
import timeit

import numpy as np

from cswm import _backend
from cswm.keystream import KeySpec, keystream_words
from cswm.rdh import EmbedParams, embed_stream


def cases(size, rng):
    y = rng.integers(-2000, 2000, size).astype(np.int64)
    x = rng.standard_normal(size)
    key = KeySpec(b"benchmark-key-material")
    words = keystream_words(key, size)
    marked = embed_stream(y, EmbedParams(10, None), key)
    return {
        "fwht": lambda k: k.fwht(x),
        "embed": lambda k: k.embed_kernel(y, 10, None, 0, words),
        "extract": lambda k: k.extract_kernel(marked.values, 10, None, 0, words,
                                              marked.payload_count),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--sizes", type=int, nargs="+", default=[4096, 65536])
    args = ap.parse_args(argv)
    names = _backend.available()
    print(f"backends: {', '.join(names)} (active: {_backend.NAME})")
    print(f"{'kernel':<8} {'size':>7} " + " ".join(f"{n + ' ms':>12}" for n in names) + "  speedup")
    rng = np.random.default_rng(0)
    for size in args.sizes:
        for label, fn in cases(size, rng).items():
            times = {}
            for name in names:
                k = _backend.get(name)
                times[name] = min(timeit.repeat(lambda: fn(k), number=1, repeat=args.repeat)) * 1e3
            cols = " ".join(f"{times[n]:12.3f}" for n in names)
            speed = times["python"] / times["cython"] if "cython" in times else 1.0
            print(f"{label:<8} {size:>7} {cols}  {speed:7.1f}x")


if __name__ == "__main__":
    main()
