"""Command-line pipeline: acquire, embed, extract, reconstruct, analyze.

Exit codes: 0 success (exact recovery for ``extract``), 2 recovery with a
truncated final payload, 1 any error.
"""
from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path

import numpy as np

from . import capacity, evaluation
from .keystream import load_key
from .pgm import PGMError, center_crop_pow2, read_pgm, tile_patches, write_pgm
from .rdh import EmbedParams, MarkedStream, embed_stream, extract_stream
from .recon import ReconProblem, ReconstructionError, fista_solve
from .sensing import MatrixKind, build_operator, project, reduce_operator
from .streamfile import (
    MARKED, ORIGINAL, StreamFormatError, marked_file, original_file, read_stream,
    stream_checksum, write_stream,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_TRUNCATED = 2

MATRICES = {"hadamard": MatrixKind.HADAMARD, "smatrix": MatrixKind.SMATRIX}


class CLIError(Exception):
    pass


def row_count_for(rate, order):
    """``L = round(rate% of S)``, capped at ``S - 1`` because row 0 is excluded."""
    if not 0 < rate <= 100:
        raise CLIError(f"rate must lie in (0, 100], got {rate}")
    L = min(math.floor(rate * order / 100.0 + 0.5), order - 1)
    if L < 1:
        raise CLIError("rate too small: no measurements would be taken")
    return L


def image_shape(order):
    """Square side for square orders, otherwise the most balanced power-of-two split."""
    k = order.bit_length() - 1
    h = 1 << (k // 2)
    return h, order // h


def parse_threshold(text):
    """``'loose'`` gives None, otherwise a non-negative integer."""
    if text is None or text == "loose":
        return None
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"threshold must be an integer or 'loose', got {text!r}")
    if value < 0:
        raise argparse.ArgumentTypeError("threshold must be non-negative")
    return value


def _marked_stream(sf):
    return MarkedStream(
        values=sf.values, location_map=sf.location_map, n=sf.n, tail_bits=sf.tail_bits,
        length=sf.length, expanded=0,
    )


def _read(path, kind=None):
    sf = read_stream(path)
    if kind is not None and sf.stream_kind != kind:
        label = "an original" if kind == ORIGINAL else "a marked"
        raise CLIError(f"{path} is not {label} stream file")
    return sf


def cmd_acquire(args):
    image = read_pgm(args.image)
    h, w = image.shape
    if h != w or h & (h - 1):
        image = center_crop_pow2(image)
    order = image.size
    if order < 2:
        raise CLIError("image too small")
    op = build_operator(MATRICES[args.matrix], order, row_count_for(args.rate, order), args.seed)
    stream = project(op, image)
    write_stream(args.out, original_file(stream.values, op.descriptor))
    print(f"S={order} L={op.row_count} shape={image.shape[0]}x{image.shape[1]}")
    return EXIT_OK


def cmd_embed(args):
    sf = _read(args.input, ORIGINAL)
    key = load_key(args.key)
    params = EmbedParams(args.levels, args.threshold)
    T = args.threshold
    if not params.is_loose(sf.order) and T > capacity.t_max(args.levels) and not args.allow_overflow:
        raise CLIError(
            f"threshold {T} exceeds T_max={capacity.t_max(args.levels)} for n={args.levels}; "
            "marked values could leave the 32-bit range (use --allow-overflow to force)")
    marked = embed_stream(sf.values, params, key, allow_overflow=args.allow_overflow)
    out = marked_file(marked, sf.descriptor, sf.values)
    write_stream(args.out, out)
    x, C_r, _, r = capacity.empirical_capacity(marked)
    print(f"x={x} C_r={C_r:.6f} r={r:.6f} map_count={marked.payload_count} "
          f"tail_bits={marked.tail_bits}")
    return EXIT_OK


def _recover(sf, key, threshold):
    params = EmbedParams(sf.n, threshold)
    rec = extract_stream(_marked_stream(sf), params, key)
    if stream_checksum(rec.values, rec.truncated_positions) != sf.checksum:
        raise CLIError("checksum mismatch: wrong key or threshold, or corrupted stream")
    return rec


def cmd_extract(args):
    sf = _read(args.input, MARKED)
    rec = _recover(sf, load_key(args.key), args.threshold)
    values = np.clip(rec.values, -(2**15), 2**15 - 1)
    write_stream(args.out, original_file(values, sf.descriptor))
    if rec.exact:
        print(f"exact recovery of {sf.length} measurements")
        return EXIT_OK
    print(f"recovered {sf.length} measurements; truncated payload at positions "
          f"{rec.truncated_positions.tolist()}", file=sys.stderr)
    return EXIT_TRUNCATED


def cmd_reconstruct(args):
    sf = read_stream(args.input)
    d = sf.descriptor
    op = build_operator(d.kind, d.order, d.row_count, d.seed)
    status = EXIT_OK
    if sf.stream_kind == ORIGINAL:
        if args.mode != "authorized":
            raise CLIError(f"mode {args.mode!r} needs a marked stream file")
        y = sf.values
    elif args.mode == "authorized":
        if args.key is None:
            raise CLIError("authorized reconstruction needs --key")
        rec = _recover(sf, load_key(args.key), args.threshold)
        y = rec.values
        status = EXIT_OK if rec.exact else EXIT_TRUNCATED
    else:
        op = reduce_operator(op, sf.location_map)
        y = sf.values if args.mode == "unauthorized" else evaluation.eca_attack(sf.values, sf.n)
    problem = ReconProblem(op, y, image_shape(d.order), transform=args.transform, lam=args.lam,
                           max_iters=args.iters)
    result = fista_solve(problem)
    write_pgm(args.out, result.image)
    if args.trace:
        result.write_trace(args.trace)
    print(f"iterations={result.iterations} converged={result.converged} lambda={result.lam:.6g}")
    return status


def _write_csv(path, rows, columns):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def _analysis_images(args):
    if args.image:
        image = read_pgm(args.image)
        patches = tile_patches(image, args.patch)
        if not patches:
            raise CLIError(f"image smaller than one {args.patch}x{args.patch} patch")
        return patches[:args.patches] if args.patches else patches
    return evaluation.synthetic_patches(args.patches or 20, args.patch, args.seed)


def cmd_analyze(args):
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    n_values = list(range(args.n_min, args.n_max + 1))
    T = args.threshold
    written = []
    if "capacity" in args.curves:
        rows = []
        for rate in args.rates:
            L = row_count_for(rate, args.order)
            for row in capacity.capacity_rows(L, n_values, T, args.sigma):
                rows.append({"L": L, **row})
        _write_csv(out_dir / "capacity.csv", rows, ("L",) + capacity.CSV_COLUMNS)
        written.append("capacity.csv")
    if "rate" in args.curves:
        rows = []
        for n in n_values:
            thr = capacity.t_max(n) if T == "tmax" else T
            P = 1.0 if thr is None else capacity.eligibility_probability(thr, args.sigma)
            rows.append({"n": n, "r": capacity.compression_rate(n, P)})
        _write_csv(out_dir / "rate.csv", rows, ("n", "r"))
        written.append("rate.csv")
    sweeps = {"rd", "breakdown", "eca"} & set(args.curves)
    if sweeps:
        if T == "tmax":
            raise CLIError("'tmax' applies to capacity curves only")
        images = _analysis_images(args)
        order = images[0].size
        op = build_operator(MATRICES[args.matrix], order, row_count_for(args.rate, order),
                            args.op_seed)
        key = load_key(args.key) if args.key else evaluation.DEFAULT_KEY
        recon = {"max_iters": args.iters, "lam": args.lam}
        common = dict(key=key, recon=recon, jobs=args.jobs)
        if "rd" in sweeps:
            rows = evaluation.rate_distortion_sweep(images, op, n_values, T, **common)
            _write_csv(out_dir / "rd_curve.csv", rows, ("n", "C_r", "r", "psnr_median"))
            written.append("rd_curve.csv")
        if "breakdown" in sweeps:
            reports = evaluation.distortion_breakdown(images, op, n_values, T, **common)
            _write_csv(out_dir / "breakdown.csv", evaluation.breakdown_rows(reports),
                       ("n", "variant", "psnr_median"))
            written.append("breakdown.csv")
        if "eca" in sweeps:
            rows = evaluation.eca_sweep(images, op, n_values, T, **common)
            _write_csv(out_dir / "eca.csv", rows, ("n", "psnr_before", "psnr_after"))
            written.append("eca.csv")
    print("wrote " + " ".join(str(out_dir / name) for name in written))
    return EXIT_OK


def _analysis_threshold(text):
    return "tmax" if text == "tmax" else parse_threshold(text)


def build_parser():
    parser = argparse.ArgumentParser(prog="cswm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("acquire", help="simulate single-pixel acquisition of a PGM image")
    p.add_argument("--image", required=True)
    p.add_argument("--rate", type=float, required=True, help="measurement rate in percent")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--matrix", choices=sorted(MATRICES), default="hadamard")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_acquire)

    p = sub.add_parser("embed", help="embed payload measurements into the stream")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--levels", type=int, required=True)
    p.add_argument("--threshold", type=parse_threshold, default=None, help="integer or 'loose'")
    p.add_argument("--key", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--allow-overflow", action="store_true")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("extract", help="recover the original stream (needs key and threshold)")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--key", required=True)
    p.add_argument("--threshold", type=parse_threshold, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("reconstruct", help="solve for the image")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--mode", choices=("authorized", "unauthorized", "eca"), default="authorized")
    p.add_argument("--key")
    p.add_argument("--threshold", type=parse_threshold, default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--iters", type=int, default=500)
    p.add_argument("--transform", choices=("db4", "dct", "identity"), default="db4")
    p.add_argument("--trace", help="write per-iteration objective/residual CSV")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("analyze", help="write analysis CSV files")
    p.add_argument("--curves", nargs="+", required=True,
                   choices=("capacity", "rate", "rd", "breakdown", "eca"))
    p.add_argument("--out-dir", default=".")
    p.add_argument("--n-min", type=int, default=1)
    p.add_argument("--n-max", type=int, default=14)
    p.add_argument("--threshold", type=_analysis_threshold, default=None,
                   help="integer, 'loose' or 'tmax'")
    p.add_argument("--sigma", type=float, default=None, help="measurement spread for finite T")
    p.add_argument("--order", type=int, default=65536, help="S for capacity curves")
    p.add_argument("--rates", type=float, nargs="+", default=[20.0, 30.0, 40.0])
    p.add_argument("--image", help="PGM tiled into patches; synthetic patches otherwise")
    p.add_argument("--patch", type=int, default=64)
    p.add_argument("--patches", type=int, default=None)
    p.add_argument("--seed", type=int, default=0, help="synthetic patch seed")
    p.add_argument("--rate", type=float, default=40.0)
    p.add_argument("--matrix", choices=sorted(MATRICES), default="hadamard")
    p.add_argument("--op-seed", type=int, default=0)
    p.add_argument("--key")
    p.add_argument("--iters", type=int, default=500)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CLIError, PGMError, StreamFormatError, ReconstructionError, ValueError,
            OverflowError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
