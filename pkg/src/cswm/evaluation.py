"""PSNR, error-concealment attack and the experiment sweeps.

PSNR is always taken against the reconstruction from the complete,
unmarked measurement set, and aggregated across patches by the median.
"""
from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from .capacity import eligibility_probability, estimate_sigma, relative_capacity
from .keystream import KeySpec
from .rdh import EmbedParams, embed_stream, extract_stream
from .recon import reconstruct
from .sensing import project, reduce_operator

PSNR_CAP = 120.0
DEFAULT_KEY = KeySpec(b"cswm-evaluation-key-0001")


class Variant(enum.Enum):
    MARKED_FULL = "marked_full"
    TRUNCATED_CLEAN = "truncated_clean"
    MARKED_TRUNCATED = "marked_truncated"
    POST_ECA = "post_eca"
    AUTHORIZED = "authorized_reference"


@dataclass
class EvalReport:
    variant: Variant
    n: int
    T: int | None
    L_percent: float
    psnr_db: list = field(default_factory=list)

    @property
    def median(self):
        if not self.psnr_db:
            raise ValueError("no patches scored")
        return float(np.median(self.psnr_db))


def psnr(reference, test):
    """PSNR in dB for images on [0, 1]; identical images give ``PSNR_CAP``."""
    ref = np.asarray(reference, dtype=np.float64)
    tst = np.asarray(test, dtype=np.float64)
    if ref.shape != tst.shape:
        raise ValueError(f"shape mismatch: {ref.shape} vs {tst.shape}")
    mse = float(np.mean((ref - tst) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(10.0 * math.log10(1.0 / mse), PSNR_CAP)


def eca_attack(marked, n=None):
    """Strip the low ``n`` bits of every marked value (floor division)."""
    n = marked.n if n is None else n
    values = np.asarray(getattr(marked, "values", marked), dtype=np.int64)
    return values >> n


def synthetic_patches(count, size=64, seed=0):
    """Sparse sky-like test patches: dark background, a few stars and a faint cloud."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    patches = []
    for _ in range(count):
        img = np.zeros((size, size))
        for _ in range(rng.integers(4, 12)):
            cy, cx = rng.uniform(0, size, 2)
            width = rng.uniform(0.6, 2.0)
            img += rng.uniform(0.3, 1.0) * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * width**2))
        cy, cx = rng.uniform(size * 0.2, size * 0.8, 2)
        spread = rng.uniform(size / 8, size / 4)
        img += rng.uniform(0.05, 0.25) * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * spread**2))
        patches.append(np.clip(img, 0.0, 1.0))
    return patches


def _shape_for(op, image):
    shape = np.shape(image)
    return shape if len(shape) == 2 else (int(math.isqrt(op.order)), op.order // int(math.isqrt(op.order)))


def score_patch(image, op, n_values, T=None, *, key=DEFAULT_KEY, variants=None, recon=None):
    """PSNR of every requested variant for one patch, for each ``n``.

    Returns ``{"reference": image, n: {Variant: psnr_db, ..., "r": rate}}``.
    ``n == 0`` means no embedding: every variant equals the reference.
    """
    recon = dict(recon or {})
    variants = tuple(variants or (Variant.MARKED_TRUNCATED,))
    shape = _shape_for(op, image)
    y = project(op, image).values
    ref = reconstruct(op, y, shape, **recon)
    out = {"reference": ref, "sigma": estimate_sigma(y) if y.size > 1 else 0.0}
    for n in n_values:
        if n == 0:
            out[n] = {v: PSNR_CAP for v in variants}
            out[n]["r"] = 1.0
            continue
        params = EmbedParams(n, T)
        marked = embed_stream(y, params, key)
        reduced = reduce_operator(op, marked.location_map)
        carriers = np.ones(y.size, dtype=bool)
        carriers[marked.location_map] = False
        scores = {"r": 2.0 * marked.values.size / y.size}
        for v in variants:
            if v is Variant.MARKED_TRUNCATED:
                img = reconstruct(reduced, marked.values, shape, **recon)
            elif v is Variant.POST_ECA:
                img = reconstruct(reduced, eca_attack(marked, n), shape, **recon)
            elif v is Variant.TRUNCATED_CLEAN:
                img = reconstruct(reduced, y[carriers], shape, **recon)
            elif v is Variant.MARKED_FULL:
                full = y.copy()
                full[carriers] = marked.values
                img = reconstruct(op, full, shape, **recon)
            elif v is Variant.AUTHORIZED:
                img = reconstruct(op, extract_stream(marked, params, key).values, shape, **recon)
            scores[v] = psnr(ref, img)
        out[n] = scores
    return out


def _score_all(images, op, n_values, T, key, variants, recon, jobs):
    work = partial(score_patch, op=op, n_values=tuple(n_values), T=T, key=key,
                   variants=variants, recon=recon)
    if jobs and jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(work, images))
    return [work(img) for img in images]


def distortion_breakdown(images, op, n_values, T=None, *, key=DEFAULT_KEY, recon=None, jobs=1,
                         L_percent=None):
    """Truncation-only, embedding-only and combined distortion per ``n``."""
    variants = (Variant.TRUNCATED_CLEAN, Variant.MARKED_FULL, Variant.MARKED_TRUNCATED)
    scored = _score_all(_as_list(images), op, n_values, T, key, variants, recon, jobs)
    pct = _percent(op, L_percent)
    reports = []
    for n in n_values:
        for v in variants:
            reports.append(EvalReport(v, n, T, pct, [s[n][v] for s in scored]))
    return reports


def rate_distortion_sweep(images, op, n_values, T=None, *, key=DEFAULT_KEY, recon=None, jobs=1,
                          L_percent=None):
    """Rows ``(n, C_r, r, psnr_median)`` for the unauthorized reconstruction.

    ``C_r`` is the analytic relative capacity (eligibility probability from
    each patch's measurement spread, averaged); ``r`` is the median
    empirical volume ratio.
    """
    images = _as_list(images)
    scored = _score_all(images, op, n_values, T, key, (Variant.MARKED_TRUNCATED,), recon, jobs)
    if T is None:
        P = 1.0
    else:
        P = float(np.mean([eligibility_probability(T, max(s["sigma"], 1e-12)) for s in scored]))
    rows = []
    for n in n_values:
        rows.append({
            "n": n,
            "C_r": relative_capacity(P, n),
            "r": float(np.median([s[n]["r"] for s in scored])),
            "psnr_median": float(np.median([s[n][Variant.MARKED_TRUNCATED] for s in scored])),
        })
    return rows


def eca_sweep(images, op, n_values, T=None, *, key=DEFAULT_KEY, recon=None, jobs=1):
    """Rows ``(n, psnr_before, psnr_after)``: unauthorized vs post-attack medians."""
    variants = (Variant.MARKED_TRUNCATED, Variant.POST_ECA)
    scored = _score_all(_as_list(images), op, n_values, T, key, variants, recon, jobs)
    return [
        {
            "n": n,
            "psnr_before": float(np.median([s[n][Variant.MARKED_TRUNCATED] for s in scored])),
            "psnr_after": float(np.median([s[n][Variant.POST_ECA] for s in scored])),
        }
        for n in n_values
    ]


def breakdown_rows(reports):
    return [{"n": r.n, "variant": r.variant.value, "psnr_median": r.median} for r in reports]


def _as_list(images):
    return [np.asarray(img, dtype=np.float64) for img in images]


def _percent(op, L_percent):
    return 100.0 * op.row_count / op.order if L_percent is None else L_percent
