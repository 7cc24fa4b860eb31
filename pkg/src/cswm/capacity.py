"""Analytic capacity model and its Monte Carlo check.

All quantities assume zero-mean Gaussian measurements with standard
deviation ``sigma`` and the approximation ``q ~ P**2`` for the chance that
a sacrificed measurement would itself have been eligible.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .keystream import KeySpec
from .rdh import embed_stream
from .sensing import build_operator, project

PAYLOAD_BITS = 16


def eligibility_probability(T, sigma):
    """Probability that a N(0, sigma**2) value falls in ``[-T, T]``.

    ``T=None`` (loose thresholds) gives 1. Uses ``math.erf`` (about 1e-16
    absolute error).
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if T is None:
        return 1.0
    if T < 0:
        raise ValueError("threshold must be non-negative")
    return math.erf(T / (sigma * math.sqrt(2.0)))


def _check_levels(n):
    if not 1 <= n <= 16:
        raise ValueError(f"insertion levels must be in 1..16, got {n}")


def carrier_count(L, P, n):
    """Expected number of measurements that end up carrying data."""
    _check_levels(n)
    return P * L / (1.0 + P * P * n / PAYLOAD_BITS)


def relative_capacity(P, n):
    """Embedded bits per original measurement."""
    _check_levels(n)
    return P * n / (1.0 + P * P * n / PAYLOAD_BITS)


def t_max(n):
    """Largest threshold keeping ``2**15 + bn_max*T + bn_max`` below ``2**16``."""
    _check_levels(n)
    bn_max = (1 << n) - 1
    return max((2**15 - 1) // bn_max - 1, 0)


def remaining_measurements(L, C_r):
    if not 0 <= C_r <= PAYLOAD_BITS:
        raise ValueError("relative capacity must lie in [0, 16]")
    return L * (1.0 - C_r / PAYLOAD_BITS)


def compression_rate(n, P=1.0):
    """Marked (32-bit) volume over original (16-bit) volume, ``2*x/L``."""
    return 2.0 * carrier_count(1, P, n)


def q_approximation_valid(n):
    """``q ~ P**2`` assumes two carriers per payload, i.e. ``8 <= n <= 16``."""
    return 8 <= n <= 16


@dataclass(frozen=True)
class CapacityModel:
    L: int
    n: int
    T: int | None
    sigma: float | None
    P: float
    q: float
    x: float
    C: float
    C_r: float
    R_p: float
    r: float
    T_max: int
    q_valid: bool

    @property
    def x_floor(self):
        return math.floor(self.x)


def capacity_model(L, n, T=None, sigma=None):
    """Evaluate every analytic quantity for one operating point."""
    if T is None:
        P = 1.0
    else:
        if sigma is None:
            raise ValueError("a finite threshold needs sigma")
        P = eligibility_probability(T, sigma)
    x = carrier_count(L, P, n)
    C_r = relative_capacity(P, n)
    return CapacityModel(
        L=L, n=n, T=T, sigma=sigma, P=P, q=P * P, x=x, C=x * n, C_r=C_r,
        R_p=remaining_measurements(L, C_r), r=compression_rate(n, P),
        T_max=t_max(n), q_valid=q_approximation_valid(n),
    )


def estimate_sigma(values):
    """Unbiased sample standard deviation of a measurement stream."""
    return float(np.std(np.asarray(values, dtype=np.float64), ddof=1))


def empirical_capacity(marked):
    """``(x, C_r, R_p, r)`` counted from one marked stream."""
    L = marked.length
    x = marked.expanded
    remaining = int(marked.values.shape[0])
    return x, x * marked.n / L, remaining, 2.0 * remaining / L


@dataclass(frozen=True)
class MonteCarloCapacity:
    trials: int
    x: float
    C_r: float
    R_p: float
    r: float
    x_se: float
    C_r_se: float
    R_p_se: float
    r_se: float


def monte_carlo_capacity(descriptor, image, params, trials, *, key=None):
    """Embed projections of ``image`` under ``trials`` operator seeds.

    Trial ``t`` uses seed ``descriptor.seed + t``; payload selection does
    not depend on key bits, so one key serves all trials.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    key = key or KeySpec(b"monte-carlo-capacity-key")
    rows = []
    for t in range(trials):
        op = build_operator(descriptor.kind, descriptor.order, descriptor.row_count,
                            (descriptor.seed + t) % 2**64)
        stream = project(op, image)
        rows.append(empirical_capacity(embed_stream(stream.values, params, key)))
    arr = np.array(rows, dtype=np.float64)
    mean = arr.mean(axis=0)
    se = arr.std(axis=0, ddof=1) / math.sqrt(trials) if trials > 1 else np.zeros(4)
    return MonteCarloCapacity(trials, *mean.tolist(), *se.tolist())


CSV_COLUMNS = ("n", "T", "P", "x", "C_r", "R_p", "r")


def capacity_rows(L, n_values, T=None, sigma=None):
    """CSV-ready dicts for a sweep over ``n``; ``T='tmax'`` uses ``t_max(n)``."""
    rows = []
    for n in n_values:
        thr = t_max(n) if T == "tmax" else T
        m = capacity_model(L, n, thr, sigma)
        rows.append({
            "n": n, "T": "loose" if thr is None else thr, "P": m.P, "x": m.x,
            "C_r": m.C_r, "R_p": m.R_p, "r": m.r,
        })
    return rows
