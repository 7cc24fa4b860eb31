"""Sparse reconstruction by monotone FISTA.

Minimises ``0.5 * ||A x - y||**2 + lam * ||W x||_1`` over images ``x``,
where ``W`` is an orthonormal 2-D transform (periodised Daubechies-4 by
default, or an orthonormal DCT), optionally followed by projection on the
box ``[0, 1]``. The monotone variant keeps the objective non-increasing.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import pywt
import scipy.fft

from .sensing import adjoint_apply, apply_fast


DIVERGENCE_FACTOR = 1e3


class ReconstructionError(RuntimeError):
    pass


class WaveletTransform:
    """Orthonormal periodised 2-D wavelet transform."""

    def __init__(self, shape, wavelet="db4", level=None):
        self.shape = tuple(shape)
        self.wavelet = wavelet
        if level is None:
            level = pywt.dwtn_max_level(self.shape, wavelet)
        self.level = max(int(level), 1)
        _, self._slices = pywt.coeffs_to_array(self._decompose(np.zeros(self.shape)))

    def _decompose(self, image):
        with warnings.catch_warnings():
            # small images: boundary wrap-around is fine, periodisation stays orthonormal
            warnings.simplefilter("ignore", UserWarning)
            return pywt.wavedec2(image, self.wavelet, mode="periodization", level=self.level)

    def forward(self, image):
        arr, _ = pywt.coeffs_to_array(self._decompose(np.reshape(image, self.shape)))
        return arr.ravel()

    def inverse(self, coeffs):
        arr = np.reshape(coeffs, self.shape)
        parts = pywt.array_to_coeffs(arr, self._slices, output_format="wavedec2")
        return pywt.waverec2(parts, self.wavelet, mode="periodization").ravel()


class DCTTransform:
    def __init__(self, shape):
        self.shape = tuple(shape)

    def forward(self, image):
        return scipy.fft.dctn(np.reshape(image, self.shape), norm="ortho").ravel()

    def inverse(self, coeffs):
        return scipy.fft.idctn(np.reshape(coeffs, self.shape), norm="ortho").ravel()


class IdentityTransform:
    def __init__(self, shape):
        self.shape = tuple(shape)

    def forward(self, image):
        return np.asarray(image, dtype=np.float64).ravel()

    def inverse(self, coeffs):
        return np.asarray(coeffs, dtype=np.float64).ravel()


def make_transform(name, shape):
    if name in ("db4", "wavelet"):
        return WaveletTransform(shape, "db4")
    if name == "dct":
        return DCTTransform(shape)
    if name == "identity":
        return IdentityTransform(shape)
    raise ValueError(f"unknown sparsity transform {name!r}")


def soft_threshold(v, tau):
    if tau < 0:
        raise ValueError("threshold must be non-negative")
    v = np.asarray(v, dtype=np.float64)
    return np.sign(v) * np.maximum(np.abs(v) - tau, 0.0)


def lipschitz_estimate(op, iters=20, safety=1.05, seed=0):
    """Upper bound on ``||A||**2`` by power iteration on ``A.T A``."""
    floor = 1e-12
    if op.row_count == 0:
        return floor
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(op.order)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        w = adjoint_apply(op, apply_fast(op, v))
        est = float(np.linalg.norm(w))
        if est == 0.0:
            return floor
        v = w / est
    return max(est * safety, floor)


def data_gradient(op, x, y):
    """Gradient of ``0.5 * ||A x - y||**2``."""
    return adjoint_apply(op, apply_fast(op, x) - y)


def default_lambda(op, y):
    return 0.01 * float(np.max(np.abs(adjoint_apply(op, y)))) if len(y) else 0.0


@dataclass
class ReconProblem:
    operator: object
    measurements: np.ndarray
    shape: tuple
    transform: str = "db4"
    lam: float | None = None
    max_iters: int = 500
    tolerance: float = 1e-6
    box: tuple | None = (0.0, 1.0)

    def __post_init__(self):
        self.measurements = np.asarray(self.measurements, dtype=np.float64).ravel()
        if self.measurements.shape[0] != self.operator.row_count:
            raise ValueError("measurement count does not match operator rows")
        if self.lam is not None and self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if math.prod(self.shape) != self.operator.order:
            raise ValueError("image shape does not match operator order")


@dataclass
class FistaResult:
    image: np.ndarray
    objective: list = field(default_factory=list)
    residual: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    lam: float = 0.0

    def write_trace(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", "objective", "residual"])
            for i, (f, r) in enumerate(zip(self.objective, self.residual)):
                w.writerow([i, repr(f), repr(r)])


def fista_solve(problem):
    op = problem.operator
    y = problem.measurements
    psi = make_transform(problem.transform, problem.shape)
    lam = default_lambda(op, y) if problem.lam is None else float(problem.lam)
    step = 1.0 / lipschitz_estimate(op)
    box = problem.box

    def objective(x):
        r = apply_fast(op, x) - y
        val = 0.5 * float(r @ r)
        if lam:
            val += lam * float(np.abs(psi.forward(x)).sum())
        return val, float(np.linalg.norm(r))

    def prox(v):
        if lam:
            v = psi.inverse(soft_threshold(psi.forward(v), lam * step))
        if box is not None:
            v = np.clip(v, box[0], box[1])
        return v

    x = np.zeros(op.order)
    if box is not None:
        x = np.clip(x, box[0], box[1])
    fx, rx = objective(x)
    result = FistaResult(x, [fx], [rx], lam=lam)
    v = x.copy()
    t = 1.0
    growth = 0
    for it in range(1, problem.max_iters + 1):
        z = prox(v - step * data_gradient(op, v, y))
        fz, rz = objective(z)
        if not math.isfinite(fz):
            raise ReconstructionError(f"objective became non-finite at iteration {it}")
        # candidates may overshoot; only a sustained blow-up counts as divergence
        growth = growth + 1 if fz > DIVERGENCE_FACTOR * max(fx, 1e-300) else 0
        if growth >= 5:
            raise ReconstructionError(f"objective grew for 5 consecutive iterations (at {it})")
        t_next = (1.0 + math.sqrt(1.0 + 4.0 * t * t)) / 2.0
        x_prev = x
        change = None
        if fz <= fx:
            change = (fx - fz) / max(abs(fx), 1e-300)
            x, fx, rx = z, fz, rz
        v = x + (t / t_next) * (z - x) + ((t - 1.0) / t_next) * (x - x_prev)
        t = t_next
        result.objective.append(fx)
        result.residual.append(rx)
        result.iterations = it
        if change is not None and change < problem.tolerance:
            result.converged = True
            break
    result.image = x.reshape(problem.shape)
    return result


def reconstruct(op, measurements, shape, **kwargs):
    """Convenience wrapper returning just the image."""
    return fista_solve(ReconProblem(op, measurements, shape, **kwargs)).image
