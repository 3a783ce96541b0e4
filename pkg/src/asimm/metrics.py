"""Shift-aligned integrated squared error and the Adjusted Rand Index."""

from __future__ import annotations

from fractions import Fraction
from math import comb

import numpy as np
from scipy.optimize import linear_sum_assignment, minimize_scalar

from .spectral import SpectralCurve

QUADRATURE_GRID = 2 ** 14
COARSE_STEPS = 512          # coarse alignment grid step is T / COARSE_STEPS
REFINE_TOL = 1e-5           # refinement tolerance relative to T


def _samples(f, T: float, size: int) -> np.ndarray:
    """Values of ``f`` on ``g T / size``; ``f`` is a SpectralCurve, a callable
    or an array of uniform samples on ``[0, T)``."""
    if isinstance(f, SpectralCurve):
        if f.T != T:
            raise ValueError("curves must share the same T")
        if 2 * f.ell0 + 1 > size:
            raise ValueError("quadrature grid too coarse for the curve")
        return np.asarray(f(np.arange(size) * (T / size)))
    if callable(f):
        return np.asarray(f(np.arange(size) * (T / size)), dtype=float)
    arr = np.asarray(f, dtype=float)
    if arr.ndim != 1:
        raise ValueError("grid input must be one-dimensional")
    return arr


def _coefficients(f, T: float, size: int) -> np.ndarray:
    """Discrete Fourier coefficients ``(1/T) int f exp(-j 2 pi l t / T)`` by
    the periodic rectangle rule, in ``np.fft`` order.  A SpectralCurve is
    placed exactly."""
    if isinstance(f, SpectralCurve):
        _samples(f, T, 2 * f.ell0 + 1)
        out = np.zeros(size, dtype=complex)
        out[f.freqs % size] = f.coefficients
        return out
    x = _samples(f, T, size)
    spec = np.fft.fft(x) / x.size
    if x.size == size:
        return spec
    # a grid of another resolution keeps its own band
    if x.size > size:
        raise ValueError("grid finer than the quadrature grid")
    out = np.zeros(size, dtype=complex)
    half = (x.size + 1) // 2
    out[:half] = spec[:half]
    out[size - (x.size - half):] = spec[half:]
    return out


class AlignmentProfile:
    """``D(v) = || S^v f_a - f_b ||^2`` on ``[0, T]`` for periodic curves."""

    def __init__(self, f_a, f_b, T: float, size: int = QUADRATURE_GRID):
        self.T = T
        ca = _coefficients(f_a, T, size)
        cb = _coefficients(f_b, T, size)
        cross = ca * np.conj(cb)
        # a band-limited curve contributes only its own frequencies
        live = cross != 0
        self.freqs = np.fft.fftfreq(size, d=1.0 / size)[live]
        self.cross = cross[live]
        self.const = T * (np.sum(np.abs(ca) ** 2) + np.sum(np.abs(cb) ** 2))

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        ph = np.exp(-2j * np.pi * np.multiply.outer(v, self.freqs) / self.T)
        inner = (ph @ self.cross).real
        return np.maximum(self.const - 2 * self.T * inner, 0.0)


def shifted_distance(f_est, f_true, v: float, T: float, size: int = QUADRATURE_GRID) -> float:
    """``|| S^v f_est - f_true ||^2`` without alignment."""
    return float(AlignmentProfile(f_est, f_true, T, size)(v))


def shift_aligned_distance(f_est, f_true, T: float, size: int = QUADRATURE_GRID):
    """``min_{v in [-T, T]} || S^v f_est - f_true ||^2`` and the minimizing shift.

    Coarse search on a ``T/512`` grid, then bounded scalar refinement within
    one grid cell of the best point to a tolerance of ``T * 1e-5``.
    """
    prof = AlignmentProfile(f_est, f_true, T, size)
    step = T / COARSE_STEPS
    coarse = np.linspace(-T, T, 2 * COARSE_STEPS + 1)
    values = prof(coarse)
    j = int(np.argmin(values))
    best_v, best_d = float(coarse[j]), float(values[j])
    lo, hi = max(-T, best_v - step), min(T, best_v + step)
    res = minimize_scalar(lambda x: float(prof(x)), bounds=(lo, hi), method="bounded",
                          options={"xatol": REFINE_TOL * T})
    if res.fun < best_d:
        best_v, best_d = float(res.x), float(res.fun)
    return best_d, best_v


def mise(estimates, truths, Lambda_true: float, T: float, size: int = QUADRATURE_GRID) -> float:
    """Mean over components of the aligned distance between the normalized
    estimate and ``f*_m / Lambda*``."""
    if len(estimates) != len(truths):
        raise ValueError("number of components differs")
    total = 0.0
    for est, f in zip(estimates, truths):
        target = (lambda g: lambda t: np.asarray(g(t), float) / Lambda_true)(f)
        total += shift_aligned_distance(est, target, T, size)[0]
    return total / len(estimates)


def mise_matrix(params, truth, size: int = QUADRATURE_GRID) -> np.ndarray:
    """MISE of every (estimated cluster, true cluster) pair."""
    if params.M != truth.M:
        raise ValueError("number of components differs")
    out = np.empty((params.K, truth.K))
    for k in range(params.K):
        est = [params.curve(k, m) for m in range(params.M)]
        for c in range(truth.K):
            out[k, c] = mise(est, truth.components[c], truth.Lambda[c], truth.T, size)
    return out


def mise_fit(params, truth, size: int = QUADRATURE_GRID) -> float:
    """Model MISE; with several clusters the estimated clusters are matched to
    the true ones by minimum total MISE and the matched values averaged."""
    cost = mise_matrix(params, truth, size)
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].mean())


def _pairs(counts) -> int:
    return sum(comb(int(c), 2) for c in counts)


def contingency(labels_a, labels_b):
    """Contingency table with rows for the labels of ``a`` in sorted order."""
    a, b = np.asarray(labels_a), np.asarray(labels_b)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("label vectors must have the same length")
    ua, ia = np.unique(a, return_inverse=True)
    ub, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ua.size, ub.size), dtype=np.int64)
    np.add.at(table, (ia, ib), 1)
    return table, ua, ub


def ari_exact(labels_a, labels_b) -> Fraction:
    """Adjusted Rand Index as an exact rational number.

    When the chance-corrected denominator vanishes (both partitions are a
    single cluster, or both are all singletons) the partitions coincide and
    the index is 1.
    """
    table, _, _ = contingency(labels_a, labels_b)
    n = int(table.sum())
    if n < 2:
        raise ValueError("need at least two labels")
    index = _pairs(table.ravel())
    rows = _pairs(table.sum(axis=1))
    cols = _pairs(table.sum(axis=0))
    expected = Fraction(rows * cols, comb(n, 2))
    top = Fraction(rows + cols, 2)
    if top == expected:
        return Fraction(1)
    return (index - expected) / (top - expected)


def ari(labels_a, labels_b) -> float:
    return float(ari_exact(labels_a, labels_b))
