"""Synthetic recurrent-event data with known ground truth.

Scenario 1 has a single cluster; scenario 2 has four clusters whose
separation is controlled by ``rho``.  Both use ``T = 2.5`` and two stimuli.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .events import Dataset, EventTimes

T_DEFAULT = 2.5
BASELINE = 20.0
V_UPPER = (1 / 64, 1 / 16)
W2_OFFSET = 0.8

# base shapes: unit-mass bumps with peak value 4
_SUPPORT = {"q1": (0.4, 0.9), "q2": (0.0, 0.5)}
_PEAK = 4.0


def q1(t):
    t = np.asarray(t, dtype=float)
    inside = (t >= 0.4) & (t <= 0.9)
    return np.where(inside, 2 - 2 * np.cos(4 * np.pi * (t - 0.4)), 0.0)


def q2(t):
    t = np.asarray(t, dtype=float)
    inside = (t >= 0.0) & (t <= 0.5)
    return np.where(inside, 2 - 2 * np.cos(2 * np.pi * np.sqrt(np.abs(2 * t))), 0.0)


_BASES = {"q1": q1, "q2": q2}


@functools.cache
def check_unit_mass() -> tuple[float, float]:
    """Quadrature masses of the two base shapes; both must be 1."""
    m1 = integrate.quad(q1, 0.4, 0.9, epsabs=1e-13)[0]
    m2 = integrate.quad(q2, 0.0, 0.5, epsabs=1e-13, points=[0.125])[0]
    if abs(m1 - 1) > 1e-8 or abs(m2 - 1) > 1e-8:
        raise AssertionError(f"base shapes do not integrate to one: {m1}, {m2}")
    return m1, m2


@dataclass(frozen=True)
class Term:
    """``coef * base(scale * (t - offset))``."""

    coef: float
    base: str
    scale: float = 1.0
    offset: float = 0.0

    def __call__(self, t):
        return self.coef * _BASES[self.base](self.scale * (np.asarray(t, float) - self.offset))

    @property
    def mass(self) -> float:
        return self.coef / self.scale

    @property
    def support(self) -> tuple[float, float]:
        lo, hi = _SUPPORT[self.base]
        return self.offset + lo / self.scale, self.offset + hi / self.scale


@dataclass(frozen=True)
class Component:
    """Intensity component as a sum of scaled and translated base shapes."""

    terms: tuple

    def __call__(self, t):
        t = np.asarray(t, float)
        out = np.zeros(t.shape)
        for term in self.terms:
            out = out + term(t)
        return out

    @property
    def mass(self) -> float:
        return float(sum(term.mass for term in self.terms))

    @property
    def peak_bound(self) -> float:
        """Upper bound of the component from the closed-form base maxima."""
        return float(sum(max(term.coef, 0.0) * _PEAK for term in self.terms))

    @property
    def support(self) -> tuple[float, float]:
        live = [term.support for term in self.terms if term.coef != 0]
        if not live:
            return (0.0, 0.0)
        return min(s[0] for s in live), max(s[1] for s in live)

    def to_json(self):
        return [{"coef": t.coef, "base": t.base, "scale": t.scale, "offset": t.offset}
                for t in self.terms]

    @classmethod
    def from_json(cls, doc):
        return cls(tuple(Term(**d) for d in doc))


@dataclass
class GroundTruth:
    z: np.ndarray               # (n,) 0-based labels
    v: np.ndarray               # (n, M)
    w: np.ndarray               # (R, M)
    a: np.ndarray               # (K,)
    components: list            # K lists of M Components
    T: float
    meta: dict

    @property
    def K(self) -> int:
        return len(self.a)

    @property
    def M(self) -> int:
        return self.w.shape[1]

    @property
    def Lambda(self) -> np.ndarray:
        """``a_k T + sum_m int f_{k,m}``."""
        return np.array([self.a[k] * self.T + sum(c.mass for c in self.components[k])
                         for k in range(self.K)])

    def normalized(self, k: int, m: int):
        """``f*_{k,m} / Lambda*_k`` as a callable."""
        comp, lam = self.components[k][m], self.Lambda[k]
        return lambda t: comp(t) / lam

    def rate_bound(self, k: int) -> float:
        return self.a[k] + sum(c.peak_bound for c in self.components[k])

    def as_params(self, ell0: int = 10, grid_size: int = 2 ** 14):
        """Truth as model parameters: Fourier coefficients of ``f*/Lambda*``
        truncated at ``ell0`` (rectangle rule on ``grid_size`` points)."""
        from .model import ModelParams

        t = np.arange(grid_size) * (self.T / grid_size)
        lam = self.Lambda
        idx = np.arange(-ell0, ell0 + 1) % grid_size
        phi = np.zeros((self.K, self.M, 2 * ell0 + 1), dtype=complex)
        for k in range(self.K):
            for m, comp in enumerate(self.components[k]):
                spec = np.fft.fft(comp(t) / lam[k]) / grid_size
                c = spec[idx]
                phi[k, m] = 0.5 * (c + np.conj(c[::-1]))
        return ModelParams(self.z, self.a / lam, phi, self.v, lam, self.T)

    def to_json(self) -> dict:
        return {
            "T": self.T,
            "labels": (np.asarray(self.z) + 1).tolist(),
            "v": np.asarray(self.v).tolist(),
            "w": np.asarray(self.w).tolist(),
            "a": np.asarray(self.a).tolist(),
            "Lambda": self.Lambda.tolist(),
            "components": [[c.to_json() for c in row] for row in self.components],
            "meta": self.meta,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "GroundTruth":
        return cls(np.asarray(doc["labels"]) - 1, np.asarray(doc["v"], float),
                   np.asarray(doc["w"], float), np.asarray(doc["a"], float),
                   [[Component.from_json(c) for c in row] for row in doc["components"]],
                   float(doc["T"]), dict(doc.get("meta", {})))


def intensity_eval(truth: GroundTruth, i: int, r: int, t):
    """``a_{z_i} + sum_m f_{z_i,m}(t - v_im - w_rm)``."""
    k = truth.z[i]
    out = np.full(np.shape(t), truth.a[k], dtype=float)
    for m, comp in enumerate(truth.components[k]):
        out = out + comp(np.asarray(t, float) - truth.v[i, m] - truth.w[r, m])
    return out


# ---------------------------------------------------------------------------
# random streams

_STREAM_V, _STREAM_W, _STREAM_EVENTS = 1, 2, 3


def stream(seed: int, replicate: int, *keys: int) -> np.random.Generator:
    """Counter-based generator keyed by ``(seed, replicate, *keys)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, replicate, *keys])))


def sample_poisson(intensity, T: float, rate_bound: float, rng: np.random.Generator) -> np.ndarray:
    """Inhomogeneous Poisson draw on ``(0, T)`` by thinning.

    Negative intensity values are treated as zero.  Raises ``ValueError`` if
    the intensity exceeds ``rate_bound`` at any proposal.
    """
    if rate_bound < 0:
        raise ValueError("rate_bound must be nonnegative")
    if rate_bound == 0:
        return np.empty(0)
    count = rng.poisson(rate_bound * T)
    cand = np.sort(rng.uniform(0.0, T, size=count))
    lam = np.asarray(intensity(cand), dtype=float)
    if np.any(lam > rate_bound * (1 + 1e-12)):
        raise ValueError("intensity exceeds rate_bound")
    keep = rng.uniform(0.0, rate_bound, size=count) < np.maximum(lam, 0.0)
    return cand[keep & (cand > 0)]


def _draw_shifts(n, R, tau, seed, replicate):
    v = np.array([stream(seed, replicate, _STREAM_V, i).uniform(0.0, V_UPPER) for i in range(n)])
    w = np.array([
        stream(seed, replicate, _STREAM_W, r).uniform([0.0, W2_OFFSET], [tau, W2_OFFSET + tau])
        for r in range(R)
    ])
    return v, w


def _draw_events(truth: GroundTruth, n, R, seed, replicate) -> Dataset:
    T = truth.T
    events = []
    for i in range(n):
        bound = truth.rate_bound(truth.z[i])
        row = []
        for r in range(R):
            rng = stream(seed, replicate, _STREAM_EVENTS, i, r)
            t = sample_poisson(lambda s: intensity_eval(truth, i, r, s), T, bound, rng)
            row.append(EventTimes(t, T))
        events.append(tuple(row))
    return Dataset(tuple(events), truth.w, T)


def scenario1_components() -> list:
    return [[Component((Term(70.0, "q1"),)), Component((Term(70.0, "q2"),))]]


def scenario2_components(rho: float) -> list:
    x = 2 * rho - 1
    h1 = math.sqrt(max(x, 0.0))
    h2 = 1 + min(x, 0.0)
    return [
        [Component((Term(52.5, "q1"),)), Component((Term(52.5, "q2"),))],
        [Component((Term(60 * (1 - h1), "q1"), Term(48 * h2, "q2", 2.0, 0.8))),
         Component((Term(60 * (1 + h1), "q2"), Term(-48 * h2, "q2", 2.0, 0.0)))],
        [Component((Term(67.5 * (1 + 0.5 * rho), "q1"),)),
         Component((Term(67.5 * (1 - 0.5 * rho), "q2"),))],
        [Component((Term(75 * (1 + rho), "q1"),)),
         Component((Term(75 * (1 - rho), "q2"),))],
    ]


def scenario1(n: int, R: int, tau: float, seed: int = 0, replicate: int = 0):
    """Single-cluster data: baseline 20 plus ``70 q1`` and ``70 q2``."""
    if not 0 < tau < 1:
        raise ValueError("tau must lie in (0, 1)")
    check_unit_mass()
    v, w = _draw_shifts(n, R, tau, seed, replicate)
    truth = GroundTruth(np.zeros(n, dtype=np.int64), v, w, np.array([BASELINE]),
                        scenario1_components(), T_DEFAULT,
                        {"scenario": 1, "n": n, "R": R, "tau": tau, "rho": None,
                         "seed": seed, "replicate": replicate})
    return _draw_events(truth, n, R, seed, replicate), truth


def scenario2(n: int, R: int, tau: float, rho: float, seed: int = 0, replicate: int = 0, K: int = 4):
    """Four equal-size sequential clusters with separation ``rho``."""
    if not 0 < tau < 1:
        raise ValueError("tau must lie in (0, 1)")
    if not 0 <= rho <= 1:
        raise ValueError("rho must lie in [0, 1]")
    check_unit_mass()
    z = np.array([math.ceil((i + 1) * K / n) - 1 for i in range(n)], dtype=np.int64)
    v, w = _draw_shifts(n, R, tau, seed, replicate)
    truth = GroundTruth(z, v, w, np.full(K, BASELINE), scenario2_components(rho), T_DEFAULT,
                        {"scenario": 2, "n": n, "R": R, "tau": tau, "rho": rho,
                         "seed": seed, "replicate": replicate})
    return _draw_events(truth, n, R, seed, replicate), truth


def simulate(scenario: int, n: int, R: int, tau: float, rho: float | None = None,
             seed: int = 0, replicate: int = 0):
    if scenario == 1:
        return scenario1(n, R, tau, seed, replicate)
    if scenario == 2:
        if rho is None:
            raise ValueError("scenario 2 needs rho")
        return scenario2(n, R, tau, rho, seed, replicate)
    raise ValueError(f"unknown scenario {scenario}")
