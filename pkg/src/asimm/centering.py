"""Closed-form update of baselines, component coefficients and expected counts
given memberships and shifts."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .events import SpectralData
from .model import ModelParams

logger = logging.getLogger(__name__)

COND_LIMIT = 1e10
RIDGE_REL = 1e-8


class EmptyClusterError(ValueError):
    """A cluster has no usable observations."""

    def __init__(self, cluster: int, message: str = "empty cluster at centering"):
        super().__init__(f"{message} (cluster {cluster})")
        self.cluster = cluster


@dataclass
class FrequencySystem:
    """Weighted least-squares system of one cluster at one frequency.

    ``design`` has shape (rows, M) with unit-modulus entries
    ``exp(-j 2 pi l (v_im + w_rm) / T)``; rows with zero weight are dropped.
    """

    design: np.ndarray
    weights: np.ndarray
    response: np.ndarray

    def __post_init__(self):
        keep = np.asarray(self.weights) > 0
        self.design = np.asarray(self.design, dtype=complex)[keep]
        self.weights = np.asarray(self.weights, dtype=float)[keep]
        self.response = np.asarray(self.response, dtype=complex)[keep]


@dataclass
class CenteringReport:
    ridge: list = field(default_factory=list)           # (cluster, frequency) pairs
    negative_baseline: list = field(default_factory=list)


def _solve_normal(gram: np.ndarray, rhs: np.ndarray) -> tuple[np.ndarray, bool]:
    """Solve ``gram x = rhs``; ridge + pseudo-inverse when ill conditioned."""
    M = gram.shape[0]
    if np.linalg.cond(gram) <= COND_LIMIT:
        return np.linalg.solve(gram, rhs), False
    ridge = RIDGE_REL * np.trace(gram).real / M
    return np.linalg.pinv(gram + ridge * np.eye(M)) @ rhs, True


def solve_component_coeffs(system: FrequencySystem) -> np.ndarray:
    """Weighted least-squares coefficients ``(E^H B E)^{-1} E^H B h``."""
    x, _ = solve_component_coeffs_flagged(system)
    return x


def solve_component_coeffs_flagged(system: FrequencySystem) -> tuple[np.ndarray, bool]:
    if system.weights.size == 0:
        raise EmptyClusterError(-1)
    E, b, h = system.design, system.weights, system.response
    gram = (E.conj().T * b) @ E
    rhs = (E.conj().T * b) @ h
    return _solve_normal(gram, rhs)


def dc_constraint(positive: np.ndarray) -> np.ndarray:
    """DC coefficients forcing each component to vanish at ``t = 0``.

    ``positive`` holds coefficients for ``l = 1..ell0`` along the last axis;
    the negative frequencies are their conjugates, so the sum is real.
    """
    return -2.0 * np.sum(np.asarray(positive).real, axis=-1)


def update_baseline(phi_prime: np.ndarray, T: float) -> np.ndarray:
    """``a'_k = 1/T - sum_m phi'_{k,m,0}`` from a (K, M, 2*ell0+1) table."""
    ell0 = (phi_prime.shape[-1] - 1) // 2
    return 1.0 / T - phi_prime[..., ell0].real.sum(axis=-1)


def update_lambda(counts: np.ndarray, z: np.ndarray, K: int) -> np.ndarray:
    """Per-cluster mean event count."""
    counts = np.asarray(counts, dtype=float)
    z = np.asarray(z)
    out = np.empty(K)
    for k in range(K):
        members = counts[z == k]
        if members.size == 0:
            raise EmptyClusterError(k)
        out[k] = members.mean()
    return out


def centering_step(data: SpectralData, z, v, K: int | None = None,
                   report: CenteringReport | None = None) -> ModelParams:
    """Minimize the shape loss over (a', phi') and the count loss over Lambda.

    Only ``l = 1..ell0`` are solved; negative frequencies are mirrored by
    conjugation and the DC term follows from the vanishing-at-zero constraint.
    """
    z = np.asarray(z, dtype=np.int64)
    v = np.asarray(v, dtype=float)
    K = int(z.max()) + 1 if K is None else K
    ell0, T, M = data.ell0, data.T, data.M
    pos = np.arange(1, ell0 + 1)
    h = data.h[..., ell0 + 1:]                                       # (n, R, ell0)
    phi = np.zeros((K, M, 2 * ell0 + 1), dtype=complex)
    for k in range(K):
        members = np.flatnonzero(z == k)
        beta = data.weights[members]                                 # (c, R)
        if members.size == 0 or not np.any(beta > 0):
            raise EmptyClusterError(k)
        keep = beta > 0
        u = (v[members][:, None, :] + data.shifts[None, :, :])[keep]  # (rows, M)
        E = np.exp(-2j * np.pi * u[:, :, None] * pos / T)            # (rows, M, ell0)
        b = beta[keep]
        hk = h[members][keep]                                        # (rows, ell0)
        EhB = np.conj(E) * b[:, None, None]
        gram = np.einsum("rml,rnl->lmn", EhB, E)                     # (ell0, M, M)
        rhs = np.einsum("rml,rl->lm", EhB, hk)                       # (ell0, M)
        sol = np.empty((ell0, M), dtype=complex)
        conds = np.linalg.cond(gram)
        for li in range(ell0):
            if conds[li] <= COND_LIMIT:
                sol[li] = np.linalg.solve(gram[li], rhs[li])
            else:
                sol[li], _ = _solve_normal(gram[li], rhs[li])
                if report is not None:
                    report.ridge.append((k, int(pos[li])))
                logger.debug("ridge fallback for cluster %d at frequency %d", k, pos[li])
        positive = sol.T                                             # (M, ell0)
        phi[k, :, ell0 + 1:] = positive
        phi[k, :, :ell0] = np.conj(positive[:, ::-1])
        phi[k, :, ell0] = dc_constraint(positive)
    a_prime = update_baseline(phi, T)
    if report is not None:
        report.negative_baseline.extend(int(k) for k in np.flatnonzero(a_prime < 0))
    Lambda = update_lambda(data.counts, z, K)
    return ModelParams(z.copy(), a_prime, phi, v.copy(), Lambda, T)
