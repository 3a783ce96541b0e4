"""Per-subject shift optimization and membership reassignment.

For a candidate cluster ``k`` the shift objective of subject ``i`` is

    Q_i(v) = sum_r beta_ir sum_{0 < |l| <= ell0}
             | h_irl - sum_m exp(-j 2 pi l (v_m + w_rm) / T) phi'_{k,m,l} |^2 ,

which differs from the subject's shape loss only by terms that do not depend
on ``v``.  Conjugate symmetry lets every sum run over ``l = 1..ell0`` with a
factor of two.  All routines operate on a batch of subjects at once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .events import SpectralData
from .model import ModelParams, NewtonConfig

STEP_FRACTION = 0.1      # Newton steps are clamped to +-T/10 per coordinate
MAX_HALVINGS = 10


@dataclass
class SubjectProblem:
    """Shift sub-problem of one subject against one cluster.

    ``h`` is (R, 2*ell0+1) normalized empirical coefficients, ``phi`` the
    cluster's (M, 2*ell0+1) component coefficients.
    """

    h: np.ndarray
    beta: np.ndarray
    shifts: np.ndarray
    phi: np.ndarray
    T: float
    a_prime: float = 0.0

    @property
    def ell0(self) -> int:
        return (self.h.shape[-1] - 1) // 2

    def batch(self):
        ell0 = self.ell0
        return (np.asarray(self.h)[None, :, ell0 + 1:], np.asarray(self.beta, float)[None],
                np.asarray(self.phi)[None, :, ell0 + 1:])

    @classmethod
    def from_fit(cls, data: SpectralData, params: ModelParams, i: int, k: int) -> "SubjectProblem":
        return cls(data.h[i], data.weights[i], data.shifts, params.phi_prime[k], data.T,
                   float(params.a_prime[k]))


def _evaluate(hpos, beta, shifts, phipos, v, T, order=0):
    """Q (and optionally gradient, Hessian) for a batch of subjects.

    hpos (S, R, L), beta (S, R), shifts (R, M), phipos (S, M, L), v (S, M).
    """
    L = hpos.shape[-1]
    omega = 2 * np.pi * np.arange(1, L + 1) / T
    u = v[:, None, :] + shifts[None, :, :]                               # (S, R, M)
    A = np.exp(-1j * u[..., None] * omega) * phipos[:, None, :, :]       # (S, R, M, L)
    res = hpos - A.sum(axis=2)                                           # (S, R, L)
    q = 2.0 * np.einsum("sr,srl->s", beta, res.real ** 2 + res.imag ** 2)
    if order == 0:
        return q
    cres = np.conj(res)[:, :, None, :]
    grad = 4.0 * np.einsum("sr,srml->sm", beta, np.real(cres * 1j * omega * A))
    if order == 1:
        return q, grad
    w2 = omega ** 2
    cross = np.einsum("srml,srnl,l->srmn", A, np.conj(A), w2).real
    diag = np.einsum("srml,l->srm", np.real(cres * A), w2)
    hess = 4.0 * np.einsum("sr,srmn->smn", beta, cross)
    idx = np.arange(A.shape[2])
    hess[:, idx, idx] += 4.0 * np.einsum("sr,srm->sm", beta, diag)
    hess = 0.5 * (hess + np.swapaxes(hess, 1, 2))
    return q, grad, hess


def q_value(problem: SubjectProblem, v) -> float:
    h, b, phi = problem.batch()
    return float(_evaluate(h, b, np.asarray(problem.shifts, float), phi,
                           np.asarray(v, float)[None], problem.T)[0])


def q_gradient(problem: SubjectProblem, v) -> np.ndarray:
    h, b, phi = problem.batch()
    return _evaluate(h, b, np.asarray(problem.shifts, float), phi,
                     np.asarray(v, float)[None], problem.T, order=1)[1][0]


def q_hessian(problem: SubjectProblem, v) -> np.ndarray:
    h, b, phi = problem.batch()
    return _evaluate(h, b, np.asarray(problem.shifts, float), phi,
                     np.asarray(v, float)[None], problem.T, order=2)[2][0]


def truncate_step(step, T: float) -> np.ndarray:
    """Clamp every coordinate of a step to ``[-T/10, T/10]``."""
    bound = STEP_FRACTION * T
    return np.clip(step, -bound, bound)


def _search_directions(grad, hess):
    """Newton direction where the Hessian is positive definite, otherwise a
    gradient direction scaled by a Gershgorin bound of the curvature."""
    eig = np.linalg.eigvalsh(hess)
    scale = np.maximum(np.abs(eig).max(axis=1), np.finfo(float).tiny)
    pd = eig.min(axis=1) > 1e-12 * scale
    step = np.empty_like(grad)
    if pd.any():
        step[pd] = np.linalg.solve(hess[pd], grad[pd][..., None])[..., 0]
    if (~pd).any():
        gersh = np.abs(hess[~pd]).sum(axis=2).max(axis=1)
        gersh = np.where(gersh > 0, gersh, 1.0)
        step[~pd] = grad[~pd] / gersh[:, None]
    return step


def newton_batch(hpos, beta, shifts, phipos, v0, T, max_iters=20, grad_tol=1e-8):
    """Guarded Newton descent on Q for a batch of subjects.

    Each clamped step is accepted only if Q strictly decreases, halving it up
    to ten times; a subject whose step is never accepted keeps its shifts and
    stops.  Returns the final shifts and Q values.
    """
    v = np.array(v0, dtype=float, copy=True)
    if phipos.ndim == 2:
        phipos = np.broadcast_to(phipos, (v.shape[0],) + phipos.shape)
    q, grad, hess = _evaluate(hpos, beta, shifts, phipos, v, T, order=2)
    active = np.ones(v.shape[0], dtype=bool)
    for _ in range(max_iters):
        active &= np.linalg.norm(grad, axis=1) >= grad_tol
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        step = truncate_step(_search_directions(grad[idx], hess[idx]), T)
        accepted = np.zeros(idx.size, dtype=bool)
        new_v = v[idx].copy()
        new_q = q[idx].copy()
        t = 1.0
        for _ in range(MAX_HALVINGS + 1):
            todo = np.flatnonzero(~accepted)
            if todo.size == 0:
                break
            cand = v[idx[todo]] - t * step[todo]
            sub = idx[todo]
            qc = _evaluate(hpos[sub], beta[sub], shifts, phipos[sub], cand, T)
            ok = qc < q[sub]
            new_v[todo[ok]] = cand[ok]
            new_q[todo[ok]] = qc[ok]
            accepted[todo[ok]] = True
            t *= 0.5
        active[idx[~accepted]] = False
        moved = idx[accepted]
        if moved.size == 0:
            break
        v[moved] = new_v[accepted]
        q[moved], grad[moved], hess[moved] = _evaluate(
            hpos[moved], beta[moved], shifts, phipos[moved], v[moved], T, order=2)
    return v, q


def optimize_shifts(problem: SubjectProblem, v_init, max_iters: int = 20,
                    grad_tol: float = 1e-8) -> tuple[np.ndarray, float]:
    """Minimize ``Q`` from ``v_init``; returns ``(v_opt, Q(v_opt))``."""
    h, b, phi = problem.batch()
    v, q = newton_batch(h, b, np.asarray(problem.shifts, float), phi,
                        np.asarray(v_init, float)[None], problem.T, max_iters, grad_tol)
    return v[0], float(q[0])


def _dc_residual(data: SpectralData, params: ModelParams, subjects=None) -> np.ndarray:
    """``sum_r beta_ir |h_ir0 - a'_k - sum_m phi'_{k,m,0}|^2`` as (n, K)."""
    ell0 = data.ell0
    h0 = data.h[..., ell0].real
    beta = data.weights
    if subjects is not None:
        h0, beta = h0[subjects], beta[subjects]
    level = params.a_prime + params.phi_prime[:, :, ell0].real.sum(axis=1)   # (K,)
    return np.einsum("ir,irk->ik", beta, (h0[..., None] - level) ** 2)


def candidate_criteria(data: SpectralData, params: ModelParams, gamma: float,
                       newton: NewtonConfig | None = None, known_v: bool = False,
                       subjects=None):
    """Per-subject, per-cluster criterion and optimal shifts.

    Returns ``(crit, shifts)`` with shapes (S, K) and (S, K, M).  The
    criterion is the full shape loss (DC term included) plus ``gamma`` times
    the count loss, so values are comparable across clusters.
    """
    newton = newton or NewtonConfig()
    subjects = np.arange(data.n) if subjects is None else np.asarray(subjects)
    ell0 = data.ell0
    hpos = data.h[subjects][..., ell0 + 1:]
    beta = data.weights[subjects]
    v0 = params.v[subjects]
    S, K = subjects.size, params.K
    crit = np.empty((S, K))
    shifts = np.empty((S, K, data.M))
    dc = _dc_residual(data, params, subjects)
    counts = data.counts[subjects].astype(float)
    for k in range(K):
        phipos = params.phi_prime[k, :, ell0 + 1:]
        if known_v:
            vk = v0.copy()
            qk = _evaluate(hpos, beta, data.shifts, np.broadcast_to(phipos, (S,) + phipos.shape),
                           vk, data.T)
        else:
            vk, qk = newton_batch(hpos, beta, data.shifts, phipos, v0, data.T,
                                  newton.max_iters, newton.grad_tol)
        l2 = np.sum((counts - params.Lambda[k]) ** 2, axis=1)
        crit[:, k] = qk + dc[:, k] + gamma * l2
        shifts[:, k] = vk
    return crit, shifts


def assign_cluster(data: SpectralData, params: ModelParams, i: int, gamma: float,
                   newton: NewtonConfig | None = None) -> tuple[int, np.ndarray]:
    """Best label (ties to the smallest) and optimal shifts for subject ``i``."""
    crit, shifts = candidate_criteria(data, params, gamma, newton, subjects=[i])
    k = int(np.argmin(crit[0]))
    return k, shifts[0, k]


def clustering_step(data: SpectralData, params: ModelParams, gamma: float,
                    newton: NewtonConfig | None = None, known_v: bool = False):
    """Reassign every subject; returns ``(z, v, criterion)``.

    ``criterion`` is the per-subject value of the chosen cluster.
    """
    crit, shifts = candidate_criteria(data, params, gamma, newton, known_v)
    z = np.argmin(crit, axis=1)
    rows = np.arange(data.n)
    return z, shifts[rows, z], crit[rows, z]
