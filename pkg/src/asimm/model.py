"""Parameters and loss functions of the additive shape invariant mixture model.

Cluster labels are 0-based throughout the Python API; serialized outputs
use 1-based labels.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .events import WEIGHT_MODES, SpectralData
from .spectral import DEFAULT_GRID, SpectralCurve, synthesize


@dataclass
class ModelParams:
    """Memberships, shifts and per-cluster normalized intensities.

    Attributes
    ----------
    z : ndarray of int, shape (n,)
        Cluster label of every subject, in ``0..K-1``.
    a_prime : ndarray, shape (K,)
        Baseline of the normalized event-time density.
    phi_prime : ndarray of complex, shape (K, M, 2*ell0+1)
        Fourier coefficients of the normalized components ``f'_{k,m}``.
    v : ndarray, shape (n, M)
        Subject-specific shifts in seconds.
    Lambda : ndarray, shape (K,)
        Expected event count per cluster.
    """

    z: np.ndarray
    a_prime: np.ndarray
    phi_prime: np.ndarray
    v: np.ndarray
    Lambda: np.ndarray
    T: float

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=np.int64)
        self.a_prime = np.asarray(self.a_prime, dtype=float)
        self.phi_prime = np.asarray(self.phi_prime, dtype=complex)
        self.v = np.asarray(self.v, dtype=float)
        self.Lambda = np.asarray(self.Lambda, dtype=float)
        if self.z.size and (self.z.min() < 0 or self.z.max() >= self.K):
            raise ValueError(f"labels must lie in 0..{self.K - 1}")

    @property
    def K(self) -> int:
        return self.a_prime.shape[0]

    @property
    def M(self) -> int:
        return self.phi_prime.shape[1]

    @property
    def ell0(self) -> int:
        return (self.phi_prime.shape[2] - 1) // 2

    @property
    def baseline(self) -> np.ndarray:
        """Un-normalized baselines ``a_k = a'_k Lambda_k``."""
        return self.a_prime * self.Lambda

    def curve(self, k: int, m: int) -> SpectralCurve:
        return SpectralCurve(self.phi_prime[k, m], self.T)

    def component(self, k: int, m: int) -> SpectralCurve:
        """Un-normalized component ``f_{k,m} = Lambda_k f'_{k,m}``."""
        return SpectralCurve(self.phi_prime[k, m] * self.Lambda[k], self.T)

    def normalization_error(self) -> np.ndarray:
        """``T a'_k + T sum_m phi'_{k,m,0} - 1`` per cluster."""
        dc = self.phi_prime[:, :, self.ell0].real.sum(axis=1)
        return self.T * self.a_prime + self.T * dc - 1.0

    def relabel(self, perm) -> "ModelParams":
        """Parameters with cluster ``k`` renamed ``perm[k]``."""
        perm = np.asarray(perm)
        inv = np.argsort(perm)
        return ModelParams(perm[self.z], self.a_prime[inv], self.phi_prime[inv],
                           self.v.copy(), self.Lambda[inv], self.T)

    def copy(self) -> "ModelParams":
        return ModelParams(self.z.copy(), self.a_prime.copy(), self.phi_prime.copy(),
                           self.v.copy(), self.Lambda.copy(), self.T)

    def to_json(self, grid_size: int = DEFAULT_GRID) -> dict:
        t = np.arange(grid_size) * (self.T / grid_size)
        comps = []
        for k in range(self.K):
            for m in range(self.M):
                c = self.curve(k, m)
                comps.append({
                    "cluster": k + 1,
                    "component": m + 1,
                    "normalized": c.to_json()["coefficients"],
                    "intensity_grid": (self.Lambda[k] * synthesize(c, grid_size)).tolist(),
                })
        return {
            "T": self.T,
            "K": self.K,
            "M": self.M,
            "ell0": self.ell0,
            "labels": (self.z + 1).tolist(),
            "shifts": self.v.tolist(),
            "Lambda": self.Lambda.tolist(),
            "baseline_normalized": self.a_prime.tolist(),
            "baseline": self.baseline.tolist(),
            "grid": t.tolist(),
            "components": comps,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ModelParams":
        K, M, ell0 = int(doc["K"]), int(doc["M"]), int(doc["ell0"])
        phi = np.zeros((K, M, 2 * ell0 + 1), dtype=complex)
        for comp in doc["components"]:
            k, m = comp["cluster"] - 1, comp["component"] - 1
            for e in comp["normalized"]:
                phi[k, m, e["l"] + ell0] = e["re"] + 1j * e["im"]
        return cls(np.asarray(doc["labels"]) - 1, doc["baseline_normalized"], phi,
                   doc["shifts"], doc["Lambda"], float(doc["T"]))


@dataclass
class NewtonConfig:
    max_iters: int = 20
    grad_tol: float = 1e-8


@dataclass
class FitConfig:
    K: int = 1
    gamma: float = 0.0
    ell0: int = 10
    epsilon: float = 0.005
    max_outer_iters: int = 50
    newton: NewtonConfig = field(default_factory=NewtonConfig)
    weight_mode: str = "count"
    seed: int = 0
    restarts: int = 1
    hist_bins: int = 64
    known_v: bool = False
    threads: int = 1

    def __post_init__(self):
        if isinstance(self.newton, dict):
            self.newton = NewtonConfig(**self.newton)
        self.validate()

    def validate(self):
        if int(self.K) != self.K or self.K < 1:
            raise ValueError("K must be an integer >= 1")
        if not self.gamma >= 0:
            raise ValueError("gamma must be >= 0")
        if int(self.ell0) != self.ell0 or self.ell0 < 1:
            raise ValueError("ell0 must be an integer >= 1")
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be >= 0")
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be >= 1")
        if self.newton.max_iters < 0 or not self.newton.grad_tol >= 0:
            raise ValueError("invalid Newton settings")
        if self.weight_mode not in WEIGHT_MODES:
            raise ValueError(f"weight_mode must be one of {WEIGHT_MODES}")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.hist_bins < 1:
            raise ValueError("hist_bins must be >= 1")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")

    def to_json(self) -> dict:
        doc = asdict(self)
        if math.isinf(doc["epsilon"]):
            doc["epsilon"] = "inf"
        return doc


def model_coefficients(data: SpectralData, params: ModelParams, subjects=None, labels=None,
                       v=None) -> np.ndarray:
    """Model coefficients ``(n, R, 2*ell0+1)`` of the normalized intensities."""
    z = params.z if labels is None else np.asarray(labels)
    v = params.v if v is None else np.asarray(v)
    if subjects is not None:
        z, v = z[subjects], v[subjects]
    freqs = data.freqs
    u = v[:, None, :] + data.shifts[None, :, :]                      # (n, R, M)
    E = np.exp(-2j * np.pi * u[..., None] * freqs / data.T)          # (n, R, M, L)
    pred = np.einsum("irml,iml->irl", E, params.phi_prime[z])
    pred[..., data.ell0] += params.a_prime[z][:, None]
    return pred


def _check_dims(data: SpectralData, params: ModelParams):
    if params.v.shape != (data.n, data.M) or params.z.shape != (data.n,):
        raise ValueError(
            f"parameter shapes z{params.z.shape}, v{params.v.shape} do not match "
            f"data with n={data.n}, M={data.M}"
        )
    if params.phi_prime.shape[1:] != (data.M, 2 * data.ell0 + 1):
        raise ValueError("component coefficient table does not match (M, ell0) of the data")


def per_observation_l1(data: SpectralData, params: ModelParams) -> np.ndarray:
    """``beta_ir sum_l |h_irl - model_irl|^2`` as an (n, R) array."""
    _check_dims(data, params)
    resid = data.h - model_coefficients(data, params)
    return data.weights * np.sum(resid.real ** 2 + resid.imag ** 2, axis=-1)


def loss_l1(data: SpectralData, params: ModelParams) -> float:
    """Shape loss summed over ``|l| <= ell0``.

    Frequencies above ``ell0`` carry a parameter-independent constant that is
    left out, so values are only comparable at a fixed ``ell0``.
    """
    return float(np.sum(per_observation_l1(data, params)))


def loss_l2(counts, params: ModelParams) -> float:
    """Within-cluster sum of squared count deviations."""
    counts = np.asarray(counts, dtype=float)
    return float(np.sum((counts - params.Lambda[params.z][:, None]) ** 2))


def objective(data: SpectralData, params: ModelParams, gamma: float) -> float:
    return loss_l1(data, params) + gamma * loss_l2(data.counts, params)


def per_subject_criterion(data: SpectralData, params: ModelParams, gamma: float) -> np.ndarray:
    l1 = per_observation_l1(data, params).sum(axis=1)
    l2 = np.sum((data.counts - params.Lambda[params.z][:, None]) ** 2, axis=1)
    return l1 + gamma * l2
