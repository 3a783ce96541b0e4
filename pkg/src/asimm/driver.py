"""Alternating centering/clustering fit, restarts and tuning heuristics."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import __version__
from .centering import CenteringReport, EmptyClusterError, centering_step
from .clustering import clustering_step
from .events import Dataset, SpectralData, build_spectral
from .initializer import init_memberships, init_shifts, kmeans
from .model import FitConfig, ModelParams, loss_l1, loss_l2, objective
from .spectral import DEFAULT_GRID

logger = logging.getLogger(__name__)

ELBOW_DROP = 0.10
GAMMA_BAND = 0.05
DESIGN_TOL = 1e-6


@dataclass
class FitResult:
    params: ModelParams
    objective: float
    l1: float
    l2: float
    trace: list
    iterations: int
    converged: bool
    config: FitConfig
    restart: int = 0
    diagnostics: dict = field(default_factory=dict)

    @property
    def z(self):
        return self.params.z

    @property
    def v(self):
        return self.params.v

    @property
    def baseline(self):
        return self.params.baseline

    def to_json(self, grid_size: int = DEFAULT_GRID) -> dict:
        doc = self.params.to_json(grid_size)
        doc.update({
            "objective": self.objective,
            "L1": self.l1,
            "L2": self.l2,
            "trace": list(self.trace),
            "iterations": self.iterations,
            "converged": self.converged,
            "restart": self.restart,
            "config": self.config.to_json(),
            "diagnostics": self.diagnostics,
            "version": __version__,
        })
        return doc


def _rescue_empty(z, K, criterion):
    """Move the worst-fitting subject of a multi-member cluster into each
    empty cluster."""
    z = z.copy()
    for k in range(K):
        if np.any(z == k):
            continue
        sizes = np.bincount(z, minlength=K)
        score = np.where(sizes[z] > 1, criterion, -np.inf)
        i = int(np.argmax(score))
        logger.info("cluster %d empty; moving subject %d into it", k, i)
        z[i] = k
    return z


def _centering_with_rescue(data, z, v, K, criterion, report):
    """Centering step; a cluster without usable observations receives the
    worst-fitting subject that has events."""
    usable = data.weights.sum(axis=1) > 0
    for _ in range(data.n + K):
        try:
            return centering_step(data, z, v, K, report), z
        except EmptyClusterError as exc:
            k = exc.cluster
            sizes = np.bincount(z, minlength=K)
            score = np.where((sizes[z] > 1) & usable & (z != k), criterion, -np.inf)
            if not np.isfinite(score).any():
                raise
            z = z.copy()
            z[int(np.argmax(score))] = k
    raise RuntimeError("could not repopulate empty clusters")


def _single_fit(data: SpectralData, config: FitConfig, z0, v0, restart: int,
                known_v: bool) -> FitResult:
    K, gamma = config.K, config.gamma
    z, v = np.asarray(z0, np.int64).copy(), np.asarray(v0, float).copy()
    report = CenteringReport()
    criterion = np.zeros(data.n)
    trace = []
    prev = math.inf
    converged = False
    params = None
    for s in range(config.max_outer_iters):
        z = _rescue_empty(z, K, criterion)
        params, z = _centering_with_rescue(data, z, v, K, criterion, report)
        z, v, criterion = clustering_step(data, params, gamma, config.newton, known_v)
        params = replace(params, z=z, v=v)
        current = objective(data, params, gamma)
        trace.append(current)
        stop = current == 0 or (prev - current) / current <= config.epsilon
        prev = current
        if stop:
            converged = True
            break
    T = data.T
    vv = np.mod(params.v, T)
    outside = int(np.sum(vv > T / 4))
    params = replace(params, v=vv)
    diagnostics = {
        "ridge_frequencies": sorted({tuple(x) for x in report.ridge}),
        "negative_baseline_clusters": sorted(set(report.negative_baseline)),
        "shifts_outside_quarter_window": outside,
        "empty_observations": int(data.empty.sum()),
        "normalization_error": params.normalization_error().tolist(),
        "cluster_sizes": np.bincount(params.z, minlength=K).tolist(),
    }
    return FitResult(params, trace[-1], loss_l1(data, params), loss_l2(data.counts, params),
                     trace, len(trace), converged, config, restart, diagnostics)


def _restart_start(dataset: Dataset, config: FitConfig, v_init, restart: int):
    if restart == 0:
        v0 = v_init
        seed = config.seed
    else:
        rng = np.random.default_rng([config.seed, restart])
        T = dataset.T
        v0 = v_init + rng.uniform(-T / 50, T / 50, size=v_init.shape)
        seed = int(rng.integers(2**31))
    z0 = init_memberships(dataset, v0, config.K, config.hist_bins, seed)
    return z0, v0


def fit(dataset: Dataset, config: FitConfig, v_known=None, z_init=None, v_init=None) -> FitResult:
    """Fit the mixture model with alternating centering and clustering steps.

    ``v_known`` fixes the subject shifts (no shift optimization).  ``z_init``
    and ``v_init`` override the default starting values.
    """
    config.validate()
    dataset = dataset.nudged()
    if config.K > dataset.n:
        raise ValueError(f"K={config.K} exceeds the number of subjects ({dataset.n})")
    data = build_spectral(dataset, config.ell0, config.weight_mode)
    known_v = v_known is not None or config.known_v
    if v_known is not None:
        base_v = np.asarray(v_known, float)
    elif v_init is not None:
        base_v = np.asarray(v_init, float)
    else:
        base_v = init_shifts(dataset)

    def run(restart):
        if z_init is not None and restart == 0:
            z0, v0 = np.asarray(z_init), base_v
        else:
            z0, v0 = _restart_start(dataset, config, base_v, restart)
        if known_v:
            v0 = base_v
        return _single_fit(data, config, z0, v0, restart, known_v)

    if config.threads > 1 and config.restarts > 1:
        with ThreadPoolExecutor(config.threads) as pool:
            results = list(pool.map(run, range(config.restarts)))
    else:
        results = [run(x) for x in range(config.restarts)]
    best = min(results, key=lambda res: (res.objective, res.restart))
    outside = best.diagnostics["shifts_outside_quarter_window"]
    if outside:
        logger.warning("%d fitted shift(s) fall outside [0, T/4] after reduction modulo T", outside)
    best.diagnostics["restart_objectives"] = [res.objective for res in results]
    return best


# ---------------------------------------------------------------------------
# tuning heuristics

def elbow(values, threshold: float = ELBOW_DROP) -> int:
    """Index of the first point whose relative drop to the next one,
    ``(v[j] - v[j+1]) / v[j]``, is below ``threshold``.  A zero value counts
    as no further drop."""
    values = np.asarray(values, float)
    for j in range(len(values) - 1):
        if values[j] <= 0 or (values[j] - values[j + 1]) / values[j] < threshold:
            return j
    return len(values) - 1


def select_k_preliminary(dataset: Dataset, k_max: int, seed: int = 0,
                         threshold: float = ELBOW_DROP) -> tuple[int, list]:
    """Elbow of the k-means within-SS curve of per-subject mean counts."""
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    x = dataset.counts().mean(axis=1)
    ks = list(range(1, min(k_max, dataset.n) + 1))
    curve = [kmeans(x, k, seed=seed)[1] for k in ks]
    return ks[elbow(curve, threshold)], list(zip(ks, curve))


@dataclass
class GammaReference:
    gamma0: float
    grid: np.ndarray


def gamma_reference(dataset: Dataset, delta_t: float | None = None, points: int = 13) -> GammaReference:
    """``gamma0 = nR / (T dt sum N)`` and a log grid over ``[1e-5 gamma0, 10 gamma0]``."""
    T = dataset.T
    delta_t = T / 2048 if delta_t is None else delta_t
    if not delta_t > 0:
        raise ValueError("delta_t must be positive")
    total = int(dataset.counts().sum())
    if total == 0:
        raise ValueError("dataset has no events")
    g0 = dataset.n * dataset.R / (T * delta_t * total)
    grid = np.logspace(np.log10(1e-5 * g0), np.log10(10 * g0), points)
    grid[0], grid[-1] = 1e-5 * g0, 10 * g0
    return GammaReference(g0, grid)


def flat_then_rise(l1, band: float = GAMMA_BAND) -> int:
    """Index of the last grid point before ``l1`` first exceeds its running
    minimum by more than ``band``."""
    l1 = np.asarray(l1, float)
    running = l1[0]
    for j in range(1, len(l1)):
        if l1[j] > (1 + band) * running:
            return j - 1
        running = min(running, l1[j])
    return len(l1) - 1


@dataclass
class Curve:
    param: str
    values: list
    l1: list
    l2: list
    objective: list
    selected: float
    fits: list = field(default_factory=list, repr=False)
    raw: list = field(default_factory=list, repr=False)

    def rows(self):
        return [
            {self.param: x, "L1": a, "L2": b, "objective": c}
            for x, a, b, c in zip(self.values, self.l1, self.l2, self.objective)
        ]


def _map(fn, items, threads):
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def select_gamma(dataset: Dataset, K0: int, gamma_grid, base: FitConfig | None = None,
                 band: float = GAMMA_BAND, threads: int = 1) -> Curve:
    """Fit at every grid value; keep the largest gamma before L1 rises.

    The reported curve uses, at each gamma, the grid fit with the smallest
    objective at that gamma; ``Curve.raw`` holds the independent fits.  This
    makes L2 non-increasing and L1 non-decreasing along the grid.
    """
    grid = np.asarray(gamma_grid, float)
    if np.any(np.diff(grid) < 0):
        raise ValueError("gamma grid must be sorted ascending")
    base = base or FitConfig()
    raw = _map(lambda g: fit(dataset, replace(base, K=K0, gamma=float(g))), grid, threads)
    # every grid fit is admissible at every gamma (centering does not involve
    # gamma), so each point keeps the candidate with the smallest objective
    fits = [min(raw, key=lambda f: (f.l1 + g * f.l2, f.l2)) for g in grid]
    l1 = [f.l1 for f in fits]
    l2 = [f.l2 for f in fits]
    obj = [f.l1 + g * f.l2 for f, g in zip(fits, grid)]
    sel = float(grid[flat_then_rise(l1, band)])
    curve = Curve("gamma", grid.tolist(), l1, l2, obj, sel, fits)
    curve.raw = [{"gamma": float(g), "L1": f.l1, "L2": f.l2, "objective": f.objective}
                 for g, f in zip(grid, raw)]
    return curve


def refine_k(dataset: Dataset, gamma: float, k_grid, base: FitConfig | None = None,
             threshold: float = ELBOW_DROP, threads: int = 1) -> Curve:
    """Elbow of the fitted objective against K."""
    ks = [int(k) for k in k_grid]
    base = base or FitConfig()
    fits = _map(lambda k: fit(dataset, replace(base, K=k, gamma=gamma)), ks, threads)
    obj = [f.objective for f in fits]
    sel = ks[elbow(obj, threshold)]
    return Curve("K", ks, [f.l1 for f in fits], [f.l2 for f in fits], obj, sel, fits)


@dataclass
class DesignReport:
    passed: bool
    min_singular_value: float
    worst_xi: float
    singular_values: np.ndarray

    def __str__(self):
        verdict = "PASS" if self.passed else "FAIL"
        return f"{verdict}: min singular value {self.min_singular_value:.3e} at xi = {self.worst_xi:g}"


def check_design(shifts, xi_grid, tol: float = DESIGN_TOL) -> DesignReport:
    """Smallest singular value of the empirical Gram matrix
    ``mean_r conj(e_r) e_r^T``, ``e_rm = exp(-j 2 pi xi w*_rm)``, over ``xi_grid``."""
    w = np.asarray(shifts, float)
    if w.ndim == 1:
        w = w[:, None]
    R, M = w.shape
    if R < M:
        raise ValueError("need at least as many observations as components")
    xi = np.asarray(xi_grid, float)
    e = np.exp(-2j * np.pi * xi[:, None, None] * w[None])               # (X, R, M)
    gram = np.einsum("xrm,xrn->xmn", np.conj(e), e) / R
    sv = np.linalg.svd(gram, compute_uv=False).min(axis=1)
    j = int(np.argmin(sv))
    return DesignReport(bool(sv[j] > tol), float(sv[j]), float(xi[j]), sv)


def default_xi_grid(T: float, ell0: int = 10) -> np.ndarray:
    """Frequencies ``l / T`` for ``l = 1..ell0``, the ones the fit uses."""
    return np.arange(1, ell0 + 1) / T
