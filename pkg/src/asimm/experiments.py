"""Replicated simulate-fit-evaluate runs over parameter grids."""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .driver import fit
from .metrics import ari, mise_fit
from .model import FitConfig
from .simgen import simulate

ROW_FIELDS = ("replicate", "n", "R", "tau", "rho", "gamma", "K", "mise", "ari", "iters", "converged")
SWEEP_FIELDS = ROW_FIELDS + ("known_v",)
AGG_KEYS = ("n", "R", "tau", "rho", "gamma", "K", "known_v")
AGG_FIELDS = AGG_KEYS + ("replicates", "mise_mean", "mise_se", "ari_mean", "ari_se",
                         "one_minus_ari_mean", "iters_mean", "converged_frac")


@dataclass(frozen=True)
class RunSpec:
    scenario: int
    n: int
    R: int
    tau: float
    rho: float | None
    gamma: float
    K: int
    replicate: int
    seed: int = 0
    known_v: bool = False


def fit_seed(seed: int, replicate: int) -> int:
    """Per-replicate seed for the fitting randomness."""
    return int(np.random.SeedSequence([seed, replicate, 99]).generate_state(1)[0])


def metrics_row(result, truth, replicate: int, spec_fields: dict) -> dict:
    row = {
        "replicate": replicate,
        **spec_fields,
        "mise": mise_fit(result.params, truth),
        "ari": ari(truth.z, result.params.z),
        "iters": result.iterations,
        "converged": bool(result.converged),
    }
    return {k: row[k] for k in ROW_FIELDS}


def run_replicate(spec: RunSpec, base: FitConfig | None = None) -> dict:
    """Simulate one data set, fit it and score the fit."""
    dataset, truth = simulate(spec.scenario, spec.n, spec.R, spec.tau, spec.rho,
                              spec.seed, spec.replicate)
    config = replace(base or FitConfig(), K=spec.K, gamma=spec.gamma,
                     seed=fit_seed(spec.seed, spec.replicate), known_v=spec.known_v, threads=1)
    result = fit(dataset, config, v_known=truth.v if spec.known_v else None)
    fields = {"n": spec.n, "R": spec.R, "tau": spec.tau, "rho": spec.rho,
              "gamma": spec.gamma, "K": spec.K}
    row = metrics_row(result, truth, spec.replicate, fields)
    row["known_v"] = spec.known_v
    return row


def grid_specs(scenario: int, n, R, tau, rho, gamma, K, replicates: int, seed: int = 0,
               known_v=(False,)) -> list[RunSpec]:
    """Cartesian product of the grid in deterministic key order."""
    rho = rho if scenario == 2 else [None]
    out = []
    for kv, nn, rr, tt, pp, gg, kk in itertools.product(known_v, n, R, tau, rho, gamma, K):
        for rep in range(replicates):
            out.append(RunSpec(scenario, int(nn), int(rr), float(tt),
                               None if pp is None else float(pp), float(gg), int(kk),
                               rep, seed, bool(kv)))
    return out


def run_specs(specs, base: FitConfig | None = None, threads: int = 1) -> list[dict]:
    """Run every spec; the output order follows ``specs`` for any thread count."""
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(lambda s: run_replicate(s, base), specs))
    return [run_replicate(s, base) for s in specs]


def _se(x) -> float:
    x = np.asarray(x, float)
    return float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else float("nan")


def aggregate(rows) -> list[dict]:
    """Mean and standard error per grid point, in first-seen order."""
    groups: dict = {}
    for row in rows:
        groups.setdefault(tuple(row[k] for k in AGG_KEYS), []).append(row)
    out = []
    for key, items in groups.items():
        m = [r["mise"] for r in items]
        a = [r["ari"] for r in items]
        out.append({
            **dict(zip(AGG_KEYS, key)),
            "replicates": len(items),
            "mise_mean": float(np.mean(m)),
            "mise_se": _se(m),
            "ari_mean": float(np.mean(a)),
            "ari_se": _se(a),
            "one_minus_ari_mean": float(1 - np.mean(a)),
            "iters_mean": float(np.mean([r["iters"] for r in items])),
            "converged_frac": float(np.mean([r["converged"] for r in items])),
        })
    return out


def monotone_with_allowance(means, ses, max_inversions: int = 1) -> bool:
    """True if ``means`` decreases except for at most ``max_inversions``
    adjacent increases, each smaller than the larger standard error."""
    bad = 0
    for j in range(len(means) - 1):
        if means[j + 1] >= means[j]:
            tol = max(ses[j], ses[j + 1])
            if means[j + 1] - means[j] > tol:
                return False
            bad += 1
    return bad <= max_inversions
