"""Starting values for shifts and memberships."""

from __future__ import annotations

import logging

import numpy as np

from .events import Dataset

logger = logging.getLogger(__name__)

KMEANS_RESTARTS = 25
KMEANS_MAX_ITERS = 100


def init_shifts(dataset: Dataset, return_flags: bool = False):
    """Earliest post-onset latency of every subject to every stimulus.

    ``v0[i, m] = min{t - w*[r, m] : t > w*[r, m]}`` over all observations
    and events of subject ``i``.  Subjects with no event after stimulus ``m``
    get 0 and are flagged.
    """
    n, M = dataset.n, dataset.M
    v0 = np.full((n, M), np.inf)
    for i, row in enumerate(dataset.events):
        for r, e in enumerate(row):
            t = e.times
            for m in range(M):
                lag = t - dataset.shifts[r, m]
                lag = lag[lag > 0]
                if lag.size:
                    v0[i, m] = min(v0[i, m], lag.min())
    flags = ~np.isfinite(v0)
    if flags.any():
        logger.info("%d subject/stimulus pair(s) without post-onset events start at v = 0",
                    int(flags.sum()))
    v0[flags] = 0.0
    return (v0, flags) if return_flags else v0


def adjusted_events(dataset: Dataset, v0: np.ndarray) -> list[np.ndarray]:
    """Pooled event times of every subject with each stimulus segment moved
    to its anchor ``min_r w*[r, m]``.

    An event belongs to the latest segment whose onset ``v0[i, m] + w*[r, m]``
    is at or before it.  Events before every onset are left in place.
    """
    T = dataset.T
    anchors = dataset.shifts.min(axis=0)
    out = []
    for i, row in enumerate(dataset.events):
        pooled = []
        for r, e in enumerate(row):
            t = e.times
            onset = v0[i] + dataset.shifts[r]                       # (M,)
            after = t[:, None] >= onset[None, :]                    # (N, M)
            # latest onset at or before t; -1 when none
            masked = np.where(after, onset[None, :], -np.inf)
            seg = np.where(after.any(axis=1), masked.argmax(axis=1), -1)
            shifted = t.copy()
            has = seg >= 0
            shifted[has] = t[has] - onset[seg[has]] + anchors[seg[has]]
            pooled.append(np.clip(shifted, 0.0, T))
        out.append(np.concatenate(pooled) if pooled else np.empty(0))
    return out


def histograms(samples: list[np.ndarray], T: float, bins: int = 64) -> np.ndarray:
    """Per-subject normalized histograms on ``bins`` equal cells of [0, T]."""
    edges = np.linspace(0.0, T, bins + 1)
    X = np.zeros((len(samples), bins))
    for i, s in enumerate(samples):
        if s.size:
            X[i] = np.histogram(s, bins=edges)[0] / s.size
    return X


def _farthest_point_centers(X, K, first):
    centers = [first]
    d = np.sum((X - X[first]) ** 2, axis=1)
    for _ in range(1, K):
        nxt = int(np.argmax(d))
        centers.append(nxt)
        d = np.minimum(d, np.sum((X - X[nxt]) ** 2, axis=1))
    return X[centers].copy()


def _fill_empty(X, labels, centers, K):
    """Move the point farthest from its center into every empty cluster."""
    for k in range(K):
        if np.any(labels == k):
            continue
        sizes = np.bincount(labels, minlength=K)
        dist = np.sum((X - centers[labels]) ** 2, axis=1)
        dist[sizes[labels] <= 1] = -1.0
        p = int(np.argmax(dist))
        labels[p] = k
        centers[k] = X[p]
    return labels


def _lloyd(X, centers, K):
    labels = None
    for _ in range(KMEANS_MAX_ITERS):
        d = ((X[:, None, :] - centers[None]) ** 2).sum(axis=2)
        new = np.argmin(d, axis=1)
        new = _fill_empty(X, new, centers, K)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        centers = np.array([X[labels == k].mean(axis=0) for k in range(K)])
    ss = float(sum(((X[labels == k] - centers[k]) ** 2).sum() for k in range(K)))
    return labels, centers, ss


def kmeans(X, K: int, seed: int = 0, restarts: int = KMEANS_RESTARTS):
    """Lloyd's algorithm with farthest-point seeding and restarts.

    The first center of each restart is drawn from ``seed``; the run with the
    smallest within-cluster sum of squares is kept.  All clusters are
    nonempty.  Returns ``(labels, within_ss)``.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if K < 1:
        raise ValueError("K must be >= 1")
    if n < K:
        raise ValueError(f"cannot form {K} clusters from {n} subjects")
    if K == 1:
        return np.zeros(n, dtype=np.int64), float(((X - X.mean(axis=0)) ** 2).sum())
    rng = np.random.default_rng(seed)
    firsts = rng.integers(0, n, size=restarts)
    best = None
    for first in firsts:
        labels, _, ss = _lloyd(X, _farthest_point_centers(X, K, int(first)), K)
        if best is None or ss < best[1]:
            best = (labels, ss)
    return best[0].astype(np.int64), best[1]


def init_memberships(dataset: Dataset, v0: np.ndarray, K: int, bins: int = 64,
                     seed: int = 0) -> np.ndarray:
    """k-means labels (0-based) of the adjusted event-time histograms."""
    if K > dataset.n:
        raise ValueError(f"cannot form {K} clusters from {dataset.n} subjects")
    X = histograms(adjusted_events(dataset, v0), dataset.T, bins)
    labels, _ = kmeans(X, K, seed=seed)
    return labels
