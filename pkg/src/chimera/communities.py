"""Temporal community detection by k-means over the stacked embedding rows."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .factorization import FactorModel


@dataclass(frozen=True, eq=False)
class KMeansResult:
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    n_iter: int
    inertia_trace: np.ndarray  # inertia after every assignment step of the best run
    seed_indices: np.ndarray  # k-means++ picks of the best run


@dataclass(frozen=True, eq=False)
class CommunityAssignment:
    """Labels per (timestamp, node); ``labels[i, v]`` belongs to ``timestamps[i]``.

    Cluster ids are global: the same id at two timestamps is the same
    community, so node drift shows up as a label change. A cluster may have
    no members at some timestamps.
    """

    labels: np.ndarray  # (len(timestamps), n)
    centroids: np.ndarray  # (c, k)
    inertia: float
    timestamps: List[int]

    @property
    def c(self) -> int:
        return self.centroids.shape[0]

    def members(self, cluster: int, t: int) -> np.ndarray:
        """Nodes of ``cluster`` at timestamp ``t``."""
        return np.flatnonzero(self.labels[self.timestamps.index(t)] == cluster)


def stack_embeddings(model: FactorModel):
    """Rows of U_0..U_{T-1} stacked into an (n*T, k) matrix.

    Row ``t * n + i`` is node ``i`` at timestamp ``t``; the returned index
    is an (n*T, 2) array of ``(node, timestamp)`` pairs.
    """
    T, n, k = model.U.shape
    points = model.U.reshape(T * n, k).copy()
    t_idx, node_idx = np.divmod(np.arange(T * n), n)
    return points, np.stack([node_idx, t_idx], axis=1)


def _sq_dists(X, centroids):
    d = (X * X).sum(1)[:, None] - 2 * X @ centroids.T + (centroids * centroids).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _plusplus(X, c, rng):
    m = len(X)
    picks = [int(rng.integers(m))]
    closest = ((X - X[picks[0]]) ** 2).sum(1)
    for _ in range(1, c):
        total = closest.sum()
        if total > 0:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, m - 1)
        else:
            idx = int(rng.integers(m))
        picks.append(idx)
        closest = np.minimum(closest, ((X - X[idx]) ** 2).sum(1))
    return np.array(picks)


def _canonical(labels, centroids):
    """Renumber clusters in order of first appearance; unused ids go last."""
    order = list(dict.fromkeys(labels.tolist()))
    order += [j for j in range(len(centroids)) if j not in set(order)]
    remap = np.empty(len(centroids), dtype=np.int64)
    remap[order] = np.arange(len(order))
    return remap[labels], centroids[order]


def _lloyd(X, centroids, max_iters, tol):
    centroids = centroids.copy()
    c = len(centroids)
    trace = []
    labels = None
    it = 0
    for it in range(1, max_iters + 1):
        d = _sq_dists(X, centroids)
        new_labels = d.argmin(1)
        trace.append(float(((X - centroids[new_labels]) ** 2).sum()))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        counts = np.bincount(labels, minlength=c)
        new_centroids = np.zeros_like(centroids)
        np.add.at(new_centroids, labels, X)
        nonempty = counts > 0
        new_centroids[nonempty] /= counts[nonempty, None]
        for j in np.flatnonzero(~nonempty):
            # re-seed an empty cluster at the point farthest from its centroid
            far = ((X - new_centroids[labels]) ** 2).sum(1)
            idx = int(far.argmax())
            counts[labels[idx]] -= 1
            labels[idx] = j
            new_centroids[j] = X[idx]
        shift = ((new_centroids - centroids) ** 2).sum()
        centroids = new_centroids
        if shift <= tol:
            d = _sq_dists(X, centroids)
            labels = d.argmin(1)
            trace.append(float(((X - centroids[labels]) ** 2).sum()))
            break
    inertia = float(((X - centroids[labels]) ** 2).sum())
    return labels, centroids, inertia, it, np.array(trace)


def kmeans(
    points,
    c: int,
    seed: int = 0,
    restarts: int = 10,
    max_iters: int = 300,
    tol: float = 0.0,
    init: Optional[np.ndarray] = None,
) -> KMeansResult:
    """Lloyd's algorithm with k-means++ seeding, best of ``restarts`` by inertia.

    Parameters
    ----------
    points : (m, k) array
    c : number of clusters, ``1 <= c <= m``
    seed : seeds every restart; results are deterministic given the seed
    restarts : independent k-means++ initializations (ties keep the earliest)
    tol : stop once the squared centroid shift is at most ``tol``; with the
        default 0 the run stops when assignments stop changing
    init : optional (c, k) starting centroids; disables k-means++ and restarts

    Labels are renumbered in order of first appearance, so equal partitions
    of the same points always get equal label arrays.
    """
    X = np.asarray(points, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"points must be a 2-D array, got shape {X.shape}")
    m = len(X)
    if c < 1:
        raise ValueError(f"need at least one cluster, got c={c}")
    if m < c:
        raise ValueError(f"cannot form {c} clusters from {m} points")

    if init is not None:
        starts = [(np.asarray(init, dtype=np.float64), np.full(c, -1))]
    else:
        rng = np.random.default_rng(seed)
        starts = []
        for _ in range(max(1, restarts)):
            picks = _plusplus(X, c, rng)
            starts.append((X[picks], picks))

    best = None
    for centroids, picks in starts:
        labels, cents, inertia, n_iter, trace = _lloyd(X, centroids, max_iters, tol)
        if best is None or inertia < best[2]:
            best = (labels, cents, inertia, n_iter, trace, picks)
    labels, cents, inertia, n_iter, trace, picks = best
    labels, cents = _canonical(labels, cents)
    return KMeansResult(labels, cents, inertia, n_iter, trace, picks)


def normalize_rows(points) -> np.ndarray:
    norms = np.linalg.norm(points, axis=1, keepdims=True)
    return points / np.where(norms > 0, norms, 1.0)


def detect_communities(
    model: FactorModel,
    c: int,
    seed: int = 0,
    restarts: int = 10,
    normalize: bool = False,
) -> CommunityAssignment:
    """Cluster all n*T embedding rows at once, then split clusters by timestamp."""
    points, _ = stack_embeddings(model)
    if normalize:
        points = normalize_rows(points)
    km = kmeans(points, c, seed=seed, restarts=restarts)
    labels = km.labels.reshape(model.T, model.n)
    return CommunityAssignment(labels, km.centroids, km.inertia, list(range(model.T)))
