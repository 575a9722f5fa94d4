"""Clustering quality: purity, pair-counting Jaccard index, silhouette."""

from __future__ import annotations

import numpy as np
from scipy.spatial.distance import cdist


def _encode(labels) -> np.ndarray:
    return np.unique(np.asarray(labels), return_inverse=True)[1].ravel()


def contingency(predicted, truth) -> np.ndarray:
    """Counts ``table[c, k]`` of items in predicted cluster c and true class k."""
    predicted, truth = np.asarray(predicted), np.asarray(truth)
    if predicted.shape != truth.shape or predicted.ndim != 1:
        raise ValueError(f"label arrays must be 1-D of equal length, got {predicted.shape} and {truth.shape}")
    p, t = _encode(predicted), _encode(truth)
    table = np.zeros((p.max(initial=-1) + 1, t.max(initial=-1) + 1), dtype=np.int64)
    np.add.at(table, (p, t), 1)
    return table


def purity(predicted, truth) -> float:
    """Fraction of items that belong to the dominant class of their cluster."""
    if len(predicted) < 1:
        raise ValueError("purity is undefined for an empty clustering")
    table = contingency(predicted, truth)
    return float(table.max(axis=1).sum() / table.sum())


def _pairs(x):
    x = np.asarray(x, dtype=np.int64)
    return int((x * (x - 1) // 2).sum())


def jaccard(predicted, truth) -> float:
    """Pair-counting Jaccard index.

    Over all unordered item pairs, the number of pairs grouped together by
    both labelings divided by the number grouped together by at least one.
    Two all-singleton labelings score 1.
    """
    if len(predicted) < 2:
        raise ValueError("the pair-counting Jaccard index needs at least two items")
    table = contingency(predicted, truth)
    both = _pairs(table)
    same_pred = _pairs(table.sum(axis=1))
    same_truth = _pairs(table.sum(axis=0))
    union = same_pred + same_truth - both
    return 1.0 if union == 0 else both / union


_TINY = 1e-150  # below this, squared coordinate gaps underflow


def _distances(A, B) -> np.ndarray:
    D = cdist(A, B)
    small = D < _TINY
    if small.any():
        r, c = np.nonzero(small)
        diff = A[r] - B[c]
        s = np.abs(diff).max(axis=1)
        safe = np.where(s > 0, s, 1.0)
        D[r, c] = s * np.sqrt(((diff / safe[:, None]) ** 2).sum(axis=1))
    return D


def silhouette_samples(points, labels) -> np.ndarray:
    """Per-point silhouette ``(b - a) / max(a, b)`` with Euclidean distances.

    Points in singleton clusters, and points with ``a == b == 0``, score 0.
    """
    X = np.asarray(points, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    lab = _encode(labels)
    m = len(X)
    if len(lab) != m:
        raise ValueError(f"{m} points but {len(lab)} labels")
    c = lab.max(initial=-1) + 1
    if c < 2:
        raise ValueError("the silhouette needs at least two non-empty clusters")
    if m < 3:
        raise ValueError("the silhouette needs at least three points")
    # the score is scale-free; rescaling keeps squared distances clear of under/overflow
    scale = np.abs(X).max(initial=0.0)
    if scale > 0 and np.isfinite(scale):
        X = X / scale
    counts = np.bincount(lab, minlength=c)
    onehot = np.zeros((m, c))
    onehot[np.arange(m), lab] = 1.0

    # rows in chunks to bound the memory of the distance block
    chunk = max(1, 2_000_000 // max(m, 1))
    sums = np.empty((m, c))
    for start in range(0, m, chunk):
        stop = min(m, start + chunk)
        sums[start:stop] = _distances(X[start:stop], X) @ onehot

    own = counts[lab]
    a = np.where(own > 1, sums[np.arange(m), lab] / np.maximum(own - 1, 1), 0.0)
    means = sums / counts[None, :]
    means[np.arange(m), lab] = np.inf
    b = means.min(axis=1)
    denom = np.maximum(a, b)
    s = np.where((own > 1) & (denom > 0), (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    return s


def silhouette(points, labels) -> float:
    """Mean silhouette coefficient over all points."""
    return float(silhouette_samples(points, labels).mean())
