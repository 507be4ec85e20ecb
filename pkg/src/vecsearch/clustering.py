"""Seeded Lloyd's k-means used by the IVF coarse quantizer and PQ sub-quantizers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .dataset import ArrayLike, as_matrix

DEFAULT_ITERS = 25

# rows per assignment block; bounds the n x k distance scratch
_BLOCK = 4096


@dataclass(frozen=True)
class KMeansResult:
    centroids: np.ndarray  # k x D float32
    assignment: np.ndarray  # final nearest-centroid id per vector
    objective_history: tuple  # objective after each Lloyd iteration


def _nearest(x: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = x.shape[0]
    labels = np.empty(n, dtype=np.int64)
    best = np.empty(n, dtype=np.float64)
    for start in range(0, n, _BLOCK):
        d = cdist(x[start:start + _BLOCK], centroids, "sqeuclidean")
        # argmin returns the first minimum, i.e. the smaller centroid id on ties
        lab = np.argmin(d, axis=1)
        labels[start:start + _BLOCK] = lab
        best[start:start + _BLOCK] = d[np.arange(d.shape[0]), lab]
    return labels, best


def kmeans_assign(data: ArrayLike, centroids) -> np.ndarray:
    """Index of the nearest centroid for every vector (ties to the smaller id)."""
    x = as_matrix(data)
    c = as_matrix(centroids)
    if x.shape[1] != c.shape[1]:
        raise ValueError(f"dimension mismatch: data has D={x.shape[1]}, centroids D={c.shape[1]}")
    return _nearest(x, c)[0]


def _kmeanspp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    chosen = [int(rng.integers(n))]
    closest = cdist(x, x[chosen[0]][None], "sqeuclidean")[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = int(rng.choice(n, p=closest / total))
        else:
            # every point coincides with a chosen center; draw among the unchosen
            rest = np.setdiff1d(np.arange(n), chosen)
            idx = int(rng.choice(rest))
        chosen.append(idx)
        np.minimum(closest, cdist(x, x[idx][None], "sqeuclidean")[:, 0], out=closest)
    return x[chosen].astype(np.float64)


def kmeans_fit(data: ArrayLike, k: int, iters: int = DEFAULT_ITERS, seed: int = 0) -> KMeansResult:
    """Run k-means++ seeding followed by ``iters`` Lloyd iterations.

    Each iteration assigns points, repairs empty clusters by handing them the
    point farthest from its current centroid, then moves centroids to their
    cluster means. There is no early stop, so the output depends only on
    (data, k, iters, seed).
    """
    x = as_matrix(data)
    n = x.shape[0]
    if k < 1:
        raise ValueError("k must be at least 1")
    if k > n:
        raise ValueError(f"k={k} exceeds the number of vectors N={n}")
    if iters < 1:
        raise ValueError("iters must be at least 1")

    rng = np.random.default_rng(seed)
    centroids = _kmeanspp(x, k, rng).astype(np.float32)
    x64 = x.astype(np.float64)
    history = []
    for _ in range(iters):
        labels, best = _nearest(x, centroids)
        counts = np.bincount(labels, minlength=k)
        for empty in np.flatnonzero(counts == 0):
            # farthest point among clusters that can spare one
            donors = counts[labels] > 1
            far = int(np.argmax(np.where(donors, best, -1.0)))
            counts[labels[far]] -= 1
            labels[far] = empty
            counts[empty] = 1
            best[far] = 0.0
        sums = np.zeros((k, x.shape[1]), dtype=np.float64)
        np.add.at(sums, labels, x64)
        centroids = (sums / counts[:, None]).astype(np.float32)
        history.append(float(_assigned_objective(x, centroids, labels)))
    labels, _ = _nearest(x, centroids)
    return KMeansResult(centroids, labels, tuple(history))


def _assigned_objective(x: np.ndarray, centroids: np.ndarray, labels: np.ndarray) -> float:
    """Sum of squared distances from each vector to its assigned centroid."""
    diff = x.astype(np.float64) - centroids[labels].astype(np.float64)
    return float(np.einsum("ij,ij->", diff, diff))


def kmeans_objective(data: ArrayLike, centroids) -> float:
    """Sum of squared distances from each vector to its nearest centroid."""
    x = as_matrix(data)
    return float(_nearest(x, as_matrix(centroids))[1].sum())


def kmeans_train(data: ArrayLike, k: int, iters: int = DEFAULT_ITERS, seed: int = 0) -> np.ndarray:
    """k x D float32 centroids; see :func:`kmeans_fit`."""
    return kmeans_fit(data, k, iters, seed).centroids
