"""Distance and energy kernels plus the global distance counter."""
import threading

import numpy as np

from .core import CentroidSet, Dataset, SparseRow
from .kernels import data_args, get_backend


class DistanceCounter:
    """Counts full point-to-centroid distance evaluations.

    Increments are lock-protected so concurrent callers get a deterministic
    total.
    """

    def __init__(self, count: int = 0):
        self._count = int(count)
        self._lock = threading.Lock()

    @property
    def count(self) -> int:
        return self._count

    def add(self, n: int) -> None:
        if n < 0:
            raise ValueError("distance counter is monotone")
        with self._lock:
            self._count += int(n)

    def __repr__(self) -> str:
        return f"DistanceCounter({self._count})"


def _as_centroids(centroids) -> CentroidSet:
    if isinstance(centroids, CentroidSet):
        return centroids
    return CentroidSet(np.asarray(centroids, dtype=np.float64).reshape(len(centroids), -1))


def squared_distance(x, c, norms=None) -> float:
    """||x - c||^2 for a dense or sparse ``x`` and dense ``c``.

    Dense inputs use the direct sum of squared differences. A sparse ``x``
    uses the norm expansion ``|x|^2 + |c|^2 - 2<x, c>``, optionally with
    precomputed ``norms=(|x|^2, |c|^2)``; the result is clamped at zero.
    """
    c = np.asarray(c, dtype=np.float64)
    if isinstance(x, SparseRow):
        if x.dim != c.shape[0]:
            raise ValueError(f"dimension mismatch: {x.dim} vs {c.shape[0]}")
        if len(x.indices) and x.indices.max() >= c.shape[0]:
            raise ValueError("sparse index beyond centroid dimension")
        if norms is None:
            xn2, cn2 = float(np.dot(x.values, x.values)), float(np.dot(c, c))
        else:
            xn2, cn2 = norms
        sq = xn2 + cn2 - 2.0 * float(np.dot(x.values, c[x.indices]))
        return max(sq, 0.0)
    x = np.asarray(x, dtype=np.float64)
    if x.shape != c.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {c.shape}")
    diff = x - c
    return max(float(np.dot(diff, diff)), 0.0)


def nearest_centroid(x, centroids):
    """(index, distance) of the nearest centroid; ties go to the lowest index."""
    C = _as_centroids(centroids).centroids
    best, best_d = 0, np.inf
    for j in range(C.shape[0]):
        dj = np.sqrt(squared_distance(x, C[j]))
        if dj < best_d:
            best, best_d = j, dj
    return best, float(best_d)


def assign(dataset: Dataset, centroids, lo=0, hi=None, counter=None, backend=None):
    """Brute-force nearest centroids for rows lo..hi-1."""
    cs = _as_centroids(centroids)
    hi = dataset.n_samples if hi is None else hi
    rows = np.arange(lo, hi, dtype=np.int64)
    kern = get_backend(backend)
    a, d = kern.brute_assign(*data_args(dataset), rows, cs.centroids, cs.sq_norms)
    if counter is not None:
        counter.add(len(rows) * cs.k)
    return a, d


def energy(dataset: Dataset, centroids, backend=None) -> float:
    """Mean squared distance of each sample to its nearest centroid.

    Evaluation only; nothing is added to any distance counter.
    """
    if dataset.n_dims != _as_centroids(centroids).centroids.shape[1]:
        raise ValueError("dataset and centroids have different dimensions")
    _, d = assign(dataset, centroids, backend=backend)
    return float(np.mean(d * d))


def distance_matrix(dataset: Dataset, centroids, lo=0, hi=None) -> np.ndarray:
    """Exact (hi-lo, k) distance matrix, used by checks and oracles."""
    cs = _as_centroids(centroids)
    hi = dataset.n_samples if hi is None else hi
    rows = np.arange(lo, hi, dtype=np.int64)
    from . import _kernels_numpy
    return _kernels_numpy.distance_block(*data_args(dataset), rows, cs.centroids, cs.sq_norms)
