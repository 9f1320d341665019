"""Per-sample bounded assignment and lower-bound maintenance.

These are the single-sample entry points; the engines run the same logic
over whole batches through :mod:`nestedkmeans.kernels`.
"""
import numpy as np

from .core import BoundsTable, CentroidSet, Dataset
from .kernels import data_args, get_backend


def assignment_with_bounds(i: int, bounds: BoundsTable, centroids: CentroidSet, dataset: Dataset,
                           counter=None, use_bounds=True, backend=None):
    """Reassign in-batch sample ``i`` using its lower bounds.

    The distance to the current centroid is always recomputed. Other
    centroids are visited in ascending order and skipped whenever their
    bound already rules them out. Returns ``(a, d, n_distances)``; the
    table row is updated in place.
    """
    kern = get_backend(backend)
    a, d, n = kern.assign_one(i, int(bounds.a[i]), bounds.lower, *data_args(dataset),
                              centroids.centroids, centroids.sq_norms, use_bounds)
    bounds.a_old[i] = bounds.a[i]
    bounds.a[i] = a
    bounds.d[i] = d
    if counter is not None:
        counter.add(n)
    return a, d, n


def update_bounds(bounds: BoundsTable, displacement, backend=None) -> None:
    """l(i, j) <- max(0, l(i, j) - p(j)) for every live row."""
    p = np.ascontiguousarray(displacement, dtype=np.float64)
    get_backend(backend).shrink_bounds(bounds.lower, bounds.size, p)


def tight_init_bounds(i: int, bounds: BoundsTable, centroids: CentroidSet, dataset: Dataset,
                      counter=None, backend=None):
    """Exact bounds for a sample entering the batch; returns ``(a, d)``."""
    bounds.reserve(i + 1)
    k, dim = centroids.centroids.shape
    # scratch accumulators: callers here only want the table row
    S, v, sse = np.zeros((k, dim)), np.zeros(k, dtype=np.int64), np.zeros(k)
    n = get_backend(backend).tight_init(*data_args(dataset), i, i + 1, bounds.lower, bounds.a,
                                        bounds.a_old, bounds.d, centroids.centroids,
                                        centroids.sq_norms, S, v, sse)
    bounds.size = max(bounds.size, i + 1)
    if counter is not None:
        counter.add(n)
    return int(bounds.a[i]), float(bounds.d[i])
