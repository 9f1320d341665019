# Compiled inner loops. Every function here has a twin with the same
# signature in _kernels_numpy; kernels.py picks one of them.
#
# Data arguments are always passed as the flat tuple
#   X, indptr, indices, values, xn2, sparse
# where X is (n, d) for dense data and (0, 0) for sparse data, and the CSR
# arrays are empty for dense data.
import math
import os

import numpy as np
import numba
from numba import njit, prange

if "NUMBA_THREADING_LAYER" not in os.environ:
    # the system TBB is too old; avoid the probe warning
    numba.config.THREADING_LAYER = "workqueue"

NAME = "numba"


@njit(cache=True, inline="always")
def _dist(i, j, X, indptr, indices, values, xn2, C, cn2, sparse):
    if sparse:
        dot = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            dot += values[p] * C[j, indices[p]]
        sq = xn2[i] + cn2[j] - 2.0 * dot
    else:
        sq = 0.0
        for q in range(X.shape[1]):
            diff = X[i, q] - C[j, q]
            sq += diff * diff
    if sq < 0.0:
        sq = 0.0
    return math.sqrt(sq)


@njit(cache=True, inline="always")
def _add_row(i, j, sign, X, indptr, indices, values, sparse, S):
    if sparse:
        for p in range(indptr[i], indptr[i + 1]):
            S[j, indices[p]] += sign * values[p]
    else:
        for q in range(X.shape[1]):
            S[j, q] += sign * X[i, q]


@njit(cache=True, inline="always")
def _assign_one(i, a_i, lower, X, indptr, indices, values, xn2, sparse, C, cn2, use_bounds):
    k = C.shape[0]
    a_start = a_i
    d_i = _dist(i, a_i, X, indptr, indices, values, xn2, C, cn2, sparse)
    n = 1
    for j in range(k):
        if j == a_start:
            continue
        l_ij = lower[i, j]
        # equality is only a prune when j could not win a tie anyway
        if (not use_bounds) or l_ij < d_i or (l_ij == d_i and j < a_i):
            l_ij = _dist(i, j, X, indptr, indices, values, xn2, C, cn2, sparse)
            lower[i, j] = l_ij
            n += 1
            if l_ij < d_i or (l_ij == d_i and j < a_i):
                a_i = j
                d_i = l_ij
    return a_i, d_i, n


@njit(cache=True)
def assign_one(i, a_i, lower, X, indptr, indices, values, xn2, sparse, C, cn2, use_bounds):
    """Bounded reassignment of sample i; returns (a, d, n_distances)."""
    return _assign_one(i, a_i, lower, X, indptr, indices, values, xn2, sparse, C, cn2, use_bounds)


@njit(cache=True)
def _reuse_range(X, indptr, indices, values, xn2, sparse, lower, a, a_old, d, C, cn2,
                 S, v, sse, use_bounds, start, stop, step):
    # Centroids are fixed for the whole pass, so all reassignments run first
    # and the remove/add bookkeeping follows in the same per-sample order.
    # Keeping stores to S out of the distance loop lets LLVM optimise it.
    n_dist = 0
    n_changed = 0
    m = len(range(start, stop, step))
    d_prev = np.empty(m)
    r = 0
    for i in range(start, stop, step):
        prev = a[i]
        a_old[i] = prev
        d_prev[r] = d[i]
        new, d_i, n = _assign_one(i, prev, lower, X, indptr, indices, values, xn2, sparse,
                                 C, cn2, use_bounds)
        n_dist += n
        a[i] = new
        d[i] = d_i
        if new != prev:
            n_changed += 1
        r += 1
    r = 0
    for i in range(start, stop, step):
        prev = a_old[i]
        new = a[i]
        sse[prev] -= d_prev[r] * d_prev[r]
        _add_row(i, prev, -1.0, X, indptr, indices, values, sparse, S)
        v[prev] -= 1
        _add_row(i, new, 1.0, X, indptr, indices, values, sparse, S)
        v[new] += 1
        sse[new] += d[i] * d[i]
        r += 1
    return n_dist, n_changed


@njit(cache=True)
def reuse_pass(X, indptr, indices, values, xn2, sparse, n_old, lower, a, a_old, d, C, cn2,
               S, v, sse, use_bounds):
    """Remove, reassign and re-accumulate samples 0..n_old-1 in place."""
    return _reuse_range(X, indptr, indices, values, xn2, sparse, lower, a, a_old, d, C, cn2,
                        S, v, sse, use_bounds, 0, n_old, 1)


@njit(cache=True, parallel=True)
def reuse_pass_parallel(X, indptr, indices, values, xn2, sparse, n_old, lower, a, a_old, d,
                        C, cn2, S, v, sse, use_bounds, workers):
    """Worker w handles samples w, w+W, ... so every entry generation is
    split evenly; per-worker deltas are merged in worker order."""
    k, dim = S.shape
    dS = np.zeros((workers, k, dim))
    dv = np.zeros((workers, k), dtype=np.int64)
    dsse = np.zeros((workers, k))
    nd = np.zeros(workers, dtype=np.int64)
    nc = np.zeros(workers, dtype=np.int64)
    for w in prange(workers):
        r = _reuse_range(X, indptr, indices, values, xn2, sparse, lower, a, a_old, d, C, cn2,
                         dS[w], dv[w], dsse[w], use_bounds, w, n_old, workers)
        nd[w] = r[0]
        nc[w] = r[1]
    for w in range(workers):
        S += dS[w]
        v += dv[w]
        sse += dsse[w]
    return nd.sum(), nc.sum()


@njit(cache=True)
def tight_init(X, indptr, indices, values, xn2, sparse, lo, hi, lower, a, a_old, d, C, cn2,
               S, v, sse):
    """Exact bounds, assignment and accumulation for new samples lo..hi-1."""
    k = C.shape[0]
    for i in range(lo, hi):
        best = 0
        best_d = np.inf
        for j in range(k):
            dij = _dist(i, j, X, indptr, indices, values, xn2, C, cn2, sparse)
            lower[i, j] = dij
            if dij < best_d:
                best = j
                best_d = dij
        a[i] = best
        a_old[i] = -1
        d[i] = best_d
    for i in range(lo, hi):
        _add_row(i, a[i], 1.0, X, indptr, indices, values, sparse, S)
        v[a[i]] += 1
        sse[a[i]] += d[i] * d[i]
    return (hi - lo) * k


@njit(cache=True, parallel=True)
def brute_assign(X, indptr, indices, values, xn2, sparse, rows, C, cn2):
    """Lowest-index nearest centroid and its distance for each row in ``rows``."""
    m = rows.shape[0]
    k = C.shape[0]
    out_a = np.empty(m, dtype=np.int64)
    out_d = np.empty(m)
    for r in prange(m):
        i = rows[r]
        best = 0
        best_d = np.inf
        for j in range(k):
            dij = _dist(i, j, X, indptr, indices, values, xn2, C, cn2, sparse)
            if dij < best_d:
                best = j
                best_d = dij
        out_a[r] = best
        out_d[r] = best_d
    return out_a, out_d


@njit(cache=True)
def accumulate(X, indptr, indices, values, xn2, sparse, rows, assign, sign, S, v):
    """S[assign[r]] += sign * x[rows[r]]; v likewise. Entries with assign < 0 are skipped."""
    for r in range(rows.shape[0]):
        j = assign[r]
        if j < 0:
            continue
        _add_row(rows[r], j, sign, X, indptr, indices, values, sparse, S)
        if sign > 0:
            v[j] += 1
        else:
            v[j] -= 1


@njit(cache=True)
def shrink_bounds(lower, n, p):
    k = lower.shape[1]
    for i in range(n):
        for j in range(k):
            x = lower[i, j] - p[j]
            lower[i, j] = x if x > 0.0 else 0.0
