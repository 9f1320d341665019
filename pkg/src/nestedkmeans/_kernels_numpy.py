# Vectorised fallback for _kernels_numba. Same signatures, same results up
# to floating-point summation order, same distance counts.
import numpy as np
import scipy.sparse as sp

NAME = "numpy"

_CHUNK_ELEMS = 1 << 22


def _csr(indptr, indices, values, rows, dim):
    lo = indptr[rows]
    counts = indptr[rows + 1] - lo
    new_ptr = np.zeros(len(rows) + 1, dtype=np.int64)
    np.cumsum(counts, out=new_ptr[1:])
    pos = np.repeat(lo - new_ptr[:-1], counts) + np.arange(new_ptr[-1])
    return sp.csr_matrix((values[pos], indices[pos], new_ptr), shape=(len(rows), dim))


def pair_dist(X, indptr, indices, values, xn2, sparse, rows, cols, C, cn2):
    """Distances between x[rows[r]] and C[cols[r]] for each r."""
    if sparse:
        lo = indptr[rows]
        counts = indptr[rows + 1] - lo
        total = int(counts.sum())
        if total:
            offs = np.zeros(len(rows) + 1, dtype=np.int64)
            np.cumsum(counts, out=offs[1:])
            pos = np.repeat(lo - offs[:-1], counts) + np.arange(total)
            owner = np.repeat(np.arange(len(rows)), counts)
            prod = values[pos] * C[cols[owner], indices[pos]]
            dot = np.bincount(owner, weights=prod, minlength=len(rows))
        else:
            dot = np.zeros(len(rows))
        sq = xn2[rows] + cn2[cols] - 2.0 * dot
    else:
        diff = X[rows] - C[cols]
        sq = np.einsum("ij,ij->i", diff, diff)
    return np.sqrt(np.maximum(sq, 0.0))


def _dist_block(X, indptr, indices, values, xn2, sparse, rows, C, cn2):
    if sparse:
        dot = (_csr(indptr, indices, values, rows, C.shape[1]) @ C.T)
        sq = xn2[rows][:, None] + cn2[None, :] - 2.0 * np.asarray(dot)
    else:
        diff = X[rows][:, None, :] - C[None, :, :]
        sq = np.einsum("ijk,ijk->ij", diff, diff)
    return np.sqrt(np.maximum(sq, 0.0))


def distance_block(X, indptr, indices, values, xn2, sparse, rows, C, cn2):
    """Full (len(rows), k) matrix of distances, computed in chunks."""
    k, dim = C.shape
    step = max(1, _CHUNK_ELEMS // max(1, k * (1 if sparse else dim)))
    out = np.empty((len(rows), k))
    for s in range(0, len(rows), step):
        out[s:s + step] = _dist_block(X, indptr, indices, values, xn2, sparse, rows[s:s + step], C, cn2)
    return out


def _scatter(X, indptr, indices, values, sparse, rows, assign, sign, S):
    if sparse:
        lo = indptr[rows]
        counts = indptr[rows + 1] - lo
        total = int(counts.sum())
        if not total:
            return
        offs = np.zeros(len(rows) + 1, dtype=np.int64)
        np.cumsum(counts, out=offs[1:])
        pos = np.repeat(lo - offs[:-1], counts) + np.arange(total)
        np.add.at(S, (np.repeat(assign, counts), indices[pos]), sign * values[pos])
    else:
        np.add.at(S, assign, sign * X[rows])


def assign_one(i, a_i, lower, X, indptr, indices, values, xn2, sparse, C, cn2, use_bounds):
    rows = np.array([i], dtype=np.int64)
    a, d, n = _bounded_assign(X, indptr, indices, values, xn2, sparse, rows,
                              np.array([a_i], dtype=np.int64), lower, C, cn2, use_bounds)
    return int(a[0]), float(d[0]), n


def _bounded_assign(X, indptr, indices, values, xn2, sparse, rows, a_start, lower, C, cn2, use_bounds):
    # Column-by-column sweep in ascending centroid order: each step applies
    # the same test to every row that the per-sample loop would apply.
    k = C.shape[0]
    cur_a = a_start.copy()
    cur_d = pair_dist(X, indptr, indices, values, xn2, sparse, rows, cur_a, C, cn2)
    n = len(rows)
    for j in range(k):
        cand = a_start != j
        if use_bounds:
            l_j = lower[rows, j]
            cand &= (l_j < cur_d) | ((l_j == cur_d) & (j < cur_a))
        idx = np.flatnonzero(cand)
        if not len(idx):
            continue
        r = rows[idx]
        dj = pair_dist(X, indptr, indices, values, xn2, sparse, r, np.full(len(idx), j), C, cn2)
        lower[r, j] = dj
        n += len(idx)
        win = (dj < cur_d[idx]) | ((dj == cur_d[idx]) & (j < cur_a[idx]))
        cur_a[idx[win]] = j
        cur_d[idx[win]] = dj[win]
    return cur_a, cur_d, n


def _reuse_range(X, indptr, indices, values, xn2, sparse, lower, a, a_old, d, C, cn2,
                 S, v, sse, use_bounds, start, stop, step):
    rows = np.arange(start, stop, step, dtype=np.int64)
    if not len(rows):
        return 0, 0
    prev = a[rows].copy()
    a_old[rows] = prev
    np.subtract.at(sse, prev, d[rows] ** 2)
    _scatter(X, indptr, indices, values, sparse, rows, prev, -1.0, S)
    np.subtract.at(v, prev, 1)
    new, dnew, n_dist = _bounded_assign(X, indptr, indices, values, xn2, sparse, rows, prev,
                                        lower, C, cn2, use_bounds)
    a[rows] = new
    d[rows] = dnew
    _scatter(X, indptr, indices, values, sparse, rows, new, 1.0, S)
    np.add.at(v, new, 1)
    np.add.at(sse, new, d[rows] ** 2)
    return n_dist, int(np.count_nonzero(new != prev))


def reuse_pass(X, indptr, indices, values, xn2, sparse, n_old, lower, a, a_old, d, C, cn2,
               S, v, sse, use_bounds):
    return _reuse_range(X, indptr, indices, values, xn2, sparse, lower, a, a_old, d, C, cn2,
                        S, v, sse, use_bounds, 0, n_old, 1)


def reuse_pass_parallel(X, indptr, indices, values, xn2, sparse, n_old, lower, a, a_old, d,
                        C, cn2, S, v, sse, use_bounds, workers):
    # Same partition and merge order as the compiled version, run serially.
    nd = nc = 0
    deltas = []
    for w in range(workers):
        dS, dv, dsse = np.zeros_like(S), np.zeros_like(v), np.zeros_like(sse)
        r = _reuse_range(X, indptr, indices, values, xn2, sparse, lower, a, a_old, d, C, cn2,
                         dS, dv, dsse, use_bounds, w, n_old, workers)
        nd += r[0]
        nc += r[1]
        deltas.append((dS, dv, dsse))
    for dS, dv, dsse in deltas:
        S += dS
        v += dv
        sse += dsse
    return nd, nc


def tight_init(X, indptr, indices, values, xn2, sparse, lo, hi, lower, a, a_old, d, C, cn2,
               S, v, sse):
    rows = np.arange(lo, hi, dtype=np.int64)
    if not len(rows):
        return 0
    dist = distance_block(X, indptr, indices, values, xn2, sparse, rows, C, cn2)
    lower[lo:hi] = dist
    best = np.argmin(dist, axis=1)
    a[lo:hi] = best
    a_old[lo:hi] = -1
    d[lo:hi] = dist[np.arange(len(rows)), best]
    _scatter(X, indptr, indices, values, sparse, rows, best, 1.0, S)
    np.add.at(v, best, 1)
    np.add.at(sse, best, d[lo:hi] ** 2)
    return len(rows) * C.shape[0]


def brute_assign(X, indptr, indices, values, xn2, sparse, rows, C, cn2):
    rows = np.asarray(rows, dtype=np.int64)
    out_a = np.empty(len(rows), dtype=np.int64)
    out_d = np.empty(len(rows))
    k, dim = C.shape
    step = max(1, _CHUNK_ELEMS // max(1, k * (1 if sparse else dim)))
    for s in range(0, len(rows), step):
        block = _dist_block(X, indptr, indices, values, xn2, sparse, rows[s:s + step], C, cn2)
        best = np.argmin(block, axis=1)
        out_a[s:s + step] = best
        out_d[s:s + step] = block[np.arange(len(best)), best]
    return out_a, out_d


def accumulate(X, indptr, indices, values, xn2, sparse, rows, assign, sign, S, v):
    keep = assign >= 0
    rows, assign = rows[keep], assign[keep]
    if not len(rows):
        return
    _scatter(X, indptr, indices, values, sparse, rows, assign, float(sign), S)
    np.add.at(v, assign, 1 if sign > 0 else -1)


def shrink_bounds(lower, n, p):
    np.maximum(lower[:n] - p, 0.0, out=lower[:n])
