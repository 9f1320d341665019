"""Backend selection for the hot loops.

Two interchangeable implementations exist: ``numba`` (compiled per-sample
loops, the default) and ``numpy`` (vectorised, no compiler needed). Set
``NESTEDKMEANS_BACKEND=numpy`` to force the fallback; if numba cannot be
imported the fallback is used automatically.
"""
import os
import warnings

import numpy as np

from . import _kernels_numpy

ENV_FLAG = "NESTEDKMEANS_BACKEND"

try:
    from . import _kernels_numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    _kernels_numba = None

_BACKENDS = {"numpy": _kernels_numpy}
if _kernels_numba is not None:
    _BACKENDS["numba"] = _kernels_numba


def available():
    return sorted(_BACKENDS)


def get_backend(name=None):
    """Kernel module by name; ``None`` means the environment default."""
    if name is None:
        name = os.environ.get(ENV_FLAG, "numba").strip().lower() or "numba"
        if name == "numba" and _kernels_numba is None:
            warnings.warn("numba unavailable, using numpy kernels", RuntimeWarning)
            name = "numpy"
    if hasattr(name, "NAME"):
        return name
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown backend {name!r}; choose from {available()}") from None


_EMPTY_2D = np.zeros((0, 0))
_EMPTY_I = np.zeros(0, dtype=np.int64)
_EMPTY_F = np.zeros(0)


def data_args(dataset):
    """The flat ``(X, indptr, indices, values, xn2, sparse)`` tuple kernels take."""
    if dataset.is_sparse:
        return (_EMPTY_2D, dataset.indptr, dataset.indices, dataset.values,
                dataset.sq_norms, True)
    return (dataset.dense, _EMPTY_I, _EMPTY_I, _EMPTY_F, dataset.sq_norms, False)


def set_threads(n):
    """Best effort: size numba's thread pool (no-op for numpy)."""
    if _kernels_numba is None:
        return
    import numba
    numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


def warmup(backend=None, sparse=False):
    """Compile every kernel for the given storage kind on a tiny problem so
    JIT time never lands inside a timed run."""
    kern = get_backend(backend)
    if kern.NAME != "numba":
        return
    n, k, dim = 4, 2, 3
    if sparse:
        args = (_EMPTY_2D, np.arange(0, 2 * n + 1, 2, dtype=np.int64),
                np.tile(np.array([0, 2], dtype=np.int64), n), np.ones(2 * n), np.full(n, 2.0), True)
    else:
        X = np.arange(n * dim, dtype=np.float64).reshape(n, dim)
        args = (X, _EMPTY_I, _EMPTY_I, _EMPTY_F, np.einsum("ij,ij->i", X, X), False)
    for arr in args[:5]:
        if arr.size:
            # Dataset arrays are read-only, which numba types separately
            arr.setflags(write=False)
    C = np.zeros((k, dim))
    cn2 = np.zeros(k)
    rows = np.arange(n, dtype=np.int64)
    lower = np.zeros((n, k))
    a = np.zeros(n, dtype=np.int64)
    a_old = np.zeros(n, dtype=np.int64)
    d = np.zeros(n)
    S = np.zeros((k, dim))
    v = np.ones(k, dtype=np.int64)
    sse = np.zeros(k)
    kern.tight_init(*args, 0, n, lower, a, a_old, d, C, cn2, S, v, sse)
    kern.reuse_pass(*args, n, lower, a, a_old, d, C, cn2, S, v, sse, True)
    kern.reuse_pass_parallel(*args, n, lower, a, a_old, d, C, cn2, S, v, sse, True, 2)
    kern.brute_assign(*args, rows, C, cn2)
    kern.accumulate(*args, rows, a, 1.0, S, v)
    kern.assign_one(0, 0, lower, *args, C, cn2, True)
    kern.shrink_bounds(lower, n, cn2)
