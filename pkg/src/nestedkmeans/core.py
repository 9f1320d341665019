"""Domain types shared by every k-means engine.

Each mutable container carries a ``check()`` method so invariants can be
asserted directly from tests and from the ``validate`` CLI command.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np


class InvariantError(AssertionError):
    """Raised by ``check()`` methods when a structural invariant is broken."""


class ConfigError(ValueError):
    """Invalid run configuration (for example k larger than the dataset)."""


class SparseRow(NamedTuple):
    """A single sparse vector: sorted column indices and their values."""

    indices: np.ndarray
    values: np.ndarray
    dim: int

    def toarray(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.indices] = self.values
        return out


class Dataset:
    """N samples in d dimensions, dense or CSR-sparse, read-only after load.

    Dense storage is a C-contiguous float64 ``(n, d)`` array. Sparse storage
    is the usual CSR triple ``indptr, indices, values`` with strictly
    increasing column indices per row. Squared row norms are precomputed.
    """

    def __init__(self, dense=None, indptr=None, indices=None, values=None,
                 n_dims=None, check=True):
        if dense is not None:
            dense = np.ascontiguousarray(dense, dtype=np.float64)
            if dense.ndim == 1:
                dense = dense[:, None]
            if dense.ndim != 2:
                raise ValueError("dense data must be 2-D")
            self.dense = dense
            self.indptr = self.indices = self.values = None
            self.n_samples, self.n_dims = dense.shape
            self.sq_norms = np.einsum("ij,ij->i", dense, dense)
        else:
            if indptr is None or indices is None or values is None:
                raise ValueError("need either dense data or a CSR triple")
            self.dense = None
            self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
            self.indices = np.ascontiguousarray(indices, dtype=np.int64)
            self.values = np.ascontiguousarray(values, dtype=np.float64)
            self.n_samples = len(self.indptr) - 1
            if n_dims is None:
                n_dims = int(self.indices.max()) + 1 if len(self.indices) else 1
            self.n_dims = int(n_dims)
            sq = self.values * self.values
            # reduceat mishandles empty rows, so sum by owning row instead
            owner = np.repeat(np.arange(self.n_samples), np.diff(self.indptr))
            self.sq_norms = np.bincount(owner, weights=sq, minlength=self.n_samples)
            # reduceat misbehaves on empty rows
            empty = self.indptr[1:] == self.indptr[:-1]
            self.sq_norms[empty] = 0.0
        for arr in (self.dense, self.indptr, self.indices, self.values, self.sq_norms):
            if arr is not None:
                arr.setflags(write=False)
        if self.n_samples < 1 or self.n_dims < 1:
            raise ValueError("dataset must have at least one sample and one dimension")
        if check:
            self.check()

    @property
    def is_sparse(self) -> bool:
        return self.dense is None

    def __len__(self) -> int:
        return self.n_samples

    def __repr__(self) -> str:
        kind = "sparse" if self.is_sparse else "dense"
        return f"Dataset(n_samples={self.n_samples}, n_dims={self.n_dims}, {kind})"

    @classmethod
    def from_scipy(cls, mat, n_dims=None) -> "Dataset":
        mat = mat.tocsr()
        mat.sort_indices()
        return cls(indptr=mat.indptr, indices=mat.indices, values=mat.data,
                   n_dims=n_dims if n_dims is not None else mat.shape[1])

    def row(self, i: int):
        """Row ``i`` as a dense array or a :class:`SparseRow`."""
        if self.dense is not None:
            return self.dense[i]
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return SparseRow(self.indices[lo:hi], self.values[lo:hi], self.n_dims)

    def toarray(self) -> np.ndarray:
        if self.dense is not None:
            return self.dense
        out = np.zeros((self.n_samples, self.n_dims))
        rows = np.repeat(np.arange(self.n_samples), np.diff(self.indptr))
        out[rows, self.indices] = self.values
        return out

    def take(self, order) -> "Dataset":
        """New dataset with rows reordered (or subset) by ``order``."""
        order = np.asarray(order, dtype=np.int64)
        if self.dense is not None:
            return Dataset(self.dense[order], check=False)
        counts = np.diff(self.indptr)[order]
        indptr = np.zeros(len(order) + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        starts = self.indptr[order]
        # gather positions of each selected row's nonzeros
        pos = np.repeat(starts - indptr[:-1], counts) + np.arange(indptr[-1])
        return Dataset(indptr=indptr, indices=self.indices[pos], values=self.values[pos],
                       n_dims=self.n_dims, check=False)

    def rows_dense(self, lo: int, hi: int) -> np.ndarray:
        """Rows ``lo:hi`` as a dense array (copy for sparse data)."""
        if self.dense is not None:
            return self.dense[lo:hi]
        return self.take(np.arange(lo, hi)).toarray()

    def check(self) -> None:
        if self.dense is not None:
            if not np.all(np.isfinite(self.dense)):
                raise InvariantError("dataset contains NaN or Inf")
            direct = np.sum(self.dense * self.dense, axis=1)
        else:
            if not np.all(np.isfinite(self.values)):
                raise InvariantError("dataset contains NaN or Inf")
            if self.indptr[0] != 0 or np.any(np.diff(self.indptr) < 0) or self.indptr[-1] != len(self.indices):
                raise InvariantError("malformed indptr")
            if len(self.indices):
                if self.indices.min() < 0 or self.indices.max() >= self.n_dims:
                    raise InvariantError("column index out of range")
                step = np.diff(self.indices)
                # only steps inside a row must be positive
                inner = np.ones(len(step), dtype=bool)
                bounds = self.indptr[1:-1] - 1
                bounds = bounds[(bounds >= 0) & (bounds < len(step))]
                inner[bounds] = False
                if np.any(step[inner] <= 0):
                    raise InvariantError("sparse column indices not strictly increasing")
            owner = np.repeat(np.arange(self.n_samples), np.diff(self.indptr))
            direct = np.bincount(owner, weights=self.values * self.values, minlength=self.n_samples)
        if not np.allclose(self.sq_norms, direct, rtol=1e-12, atol=0.0):
            raise InvariantError("precomputed squared norms disagree with data")


@dataclass
class CentroidSet:
    """k dense centroids plus the displacement of each in the last update."""

    centroids: np.ndarray
    displacement: np.ndarray = None
    sq_norms: np.ndarray = None

    def __post_init__(self):
        self.centroids = np.array(self.centroids, dtype=np.float64, order="C", ndmin=2)
        if self.displacement is None:
            self.displacement = np.zeros(self.k)
        if self.sq_norms is None:
            self.sq_norms = np.einsum("ij,ij->i", self.centroids, self.centroids)

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    def copy(self) -> "CentroidSet":
        return CentroidSet(self.centroids.copy(), self.displacement.copy(), self.sq_norms.copy())

    def move_to(self, new_centroids: np.ndarray) -> None:
        """Replace centroids, recording how far each one moved."""
        new_centroids = np.ascontiguousarray(new_centroids, dtype=np.float64)
        delta = new_centroids - self.centroids
        self.displacement = np.sqrt(np.einsum("ij,ij->i", delta, delta))
        self.centroids = new_centroids
        self.sq_norms = np.einsum("ij,ij->i", new_centroids, new_centroids)

    def check(self, n_samples: Optional[int] = None) -> None:
        if n_samples is not None and self.k > n_samples:
            raise InvariantError("more centroids than samples")
        if not (np.all(np.isfinite(self.centroids)) and np.all(np.isfinite(self.displacement))):
            raise InvariantError("non-finite centroid data")
        if np.any(self.displacement < 0):
            raise InvariantError("negative displacement")


@dataclass
class RunningStats:
    """Per-cluster running sums ``S``, contribution counts ``v`` and ``sse``.

    ``v`` includes the permanent initialisation contribution, so it never
    drops below one.
    """

    S: np.ndarray
    v: np.ndarray
    sse: np.ndarray

    @classmethod
    def from_init(cls, init_centroids: np.ndarray) -> "RunningStats":
        init_centroids = np.array(init_centroids, dtype=np.float64, order="C", ndmin=2)
        k = init_centroids.shape[0]
        return cls(init_centroids.copy(), np.ones(k, dtype=np.int64), np.zeros(k))

    @property
    def k(self) -> int:
        return len(self.v)

    def copy(self) -> "RunningStats":
        return RunningStats(self.S.copy(), self.v.copy(), self.sse.copy())

    def means(self) -> np.ndarray:
        return self.S / self.v[:, None]

    def check(self, n_contributing: Optional[int] = None) -> None:
        if np.any(self.v < 1):
            raise InvariantError("a cluster lost its initialisation contribution")
        if n_contributing is not None and int(np.sum(self.v - 1)) != n_contributing:
            raise InvariantError(
                f"sum(v - 1) = {int(np.sum(self.v - 1))} but {n_contributing} samples contribute")

    def assert_matches(self, other: "RunningStats", rtol: float = 1e-9) -> None:
        """Compare with another (oracle) instance: v exactly, S and sse to ``rtol``."""
        if not np.array_equal(self.v, other.v):
            raise InvariantError(f"counts differ: {self.v} vs {other.v}")
        scale_s = max(1.0, float(np.max(np.abs(other.S))))
        if not np.all(np.abs(self.S - other.S) <= rtol * scale_s):
            raise InvariantError("cumulative sums differ from recomputation")
        scale_e = max(1.0, float(np.max(np.abs(other.sse))))
        if not np.all(np.abs(self.sse - other.sse) <= rtol * scale_e):
            raise InvariantError("sse differs from recomputation")


class BoundsTable:
    """Lower bounds ``l``, assignments ``a`` and assignment distances ``d``.

    Storage is allocated for ``capacity`` rows and grows by doubling with the
    mini-batch; only the first ``size`` rows are live.
    """

    def __init__(self, k: int, capacity: int = 0):
        self.k = k
        self.size = 0
        capacity = max(int(capacity), 1)
        self.lower = np.zeros((capacity, k))
        self.a = np.full(capacity, -1, dtype=np.int64)
        self.a_old = np.full(capacity, -1, dtype=np.int64)
        self.d = np.zeros(capacity)

    @property
    def capacity(self) -> int:
        return self.lower.shape[0]

    def reserve(self, n: int) -> None:
        if n <= self.capacity:
            return
        cap = self.capacity
        while cap < n:
            cap *= 2
        lower = np.zeros((cap, self.k))
        lower[: self.size] = self.lower[: self.size]
        a = np.full(cap, -1, dtype=np.int64)
        a[: self.size] = self.a[: self.size]
        a_old = np.full(cap, -1, dtype=np.int64)
        a_old[: self.size] = self.a_old[: self.size]
        d = np.zeros(cap)
        d[: self.size] = self.d[: self.size]
        self.lower, self.a, self.a_old, self.d = lower, a, a_old, d

    def check(self, dataset: Optional[Dataset] = None, centroids: Optional[CentroidSet] = None,
              tol: float = 1e-9) -> None:
        n = self.size
        low = self.lower[:n]
        if np.any(low < 0):
            raise InvariantError("negative lower bound")
        if np.any((self.a[:n] < 0) | (self.a[:n] >= self.k)):
            raise InvariantError("assignment out of range")
        if dataset is not None and centroids is not None and n:
            from .metrics import distance_matrix
            exact = distance_matrix(dataset, centroids, 0, n)
            bad = low > exact + tol * (1.0 + exact)
            if np.any(bad):
                i, j = np.argwhere(bad)[0]
                raise InvariantError(
                    f"bound l({i},{j})={float(low[i, j])!r} exceeds distance {float(exact[i, j])!r}")


@dataclass
class MiniBatchState:
    """Nested batch bookkeeping: batch sizes, threshold and iteration."""

    n_total: int
    b: int
    rho: float
    b_prev: int = 0
    t: int = 1

    def grow(self, double: bool) -> None:
        self.b_prev = self.b
        if double:
            self.b = min(2 * self.b, self.n_total)

    def check(self) -> None:
        if not (self.b_prev <= self.b <= self.n_total):
            raise InvariantError(f"batch nesting broken: {self.b_prev} <= {self.b} <= {self.n_total}")


class Algorithm(str, enum.Enum):
    lloyd = "lloyd"
    mbatch = "mbatch"
    mbatch_remove = "mbatch_remove"
    nmbatch = "nmbatch"
    nmbatch_deact = "nmbatch_deact"

    @classmethod
    def parse(cls, name: str) -> "Algorithm":
        return cls(name.replace("-", "_").replace(".", "_"))

    @property
    def cli_name(self) -> str:
        return self.value.replace("_", "-")


@dataclass
class RunConfig:
    algorithm: Algorithm = Algorithm.nmbatch
    k: int = 50
    rho: float = 100.0
    initial_batch: int = 5000
    seed: int = 0
    max_iterations: Optional[int] = None
    max_seconds: Optional[float] = None
    max_distances: Optional[int] = None
    eval_period: int = 1
    eval_train: bool = False
    threads: int = 1

    def __post_init__(self):
        if not isinstance(self.algorithm, Algorithm):
            self.algorithm = Algorithm.parse(str(self.algorithm))
        if self.k < 1:
            raise ConfigError("k must be positive")
        if not self.rho > 0:
            raise ConfigError("rho must be positive")
        if self.initial_batch < 1:
            raise ConfigError("initial batch must be positive")
        if self.eval_period < 1:
            raise ConfigError("eval period must be positive")
        if self.threads < 1:
            raise ConfigError("threads must be positive")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must fit in 64 unsigned bits")


LOG_FIELDS = ("elapsed_s", "iteration", "batch_size", "distance_calcs", "energy", "kind")


class LogRow(NamedTuple):
    elapsed_s: float
    iteration: int
    batch_size: int
    distance_calcs: int
    energy: float
    kind: str


@dataclass
class TimeEnergyLog:
    rows: list = field(default_factory=list)

    def append(self, elapsed_s, iteration, batch_size, distance_calcs, energy, kind) -> None:
        if kind not in ("train", "validation"):
            raise ValueError(f"unknown energy kind {kind!r}")
        self.rows.append(LogRow(float(elapsed_s), int(iteration), int(batch_size),
                                int(distance_calcs), float(energy), kind))

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def column(self, name: str, kind: Optional[str] = None) -> np.ndarray:
        rows = self.rows if kind is None else [r for r in self.rows if r.kind == kind]
        return np.array([getattr(r, name) for r in rows])

    def final_energy(self, kind: Optional[str] = None) -> float:
        rows = self.rows if kind is None else [r for r in self.rows if r.kind == kind]
        return rows[-1].energy

    def check(self) -> None:
        if len(self.rows) < 2:
            return
        if np.any(np.diff(self.column("elapsed_s")) < 0):
            raise InvariantError("elapsed time decreased")
        if np.any(np.diff(self.column("distance_calcs")) < 0):
            raise InvariantError("distance count decreased")


def recompute_stats_oracle(dataset: Dataset, assignment, distances, init_centroids) -> RunningStats:
    """Rebuild S, v and sse from scratch out of an assignment record.

    ``assignment[i]``/``distances[i]`` describe in-batch sample ``i`` (row i
    of ``dataset``); ``init_centroids`` are the permanent first contributions.
    """
    init = np.array(init_centroids, dtype=np.float64, ndmin=2)
    k = init.shape[0]
    assignment = np.asarray(assignment, dtype=np.int64)
    distances = np.asarray(distances, dtype=np.float64)
    n = len(assignment)
    S = init.copy()
    if n:
        np.add.at(S, assignment, dataset.rows_dense(0, n))
    v = 1 + np.bincount(assignment, minlength=k).astype(np.int64)
    sse = np.bincount(assignment, weights=distances * distances, minlength=k).astype(np.float64)
    return RunningStats(S, v, sse)
