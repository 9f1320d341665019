"""The k-means drivers: lloyd, mbatch (optionally removing old
contributions) and nested mini-batch nmbatch (optionally without the bound
test).

Every engine is a small state machine: construct it on an already shuffled
dataset (the first k rows become the initial centroids), then call
``step()`` until ``done`` or a budget runs out. :func:`drive` does the
latter while timing steps and logging energies.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass

import numpy as np

from .core import (Algorithm, BoundsTable, CentroidSet, ConfigError, Dataset, MiniBatchState,
                   RunConfig, RunningStats, TimeEnergyLog)
from .kernels import data_args, get_backend
from .metrics import DistanceCounter, energy

log = logging.getLogger(__name__)

# mbatch has no convergence test; without an explicit budget it runs this many epochs
DEFAULT_MBATCH_EPOCHS = 20


def _initial_centroids(dataset: Dataset, k: int) -> np.ndarray:
    if k > dataset.n_samples:
        raise ConfigError(f"k={k} exceeds the number of samples ({dataset.n_samples})")
    return dataset.rows_dense(0, k).copy()


def sampling_rng(seed: int) -> np.random.Generator:
    """Generator for mbatch draws; independent of the shuffle stream."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed).spawn(2)[1]))


@dataclass
class DoublingDecision:
    sigma: np.ndarray
    ratio: np.ndarray
    verdict: bool


def doubling_check(stats: RunningStats, centroids: CentroidSet, rho: float) -> DoublingDecision:
    """Decide whether the nested batch should double.

    sigma(j) = sqrt(sse(j) / (v(j) (v(j) - 1))) estimates how far centroid j
    would move if the batch doubled; it is compared with the distance p(j)
    the centroid actually moved. Clusters with v <= 1 do not vote, p = 0
    gives an infinite ratio, and with no finite ratio the batch doubles.
    """
    v = stats.v.astype(np.float64)
    eligible = stats.v > 1
    sigma = np.zeros(len(v))
    denom = v[eligible] * (v[eligible] - 1.0)
    # sse can dip a hair below zero after many remove/add cycles
    sigma[eligible] = np.sqrt(np.maximum(stats.sse[eligible], 0.0) / denom)
    p = centroids.displacement
    ratio = np.full(len(v), np.inf)
    moved = eligible & (p > 0)
    ratio[moved] = sigma[moved] / p[moved]
    finite = ratio[eligible & np.isfinite(ratio)]
    verdict = True if finite.size == 0 else bool(finite.min() > rho)
    return DoublingDecision(sigma, ratio, verdict)


def stop_condition(state: MiniBatchState, changes: int) -> bool:
    """Stop once the batch is the whole training set and nothing moved."""
    return state.b == state.n_total and changes == 0


class Lloyd:
    """Exact k-means: brute-force assignment then mean update."""

    name = "lloyd"

    def __init__(self, dataset: Dataset, k: int, backend=None, counter=None):
        self.dataset = dataset
        self.kern = get_backend(backend)
        self.centroids = CentroidSet(_initial_centroids(dataset, k))
        self.counter = counter or DistanceCounter()
        self.a = np.full(dataset.n_samples, -1, dtype=np.int64)
        self.d = np.zeros(dataset.n_samples)
        self.t = 0
        self.done = False
        self.last_changes = None
        self._rows = np.arange(dataset.n_samples, dtype=np.int64)

    @property
    def batch_size(self) -> int:
        return self.dataset.n_samples

    def step(self) -> int:
        cs = self.centroids
        args = data_args(self.dataset)
        a, d = self.kern.brute_assign(*args, self._rows, cs.centroids, cs.sq_norms)
        self.counter.add(self.dataset.n_samples * cs.k)
        changes = int(np.count_nonzero(a != self.a))
        self.a, self.d = a, d
        S = np.zeros_like(cs.centroids)
        v = np.zeros(cs.k, dtype=np.int64)
        self.kern.accumulate(*args, self._rows, a, 1.0, S, v)
        new = cs.centroids.copy()
        full = v > 0
        # empty clusters keep their centroid
        new[full] = S[full] / v[full, None]
        cs.move_to(new)
        self.t += 1
        self.last_changes = changes
        self.done = changes == 0
        return changes


class MiniBatch:
    """Mini-batch k-means with running-average centroids.

    Each iteration draws ``b`` distinct indices uniformly (independently of
    earlier iterations). With ``remove_old`` a sample's previous
    contribution is withdrawn before its new one is added.
    """

    def __init__(self, dataset: Dataset, k: int, batch: int, seed: int = 0, remove_old=False,
                 backend=None, counter=None):
        self.dataset = dataset
        self.kern = get_backend(backend)
        n = dataset.n_samples
        if batch > n:
            log.warning("batch size %d exceeds N=%d; clamping", batch, n)
            batch = n
        self.b = int(batch)
        init = _initial_centroids(dataset, k)
        self.centroids = CentroidSet(init)
        self.stats = RunningStats.from_init(init)
        self.counter = counter or DistanceCounter()
        self.remove_old = remove_old
        self.last = np.full(n, -1, dtype=np.int64) if remove_old else None
        self.rng = sampling_rng(seed)
        self.t = 0
        self.done = False
        self.last_changes = None
        self.last_rows = None

    name = property(lambda self: "mbatch_remove" if self.remove_old else "mbatch")

    @property
    def batch_size(self) -> int:
        return self.b

    def step(self) -> int:
        cs, st = self.centroids, self.stats
        args = data_args(self.dataset)
        rows = self.rng.choice(self.dataset.n_samples, size=self.b, replace=False).astype(np.int64)
        a, _ = self.kern.brute_assign(*args, rows, cs.centroids, cs.sq_norms)
        self.counter.add(self.b * cs.k)
        changes = self.b
        if self.remove_old:
            prev = self.last[rows]
            self.kern.accumulate(*args, rows, prev, -1.0, st.S, st.v)
            changes = int(np.count_nonzero(prev != a))
            self.last[rows] = a
        self.kern.accumulate(*args, rows, a, 1.0, st.S, st.v)
        cs.move_to(st.S / st.v[:, None])
        self.t += 1
        self.last_changes = changes
        self.last_rows = rows
        return changes


class NestedMiniBatch:
    """Nested mini-batch k-means with lower bounds.

    The batch at iteration t is the prefix ``0..b_t-1`` of the (shuffled)
    data and only ever grows by doubling. Reused samples drop their old
    contribution before being reassigned with bounds, so every sample votes
    exactly once. With ``use_bounds=False`` every candidate distance is
    computed; results are unchanged and only the distance count differs.
    """

    def __init__(self, dataset: Dataset, k: int, initial_batch: int = 5000, rho: float = 100.0,
                 use_bounds=True, threads: int = 1, backend=None, counter=None):
        self.dataset = dataset
        self.kern = get_backend(backend)
        n = dataset.n_samples
        b1 = min(int(initial_batch), n)
        if b1 < k:
            raise ConfigError(f"initial batch {b1} is smaller than k={k}")
        init = _initial_centroids(dataset, k)
        self.init_centroids = init.copy()
        self.centroids = CentroidSet(init)
        self.stats = RunningStats.from_init(init)
        self.bounds = BoundsTable(k, b1)
        self.state = MiniBatchState(n_total=n, b=b1, rho=float(rho))
        self.counter = counter or DistanceCounter()
        self.use_bounds = bool(use_bounds)
        self.threads = max(1, int(threads))
        self.t = 0
        self.done = False
        self.last_changes = None
        self.last_batch = b1
        self.last_decision = None
        self.entered = 0

    name = property(lambda self: "nmbatch" if self.use_bounds else "nmbatch_deact")

    @property
    def batch_size(self) -> int:
        return self.last_batch

    def step(self) -> int:
        st, bt, cs, state = self.stats, self.bounds, self.centroids, self.state
        args = data_args(self.dataset)
        n_old, b = state.b_prev, state.b
        bt.reserve(b)
        # bounds of reused samples were already shrunk right after the last move
        if self.threads > 1 and n_old > 0:
            nd, nc = self.kern.reuse_pass_parallel(
                *args, n_old, bt.lower, bt.a, bt.a_old, bt.d, cs.centroids, cs.sq_norms,
                st.S, st.v, st.sse, self.use_bounds, self.threads)
        else:
            nd, nc = self.kern.reuse_pass(
                *args, n_old, bt.lower, bt.a, bt.a_old, bt.d, cs.centroids, cs.sq_norms,
                st.S, st.v, st.sse, self.use_bounds)
        nd += self.kern.tight_init(*args, n_old, b, bt.lower, bt.a, bt.a_old, bt.d,
                                   cs.centroids, cs.sq_norms, st.S, st.v, st.sse)
        self.entered += b - n_old
        bt.size = b
        self.counter.add(int(nd))
        changes = int(nc) + (b - n_old)

        cs.move_to(st.S / st.v[:, None])
        decision = doubling_check(st, cs, state.rho)
        self.kern.shrink_bounds(bt.lower, b, cs.displacement)

        self.last_batch = b
        self.last_changes = changes
        self.last_decision = decision
        self.done = stop_condition(state, changes)
        state.grow(decision.verdict)
        state.t += 1
        self.t += 1
        return changes

    @property
    def assignment(self) -> np.ndarray:
        return self.bounds.a[: self.bounds.size].copy()


def make_engine(dataset: Dataset, config: RunConfig, backend=None, counter=None):
    alg = config.algorithm
    if alg is Algorithm.lloyd:
        return Lloyd(dataset, config.k, backend=backend, counter=counter)
    if alg in (Algorithm.mbatch, Algorithm.mbatch_remove):
        return MiniBatch(dataset, config.k, config.initial_batch, seed=config.seed,
                         remove_old=alg is Algorithm.mbatch_remove, backend=backend, counter=counter)
    return NestedMiniBatch(dataset, config.k, config.initial_batch, config.rho,
                           use_bounds=alg is Algorithm.nmbatch, threads=config.threads,
                           backend=backend, counter=counter)


def drive(engine, config: RunConfig, eval_sets: dict, log_: TimeEnergyLog = None,
          timer=time.perf_counter, callback=None, backend=None) -> TimeEnergyLog:
    """Step ``engine`` until it converges or a budget in ``config`` runs out.

    Every ``config.eval_period`` iterations (and at the end) the energy on
    each dataset in ``eval_sets`` (``{"train": ds, "validation": ds}``) is
    logged. Evaluation happens with the clock stopped and never touches the
    distance counter. ``timer=None`` logs zero elapsed time.
    """
    log_ = TimeEnergyLog() if log_ is None else log_
    elapsed = 0.0
    max_iter = config.max_iterations
    if (isinstance(engine, MiniBatch) and max_iter is None and config.max_seconds is None
            and config.max_distances is None):
        max_iter = DEFAULT_MBATCH_EPOCHS * math.ceil(engine.dataset.n_samples / engine.b)

    def record():
        for kind, ds in eval_sets.items():
            log_.append(elapsed, engine.t, engine.batch_size, engine.counter.count,
                        energy(ds, engine.centroids, backend=backend), kind)

    record()
    last_logged = engine.t
    while not engine.done:
        if max_iter is not None and engine.t >= max_iter:
            break
        if config.max_seconds is not None and elapsed >= config.max_seconds:
            break
        if config.max_distances is not None and engine.counter.count >= config.max_distances:
            break
        if timer is not None:
            t0 = timer()
            engine.step()
            elapsed += timer() - t0
        else:
            engine.step()
        if callback is not None:
            callback(engine)
        if engine.t % config.eval_period == 0 or engine.done:
            record()
            last_logged = engine.t
    if last_logged != engine.t:
        record()
    return log_


def _run(dataset, config, backend, eval_sets=None, timer=time.perf_counter):
    engine = make_engine(dataset, config, backend=backend)
    log_ = drive(engine, config, eval_sets or {"train": dataset}, timer=timer, backend=backend)
    return engine, log_


def run_lloyd(dataset: Dataset, config: RunConfig, backend=None):
    """Returns (centroids, assignment, log)."""
    config = _with_algorithm(config, Algorithm.lloyd)
    engine, log_ = _run(dataset, config, backend)
    return engine.centroids, engine.a, log_


def run_mbatch(dataset: Dataset, config: RunConfig, remove_old=False, backend=None):
    config = _with_algorithm(config, Algorithm.mbatch_remove if remove_old else Algorithm.mbatch)
    engine, log_ = _run(dataset, config, backend)
    return engine.centroids, log_


def run_nmbatch(dataset: Dataset, config: RunConfig, deactivate_bounds=False, backend=None):
    config = _with_algorithm(config, Algorithm.nmbatch_deact if deactivate_bounds else Algorithm.nmbatch)
    engine, log_ = _run(dataset, config, backend)
    return engine.centroids, log_


def _with_algorithm(config: RunConfig, alg: Algorithm) -> RunConfig:
    from dataclasses import replace
    return replace(config, algorithm=alg)
