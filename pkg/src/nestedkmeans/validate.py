"""Randomised property suites behind ``nestedkmeans validate``.

Each suite returns ``None`` on success or a failure message that names the
instance seed and parameters needed to reproduce it.
"""
import math
from dataclasses import dataclass

import numpy as np

from .core import Dataset, InvariantError, recompute_stats_oracle
from .engines import Lloyd, NestedMiniBatch
from .harness import monte_carlo_revisit, prepare_run, revisit_fraction
from .metrics import distance_matrix, energy

MUTATIONS = ("none", "skip-bound-update")


@dataclass
class Instance:
    seed: int
    n: int
    d: int
    k: int
    batch: int
    rho: float
    sparse: bool

    def describe(self) -> str:
        return (f"seed={self.seed} N={self.n} d={self.d} k={self.k} batch={self.batch} "
                f"rho={self.rho} sparse={self.sparse}")

    def dataset(self) -> Dataset:
        rng = np.random.default_rng(self.seed)
        if self.sparse:
            X = rng.normal(size=(self.n, self.d)) * (rng.random((self.n, self.d)) < 0.4)
            import scipy.sparse as sp
            return Dataset.from_scipy(sp.csr_matrix(X), n_dims=self.d)
        centers = rng.uniform(0, 10, size=(max(2, self.k // 2), self.d))
        X = centers[rng.integers(len(centers), size=self.n)] + rng.normal(size=(self.n, self.d))
        return Dataset(X)


def random_instances(count: int, seed: int, n_range=(50, 2000), d_range=(2, 32), k_range=(2, 32),
                     sparse_every=4):
    rng = np.random.default_rng(seed)
    out = []
    for idx in range(count):
        n = int(rng.integers(n_range[0], n_range[1] + 1))
        k = int(rng.integers(k_range[0], min(k_range[1], n) + 1))
        d = int(rng.integers(d_range[0], d_range[1] + 1))
        batch = int(rng.integers(k, max(k, n // 4) + 1))
        rho = float(10.0 ** rng.integers(-1, 4))
        out.append(Instance(int(seed) * 100003 + idx, n, d, k, batch, rho,
                            sparse_every > 0 and idx % sparse_every == sparse_every - 1))
    return out


def _engine(inst: Instance, use_bounds=True, mutation="none", backend=None):
    ds = prepare_run(inst.dataset(), inst.seed, inst.k)[0]
    eng = NestedMiniBatch(ds, inst.k, inst.batch, inst.rho, use_bounds=use_bounds, backend=backend)
    if mutation == "skip-bound-update":
        eng.kern = _NoShrink(eng.kern)
    return ds, eng


class _NoShrink:
    """Kernel proxy whose bound decrement does nothing (mutation testing)."""

    def __init__(self, kern):
        self._kern = kern

    def __getattr__(self, name):
        return getattr(self._kern, name)

    @staticmethod
    def shrink_bounds(lower, n, p):
        return None


def walk_nmbatch(inst: Instance, max_steps=60, mutation="none", backend=None, check_bounds=True,
                 check_stats=True, check_assign=True):
    """Step nmbatch on ``inst`` checking exactness, bound validity and
    bookkeeping after every iteration. Returns the number of steps taken."""
    ds, eng = _engine(inst, mutation=mutation, backend=backend)
    steps = 0
    while not eng.done and steps < max_steps:
        before = eng.centroids.centroids.copy()
        b = eng.state.b
        eng.step()
        steps += 1
        where = f"{inst.describe()} iteration={eng.t}"
        if check_assign:
            exact = distance_matrix(ds, before, 0, b)
            want = np.argmin(exact, axis=1)
            got = eng.bounds.a[:b]
            if not np.array_equal(got, want):
                i = int(np.flatnonzero(got != want)[0])
                raise InvariantError(f"assignment mismatch at sample {i}: {got[i]} vs {want[i]} ({where})")
            if not np.allclose(eng.bounds.d[:b], exact[np.arange(b), want], rtol=1e-9, atol=1e-12):
                raise InvariantError(f"assignment distance mismatch ({where})")
        if check_bounds:
            try:
                eng.bounds.check(ds, eng.centroids)
            except InvariantError as exc:
                raise InvariantError(f"{exc} ({where})") from None
        if check_stats:
            oracle = recompute_stats_oracle(ds, eng.bounds.a[:b], eng.bounds.d[:b],
                                            eng.init_centroids)
            try:
                eng.stats.assert_matches(oracle, rtol=1e-9)
                eng.stats.check(n_contributing=b)
            except InvariantError as exc:
                raise InvariantError(f"{exc} ({where})") from None
        eng.state.check()
    return steps


def suite_exactness(instances, mutation="none", backend=None):
    for inst in instances:
        try:
            walk_nmbatch(inst, mutation=mutation, backend=backend, check_bounds=False, check_stats=False)
        except InvariantError as exc:
            return str(exc)
    return None


def suite_bound_validity(instances, mutation="none", backend=None):
    for inst in instances:
        try:
            walk_nmbatch(inst, mutation=mutation, backend=backend, check_assign=False, check_stats=False)
        except InvariantError as exc:
            return str(exc)
    return None


def suite_stats(instances, mutation="none", backend=None):
    for inst in instances:
        try:
            walk_nmbatch(inst, mutation=mutation, backend=backend, check_assign=False, check_bounds=False)
        except InvariantError as exc:
            return str(exc)
    return None


def suite_bound_invariance(instances, mutation="none", backend=None):
    for inst in instances:
        _, on = _engine(inst, True, mutation, backend)
        _, off = _engine(inst, False, mutation, backend)
        for _ in range(60):
            if on.done and off.done:
                break
            on.step()
            off.step()
            if not np.array_equal(on.centroids.centroids, off.centroids.centroids):
                return f"centroid trajectories diverge ({inst.describe()} iteration={on.t})"
    return None


def suite_lloyd(instances, mutation="none", backend=None):
    for inst in instances:
        ds = prepare_run(inst.dataset(), inst.seed, inst.k)[0]
        eng = Lloyd(ds, inst.k, backend=backend)
        prev = math.inf
        for _ in range(500):
            eng.step()
            e = energy(ds, eng.centroids, backend=backend)
            if e > prev * (1 + 1e-12) + 1e-15:
                return f"lloyd energy rose {prev!r} -> {e!r} ({inst.describe()} iteration={eng.t})"
            prev = e
            if eng.done:
                break
        else:
            return f"lloyd did not converge in 500 iterations ({inst.describe()})"
    return None


def suite_revisit(seed, trials=2000):
    for N in (10, 100, 1000, 10000):
        for b in range(1, N // 2 + 1):
            if N % b:
                continue
            p = revisit_fraction(N, b)
            if not (0.25 <= p < 1 / math.e):
                return f"revisit_fraction(N={N}, b={b}) = {p} outside [1/4, 1/e)"
    for N, b in ((100, 50), (100, 10), (60, 5)):
        est, se = monte_carlo_revisit(N, b, trials, seed)
        if abs(est - revisit_fraction(N, b)) > 3 * se + 1e-12:
            return f"monte carlo revisit {est} +- {se} disagrees at N={N} b={b} (seed={seed})"
    return None


SUITES = ("exactness", "bound_validity", "stats", "bound_invariance", "lloyd", "revisit")


def run_suites(seed=0, full=False, mutation="none", backend=None, report=print):
    """Run every suite; returns True when all pass."""
    if mutation not in MUTATIONS:
        raise ValueError(f"unknown mutation {mutation!r}")
    count = 200 if full else 12
    n_range = (50, 2000) if full else (50, 400)
    insts = random_instances(count, seed, n_range=n_range)
    small = insts[: max(4, count // 10)]
    results = {
        "exactness": lambda: suite_exactness(insts, mutation, backend),
        "bound_validity": lambda: suite_bound_validity(insts, mutation, backend),
        "stats": lambda: suite_stats(small, mutation, backend),
        "bound_invariance": lambda: suite_bound_invariance(small, mutation, backend),
        "lloyd": lambda: suite_lloyd(small, mutation, backend),
        "revisit": lambda: suite_revisit(seed, trials=10000 if full else 1000),
    }
    ok = True
    for name in SUITES:
        msg = results[name]()
        if msg is None:
            report(f"PASS {name}")
        else:
            ok = False
            report(f"FAIL {name}: {msg}")
    return ok
