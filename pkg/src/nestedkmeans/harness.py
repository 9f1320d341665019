"""Experiment protocol, synthetic data and multi-seed aggregation.

Randomness: every seed feeds ``numpy.random.SeedSequence(seed)``, spawned
into two PCG64 streams. Stream 0 drives the shuffle (``Generator.permutation``,
a Fisher-Yates shuffle), stream 1 drives mbatch's per-iteration draws.
Synthetic data uses its own ``default_rng(seed)``.
"""
import math
import time
from dataclasses import dataclass, replace

import numpy as np

from .core import CentroidSet, ConfigError, Dataset, RunConfig, RunningStats, TimeEnergyLog
from .engines import drive, make_engine
from .kernels import warmup


def shuffle_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed).spawn(2)[0]))


def prepare_run(dataset: Dataset, seed: int, k: int):
    """Shuffle with ``seed``; the first k shuffled rows are the initial centroids.

    Returns ``(shuffled, permutation, centroids, stats)``.
    """
    if k > dataset.n_samples:
        raise ConfigError(f"k={k} exceeds the number of samples ({dataset.n_samples})")
    perm = shuffle_rng(seed).permutation(dataset.n_samples)
    shuffled = dataset.take(perm)
    init = shuffled.rows_dense(0, k).copy()
    return shuffled, perm, CentroidSet(init), RunningStats.from_init(init)


def run_experiment(train: Dataset, validation: Dataset = None, config: RunConfig = None,
                   timer=time.perf_counter, backend=None, callback=None, shuffle=True):
    """Run ``config.algorithm`` under the standard protocol.

    Energies are logged every ``config.eval_period`` iterations on the
    validation set (kind ``validation``), or on the training set when no
    validation set is given; ``config.eval_train`` adds training rows too.
    Returns ``(log, engine)``.
    """
    config = config or RunConfig()
    if validation is not None and validation.n_dims != train.n_dims:
        raise ValueError(f"train has {train.n_dims} dims, validation has {validation.n_dims}")
    if shuffle:
        train = prepare_run(train, config.seed, config.k)[0]
    engine = make_engine(train, config, backend=backend)
    warmup(backend, train.is_sparse)
    eval_sets = {}
    if validation is None or config.eval_train:
        eval_sets["train"] = train
    if validation is not None:
        eval_sets["validation"] = validation
    log = drive(engine, config, eval_sets, timer=timer, callback=callback, backend=backend)
    return log, engine


def generate_mixture(n: int, d: int, k_true: int, spread: float, seed: int):
    """Isotropic Gaussian mixture; returns ``(dataset, means)``.

    Means are uniform in [0, 10]^d and samples are dealt to components
    round-robin.
    """
    if not (n >= k_true >= 1) or d < 1:
        raise ValueError("need n >= k_true >= 1 and d >= 1")
    if not spread > 0:
        raise ValueError("spread must be positive")
    rng = np.random.default_rng(seed)
    means = rng.uniform(0.0, 10.0, size=(k_true, d))
    X = means[np.arange(n) % k_true] + rng.normal(0.0, spread, size=(n, d))
    return Dataset(X), means


def revisit_fraction(N: int, b: int) -> float:
    """Probability that a sample goes unvisited in one epoch of uniform
    mini-batches, which equals the fraction of visits that are revisits."""
    if not (1 <= b <= N):
        raise ValueError("need 1 <= b <= N")
    if N % b:
        raise ValueError(f"N={N} is not a multiple of b={b}")
    return (1.0 - b / N) ** (N // b)


def monte_carlo_revisit(N: int, b: int, trials: int, seed: int = 0):
    """Simulated revisit fraction over ``trials`` epochs.

    Returns ``(mean, standard_error)``.
    """
    if N % b:
        raise ValueError(f"N={N} is not a multiple of b={b}")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    draws = N // b
    fracs = np.empty(trials)
    for t in range(trials):
        seen = np.zeros(N, dtype=bool)
        revisits = 0
        for _ in range(draws):
            batch = rng.choice(N, size=b, replace=False)
            revisits += int(np.count_nonzero(seen[batch]))
            seen[batch] = True
        fracs[t] = revisits / N
    se = float(fracs.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return float(fracs.mean()), se


def value_at(log: TimeEnergyLog, budgets, column="distance_calcs", kind=None) -> np.ndarray:
    """Step-interpolated energy: the last logged energy with ``column <= budget``."""
    rows = [r for r in log if kind is None or r.kind == kind]
    xs = np.array([getattr(r, column) for r in rows], dtype=np.float64)
    es = np.array([r.energy for r in rows])
    idx = np.searchsorted(xs, np.asarray(budgets, dtype=np.float64), side="right") - 1
    out = np.where(idx >= 0, es[np.maximum(idx, 0)], np.nan)
    return out


@dataclass
class BenchRow:
    algorithm: str
    checkpoint: int
    n_runs: int
    distance_calcs_mean: float
    elapsed_s_mean: float
    energy_mean: float
    energy_std: float
    e_star: float


BENCH_FIELDS = ("algorithm", "checkpoint", "n_runs", "distance_calcs_mean", "elapsed_s_mean",
                "energy_mean", "energy_std", "e_star")


def aggregate(logs_by_alg: dict, kind: str):
    """Mean/std of energy per algorithm at matched checkpoints (row index).

    Runs that finished early contribute their final row to later
    checkpoints. ``e_star`` is the lowest energy of ``kind`` in any run.
    """
    def pick(lg):
        return [r for r in lg if r.kind == kind]

    all_rows = [r for logs in logs_by_alg.values() for lg in logs for r in pick(lg)]
    e_star = min(r.energy for r in all_rows)
    out = []
    for alg, logs in logs_by_alg.items():
        series = [pick(lg) for lg in logs]
        depth = max(len(s) for s in series)
        for c in range(depth):
            at = [s[min(c, len(s) - 1)] for s in series]
            e = np.array([r.energy for r in at])
            out.append(BenchRow(alg, c, len(at), float(np.mean([r.distance_calcs for r in at])),
                                float(np.mean([r.elapsed_s for r in at])), float(e.mean()),
                                float(e.std(ddof=1)) if len(e) > 1 else 0.0, e_star))
    return out


def run_bench(train, validation, config: RunConfig, algorithms, seeds, timer=time.perf_counter,
              backend=None):
    """Every algorithm on every seed; the shuffle is shared per seed."""
    logs = {a: [] for a in algorithms}
    for s in seeds:
        shuffled = prepare_run(train, s, config.k)[0]
        for a in algorithms:
            cfg = replace(config, algorithm=a, seed=s)
            lg, _ = run_experiment(shuffled, validation, cfg, timer=timer, backend=backend,
                                   shuffle=False)
            logs[a].append(lg)
    return logs
