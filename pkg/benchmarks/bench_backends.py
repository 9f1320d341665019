"""Time nmbatch and lloyd under the numba and numpy kernel backends.

    python benchmarks/bench_backends.py --n 20000 --d 10 --k 20

Both backends run the same bounded loop, so iteration and distance counts
must agree; only wall time should differ.
"""
import argparse
import time

import numpy as np

from nestedkmeans.core import Algorithm, RunConfig
from nestedkmeans.harness import generate_mixture, prepare_run
from nestedkmeans.engines import make_engine
from nestedkmeans.kernels import available, warmup


def time_run(ds, cfg, backend):
    eng = make_engine(ds, cfg, backend=backend)
    t0 = time.perf_counter()
    while not eng.done and eng.t < (cfg.max_iterations or 10**9):
        eng.step()
    return time.perf_counter() - t0, eng


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=20000)
    p.add_argument("--d", type=int, default=10)
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--batch", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iters", type=int, default=200)
    args = p.parse_args()

    ds, _ = generate_mixture(args.n, args.d, args.k, 0.5, 12345)
    ds = prepare_run(ds, args.seed, args.k)[0]
    print(f"N={args.n} d={args.d} k={args.k} backends={','.join(available())}")
    for alg in (Algorithm.nmbatch, Algorithm.lloyd):
        cfg = RunConfig(alg, k=args.k, initial_batch=args.batch, seed=args.seed,
                        max_iterations=args.max_iters)
        results = {}
        for name in available():
            warmup(name, False)
            secs, eng = time_run(ds, cfg, name)
            results[name] = (secs, eng)
            print(f"{alg.cli_name:8s} {name:6s} {secs:8.3f}s iters={eng.t} "
                  f"dist_calcs={eng.counter.count}")
        if len(results) == 2:
            (sa, ea), (sb, eb) = results["numba"], results["numpy"]
            assert ea.t == eb.t and ea.counter.count == eb.counter.count
            np.testing.assert_allclose(ea.centroids.centroids, eb.centroids.centroids, rtol=1e-9)
            print(f"{alg.cli_name:8s} numpy/numba time ratio {sb / sa:.1f}")


if __name__ == "__main__":
    main()
