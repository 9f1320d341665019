"""Command-line interface: ``nestedkmeans {gen,run,bench,validate}``.

Exit codes: 0 success, 1 runtime or data error, 2 usage error.
"""
import argparse
import csv
import logging
import sys
import time
from pathlib import Path

from . import io as kio
from .core import Algorithm, ConfigError, RunConfig
from .harness import BENCH_FIELDS, aggregate, generate_mixture, run_bench, run_experiment
from .kernels import available, set_threads
from .metrics import energy

ALGORITHMS = [a.cli_name for a in Algorithm]


def _positive_int(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {s}")
    return v


def _positive_float(s):
    v = float(s)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {s}")
    return v


def _seed(s):
    v = int(s)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def _add_run_flags(p):
    p.add_argument("--train", required=True, help="training data (.bin, .csv or svmlight)")
    p.add_argument("--validation", help="validation data; default evaluates on the training set")
    p.add_argument("--k", type=_positive_int, default=50)
    p.add_argument("--rho", type=_positive_float, default=100.0, help="doubling threshold")
    p.add_argument("--batch", type=_positive_int, default=5000,
                   help="mbatch batch size / nmbatch initial batch size")
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--eval-every", type=_positive_int, default=1, help="iterations between evaluations")
    p.add_argument("--eval-train", action="store_true", help="also log training energy")
    p.add_argument("--max-iters", type=_positive_int)
    p.add_argument("--max-seconds", type=_positive_float)
    p.add_argument("--max-distances", type=_positive_int)
    p.add_argument("--dim", type=_positive_int, help="dimension override for svmlight files")
    p.add_argument("--delimiter", default=",", help="CSV delimiter")
    p.add_argument("--threads", type=_positive_int, default=1)
    p.add_argument("--backend", choices=available(), help="kernel backend (default: environment)")
    p.add_argument("--timer", choices=("wall", "off"), default="wall",
                   help="'off' logs zero elapsed time so output files are reproducible byte for byte")
    p.add_argument("--out", required=True)


def build_parser():
    parser = argparse.ArgumentParser(prog="nestedkmeans", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write a synthetic Gaussian mixture")
    g.add_argument("--n", type=_positive_int, required=True)
    g.add_argument("--d", type=_positive_int, required=True)
    g.add_argument("--k-true", type=_positive_int, required=True)
    g.add_argument("--spread", type=_positive_float, required=True)
    g.add_argument("--seed", type=_seed, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--format", choices=("csv", "bin"), default="bin")

    r = sub.add_parser("run", help="run one algorithm and write its time-energy log")
    r.add_argument("--algorithm", choices=ALGORITHMS, default="nmbatch")
    _add_run_flags(r)

    b = sub.add_parser("bench", help="run several algorithms over several seeds and aggregate")
    b.add_argument("--algorithm", "--algorithms", dest="algorithms", default="lloyd,mbatch,nmbatch",
                   help=f"comma-separated subset of {','.join(ALGORITHMS)}")
    b.add_argument("--seeds", type=_positive_int, default=20, help="number of seeds, starting at --seed")
    b.add_argument("--runs-dir", help="also write every single-run log here")
    _add_run_flags(b)

    v = sub.add_parser("validate", help="run the randomised property suites")
    mode = v.add_mutually_exclusive_group()
    mode.add_argument("--quick", action="store_true", default=True)
    mode.add_argument("--full", action="store_true")
    v.add_argument("--seed", type=_seed, default=0)
    v.add_argument("--backend", choices=available())
    v.add_argument("--mutate", choices=("none", "skip-bound-update"), default="none",
                   help=argparse.SUPPRESS)
    return parser


def _load(path, args):
    return kio.load_dataset(path, delimiter=args.delimiter, n_dims=args.dim)


def _config(args, algorithm):
    return RunConfig(algorithm=Algorithm.parse(algorithm), k=args.k, rho=args.rho,
                     initial_batch=args.batch, seed=args.seed, max_iterations=args.max_iters,
                     max_seconds=args.max_seconds, max_distances=args.max_distances,
                     eval_period=args.eval_every, eval_train=args.eval_train, threads=args.threads)


def cmd_gen(args):
    ds, means = generate_mixture(args.n, args.d, args.k_true, args.spread, args.seed)
    if args.format == "bin":
        kio.save_dense_binary(ds, args.out)
    else:
        kio.save_dense_csv(ds, args.out)
    print(f"N={ds.n_samples} d={ds.n_dims} true_means_E={energy(ds, means):.17g}")
    return 0


def cmd_run(args):
    train = _load(args.train, args)
    validation = _load(args.validation, args) if args.validation else None
    set_threads(args.threads)
    cfg = _config(args, args.algorithm)
    timer = time.perf_counter if args.timer == "wall" else None
    log, engine = run_experiment(train, validation, cfg, timer=timer, backend=args.backend)
    kio.write_log_csv(log, args.out)
    print(f"algo={args.algorithm} final_E={log.rows[-1].energy:.17g} "
          f"dist_calcs={engine.counter.count} iters={engine.t} final_batch={engine.batch_size}")
    return 0


def cmd_bench(args):
    algs = [a.strip() for a in args.algorithms.split(",") if a.strip()]
    bad = [a for a in algs if a not in ALGORITHMS]
    if bad or not algs:
        print(f"nestedkmeans bench: error: unknown algorithm(s) {bad}; choose from {ALGORITHMS}",
              file=sys.stderr)
        return 2
    train = _load(args.train, args)
    validation = _load(args.validation, args) if args.validation else None
    set_threads(args.threads)
    cfg = _config(args, algs[0])
    timer = time.perf_counter if args.timer == "wall" else None
    seeds = [args.seed + s for s in range(args.seeds)]
    logs = run_bench(train, validation, cfg, [Algorithm.parse(a) for a in algs], seeds,
                     timer=timer, backend=args.backend)
    logs = {a.cli_name: v for a, v in logs.items()}
    kind = "validation" if validation is not None else "train"
    if args.runs_dir:
        out = Path(args.runs_dir)
        out.mkdir(parents=True, exist_ok=True)
        for alg, runs in logs.items():
            for s, lg in zip(seeds, runs):
                kio.write_log_csv(lg, out / f"{alg}_seed{s}.csv")
    rows = aggregate(logs, kind)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BENCH_FIELDS)
        for r in rows:
            w.writerow([r.algorithm, r.checkpoint, r.n_runs, format(r.distance_calcs_mean, ".17g"),
                        format(r.elapsed_s_mean, ".17g"), format(r.energy_mean, ".17g"),
                        format(r.energy_std, ".17g"), format(r.e_star, ".17g")])
    e_star = rows[0].e_star
    for alg in logs:
        last = [r for r in rows if r.algorithm == alg][-1]
        print(f"algo={alg} final_E_mean={last.energy_mean:.17g} final_E_std={last.energy_std:.17g} "
              f"dist_calcs_mean={last.distance_calcs_mean:.17g}")
    print(f"E*={e_star:.17g}")
    return 0


def cmd_validate(args):
    from .validate import run_suites
    ok = run_suites(seed=args.seed, full=args.full, mutation=args.mutate, backend=args.backend)
    return 0 if ok else 1


COMMANDS = {"gen": cmd_gen, "run": cmd_run, "bench": cmd_bench, "validate": cmd_validate}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (OSError, ValueError, ConfigError) as exc:
        print(f"nestedkmeans {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
