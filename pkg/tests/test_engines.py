import math

import numpy as np
import pytest

from nestedkmeans.core import (Algorithm, CentroidSet, ConfigError, Dataset, MiniBatchState,
                               RunConfig, RunningStats, recompute_stats_oracle)
from nestedkmeans.engines import (DEFAULT_MBATCH_EPOCHS, Lloyd, MiniBatch, NestedMiniBatch,
                                  doubling_check, drive, make_engine, run_lloyd, run_mbatch,
                                  run_nmbatch, stop_condition)
from nestedkmeans.harness import generate_mixture, prepare_run
from nestedkmeans.metrics import assign, energy


def mixture(seed=3, n=600, d=4, k_true=5):
    ds, _ = generate_mixture(n, d, k_true, 1.0, seed)
    return prepare_run(ds, seed, k_true)[0]


def stats_one(v, sse):
    return RunningStats(np.zeros((1, 1)), np.array([v], dtype=np.int64), np.array([sse]))


def moved(p):
    cs = CentroidSet(np.zeros((len(p), 1)))
    cs.displacement = np.asarray(p, dtype=float)
    return cs


class TestDoublingCheck:
    def test_no_doubling(self):
        dec = doubling_check(stats_one(5, 2.0), moved([0.01]), 100.0)
        assert dec.sigma[0] == pytest.approx(math.sqrt(0.1), rel=1e-15)
        assert dec.ratio[0] == pytest.approx(31.622776601683794, rel=1e-12)
        assert not dec.verdict

    def test_doubling(self):
        dec = doubling_check(stats_one(5, 2.0), moved([0.001]), 100.0)
        assert dec.ratio[0] == pytest.approx(316.22776601683794, rel=1e-12)
        assert dec.verdict

    def test_no_movement_doubles(self):
        st = RunningStats(np.zeros((2, 1)), np.array([5, 7]), np.array([1.0, 3.0]))
        dec = doubling_check(st, moved([0.0, 0.0]), 100.0)
        assert np.all(np.isinf(dec.ratio)) and dec.verdict

    def test_singletons_do_not_vote(self):
        st = RunningStats(np.zeros((2, 1)), np.array([1, 5]), np.array([0.0, 2.0]))
        # cluster 0 would have ratio 0 if it voted
        assert doubling_check(st, moved([1.0, 0.001]), 100.0).verdict
        st.v[:] = 1
        assert doubling_check(st, moved([1.0, 1.0]), 100.0).verdict

    def test_min_decides(self):
        st = RunningStats(np.zeros((2, 1)), np.array([5, 5]), np.array([2.0, 2.0]))
        assert not doubling_check(st, moved([0.001, 0.01]), 100.0).verdict

    def test_negative_sse_clamped(self):
        dec = doubling_check(stats_one(3, -1e-18), moved([1.0]), 100.0)
        assert dec.sigma[0] == 0.0 and not dec.verdict


@pytest.mark.parametrize("b,n,changes,want", [(2, 4, 0, False), (4, 4, 3, False), (4, 4, 0, True)])
def test_stop_condition(b, n, changes, want):
    assert stop_condition(MiniBatchState(n, b, 100.0), changes) is want


class TestLloyd:
    def test_hand_trace(self, four_points, backend):
        eng = Lloyd(four_points, 2, backend=backend)
        eng.step()
        np.testing.assert_allclose(eng.centroids.centroids.ravel(), [0.0, 22 / 3], rtol=1e-15)
        while not eng.done:
            eng.step()
        np.testing.assert_array_equal(eng.centroids.centroids.ravel(), [0.5, 10.5])
        np.testing.assert_array_equal(eng.a, [0, 0, 1, 1])
        assert eng.t == 3
        assert energy(four_points, eng.centroids) == 0.25

    def test_partition_oracle(self, four_points):
        # best 2-partition of {0,1,10,11} by enumeration
        x = four_points.toarray().ravel()
        best = math.inf
        for mask in range(1, 2 ** 3):
            labels = np.array([(mask >> i) & 1 for i in range(4)])
            e = sum(((x[labels == g] - x[labels == g].mean()) ** 2).sum() for g in (0, 1)) / 4
            best = min(best, e)
        cs, a, _ = run_lloyd(four_points, RunConfig(Algorithm.lloyd, k=2))
        assert energy(four_points, cs) == best == 0.25

    def test_k_equals_n(self, rng, backend):
        ds = Dataset(rng.normal(size=(7, 3)))
        eng = Lloyd(ds, 7, backend=backend)
        while not eng.done:
            eng.step()
        assert eng.t <= 2
        assert energy(ds, eng.centroids) == 0.0

    def test_k_too_large(self, four_points):
        with pytest.raises(ConfigError):
            Lloyd(four_points, 5)

    def test_monotone(self, backend):
        ds = mixture()
        eng = Lloyd(ds, 5, backend=backend)
        prev = math.inf
        while not eng.done:
            eng.step()
            e = energy(ds, eng.centroids)
            assert e <= prev * (1 + 1e-12)
            prev = e

    def test_empty_cluster_keeps_centroid(self):
        ds = Dataset([[0.0], [0.0], [1.0]])
        eng = Lloyd(ds, 2)
        # both initial centroids sit at 0; cluster 1 never wins a tie
        eng.step()
        assert eng.centroids.centroids[1, 0] == 0.0


class TestMiniBatch:
    def test_single_full_batch(self, four_points, backend):
        eng = MiniBatch(four_points, 2, 4, seed=0, backend=backend)
        eng.step()
        np.testing.assert_array_equal(eng.centroids.centroids.ravel(), [0.0, 5.75])
        assert eng.counter.count == 8

    def test_v_grows_by_b(self, backend):
        eng = MiniBatch(mixture(), 5, 40, seed=9, backend=backend)
        for t in range(1, 6):
            eng.step()
            assert int(eng.stats.v.sum()) == 5 + 40 * t

    def test_batch_clamped(self, four_points, caplog):
        eng = MiniBatch(four_points, 2, 10)
        assert eng.b == 4
        assert "clamping" in caplog.text

    def test_draws_are_distinct(self):
        eng = MiniBatch(mixture(), 5, 100, seed=1)
        eng.step()
        assert len(np.unique(eng.last_rows)) == 100

    def test_remove_old_matches_record(self, backend):
        ds = mixture(n=200)
        eng = MiniBatch(ds, 5, 60, seed=4, remove_old=True, backend=backend)
        init = ds.rows_dense(0, 5).copy()
        for _ in range(12):
            eng.step()
        last = eng.last
        live = np.flatnonzero(last >= 0)
        S = init.copy()
        np.add.at(S, last[live], ds.toarray()[live])
        v = 1 + np.bincount(last[live], minlength=5)
        np.testing.assert_array_equal(eng.stats.v, v)
        np.testing.assert_allclose(eng.stats.S, S, rtol=1e-9, atol=1e-9)

    def test_remove_old_sample_moves_cluster(self):
        # sample 2 visits cluster 0 first, then cluster 1 once that centroid moves close
        ds = Dataset([[0.0], [10.0], [4.0]])
        eng = MiniBatch(ds, 2, 1, remove_old=True)
        eng.rng = None
        eng.centroids.move_to(np.array([[0.0], [10.0]]))

        class Fixed:
            def __init__(self, seq):
                self.seq = list(seq)

            def choice(self, n, size, replace):
                return np.array([self.seq.pop(0)])

        eng.rng = Fixed([2, 2])
        eng.step()
        assert eng.last[2] == 0
        eng.centroids.move_to(np.array([[0.0], [5.0]]))
        eng.step()
        assert eng.last[2] == 1
        np.testing.assert_array_equal(eng.stats.v, [1, 2])
        np.testing.assert_allclose(eng.stats.S.ravel(), [0.0, 14.0])

    def test_seed_determinism(self):
        ds = mixture()
        cfg = RunConfig(Algorithm.mbatch, k=5, initial_batch=50, seed=11, max_iterations=10)
        a, la = run_mbatch(ds, cfg)
        b, lb = run_mbatch(ds, cfg)
        np.testing.assert_array_equal(a.centroids, b.centroids)
        # wall time is the only column allowed to differ
        assert [r._replace(elapsed_s=0) for r in la] == [r._replace(elapsed_s=0) for r in lb]

    def test_default_budget(self, four_points):
        cfg = RunConfig(Algorithm.mbatch, k=2, initial_batch=2)
        eng = make_engine(four_points, cfg)
        drive(eng, cfg, {"train": four_points}, timer=None)
        assert eng.t == DEFAULT_MBATCH_EPOCHS * 2


class TestNestedMiniBatch:
    def test_hand_trace(self, four_points, backend):
        eng = NestedMiniBatch(four_points, 2, 4, backend=backend)
        eng.step()
        np.testing.assert_array_equal(eng.centroids.centroids.ravel(), [0.0, 5.75])
        eng.step()
        np.testing.assert_allclose(eng.centroids.centroids.ravel(), [1 / 3, 22 / 3], rtol=1e-15)
        eng.step()
        assert eng.done and eng.t == 3
        np.testing.assert_array_equal(eng.assignment, [0, 0, 1, 1])

    def test_fixed_point(self, backend):
        ds = mixture(n=300)
        eng = NestedMiniBatch(ds, 5, 20, backend=backend)
        while not eng.done:
            eng.step()
        st = eng.stats
        np.testing.assert_allclose(eng.centroids.centroids * st.v[:, None], st.S, rtol=1e-12)
        oracle = recompute_stats_oracle(ds, eng.assignment, eng.bounds.d[:300], eng.init_centroids)
        st.assert_matches(oracle)
        # one more pass with the final centroids changes nothing
        a, _ = assign(ds, eng.centroids)
        np.testing.assert_array_equal(a, eng.assignment)

    def test_initial_batch_below_k(self, four_points):
        with pytest.raises(ConfigError):
            NestedMiniBatch(four_points, 3, 2)

    def test_batch_growth_and_entry_accounting(self, backend):
        ds = mixture(n=1000)
        eng = NestedMiniBatch(ds, 5, 30, rho=10.0, backend=backend)
        sizes = []
        while not eng.done:
            before = eng.state.b
            eng.step()
            sizes.append(eng.batch_size)
            assert eng.entered == eng.batch_size == before
            assert eng.state.b in (before, min(2 * before, 1000))
            eng.stats.check(n_contributing=eng.batch_size)
        assert sizes == sorted(sizes)
        assert sizes[-1] == 1000

    def test_rho_tiny_reaches_n_quickly(self):
        ds = mixture(n=1000)
        eng = NestedMiniBatch(ds, 5, 30, rho=1e-12)
        steps = 0
        while eng.state.b < 1000:
            eng.step()
            steps += 1
        assert steps <= math.ceil(math.log2(1000 / 30))

    def test_deact_identical(self, backend):
        ds = mixture(n=800)
        on = NestedMiniBatch(ds, 5, 50, backend=backend)
        off = NestedMiniBatch(ds, 5, 50, use_bounds=False, backend=backend)
        while not (on.done and off.done):
            on.step()
            off.step()
            np.testing.assert_array_equal(on.centroids.centroids, off.centroids.centroids)
            assert on.batch_size == off.batch_size
        assert on.counter.count < off.counter.count

    def test_backends_agree(self):
        ds = mixture(n=500)
        runs = []
        for name in ("numpy", "numba"):
            eng = NestedMiniBatch(ds, 5, 40, backend=name)
            while not eng.done:
                eng.step()
            runs.append(eng)
        assert runs[0].t == runs[1].t
        assert runs[0].counter.count == runs[1].counter.count
        np.testing.assert_allclose(runs[0].centroids.centroids, runs[1].centroids.centroids,
                                   rtol=1e-12)

    @pytest.mark.parametrize("threads", [2, 3])
    def test_parallel_deterministic_and_exact(self, threads, backend):
        ds = mixture(n=700)

        def run():
            eng = NestedMiniBatch(ds, 5, 40, threads=threads, backend=backend)
            while not eng.done:
                eng.step()
                oracle = recompute_stats_oracle(ds, eng.assignment, eng.bounds.d[: eng.batch_size],
                                                eng.init_centroids)
                eng.stats.assert_matches(oracle)
            return eng

        a, b = run(), run()
        np.testing.assert_array_equal(a.centroids.centroids, b.centroids.centroids)
        assert a.counter.count == b.counter.count
        serial = NestedMiniBatch(ds, 5, 40, backend=backend)
        while not serial.done:
            serial.step()
        np.testing.assert_array_equal(a.assignment, serial.assignment)


def test_run_nmbatch_wrappers(four_points):
    cfg = RunConfig(Algorithm.lloyd, k=2, initial_batch=4)
    cs, lg = run_nmbatch(four_points, cfg)
    cs2, lg2 = run_nmbatch(four_points, cfg, deactivate_bounds=True)
    np.testing.assert_array_equal(cs.centroids, cs2.centroids)
    assert lg.column("distance_calcs")[-1] < lg2.column("distance_calcs")[-1]


def test_drive_budgets(four_points):
    cfg = RunConfig(Algorithm.lloyd, k=2, max_distances=1)
    eng = make_engine(four_points, cfg)
    log = drive(eng, cfg, {"train": four_points}, timer=None)
    assert eng.t == 1
    assert [r.iteration for r in log] == [0, 1]
    assert all(r.elapsed_s == 0.0 for r in log)
