import numpy as np
import pytest
import scipy.sparse as sp

from nestedkmeans.core import (Algorithm, BoundsTable, CentroidSet, ConfigError, Dataset,
                               InvariantError, MiniBatchState, RunConfig, RunningStats, SparseRow,
                               TimeEnergyLog, recompute_stats_oracle)
from nestedkmeans.engines import NestedMiniBatch
from nestedkmeans.harness import prepare_run


class TestDataset:
    def test_dense_norms(self):
        ds = Dataset([[1.0, 2.0], [3.0, 4.0]])
        assert (ds.n_samples, ds.n_dims) == (2, 2)
        np.testing.assert_array_equal(ds.sq_norms, [5.0, 25.0])
        assert not ds.is_sparse

    def test_rejects_nan(self):
        with pytest.raises(InvariantError):
            Dataset([[1.0, np.nan]])

    def test_read_only(self):
        ds = Dataset(np.ones((3, 2)))
        with pytest.raises(ValueError):
            ds.dense[0, 0] = 5.0

    def test_sparse_matches_dense(self, rng):
        X = rng.normal(size=(30, 7)) * (rng.random((30, 7)) < 0.3)
        sparse = Dataset.from_scipy(sp.csr_matrix(X))
        np.testing.assert_allclose(sparse.toarray(), X)
        np.testing.assert_allclose(sparse.sq_norms, (X * X).sum(1), rtol=1e-12)
        assert isinstance(sparse.row(0), SparseRow)

    def test_sparse_rejects_unsorted(self):
        with pytest.raises(InvariantError):
            Dataset(indptr=[0, 2], indices=[2, 0], values=[1.0, 1.0], n_dims=3)

    def test_sparse_rejects_out_of_range(self):
        with pytest.raises(InvariantError):
            Dataset(indptr=[0, 1], indices=[5], values=[1.0], n_dims=3)

    def test_sparse_empty_row(self):
        ds = Dataset(indptr=[0, 0, 1], indices=[1], values=[2.0], n_dims=2)
        np.testing.assert_array_equal(ds.sq_norms, [0.0, 4.0])

    @pytest.mark.parametrize("sparse", [False, True])
    def test_take(self, rng, sparse):
        X = rng.normal(size=(12, 5)) * (rng.random((12, 5)) < 0.5)
        ds = Dataset.from_scipy(sp.csr_matrix(X)) if sparse else Dataset(X)
        order = rng.permutation(12)[:7]
        sub = ds.take(order)
        sub.check()
        np.testing.assert_array_equal(sub.toarray(), X[order])


class TestRecomputeOracle:
    def test_empty_record(self):
        ds = Dataset([[5.0], [7.0], [9.0]])
        st = recompute_stats_oracle(ds, [], [], ds.rows_dense(0, 2))
        np.testing.assert_array_equal(st.v, [1, 1])
        np.testing.assert_array_equal(st.S, [[5.0], [7.0]])
        np.testing.assert_array_equal(st.sse, [0.0, 0.0])

    def test_single_sample(self):
        ds = Dataset([[3.0]])
        st = recompute_stats_oracle(ds, [0], [1.5], [[0.0], [4.0]])
        assert st.v[0] == 2
        assert st.S[0, 0] == 3.0
        assert st.sse[0] == 2.25

    @pytest.mark.parametrize("seed", range(3))
    def test_matches_live_nmbatch(self, rng, seed, backend):
        X = rng.normal(size=(50, 4))
        ds = prepare_run(Dataset(X), seed, 3)[0]
        eng = NestedMiniBatch(ds, 3, initial_batch=10, rho=1e-3, backend=backend)
        for _ in range(5):
            eng.step()
            b = eng.bounds.size
            oracle = recompute_stats_oracle(ds, eng.bounds.a[:b], eng.bounds.d[:b], eng.init_centroids)
            eng.stats.assert_matches(oracle, rtol=1e-9)
            eng.stats.check(n_contributing=b)

    def test_assert_matches_detects_drift(self):
        a = RunningStats.from_init([[0.0], [1.0]])
        b = a.copy()
        b.S[0, 0] += 1e-3
        with pytest.raises(InvariantError):
            a.assert_matches(b)
        c = a.copy()
        c.v[1] = 2
        with pytest.raises(InvariantError):
            a.assert_matches(c)


def test_running_stats_check():
    st = RunningStats.from_init(np.zeros((2, 3)))
    st.check(n_contributing=0)
    st.v[0] = 0
    with pytest.raises(InvariantError):
        st.check()


def test_centroid_displacement():
    cs = CentroidSet([[0.0, 0.0], [1.0, 1.0]])
    cs.move_to(np.array([[3.0, 4.0], [1.0, 1.0]]))
    np.testing.assert_allclose(cs.displacement, [5.0, 0.0])
    np.testing.assert_allclose(cs.sq_norms, [25.0, 2.0])
    cs.check(n_samples=2)
    with pytest.raises(InvariantError):
        cs.check(n_samples=1)


def test_bounds_table_grows_by_doubling():
    bt = BoundsTable(3, 4)
    bt.lower[:2] = 1.5
    bt.a[:2] = [0, 2]
    bt.size = 2
    bt.reserve(9)
    assert bt.capacity == 16
    np.testing.assert_array_equal(bt.a[:2], [0, 2])
    np.testing.assert_array_equal(bt.lower[:2], 1.5)
    bt.check()


def test_minibatch_state_nesting():
    st = MiniBatchState(n_total=10, b=4, rho=1.0)
    st.grow(True)
    assert (st.b_prev, st.b) == (4, 8)
    st.grow(True)
    assert (st.b_prev, st.b) == (8, 10)
    st.grow(False)
    assert (st.b_prev, st.b) == (10, 10)
    st.check()


class TestRunConfig:
    def test_defaults(self):
        cfg = RunConfig()
        assert (cfg.k, cfg.rho, cfg.initial_batch) == (50, 100.0, 5000)

    def test_parse_algorithm(self):
        assert RunConfig(algorithm="mbatch-remove").algorithm is Algorithm.mbatch_remove
        assert Algorithm.parse("nmbatch.deact") is Algorithm.nmbatch_deact

    @pytest.mark.parametrize("kw", [{"rho": 0.0}, {"k": 0}, {"initial_batch": 0},
                                    {"eval_period": 0}, {"seed": -1}])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            RunConfig(**kw)


def test_log_monotone_check():
    log = TimeEnergyLog()
    log.append(0.0, 0, 5, 0, 3.0, "train")
    log.append(0.1, 1, 5, 10, 2.0, "train")
    log.check()
    log.append(0.2, 2, 5, 5, 1.0, "train")
    with pytest.raises(InvariantError):
        log.check()
    with pytest.raises(ValueError):
        log.append(0.0, 0, 0, 0, 0.0, "bogus")


def test_sparse_norms_with_empty_rows():
    ds = Dataset(indptr=[0, 0, 2, 2, 3, 3], indices=[0, 2, 1], values=[3.0, 4.0, 2.0], n_dims=3)
    np.testing.assert_array_equal(ds.sq_norms, [0.0, 25.0, 0.0, 4.0, 0.0])
    ds.check()
