import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iopml.crossfit import (
    CrossFitFV,
    FoldAssignment,
    crossfit_fitted_values,
    full_sample_fitted_values,
    make_folds,
    make_pair_blocks,
)
from iopml.data import Dataset
from iopml.errors import ConfigError, FitError
from iopml.learners import LearnerSpec

from oracles import pairs_of_blocks


def six_rows():
    y = np.array([1.0, 2.0, 3.0, 4.0, 5.0, 9.0])
    return Dataset(y=y, x=pd.DataFrame({"a": list("xyxyxy")}))


@pytest.mark.parametrize("n,K", [(10, 5), (11, 5), (7, 2), (100, 3)])
def test_make_folds_sizes(n, K):
    f = make_folds(n, K, seed=1)
    sizes = f.sizes
    assert sizes.sum() == n
    assert sizes.max() - sizes.min() <= 1


def test_make_folds_seeded():
    a, b = make_folds(50, 5, 3), make_folds(50, 5, 3)
    np.testing.assert_array_equal(a.fold_of, b.fold_of)
    assert not np.array_equal(a.fold_of, make_folds(50, 5, 4).fold_of)


def test_make_folds_errors():
    with pytest.raises(ConfigError):
        make_folds(10, 1)
    with pytest.raises(ConfigError):
        make_folds(3, 4)
    with pytest.raises(ConfigError):
        FoldAssignment(3, np.array([0, 0, 1]))


def test_fold_mode_mean_learner_uses_other_fold():
    d = six_rows()
    f = FoldAssignment(2, np.array([0, 0, 0, 1, 1, 1]))
    cf = crossfit_fitted_values(d, LearnerSpec("mean"), f, "fold")
    np.testing.assert_allclose(cf.values, [6, 6, 6, 2, 2, 2])


def test_pair_block_counts_and_coverage():
    f = make_folds(20, 4, seed=2)
    pb = make_pair_blocks(f)
    assert pb.L == 4 * 5 // 2
    assert sum(pb.pair_count(b) for b in range(pb.L)) == 20 * 19 // 2
    pairs = pairs_of_blocks(f.fold_of, pb.blocks)
    assert len(pairs) == len(set(pairs)) == 190


def test_pair_block_no_leakage():
    f = make_folds(30, 5, seed=0)
    pb = make_pair_blocks(f)
    for b in range(pb.L):
        assert np.intersect1d(pb.training[b], pb.evaluated_rows(b)).size == 0
        assert np.union1d(pb.training[b], pb.evaluated_rows(b)).size == 30


def test_pair_block_values_differ_between_blocks():
    d = six_rows().take(np.r_[0:6, 0:6, 0:6])
    f = make_folds(d.n, 3, seed=0)
    cf = crossfit_fitted_values(d, LearnerSpec("mean"), f, "pair_block")
    row = f.rows(0)[0]
    blocks = [b for b, (k, k2) in enumerate(cf.pair_blocks.blocks) if 0 in (k, k2)]
    vals = {cf.block_values[b][row] for b in blocks}
    assert len(vals) > 1
    for b, (k, k2) in enumerate(cf.pair_blocks.blocks):
        outside = ~np.isin(f.fold_of, [k, k2])
        assert np.all(np.isnan(cf.block_values[b][outside]))


def test_pair_block_k2_has_empty_training():
    d = six_rows()
    f = FoldAssignment(2, np.array([0, 0, 0, 1, 1, 1]))
    with pytest.raises(FitError, match=r"block \(0,1\)"):
        crossfit_fitted_values(d, LearnerSpec("mean"), f, "pair_block")


def test_constant_when_no_circumstances():
    d = six_rows().drop(["a"])
    f = make_folds(6, 2, 0)
    cf = crossfit_fitted_values(d, LearnerSpec("forest"), f)
    np.testing.assert_allclose(cf.values, d.weighted_mean())
    np.testing.assert_allclose(full_sample_fitted_values(d, LearnerSpec("forest")), d.weighted_mean())


def test_mismatch_errors():
    d = six_rows()
    with pytest.raises(ConfigError):
        crossfit_fitted_values(d, LearnerSpec("mean"), make_folds(7, 2, 0))
    with pytest.raises(ConfigError):
        crossfit_fitted_values(d, LearnerSpec("mean"), make_folds(6, 2, 0), "blocks")
    with pytest.raises(ConfigError):
        CrossFitFV.from_values(np.ones(5), make_folds(6, 2, 0))


def test_fold_mode_never_trains_on_own_fold():
    # a cell-mean learner on unique labels cannot predict a row it never saw
    n = 12
    d = Dataset(y=np.arange(1.0, n + 1), x=pd.DataFrame({"a": [str(i) for i in range(n)]}))
    f = make_folds(n, 3, 0)
    cf = crossfit_fitted_values(d, LearnerSpec("cellmean"), f)
    for k in range(3):
        rows = f.rows(k)
        expect = d.y[f.fold_of != k].mean()
        np.testing.assert_allclose(cf.values[rows], expect)


@settings(max_examples=40, deadline=None)
@given(st.integers(4, 40), st.integers(2, 6), st.integers(0, 10_000))
def test_pair_blocks_partition_pairs(n, K, seed):
    if K > n:
        return
    f = make_folds(n, K, seed)
    pb = make_pair_blocks(f)
    pairs = pairs_of_blocks(f.fold_of, pb.blocks)
    assert len(pairs) == len(set(pairs)) == n * (n - 1) // 2
