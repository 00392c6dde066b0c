import logging

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iopml.crossfit import CrossFitFV, FoldAssignment, crossfit_fitted_values, make_folds
from iopml.data import Dataset
from iopml.errors import ConfigError, DomainError
from iopml.iop import (
    EstimatorConfig,
    IOpEstimate,
    debiased_gini_iop,
    debiased_gini_parts,
    debiased_mld_iop,
    estimate_iop,
    gini,
    inequality_influence,
    mld,
    plugin_iop,
    relative_iop,
    signed_pair_sum,
)
from iopml.learners import LearnerSpec
from iopml.sim import five_cell_dgp, gen_dgp

from oracles import naive_denominator, naive_gini, naive_gini_variance, naive_mld_variance, naive_signed_sum


def dataset(y, w=None, labels=None):
    y = np.asarray(y, float)
    labels = labels if labels is not None else ["a"] * len(y)
    return Dataset(y=y, x=pd.DataFrame({"c": labels}), w=w)


def fold_cf(g, K=2):
    g = np.asarray(g, float)
    n = len(g)
    return CrossFitFV.from_values(g, FoldAssignment(K, np.arange(n) % K))


# -- indices


def test_gini_examples():
    assert gini([5, 5, 5]) == 0
    assert gini([1, 2, 3, 4]) == pytest.approx(0.25)
    assert naive_gini([1, 2, 3, 4]) == pytest.approx(20 / 80)


def test_mld_examples():
    assert mld([3, 3, 3]) == 0
    assert mld([1, np.e**2]) == pytest.approx(np.log((1 + np.e**2) / 2) - 1)
    assert mld([1, np.e**2]) == pytest.approx(0.43378, abs=1e-5)


def test_index_domain_errors():
    for fn in (gini, mld):
        with pytest.raises(DomainError):
            fn([1.0, 0.0])
        with pytest.raises(DomainError):
            fn([1.0])


def test_mld_nonnegative():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        y = rng.lognormal(size=rng.integers(2, 20))
        assert mld(y) >= -1e-15


def test_fast_signed_sum_matches_naive_with_ties():
    rng = np.random.default_rng(1)
    for _ in range(30):
        n = rng.integers(2, 60)
        y = rng.uniform(1, 20, n)
        g = rng.integers(0, 5, n).astype(float)
        w = rng.uniform(0.1, 3, n)
        assert signed_pair_sum(g, y, w) == pytest.approx(naive_signed_sum(g, y, w), rel=1e-10, abs=1e-9)
        assert gini(y, w) == pytest.approx(naive_gini(y, w), rel=1e-12)


# -- debiased Gini


def test_debiased_gini_hand_examples():
    d = dataset([1, 2, 3, 4])
    assert debiased_gini_iop(d, fold_cf([1, 2, 3, 4]), full_fv=[1, 2, 3, 4]).theta == pytest.approx(0.25)
    assert debiased_gini_iop(d, fold_cf([2, 1, 3, 4]), full_fv=[2, 1, 3, 4]).theta == pytest.approx(0.20)
    assert debiased_gini_iop(d, fold_cf([7, 7, 7, 7]), full_fv=[7, 7, 7, 7]).theta == 0.0


def test_debiased_gini_parts_naive_weighted():
    rng = np.random.default_rng(2)
    n = 40
    y = rng.uniform(1, 9, n)
    w = rng.uniform(0.5, 2, n)
    g = np.round(rng.uniform(0, 3, n))
    num, den = debiased_gini_parts(dataset(y, w), fold_cf(g))
    assert num == pytest.approx(naive_signed_sum(g, y, w), rel=1e-10)
    assert den == pytest.approx(naive_denominator(y, w), rel=1e-12)


def test_pair_block_numerator_uses_block_values():
    rng = np.random.default_rng(3)
    n = 30
    labels = [str(v) for v in rng.integers(0, 3, n)]
    d = dataset(rng.uniform(1, 9, n), labels=labels)
    f = make_folds(n, 3, 0)
    cf = crossfit_fitted_values(d, LearnerSpec("cellmean"), f, "pair_block")
    num, _ = debiased_gini_parts(d, cf)
    # every ordered pair (i, j) is scored with the block holding its two folds
    lookup = {blk: b for b, blk in enumerate(cf.pair_blocks.blocks)}
    ref = 0.0
    for i in range(n):
        for j in range(n):
            k, k2 = sorted((f.fold_of[i], f.fold_of[j]))
            g = cf.block_values[lookup[(k, k2)]]
            ref += np.sign(g[i] - g[j]) * (d.y[i] - d.y[j])
    assert num == pytest.approx(ref, rel=1e-12)


def test_gini_variance_matches_naive_formula():
    rng = np.random.default_rng(4)
    n = 50
    y = rng.uniform(1, 9, n)
    g = np.round(y + rng.normal(0, 2, n))
    est = debiased_gini_iop(dataset(y), fold_cf(g), full_fv=g)
    assert est.variance == pytest.approx(naive_gini_variance(y, g, est.theta), rel=1e-10)
    assert est.se == pytest.approx(np.sqrt(est.variance / n))
    assert est.ci[0] < est.theta < est.ci[1]


def test_degenerate_gini_equals_sample_gini():
    y = np.random.default_rng(5).uniform(1, 10, 30)
    est = debiased_gini_iop(dataset(y), fold_cf(y), full_fv=y)
    assert est.theta == pytest.approx(gini(y), abs=1e-12)


def test_negative_gini_reported_with_warning(caplog):
    d = dataset([1, 2, 3, 4])
    with caplog.at_level(logging.WARNING):
        est = debiased_gini_iop(d, fold_cf([4, 3, 2, 1]), full_fv=[4, 3, 2, 1])
    assert est.theta == pytest.approx(-0.25)
    assert "negative" in caplog.text


def test_gini_errors():
    with pytest.raises(ConfigError):
        debiased_gini_parts(dataset([1, 2, 3]), fold_cf([1, 2, 3, 4]))
    with pytest.raises(ConfigError):
        debiased_gini_iop(dataset([1, 2]), fold_cf([1, 2]), full_fv=[1, 2], variance="bogus")


# -- debiased MLD


def test_mld_degenerate_cases():
    y = np.random.default_rng(6).uniform(1, 10, 30)
    d = dataset(y)
    assert debiased_mld_iop(d, fold_cf(np.full(30, y.mean()))).theta == pytest.approx(0.0, abs=1e-12)
    assert debiased_mld_iop(d, fold_cf(y)).theta == pytest.approx(mld(y), abs=1e-12)


def test_mld_variance_matches_moment_formula():
    rng = np.random.default_rng(7)
    y = rng.uniform(1, 10, 80)
    g = np.clip(y + rng.normal(0, 2, 80), 0.5, None)
    est = debiased_mld_iop(dataset(y), fold_cf(g))
    assert est.variance == pytest.approx(naive_mld_variance(y, g), rel=1e-10)
    assert est.variance >= 0


def test_mld_floor():
    d = dataset([1, 2, 3, 4])
    with pytest.raises(DomainError, match="row"):
        debiased_mld_iop(d, fold_cf([1e-9, 2, 3, 4]))
    est = debiased_mld_iop(d, fold_cf([1e-9, 2, 3, 4]), floor=0.5)
    assert np.isfinite(est.theta)



def test_mld_rejects_pair_blocks():
    d = dataset([1, 2, 3, 4, 5, 6])
    cf = crossfit_fitted_values(d, LearnerSpec("mean"), make_folds(6, 3, 0), "pair_block")
    with pytest.raises(ConfigError):
        debiased_mld_iop(d, cf)


# -- plug-in and relative


def test_plugin():
    assert plugin_iop([1, 2, 3, 4]).theta == pytest.approx(0.25)
    assert plugin_iop([3, 3, 3]).theta == 0
    assert plugin_iop([1, 2, 3, 4]).se is None
    with pytest.raises(DomainError):
        plugin_iop([1, -1], index="mld")


def test_relative_perfect_and_constant():
    y = np.random.default_rng(8).uniform(1, 10, 40)
    d = dataset(y)
    for index in ("gini", "mld"):
        est = debiased_gini_iop(d, fold_cf(y), full_fv=y) if index == "gini" else debiased_mld_iop(d, fold_cf(y))
        assert relative_iop(est, d).relative.theta == pytest.approx(1.0, abs=1e-12)
        c = np.full(40, y.mean())
        est = debiased_gini_iop(d, fold_cf(c), full_fv=c) if index == "gini" else debiased_mld_iop(d, fold_cf(c))
        assert relative_iop(est, d).relative.theta == pytest.approx(0.0, abs=1e-12)


def test_relative_zero_inequality():
    d = dataset([2.0, 2.0, 2.0])
    est = debiased_gini_iop(d, fold_cf([1, 2, 3]), full_fv=[1, 2, 3])
    with pytest.raises(DomainError):
        relative_iop(est, d)


def test_inequality_influence_numerical_derivative():
    # a weighted statistic's influence at i is the derivative in w_i (times W)
    rng = np.random.default_rng(9)
    y = rng.uniform(1, 9, 25)
    w = rng.uniform(0.5, 2, 25)
    for index, fn in (("gini", gini), ("mld", mld)):
        I, phi = inequality_influence(y, w, index)
        W = w.sum()
        for i in (0, 7, 19):
            h = 1e-6
            w2 = w.copy()
            w2[i] += h
            deriv = (fn(y, w2) - I) / h * W
            # the Gini influence is defined with j != i weights; allow O(1/n) slack
            assert deriv == pytest.approx(phi[i], abs=0.05 * np.abs(phi).max())


def test_estimate_roundtrip():
    est = debiased_gini_iop(dataset([1, 2, 3, 4]), fold_cf([1, 2, 3, 4]), full_fv=[1, 2, 3, 4])
    est = relative_iop(est, dataset([1, 2, 3, 4]))
    back = IOpEstimate.from_dict(est.to_dict())
    assert back.theta == est.theta and back.se == est.se and back.relative.theta == est.relative.theta


# -- end to end


def test_config_validation():
    assert EstimatorConfig(indices="both").indices == ("gini", "mld")
    assert EstimatorConfig().mode == "pair_block"
    for bad in ({"indices": ("theil",)}, {"mode": "x"}, {"level": 1.5}, {"variance": "x"}):
        with pytest.raises(ConfigError):
            EstimatorConfig(**bad)


def test_estimate_iop_five_cell_near_truth():
    d = gen_dgp(five_cell_dgp(), 4000, 11)
    fit = estimate_iop(d, EstimatorConfig(indices="both", learner=LearnerSpec("forest", {"n_trees": 100})))
    from iopml.sim import true_iop

    for index in ("gini", "mld"):
        est = fit.estimates[index]
        assert abs(est.theta - true_iop(five_cell_dgp(), index)) < 3 * est.se
        assert est.metadata["learner"] == "forest"
        assert fit.plugin[index].theta > 0


def test_scale_equivariance():
    d = gen_dgp(five_cell_dgp(), 300, 2)
    cfg = EstimatorConfig(learner=LearnerSpec("cellmean"))
    a = estimate_iop(d, cfg).estimates["gini"].theta
    d3 = Dataset(y=3 * d.y, x=d.x, w=d.w)
    b = estimate_iop(d3, cfg).estimates["gini"].theta
    assert a == pytest.approx(b, rel=1e-12)


def test_permutation_invariance_given_folds():
    d = gen_dgp(five_cell_dgp(), 300, 3)
    f = make_folds(d.n, 5, 0)
    perm = np.random.default_rng(1).permutation(d.n)
    for mode in ("fold", "pair_block"):
        cfg = EstimatorConfig(indices="both", learner=LearnerSpec("forest", {"n_trees": 30}), mode=mode)
        a = estimate_iop(d, cfg, f)
        b = estimate_iop(d.take(perm), cfg, f.take(perm))
        for index in ("gini", "mld"):
            assert a.estimates[index].theta == pytest.approx(b.estimates[index].theta, rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.tuples(st.floats(0.5, 50), st.integers(0, 4), st.floats(0.2, 5)), min_size=2, max_size=40)
)
def test_fast_path_property(rows):
    y, g, w = (np.array(v, float) for v in zip(*rows))
    assert signed_pair_sum(g, y, w) == pytest.approx(naive_signed_sum(g, y, w), rel=1e-10, abs=1e-8)
    assert 0 <= gini(y, w) <= 1
