import numpy as np
import pandas as pd
import pytest

from iopml.data import Dataset
from iopml.effects import (
    TestResult,
    compare_iop,
    effect_table,
    group_test,
    largest_effect,
    mobility_slope,
    ols_line,
    partial_effect,
    relative_partial_effect,
)
from iopml.errors import ConfigError, DomainError, NumericalError, SchemaError
from iopml.iop import EstimatorConfig, IOpEstimate, estimate_iop
from iopml.learners import LearnerSpec
from iopml.sim import gen_dgp, two_circumstance_dgp, with_noise_circumstances, five_cell_dgp

FAST = LearnerSpec("forest", {"n_trees": 50})


@pytest.fixture(scope="module")
def two_circ():
    return gen_dgp(two_circumstance_dgp(), 1500, 4)


def test_kappa_identity_shared_folds(two_circ):
    cfg = EstimatorConfig(indices="both", learner=FAST)
    for index in ("gini", "mld"):
        pe = partial_effect(two_circ, "sex", cfg, index)
        full = estimate_iop(two_circ, cfg).estimates[index].theta
        drop = estimate_iop(two_circ.drop(["sex"]), cfg).estimates[index].theta
        assert pe.theta == full and pe.theta_drop == drop
        assert pe.kappa == full - drop
        assert pe.kappa_rel * pe.theta == pytest.approx(pe.kappa, abs=1e-12)
        lo, hi = pe.ci
        assert lo < pe.kappa < hi


def test_drop_only_circumstance_gives_theta():
    d = gen_dgp(five_cell_dgp(), 500, 1)
    pe = partial_effect(d, "c", EstimatorConfig(learner=FAST))
    assert pe.theta_drop == 0.0
    assert pe.kappa == pe.theta
    assert pe.kappa_rel == 1.0


def test_group_singleton_equals_partial_effect(two_circ):
    cfg = EstimatorConfig(learner=FAST)
    pe = partial_effect(two_circ, "parent", cfg)
    tr = group_test(two_circ, ["parent"], cfg)
    assert tr.statistic == pytest.approx(pe.kappa, abs=1e-12)
    assert tr.se == pytest.approx(pe.se, abs=1e-12)
    assert tr.p_value == pytest.approx(pe.p_value, abs=1e-12)


def test_group_all_tests_against_zero(two_circ):
    cfg = EstimatorConfig(learner=FAST)
    tr = group_test(two_circ, ["parent", "sex"], cfg)
    assert tr.details["theta_drop"] == 0.0
    assert tr.p_value < 1e-6


def test_effect_errors(two_circ):
    cfg = EstimatorConfig(learner=FAST)
    with pytest.raises(SchemaError):
        partial_effect(two_circ, "nope", cfg)
    with pytest.raises(ConfigError):
        group_test(two_circ, [], cfg)
    with pytest.raises(ConfigError):
        partial_effect(two_circ, "sex", cfg, index="mld")


def test_relative_effect_undefined_when_theta_zero():
    # a learner that ignores circumstances gives constant fitted values per block, so theta = 0
    d = gen_dgp(five_cell_dgp(), 200, 0)
    cfg = EstimatorConfig(learner=LearnerSpec("mean"))
    pe = partial_effect(d, "c", cfg)
    assert pe.theta == 0.0 and pe.kappa_rel is None
    with pytest.raises(DomainError):
        relative_partial_effect(d, "c", cfg)


def test_effect_table_and_largest(two_circ):
    cfg = EstimatorConfig(indices="both", learner=FAST)
    table = effect_table(two_circ, cfg)
    assert [(e.name, e.index) for e in table] == [
        ("parent", "gini"),
        ("parent", "mld"),
        ("sex", "gini"),
        ("sex", "mld"),
    ]
    best = largest_effect(table)
    assert best["gini"].name == "parent" and best["mld"].name == "parent"
    single = partial_effect(two_circ, "sex", cfg, "mld")
    assert table[3].kappa == single.kappa


def est(theta, se, index="gini"):
    return IOpEstimate(theta, se**2, se, (theta - 2 * se, theta + 2 * se), 0.95, index, "debiased", 100)


def test_compare_examples():
    a = est(0.10, 0.01)
    r = compare_iop(a, a)
    assert r.statistic == 0 and r.p_value == 1.0
    r1, r2 = compare_iop(a, est(0.13, 0.02)), compare_iop(est(0.13, 0.02), a)
    assert r1.statistic == -r2.statistic
    assert r1.p_value == r2.p_value
    assert r1.se == pytest.approx(np.sqrt(0.01**2 + 0.02**2))
    assert r1.z == pytest.approx(r1.statistic / r1.se)
    with pytest.raises(ConfigError):
        compare_iop(a, est(0.1, 0.01, "mld"))


def test_test_result_p_range():
    for stat in (-3.0, 0.0, 0.5):
        r = compare_iop(est(0.1 + stat / 100, 0.01), est(0.1, 0.01))
        assert 0 <= r.p_value <= 1
    assert isinstance(r, TestResult)


def mobility_data(means, per=4, weights=None):
    levels = ["low", "medium", "high"]
    y, x = [], []
    for lab, m in zip(levels, means):
        y += [m - 1, m + 1] * (per // 2)
        x += [lab] * per
    return Dataset(y=np.array(y, float), x=pd.DataFrame({"mother": x}), w=weights)


def test_mobility_slope_two():
    r = mobility_slope(mobility_data((10, 12, 14)), "mother")
    assert r.statistic == pytest.approx(2.0)
    assert r.details["intercept"] == pytest.approx(10.0)
    assert r.se > 0


def test_mobility_flat_and_numeric_codes():
    assert mobility_slope(mobility_data((12, 12, 12)), "mother").statistic == pytest.approx(0.0, abs=1e-12)
    d = Dataset(y=np.array([10.0, 12, 14]), x=pd.DataFrame({"m": ["0", "1", "2"]}))
    assert mobility_slope(d, "m").statistic == pytest.approx(2.0)


def test_mobility_robust_se_matches_hc1():
    rng = np.random.default_rng(0)
    lev = rng.integers(0, 3, 200)
    y = 10 + 1.5 * lev + rng.normal(0, 1 + lev, 200)
    d = Dataset(y=y, x=pd.DataFrame({"m": lev.astype(str)}))
    r = mobility_slope(d, "m")
    X = np.column_stack([np.ones(200), lev])
    beta = np.linalg.lstsq(X, y, rcond=None)[0]
    e = y - X @ beta
    bread = np.linalg.inv(X.T @ X)
    V = bread @ (X.T * e**2) @ X @ bread * 200 / 198
    assert r.statistic == pytest.approx(beta[1])
    assert r.se == pytest.approx(np.sqrt(V[1, 1]))


def test_mobility_errors():
    d = Dataset(y=np.array([1.0, 2.0]), x=pd.DataFrame({"m": ["low", "low"]}))
    with pytest.raises(NumericalError):
        mobility_slope(d, "m")
    d = Dataset(y=np.array([1.0, 2.0]), x=pd.DataFrame({"m": ["low", "weird"]}))
    with pytest.raises(SchemaError):
        mobility_slope(d, "m")


def test_ols_line():
    out = ols_line([1, 2, 3], [2, 4, 6], ["A", "B", "C"])
    assert out["slope"] == pytest.approx(2) and out["r2"] == pytest.approx(1)
    assert out["points"][1] == {"label": "B", "x": 2.0, "y": 4.0}
    with pytest.raises(NumericalError):
        ols_line([1, 1], [1, 2])


def test_noise_circumstance_effect_near_zero():
    d = gen_dgp(with_noise_circumstances(five_cell_dgp(), 1), 2000, 9)
    pe = partial_effect(d, "z1", EstimatorConfig(learner=FAST))
    assert pe.ci[0] - 1e-9 <= 0 <= pe.ci[1] + 1e-9 or abs(pe.kappa) < 3 * pe.se
