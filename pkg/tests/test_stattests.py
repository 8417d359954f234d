import json

import numpy as np
import pytest
from scipy import stats as sps

from interval_ucm.exceptions import DegenerateInputError, ValidationError
from interval_ucm.statespace import kalman_filter, simulate
from interval_ucm.structural import FsBsmParams, build_fsbsm, state_index
from interval_ucm.stattests import (
    CvTable,
    TestResult,
    box_pierce,
    builtin_tables,
    cusum_statistic,
    double_cusum_statistic,
    irw_test,
    mc_critical_values,
    model_trend_tests,
    moment_tests,
    nyblom_statistic,
    rw_test,
    seasonal_cvm_test,
    seasonal_df,
    stars,
)


def test_published_five_percent_points():
    rng = np.random.default_rng(0)
    x = rng.normal(size=200)
    assert rw_test(x).critical_values[0.05] == 0.461
    assert rw_test(x, with_drift=True).critical_values[0.05] == 0.148


def test_tabulated_asymptotic_points_agree_with_published_values():
    tables = builtin_tables()
    for kind, cv5 in (("rw", 0.461), ("rwd", 0.148)):
        t = tables[kind]
        q = t.asymptotic[t.grid.index(0.95)]
        assert q == pytest.approx(cv5, abs=0.003)


def test_cusum_by_hand():
    # [1,2,3]: e = [-1,0,1], partial sums [-1,-1,0], sum of squares 2, mean(e^2) = 2/3
    e = np.array([1.0, 2.0, 3.0]) - 2.0
    assert cusum_statistic(e) == pytest.approx(2 / (9 * (2 / 3)))
    # with a 1/T instead of 1/T^2 scaling the same sums give exactly 1
    assert 3 * cusum_statistic(e) == pytest.approx(1.0)


def test_double_cusum_by_hand():
    e = np.array([1.0, -2.0, 1.0])
    # partial sums [1,-1,0], double partial sums [1,0,0]
    assert double_cusum_statistic(e) == pytest.approx(1 / (81 * 2))


def test_rw_short_and_constant_series_rejected():
    with pytest.raises(ValidationError):
        rw_test(np.arange(10.0))
    with pytest.raises(DegenerateInputError):
        rw_test(np.full(50, 3.7))


def test_irw_linear_series_is_degenerate():
    t = np.arange(100.0)
    with pytest.raises(DegenerateInputError):
        irw_test(2.0 + 0.3 * t)


def test_invariances():
    rng = np.random.default_rng(1)
    x = rng.normal(size=300).cumsum()
    t = np.arange(300.0)
    base = rw_test(x).statistic
    assert rw_test(x + 12.0).statistic == pytest.approx(base, rel=1e-10)
    assert rw_test(-3.0 * x).statistic == pytest.approx(base, rel=1e-10)
    for fn in (lambda s: rw_test(s, True), irw_test):
        b = fn(x).statistic
        assert fn(x + 5 - 0.2 * t).statistic == pytest.approx(b, rel=1e-10)
        assert fn(0.01 * x).statistic == pytest.approx(b, rel=1e-10)


def _rejection_rate(fn, draws):
    return np.mean([fn(x).decision_at_5pct for x in draws])


def test_irw_size_and_power():
    rng = np.random.default_rng(2)
    T = 500
    t = np.arange(T)
    null = [1 + 0.05 * t + rng.normal(size=T) for _ in range(2000)]
    assert abs(_rejection_rate(irw_test, null) - 0.05) < 0.015
    alt = [np.cumsum(np.cumsum(rng.normal(scale=0.1, size=T))) + rng.normal(size=T)
           for _ in range(300)]
    assert _rejection_rate(irw_test, alt) > 0.5


def test_seasonal_df_mapping():
    assert seasonal_df(3) == 2
    assert seasonal_df(6) == 1
    assert seasonal_df("II") == 9
    with pytest.raises(ValidationError):
        seasonal_df(7)


def test_nyblom_reduces_to_cusum_for_a_constant():
    rng = np.random.default_rng(3)
    e = rng.normal(size=80)
    e -= e.mean()
    assert nyblom_statistic(e, np.ones((80, 1))) == pytest.approx(cusum_statistic(e))


def _deterministic_seasonal(rng, T, noise_sd=1.0):
    t = np.arange(T)
    return 10 + 0.01 * t + 3 * np.cos(np.pi * t / 6) + np.sin(np.pi * t / 3) + \
        rng.normal(scale=noise_sd, size=T)


def test_seasonal_size_on_deterministic_data():
    rng = np.random.default_rng(4)
    rate = _rejection_rate(lambda x: seasonal_cvm_test(x, 1),
                           [_deterministic_seasonal(rng, 600) for _ in range(1000)])
    assert 0.035 <= rate <= 0.065


def test_seasonal_power_on_stochastic_seasonal():
    params = FsBsmParams(1.0, 0.0, 0.0, 1e-3, 0.0)
    spec = build_fsbsm(params)
    draws = [simulate(spec, 600, seed=s)[0].values[:, 0] for s in range(200)]
    assert _rejection_rate(lambda x: seasonal_cvm_test(x, 1), draws) > 0.5


def test_seasonal_requires_48_observations():
    with pytest.raises(ValidationError):
        seasonal_cvm_test(np.random.default_rng(0).normal(size=40), 1)


def test_model_based_seasonal_test_with_nuisance():
    params = FsBsmParams(1.0, 1e-3, 0.0, 3e-4, 0.0)
    panel, _ = simulate(build_fsbsm(params), 300, seed=1)
    res = seasonal_cvm_test(panel, "II", params=params)
    assert res.df == 9 and np.isfinite(res.statistic)


def test_model_trend_tests_reduce_to_plain_tests_without_nuisance():
    rng = np.random.default_rng(5)
    t = np.arange(240)
    x = 4 + 0.02 * t + rng.normal(size=240)
    params = FsBsmParams(1.0, 0.0, 0.0, 0.0, 0.0)
    out = model_trend_tests(x, params)
    # the null models are deterministic, so residuals are OLS residuals on
    # trend + seasonal dummies; compare with the plain tests on those
    X = np.column_stack([np.ones(240), t] + [(t % 12 == k) for k in range(11)]).astype(float)
    e = x - X @ np.linalg.lstsq(X, x, rcond=None)[0]
    assert out["RWD"].statistic == pytest.approx(rw_test(e, True).statistic, rel=1e-8)
    assert out["IRW"].statistic == pytest.approx(irw_test(e).statistic, rel=1e-8)


def test_box_pierce_uniform_pvalues_under_iid():
    rng = np.random.default_rng(6)
    p = [box_pierce(rng.normal(size=1000)).p_value for _ in range(500)]
    assert sps.kstest(p, "uniform").pvalue > 0.01


def test_box_pierce_power_against_ar1():
    rng = np.random.default_rng(7)
    rejections = 0
    for _ in range(200):
        e = rng.normal(size=500)
        x = np.empty(500)
        x[0] = e[0]
        for i in range(1, 500):
            x[i] = 0.8 * x[i - 1] + e[i]
        rejections += box_pierce(x).decision_at_5pct
    assert rejections / 200 > 0.99


def test_box_pierce_on_correct_model_innovations():
    params = FsBsmParams(1.0, 1e-3, 1e-6, 1e-4, 1e-5)
    spec = build_fsbsm(params)
    a1 = np.zeros(13)
    a1[state_index("gamma1")[0]] = 4.0
    ok = 0
    for s in range(200):
        panel, _ = simulate(spec.replace(a1=a1), 400, seed=s)
        v = kalman_filter(spec, panel).standardized_innovations()
        ok += not box_pierce(v).decision_at_5pct
    assert ok / 200 >= 0.9


def test_box_pierce_validation():
    with pytest.raises(ValidationError):
        box_pierce(np.arange(10.0), lags=12)


def test_moment_tests_on_large_normal_sample():
    x = np.random.default_rng(8).normal(size=10_000)
    m = moment_tests(x)
    assert abs(m.skewness) < 0.05
    assert abs(m.kurtosis - 3) < 0.1
    assert set(m.to_row()) == {"Mean", "St. dev.", "Skewness", "Skewness p",
                               "Kurtosis", "Kurtosis p", "BN"}


def test_moment_tests_symmetry():
    x = np.random.default_rng(9).exponential(size=500)
    a, b = moment_tests(x), moment_tests(-x)
    assert b.skewness == pytest.approx(-a.skewness)
    assert b.kurtosis == pytest.approx(a.kurtosis)


def test_moment_tests_reject_skewed_data():
    x = np.random.default_rng(10).exponential(size=2000)
    m = moment_tests(x)
    assert m.skewness_p < 0.01 and m.normality_p < 0.01


def test_moment_tests_hac_lag():
    # floor(4 * 10.92 ** (2/9)) = floor(6.80)
    assert moment_tests(np.random.default_rng(0).normal(size=1092)).lag == 6
    with pytest.raises(DegenerateInputError):
        moment_tests(np.full(200, 1.5))


def test_mc_reproducible_and_serialisable():
    a = mc_critical_values("rwd", 200, reps=2000, seed=42)
    b = mc_critical_values("rwd", 200, reps=2000, seed=42)
    assert a.to_json() == b.to_json()
    c = CvTable.from_json(a.to_json())
    assert c.critical_values(200) == pytest.approx(a.critical_values(200), abs=1e-6)
    d = json.loads(a.to_json())
    assert {"kind", "sample_sizes", "levels", "quantiles", "reps", "seed"} <= set(d)
    cv = a.critical_values(200)
    assert cv[0.10] < cv[0.05] < cv[0.01]


def test_mc_requires_enough_reps():
    with pytest.raises(ValidationError):
        mc_critical_values("rw", 100, reps=500)


def test_test_result_validation_and_stars():
    with pytest.raises(ValidationError):
        TestResult("x", 1.0, {0.10: 2.0, 0.05: 1.0})
    cvs = {0.10: 1.0, 0.05: 2.0, 0.01: 3.0}
    assert [stars(s, cvs) for s in (0.5, 1.5, 2.5, 3.5)] == ["", "*", "**", "***"]


def test_p_values_from_tables_are_consistent_with_decisions():
    rng = np.random.default_rng(11)
    for _ in range(50):
        r = irw_test(rng.normal(size=300).cumsum())
        assert (r.p_value < 0.05) == r.decision_at_5pct or abs(r.p_value - 0.05) < 0.005
