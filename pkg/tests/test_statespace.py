import numpy as np
import pytest
import sympy
from hypothesis import given, settings, strategies as st

from interval_ucm.exceptions import NumericalError, ValidationError
from interval_ucm.statespace import (
    ObservationPanel,
    SsmSpec,
    kalman_filter,
    kalman_smoother,
    loglikelihood,
    simulate,
)

from oracles import brute_loglik, brute_smoothed_means, random_spec


def local_level(H=1.0, Q=1.0, a1=0.0, P1=0.0, diffuse=False):
    return SsmSpec(Z=[[1.0]], T=[[1.0]], H=[[H]], Q=[[Q]], a1=[a1], P1=[[P1]],
                   diffuse_mask=[diffuse])


def llt(rng):
    Z = np.array([[1.0, 0.0]])
    T = np.array([[1.0, 1.0], [0.0, 1.0]])
    H = np.array([[rng.uniform(0.2, 2.0)]])
    Q = np.diag(rng.uniform(0.01, 1.0, size=2))
    a1 = rng.normal(size=2)
    C = rng.normal(size=(2, 2))
    P1 = C @ C.T + 0.5 * np.eye(2)
    return Z, T, H, Q, a1, P1


def test_deterministic_state_gives_constant_filtered_mean():
    spec = local_level(H=0.0, Q=0.0, a1=5.0, P1=0.0)
    out = kalman_filter(spec, [1.0, -3.0, 12.0, 0.5])
    np.testing.assert_array_equal(out.filtered_mean[:, 0], 5.0)


def _diffuse_local_level_oracle(x):
    # (X2, X3) | X1 under alpha1 ~ N(0, V), V -> oo, built from the joint
    # covariance and Schur complement; limit taken symbolically.
    V = sympy.Symbol("V", positive=True)
    H = Q = sympy.Integer(1)
    S = sympy.Matrix([
        [V + H, V, V],
        [V, V + Q + H, V + Q],
        [V, V + Q, V + 2 * Q + H],
    ])
    s11 = S[0, 0]
    s21 = S[1:, 0]
    cond_cov = (S[1:, 1:] - s21 * s21.T / s11).applyfunc(lambda e: sympy.limit(e, V, sympy.oo))
    gain = (s21 / s11).applyfunc(lambda e: sympy.limit(e, V, sympy.oo))
    cov = np.array(cond_cov, dtype=float)
    mean = np.array(gain, dtype=float).ravel() * x[0]
    from scipy import stats
    return stats.multivariate_normal(mean, cov).logpdf(x[1:])


def test_diffuse_local_level_matches_conditional_joint_gaussian():
    x = np.array([1.0, 2.0, 3.0])
    spec = local_level(H=1.0, Q=1.0, diffuse=True)
    out = kalman_filter(spec, x)
    assert out.n_diffuse_skipped == 1
    assert out.loglik == pytest.approx(_diffuse_local_level_oracle(x), abs=1e-6)


def test_all_missing_step_is_pure_prediction():
    rng = np.random.default_rng(1)
    Z, T, H, Q, a1, P1 = random_spec(rng, 3, 2)
    spec = SsmSpec(Z, T, H, Q, a1, P1)
    y = rng.normal(size=(6, 2))
    y[3] = np.nan
    out = kalman_filter(spec, y)
    assert np.all(np.isnan(out.innovations[3]))
    np.testing.assert_allclose(out.predicted_mean[4], T @ out.predicted_mean[3], atol=1e-12)


def test_smoother_equals_filter_for_deterministic_system():
    spec = SsmSpec(Z=[[1.0, 0.0]], T=[[1.0, 1.0], [0.0, 1.0]], H=[[0.0]],
                   Q=np.zeros((2, 2)), a1=[2.0, 0.5], P1=np.zeros((2, 2)))
    y = 2.0 + 0.5 * np.arange(8)
    f = kalman_filter(spec, y)
    s = kalman_smoother(spec, y, f)
    np.testing.assert_array_equal(s.smoothed_mean, f.filtered_mean)


def test_smoother_local_level_matches_conditional_means():
    spec = local_level(H=1.0, Q=1.0, a1=0.3, P1=2.0)
    y = np.array([1.0, 2.0, 3.0])
    s = kalman_smoother(spec, y)
    expected = brute_smoothed_means(spec.Z, spec.T, spec.H, spec.Q, spec.a1, spec.P1, y)
    np.testing.assert_allclose(s.smoothed_mean, expected, atol=1e-10)


def test_smoother_boundary_is_filter_exactly():
    rng = np.random.default_rng(4)
    spec = SsmSpec(*random_spec(rng, 3, 2))
    y = rng.normal(size=(7, 2))
    f = kalman_filter(spec, y)
    s = kalman_smoother(spec, y, f)
    np.testing.assert_array_equal(s.smoothed_cov[-1], f.filtered_cov[-1])
    np.testing.assert_array_equal(s.smoothed_mean[-1], f.filtered_mean[-1])


def test_pure_noise_loglik_is_iid_gaussian():
    from scipy import stats
    sigma2 = 2.5
    spec = SsmSpec(Z=[[1.0]], T=[[0.0]], H=[[sigma2]], Q=[[0.0]], a1=[0.0], P1=[[0.0]])
    x = np.array([0.3, -1.2, 2.2, 0.0, 4.1])
    expected = stats.norm(0, np.sqrt(sigma2)).logpdf(x).sum()
    assert loglikelihood(spec, x) == pytest.approx(expected, abs=1e-12)


def test_local_linear_trend_loglik_matches_brute_force():
    rng = np.random.default_rng(7)
    for _ in range(5):
        Z, T, H, Q, a1, P1 = llt(rng)
        y = rng.normal(size=5) * 2
        spec = SsmSpec(Z, T, H, Q, a1, P1)
        assert loglikelihood(spec, y) == pytest.approx(brute_loglik(Z, T, H, Q, a1, P1, y), abs=1e-8)


def test_loglik_scaling_identity():
    rng = np.random.default_rng(11)
    Z, T, H, Q, a1, P1 = random_spec(rng, 3, 2)
    y = rng.normal(size=(8, 2))
    y[2, 1] = np.nan
    c = 3.7
    base = kalman_filter(SsmSpec(Z, T, H, Q, np.zeros(3), P1), y)
    scaled = kalman_filter(SsmSpec(Z, T, c * H, c * Q, np.zeros(3), c * P1), np.sqrt(c) * y)
    assert base.n_effective == 15
    expected = base.loglik - 0.5 * base.n_effective * np.log(c)
    assert scaled.loglik == pytest.approx(expected, abs=1e-10)


def test_simulate_noiseless_is_deterministic_path():
    T = np.array([[1.0, 1.0], [0.0, 1.0]])
    spec = SsmSpec(Z=[[1.0, 0.0]], T=T, H=[[0.0]], Q=np.zeros((2, 2)),
                   a1=[1.0, 0.25], P1=np.zeros((2, 2)), diffuse_mask=[True, True])
    panel, states = simulate(spec, 12, seed=3)
    expected = [(spec.Z @ np.linalg.matrix_power(T, t) @ spec.a1)[0] for t in range(12)]
    np.testing.assert_allclose(panel.values[:, 0], expected, atol=1e-12)


def test_simulated_random_walk_difference_variance():
    spec = local_level(H=0.0, Q=1.0, P1=0.0)
    panel, _ = simulate(spec, 10_000, seed=123)
    var = np.var(np.diff(panel.values[:, 0]), ddof=1)
    assert abs(var - 1.0) < 0.05


def test_simulate_is_reproducible():
    rng = np.random.default_rng(2)
    spec = SsmSpec(*random_spec(rng, 3, 2))
    a, sa = simulate(spec, 50, seed=99)
    b, sb = simulate(spec, 50, seed=99)
    assert a.values.tobytes() == b.values.tobytes()
    assert sa.tobytes() == sb.tobytes()


def test_latent_path_follows_transition():
    spec = local_level(H=0.5, Q=0.0, a1=2.0)
    _, states = simulate(spec, 20, seed=5)
    np.testing.assert_array_equal(states[:, 0], 2.0)


def test_missing_filter_on_dense_data_is_exact():
    rng = np.random.default_rng(8)
    spec = SsmSpec(*random_spec(rng, 4, 2))
    y = rng.normal(size=(30, 2))
    a = kalman_filter(spec, y)
    b = kalman_filter(spec, ObservationPanel(y))
    assert a.loglik == b.loglik
    np.testing.assert_array_equal(a.filtered_mean, b.filtered_mean)


def test_missing_entries_match_brute_force():
    rng = np.random.default_rng(9)
    Z, T, H, Q, a1, P1 = random_spec(rng, 3, 2)
    y = rng.normal(size=(6, 2))
    y[1, 0] = np.nan
    y[4, :] = np.nan
    spec = SsmSpec(Z, T, H, Q, a1, P1)
    assert loglikelihood(spec, y) == pytest.approx(brute_loglik(Z, T, H, Q, a1, P1, y), abs=1e-8)
    np.testing.assert_allclose(kalman_smoother(spec, y).smoothed_mean,
                               brute_smoothed_means(Z, T, H, Q, a1, P1, y), atol=1e-8)


def test_covariances_stay_symmetric_on_long_series():
    rng = np.random.default_rng(10)
    spec = SsmSpec(*random_spec(rng, 4, 2))
    y = rng.normal(size=(1092, 2))
    out = kalman_filter(spec, y)
    for P in (out.predicted_cov, out.filtered_cov):
        assert np.max(np.abs(P - np.transpose(P, (0, 2, 1)))) < 1e-10


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), m=st.integers(1, 4), p=st.integers(1, 2),
       n=st.integers(1, 8))
def test_smoother_covariance_below_filter_covariance(seed, m, p, n):
    rng = np.random.default_rng(seed)
    spec = SsmSpec(*random_spec(rng, m, p))
    y = rng.normal(size=(n, p))
    f = kalman_filter(spec, y)
    s = kalman_smoother(spec, y, f)
    for t in range(n):
        w = np.linalg.eigvalsh(f.filtered_cov[t] + 1e-10 * np.eye(m) - s.smoothed_cov[t])
        assert w[0] >= -1e-12


def test_non_psd_input_rejected():
    with pytest.raises(ValidationError):
        SsmSpec(Z=[[1.0]], T=[[1.0]], H=[[-1.0]], Q=[[1.0]], a1=[0.0], P1=[[1.0]])


def test_dimension_mismatch_rejected():
    spec = local_level()
    with pytest.raises(ValidationError):
        kalman_filter(spec, np.zeros((5, 2)))
    with pytest.raises(ValidationError):
        SsmSpec(Z=[[1.0, 0.0]], T=[[1.0]], H=[[1.0]], Q=[[1.0]], a1=[0.0], P1=[[1.0]])


def test_singular_innovation_covariance_reports_time_step():
    # second series duplicates the first with no noise -> rank-1 F
    spec = SsmSpec(Z=[[1.0], [1.0]], T=[[1.0]], H=np.zeros((2, 2)), Q=[[1.0]],
                   a1=[0.0], P1=[[1.0]])
    with pytest.raises(NumericalError) as exc:
        kalman_filter(spec, np.ones((3, 2)))
    assert exc.value.time_step == 1
