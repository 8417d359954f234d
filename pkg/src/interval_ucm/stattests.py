"""
Stationarity-type tests for trends and seasonals, plus residual diagnostics.

Trend statistics (no drift / drift / integrated random walk)::

    RW, RWD = 1 / (T^2 s2) * sum_t (sum_{r<=t} e_r)^2
    IRW     = 1 / (T^4 s2) * sum_t (sum_{s<=t} sum_{r<=s} e_r)^2

with ``e`` the residuals from a regression on a constant (RW) or on a
constant and a time trend (RWD, IRW), and ``s2 = mean(e^2)``.

Seasonal statistics are Nyblom-type statistics on the full-sample GLS
prediction errors of a null model in which the tested harmonics are
deterministic::

    L = 1 / (n s2) * sum_t S_t' (X'X)^-1 S_t,   S_t = sum_{i<=t} x_i e_i

where ``x_i`` are the (whitened) regressors of the tested seasonal states.
Under the null ``L`` is asymptotically Cramer-von Mises with as many degrees
of freedom as tested states: 2 per harmonic below pi, 1 for pi, 9 for the
joint test of harmonics 2..6.

Finite-sample critical values come from Monte Carlo tables shipped with the
package (see :func:`generate_builtin_tables`) or computed on demand with
:func:`mc_critical_values`.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

import numpy as np
from scipy import stats

from .exceptions import DegenerateInputError, ValidationError
from .statespace import as_values, gls_residuals

log = logging.getLogger(__name__)

LEVELS = (0.10, 0.05, 0.01)
# cdf probabilities stored in every table; p-values interpolate on this grid
GRID = (0.01, 0.025, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.85,
        0.9, 0.925, 0.95, 0.975, 0.99, 0.995, 0.999)
TABLE_SIZES = (100, 250, 500, 1000)
CHUNK = 1000
MIN_TREND_LENGTH = 20
MIN_SEASONAL_LENGTH = 48
N_HARMONICS = 6
# asymptotic 5% points of the level (CvM(1)) and second-level CvM laws
CV5_RW = 0.461
CV5_RWD = 0.148
_REL_TOL = 1e-20
BUILTIN_TABLES = "critical_values.json"

TREND_KINDS = ("rw", "rwd", "irw")
SEASONAL_KINDS = tuple(f"seasonal_{j}" for j in range(1, N_HARMONICS + 1)) + ("seasonal_II",)
KINDS = TREND_KINDS + SEASONAL_KINDS


def stars(statistic, critical_values):
    """'*', '**' or '***' for rejection at 10%, 5% or 1%."""
    s = ""
    for level, n in ((0.10, 1), (0.05, 2), (0.01, 3)):
        cv = critical_values.get(level)
        if cv is not None and statistic > cv:
            s = "*" * n
    return s


@dataclass
class TestResult:
    """Outcome of one test; rejection is for large values of the statistic."""

    __test__ = False  # not a pytest class

    name: str
    statistic: float
    critical_values: dict
    p_value: float = None
    df: int = None
    decision_at_5pct: bool = field(init=False)

    def __post_init__(self):
        if not np.isfinite(self.statistic):
            raise ValidationError(f"{self.name}: statistic is not finite")
        cvs = {float(k): float(v) for k, v in self.critical_values.items()}
        levels = sorted(cvs, reverse=True)
        if any(cvs[a] > cvs[b] for a, b in zip(levels, levels[1:])):
            raise ValidationError(f"{self.name}: critical values not monotone in level")
        self.critical_values = cvs
        self.statistic = float(self.statistic)
        cv5 = cvs.get(0.05)
        self.decision_at_5pct = bool(cv5 is not None and self.statistic > cv5)

    @property
    def stars(self):
        return stars(self.statistic, self.critical_values)

    def to_dict(self):
        return {
            "name": self.name,
            "statistic": self.statistic,
            "critical_values": {f"{k:g}": v for k, v in sorted(self.critical_values.items())},
            "p_value": self.p_value,
            "df": self.df,
            "reject_5pct": self.decision_at_5pct,
            "stars": self.stars,
        }


@dataclass
class CvTable:
    """Quantiles of a null distribution at one or more sample sizes.

    ``quantiles[i, g]`` is the ``grid[g]`` quantile at ``sample_sizes[i]``;
    ``asymptotic`` optionally holds the same grid for T -> infinity.
    """

    kind: str
    sample_sizes: tuple
    levels: tuple
    grid: tuple
    quantiles: np.ndarray
    reps: int
    seed: int
    asymptotic: np.ndarray = None

    def __post_init__(self):
        self.sample_sizes = tuple(int(t) for t in self.sample_sizes)
        self.levels = tuple(float(a) for a in self.levels)
        self.grid = tuple(float(g) for g in self.grid)
        self.quantiles = np.atleast_2d(np.asarray(self.quantiles, dtype=float))
        if self.quantiles.shape != (len(self.sample_sizes), len(self.grid)):
            raise ValidationError("quantile array does not match sizes x grid")
        if np.any(np.diff(self.quantiles, axis=1) < 0):
            raise ValidationError("quantiles must be non-decreasing along the grid")
        if self.asymptotic is not None:
            self.asymptotic = np.asarray(self.asymptotic, dtype=float)
        missing = [a for a in self.levels if not np.isclose(1 - a, self.grid).any()]
        if missing:
            raise ValidationError(f"levels {missing} are not on the quantile grid")

    def quantiles_at(self, T):
        """Grid quantiles at size ``T``, linear in 1/T between tabulated sizes."""
        sizes = np.array(self.sample_sizes, dtype=float)
        Q = self.quantiles
        if self.asymptotic is not None:
            sizes = np.append(sizes, np.inf)
            Q = np.vstack([Q, self.asymptotic])
        order = np.argsort(1.0 / sizes)
        x = (1.0 / sizes)[order]
        Q = Q[order]
        xt = 1.0 / T
        if xt <= x[0]:
            return Q[0]
        if xt >= x[-1]:
            return Q[-1]
        i = np.searchsorted(x, xt) - 1
        w = (xt - x[i]) / (x[i + 1] - x[i])
        return (1 - w) * Q[i] + w * Q[i + 1]

    def critical_values(self, T):
        q = self.quantiles_at(T)
        g = np.array(self.grid)
        return {a: float(q[np.argmin(np.abs(g - (1 - a)))]) for a in self.levels}

    def p_value(self, statistic, T):
        """Upper-tail probability, clipped to the ends of the grid."""
        q = self.quantiles_at(T)
        cdf = np.interp(statistic, q, self.grid)
        return float(1.0 - cdf)

    def to_dict(self):
        d = {
            "kind": self.kind,
            "sample_sizes": list(self.sample_sizes),
            "levels": list(self.levels),
            "grid": list(self.grid),
            "quantiles": np.round(self.quantiles, 6).tolist(),
            "reps": self.reps,
            "seed": self.seed,
        }
        if self.asymptotic is not None:
            d["asymptotic"] = np.round(self.asymptotic, 6).tolist()
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], d["sample_sizes"], d["levels"], d["grid"],
                   d["quantiles"], d["reps"], d["seed"], d.get("asymptotic"))

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


# ---------------------------------------------------------------- statistics

def _trend_design(T, drift):
    t = np.arange(1, T + 1, dtype=float)
    return np.column_stack([np.ones(T), t]) if drift else np.ones((T, 1))


def _seasonal_columns(T, harmonics):
    t = np.arange(1, T + 1, dtype=float)
    cols = []
    for j in harmonics:
        lam = np.pi * j / 6.0
        cols.append(np.cos(lam * t))
        if j < N_HARMONICS:
            cols.append(np.sin(lam * t))
    return np.column_stack(cols)


def _residualize(x, D):
    """Residuals of the rows of ``x`` (..., T) on the columns of ``D``."""
    Q, _ = np.linalg.qr(D)
    return x - (x @ Q) @ Q.T


def cusum_statistic(e):
    """``sum_t S_t^2 / (T^2 mean(e^2))`` along the last axis."""
    e = np.asarray(e, dtype=float)
    T = e.shape[-1]
    S = np.cumsum(e, axis=-1)
    return np.sum(S ** 2, axis=-1) / (T * np.sum(e ** 2, axis=-1))


def double_cusum_statistic(e):
    """``sum_t (sum_{s<=t} S_s)^2 / (T^4 mean(e^2))`` along the last axis."""
    e = np.asarray(e, dtype=float)
    T = e.shape[-1]
    S2 = np.cumsum(np.cumsum(e, axis=-1), axis=-1)
    return np.sum(S2 ** 2, axis=-1) / (T ** 3 * np.sum(e ** 2, axis=-1))


def nyblom_statistic(e, X):
    """Nyblom statistic for residuals ``e`` (..., n) and regressors ``X`` (n, k)."""
    e = np.asarray(e, dtype=float)
    X = np.asarray(X, dtype=float)
    n = e.shape[-1]
    W = np.linalg.inv(X.T @ X)
    S = np.cumsum(e[..., :, None] * X, axis=-2)
    quad = np.einsum("...ti,ij,...tj->...", S, W, S)
    return quad / np.sum(e ** 2, axis=-1)


def seasonal_df(j):
    if j == "II":
        return 2 * (N_HARMONICS - 2) + 1
    if j == "I":
        j = 1
    if j not in range(1, N_HARMONICS + 1):
        raise ValidationError(f"harmonic must be 1..6, 'I' or 'II', got {j!r}")
    return 1 if j == N_HARMONICS else 2


def _harmonics(j):
    if j == "II":
        return tuple(range(2, N_HARMONICS + 1))
    if j == "I":
        return (1,)
    seasonal_df(j)
    return (j,)


def _seasonal_kind(j):
    return "seasonal_II" if j == "II" else f"seasonal_{1 if j == 'I' else j}"


# ---------------------------------------------------------------- tables

@lru_cache(maxsize=None)
def builtin_tables():
    """The shipped Monte Carlo tables, keyed by test kind."""
    try:
        text = resources.files("interval_ucm").joinpath("data", BUILTIN_TABLES).read_text()
    except FileNotFoundError:
        log.warning("built-in critical value tables missing; only asymptotic values available")
        return {}
    return {k: CvTable.from_dict(v) for k, v in json.loads(text).items()}


def _critical_values(kind, T, table=None, finite_sample=None):
    """Critical values and a p-value function for ``kind`` at size ``T``.

    By default the IRW test uses finite-sample values (its statistic
    converges slowly) and the others their asymptotic law; the 5% points
    of RW and RWD are the published 0.461 and 0.148. P-values always come
    from the finite-sample table.
    """
    table = table or builtin_tables().get(kind)
    if finite_sample is None:
        finite_sample = kind == "irw"
    if table is None:
        if kind not in ("rw", "rwd"):
            raise ValidationError(f"no critical values available for {kind!r}")
        return {0.05: CV5_RW if kind == "rw" else CV5_RWD}, lambda s: None
    if finite_sample or table.asymptotic is None:
        cvs = table.critical_values(T)
    else:
        g = np.array(table.grid)
        cvs = {a: float(table.asymptotic[np.argmin(np.abs(g - (1 - a)))]) for a in table.levels}
        if kind in ("rw", "rwd"):
            cvs[0.05] = CV5_RW if kind == "rw" else CV5_RWD
    return cvs, lambda s: table.p_value(s, T)


# ---------------------------------------------------------------- tests

def _prepare(series, min_length, name):
    x = as_values(series)
    if x.shape[1] != 1:
        raise ValidationError(f"{name}: expects a univariate series")
    x = x[:, 0]
    if np.any(np.isnan(x)):
        raise ValidationError(f"{name}: series contains missing values")
    if x.size < min_length:
        raise ValidationError(f"{name}: needs at least {min_length} observations, got {x.size}")
    return x


def _check_residuals(e, x, name):
    ref = np.sum(x ** 2) + np.finfo(float).tiny
    if np.sum(e ** 2) <= _REL_TOL * ref:
        raise DegenerateInputError(f"{name}: residual variance is zero")


def rw_test(series, with_drift=False, table=None, finite_sample=None):
    """RW (``with_drift=False``) or RWD test of a deterministic level/trend.

    Parameters
    ----------
    series : array-like, length >= 20
    with_drift : bool
        Detrend on a constant and time instead of demeaning.
    table : CvTable, optional
        Overrides the built-in table.
    finite_sample : bool, optional
        Use critical values at this length instead of the asymptotic ones.
    """
    name = "RWD" if with_drift else "RW"
    x = _prepare(series, MIN_TREND_LENGTH, name)
    e = _residualize(x, _trend_design(x.size, with_drift))
    _check_residuals(e, x, name)
    stat = cusum_statistic(e)
    cvs, pv = _critical_values("rwd" if with_drift else "rw", x.size, table, finite_sample)
    return TestResult(name, stat, cvs, pv(stat), df=1)


def irw_test(series, table=None, finite_sample=None):
    """IRW test of a deterministic slope against an integrated random walk."""
    x = _prepare(series, MIN_TREND_LENGTH, "IRW")
    e = _residualize(x, _trend_design(x.size, True))
    _check_residuals(e, x, "IRW")
    stat = double_cusum_statistic(e)
    cvs, pv = _critical_values("irw", x.size, table, finite_sample)
    return TestResult("IRW", stat, cvs, pv(stat), df=1)


def seasonal_cvm_test(series, j, params=None, table=None, finite_sample=None):
    """CvM test of a deterministic seasonal at harmonic ``j``.

    Parameters
    ----------
    series : array-like, length >= 48
    j : int 1..6, 'I' (same as 1) or 'II' (joint test of harmonics 2..6)
    params : FsBsmParams, optional
        Parameters estimated under the alternative. The null model sets the
        tested seasonal variance(s) to zero and keeps everything else. When
        omitted the null is the fully deterministic trend + seasonal model,
        i.e. the statistic uses OLS residuals.
    """
    from .structural import FsBsmParams, build_fsbsm, seasonal_state_indices

    harmonics = _harmonics(j)
    df = seasonal_df(j)
    label = f"CvM({j})"
    x = _prepare(series, MIN_SEASONAL_LENGTH, label)
    if params is None:
        params = FsBsmParams(1.0, 0.0, 0.0, 0.0, 0.0)
    if params.dim != 1:
        raise ValidationError("seasonal tests are univariate")
    null = build_fsbsm(params, zero_harmonics=harmonics)
    g = gls_residuals(null, x)
    tested = np.isin(g.diffuse_states, seasonal_state_indices(1, harmonics))
    _check_residuals(g.residuals, x, label)
    stat = nyblom_statistic(g.residuals, g.regressors[:, tested])
    cvs, pv = _critical_values(_seasonal_kind(j), x.size, table, finite_sample)
    return TestResult(label, stat, cvs, pv(stat), df=df)


def model_trend_tests(series, params):
    """RWD and IRW tests on GLS prediction errors of the fitted model's nulls.

    RWD uses the model with the level variance set to zero; IRW is a test
    within the integrated random walk (level variance zero) of a zero slope
    variance, so its null sets both to zero. The remaining parameters keep
    their fitted values. With all other variances zero both reduce to the plain
    tests on the series (up to the seasonal regressors).
    """
    from .structural import build_fsbsm

    x = _prepare(series, MIN_TREND_LENGTH, "trend tests")
    out = {}
    zero = np.zeros((1, 1))
    for name, changes in (("RWD", {"level": zero}), ("IRW", {"level": zero, "slope": zero})):
        null = build_fsbsm(params.replace(**changes))
        e = gls_residuals(null, x).residuals
        out[name] = rw_test(e, with_drift=True) if name == "RWD" else irw_test(e)
    return out


def box_pierce(residuals, lags=12, fitted_params=0):
    """Box-Pierce portmanteau test; p-value from chi2(lags - fitted_params)."""
    e = np.asarray(residuals, dtype=float).reshape(-1)
    e = e[~np.isnan(e)]
    if lags < 1:
        raise ValidationError("lags must be >= 1")
    if e.size <= lags:
        raise ValidationError(f"Box-Pierce needs more than {lags} observations")
    dof = lags - fitted_params
    if dof < 1:
        raise ValidationError("fitted_params leaves no degrees of freedom")
    e = e - e.mean()
    denom = e @ e
    if denom <= 0:
        raise DegenerateInputError("Box-Pierce: series is constant")
    rho = np.array([e[k:] @ e[:-k] for k in range(1, lags + 1)]) / denom
    q = e.size * np.sum(rho ** 2)
    cvs = {a: float(stats.chi2.ppf(1 - a, dof)) for a in LEVELS}
    return TestResult(f"Q({lags})", q, cvs, float(stats.chi2.sf(q, dof)), df=dof)


def bartlett_lag(T):
    return int(np.floor(4 * (T / 100.0) ** (2.0 / 9.0)))


def long_run_covariance(Z, lag):
    """Bartlett-kernel long-run covariance of the rows of demeaned ``Z`` (T, k)."""
    Z = np.asarray(Z, dtype=float)
    Z = Z - Z.mean(axis=0)
    T = Z.shape[0]
    S = Z.T @ Z / T
    for k in range(1, lag + 1):
        G = Z[k:].T @ Z[:-k] / T
        S += (1 - k / (lag + 1)) * (G + G.T)
    return S


@dataclass
class MomentSummary:
    mean: float
    sd: float
    skewness: float
    skewness_p: float
    kurtosis: float
    kurtosis_p: float
    normality_p: float
    n: int
    lag: int

    def to_row(self):
        return {
            "Mean": self.mean,
            "St. dev.": self.sd,
            "Skewness": self.skewness,
            "Skewness p": self.skewness_p,
            "Kurtosis": self.kurtosis,
            "Kurtosis p": self.kurtosis_p,
            "BN": self.normality_p,
        }


def moment_tests(series, robust=None):
    """Sample moments with serial-correlation-robust skewness/kurtosis tests.

    Skewness and excess kurtosis are studentised by a Bartlett HAC estimate
    of the long-run variance of the moment conditions (delta method); the
    normality statistic is the sum of the two squared t-ratios, chi2(2).
    ``robust=None`` uses the HAC when there are at least 100 observations
    and i.i.d. variances otherwise.
    """
    x = np.asarray(series, dtype=float).reshape(-1)
    x = x[~np.isnan(x)]
    T = x.size
    if T < 8:
        raise ValidationError(f"moment tests need at least 8 observations, got {T}")
    if robust is None:
        robust = T >= 100
    elif robust and T < 100:
        raise ValidationError("robust moment tests need at least 100 observations")
    mu = x.mean()
    d = x - mu
    m2, m3, m4 = (np.mean(d ** k) for k in (2, 3, 4))
    if m2 <= 1e-24 * max(1.0, mu * mu):
        raise DegenerateInputError("moment tests: series has zero variance")
    skew = m3 / m2 ** 1.5
    kurt = m4 / m2 ** 2
    lag = bartlett_lag(T) if robust else 0
    Zm = np.column_stack([d, d ** 2, d ** 3, d ** 4])
    Omega = long_run_covariance(Zm, lag)
    # gradients of skewness and kurtosis w.r.t. (mean shift, m2, m3, m4)
    g_skew = np.array([-3 * m2, -1.5 * m3 / m2, 1.0, 0.0]) / m2 ** 1.5
    g_kurt = np.array([-4 * m3, -2 * m4 / m2, 0.0, 1.0]) / m2 ** 2
    v_skew = g_skew @ Omega @ g_skew
    v_kurt = g_kurt @ Omega @ g_kurt
    z_skew = np.sqrt(T) * skew / np.sqrt(v_skew) if v_skew > 0 else 0.0
    z_kurt = np.sqrt(T) * (kurt - 3.0) / np.sqrt(v_kurt) if v_kurt > 0 else 0.0
    return MomentSummary(
        mean=float(mu), sd=float(np.sqrt(m2)),
        skewness=float(skew), skewness_p=float(2 * stats.norm.sf(abs(z_skew))),
        kurtosis=float(kurt), kurtosis_p=float(2 * stats.norm.sf(abs(z_kurt))),
        normality_p=float(stats.chi2.sf(z_skew ** 2 + z_kurt ** 2, 2)),
        n=T, lag=lag,
    )


# ---------------------------------------------------------------- Monte Carlo

def _null_statistics(kind, T, rng, reps):
    eps = rng.standard_normal((reps, T))
    if kind == "rw":
        return cusum_statistic(eps - eps.mean(axis=1, keepdims=True))
    if kind in ("rwd", "irw"):
        e = _residualize(eps, _trend_design(T, True))
        return cusum_statistic(e) if kind == "rwd" else double_cusum_statistic(e)
    j = kind.split("_", 1)[1]
    j = j if j == "II" else int(j)
    D = np.column_stack([_trend_design(T, True), _seasonal_columns(T, range(1, N_HARMONICS + 1))])
    e = _residualize(eps, D)
    return nyblom_statistic(e, _seasonal_columns(T, _harmonics(j)))


def simulate_null(kind, T, reps, seed=0, n_jobs=1):
    """Null draws of a statistic: Gaussian noise around the null's deterministic terms.

    Replications are generated in fixed chunks, each from its own spawned
    seed, so the output depends only on (kind, T, reps, seed).
    """
    if kind not in KINDS:
        raise ValidationError(f"unknown test kind {kind!r}; choose from {KINDS}")
    if T < (MIN_SEASONAL_LENGTH if kind.startswith("seasonal") else MIN_TREND_LENGTH):
        raise ValidationError(f"T={T} too short for {kind}")
    n_chunks = -(-reps // CHUNK)
    seeds = np.random.SeedSequence(seed).spawn(n_chunks)
    sizes = [min(CHUNK, reps - i * CHUNK) for i in range(n_chunks)]

    def run(i):
        return _null_statistics(kind, T, np.random.default_rng(seeds[i]), sizes[i])

    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            parts = list(pool.map(run, range(n_chunks)))
    else:
        parts = [run(i) for i in range(n_chunks)]
    return np.concatenate(parts)


def mc_critical_values(kind, T, reps=20000, seed=0, levels=LEVELS, n_jobs=1):
    """Monte Carlo critical values of ``kind`` at sample size ``T``.

    Parameters
    ----------
    kind : 'rw', 'rwd', 'irw', 'seasonal_1'..'seasonal_6' or 'seasonal_II'
    T : int
    reps : int, >= 1000
    seed : int

    Returns
    -------
    CvTable
        One row (size ``T``) on the standard grid.
    """
    if reps < 1000:
        raise ValidationError("reps must be >= 1000")
    grid = sorted(set(GRID) | {round(1 - a, 10) for a in levels})
    draws = simulate_null(kind, T, reps, seed, n_jobs)
    q = np.quantile(draws, grid)
    return CvTable(kind, (T,), tuple(levels), tuple(grid), q[None, :], reps, seed)


def _asymptotic_quantiles(kind, reps, seed, grid, n_terms=2000):
    """Quantiles of sum_n lambda_n chi2_k, the limit law of each statistic."""
    rng = np.random.default_rng(seed)
    if kind.startswith("seasonal"):
        j = kind.split("_", 1)[1]
        k = seasonal_df(j if j == "II" else int(j))
        lam = 1.0 / (np.pi * np.arange(1, n_terms + 1)) ** 2
    else:
        k = 1
        N = n_terms
        D = _trend_design(N, kind != "rw")
        M = np.eye(N) - D @ np.linalg.pinv(D)
        L = np.tril(np.ones((N, N)))
        if kind == "irw":
            L = L @ L
            A = M @ L.T @ L @ M / N ** 4
        else:
            A = M @ L.T @ L @ M / N ** 2
        lam = np.sort(np.linalg.eigvalsh(A))[::-1]
        lam = lam[lam > 1e-14]
    # keep the leading terms exactly; replace the tail by its mean
    head = lam[:400]
    tail_mean = k * lam[400:].sum()
    out = np.empty(reps)
    for start in range(0, reps, 5000):
        n = min(5000, reps - start)
        chi = rng.chisquare(k, size=(n, head.size))
        out[start:start + n] = chi @ head + tail_mean
    return np.quantile(out, grid)


def generate_builtin_tables(reps=20000, seed=20240101, sizes=TABLE_SIZES,
                            asymptotic_reps=200000, n_jobs=1):
    """Regenerate the shipped tables (a few minutes); returns {kind: CvTable}."""
    tables = {}
    grid = tuple(GRID)
    for i, kind in enumerate(KINDS):
        rows = []
        for T in sizes:
            draws = simulate_null(kind, T, reps, seed + 1000 * i + T, n_jobs)
            rows.append(np.quantile(draws, grid))
        asym = _asymptotic_quantiles(kind, asymptotic_reps, seed + 1000 * i, grid)
        tables[kind] = CvTable(kind, sizes, LEVELS, grid, np.array(rows), reps, seed, asym)
        log.info("tabulated %s", kind)
    return tables


def write_tables(tables, path):
    payload = {k: t.to_dict() for k, t in sorted(tables.items())}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")
