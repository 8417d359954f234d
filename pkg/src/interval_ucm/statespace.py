"""
Linear Gaussian state space models.

The model is::

    y_t       = Z alpha_t + eps_t,        eps_t ~ N(0, H)
    alpha_t+1 = T alpha_t + eta_t,        eta_t ~ N(0, Q)
    alpha_1   ~ N(a1, P1)

States flagged in ``diffuse_mask`` get a large prior variance (``KAPPA``)
instead of ``P1``, and the log-likelihood drops the contributions of the
first ``d`` scalar observations, ``d`` being the number of diffuse states.

Missing values (NaN) are handled by deleting the corresponding rows of
``Z`` and ``H`` at that time step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kalman
from .exceptions import NumericalError, ValidationError

KAPPA = 1e7
COND_LIMIT = 1e14
PSD_TOL = 1e-10


def _frozen(a, ndim, name):
    arr = np.array(a, dtype=float)
    if arr.ndim == 0 and ndim == 2:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 0 and ndim == 1:
        arr = arr.reshape(1)
    if arr.ndim != ndim:
        raise ValidationError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} has non-finite entries")
    arr.setflags(write=False)
    return arr


def check_psd(A, name, tol=PSD_TOL):
    """Raise ValidationError unless ``A`` is symmetric PSD within ``tol``."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValidationError(f"{name} must be square, got shape {A.shape}")
    if A.size == 0:
        return
    if np.max(np.abs(A - A.T)) > tol:
        raise ValidationError(f"{name} is not symmetric")
    scale = max(1.0, float(np.max(np.abs(A))))
    if np.linalg.eigvalsh(A)[0] < -tol * scale:
        raise ValidationError(f"{name} is not positive semi-definite")


@dataclass(frozen=True)
class SsmSpec:
    """Time-invariant linear Gaussian state space system.

    Parameters
    ----------
    Z : (p, m) observation matrix
    T : (m, m) transition matrix
    H : (p, p) observation noise covariance
    Q : (m, m) state noise covariance
    a1 : (m,) initial state mean
    P1 : (m, m) initial state covariance
    diffuse_mask : (m,) bool, states with a diffuse prior
    """

    Z: np.ndarray
    T: np.ndarray
    H: np.ndarray
    Q: np.ndarray
    a1: np.ndarray
    P1: np.ndarray
    diffuse_mask: np.ndarray = None

    def __post_init__(self):
        Z = _frozen(self.Z, 2, "Z")
        T = _frozen(self.T, 2, "T")
        H = _frozen(self.H, 2, "H")
        Q = _frozen(self.Q, 2, "Q")
        a1 = _frozen(self.a1, 1, "a1")
        P1 = _frozen(self.P1, 2, "P1")
        p, m = Z.shape
        if T.shape != (m, m):
            raise ValidationError(f"T must be {m}x{m}, got {T.shape}")
        if H.shape != (p, p):
            raise ValidationError(f"H must be {p}x{p}, got {H.shape}")
        if Q.shape != (m, m):
            raise ValidationError(f"Q must be {m}x{m}, got {Q.shape}")
        if a1.shape != (m,):
            raise ValidationError(f"a1 must have length {m}, got {a1.shape}")
        if P1.shape != (m, m):
            raise ValidationError(f"P1 must be {m}x{m}, got {P1.shape}")
        for A, name in ((H, "H"), (Q, "Q"), (P1, "P1")):
            check_psd(A, name)
        if self.diffuse_mask is None:
            mask = np.zeros(m, dtype=bool)
        else:
            mask = np.array(self.diffuse_mask, dtype=bool).reshape(-1)
            if mask.shape != (m,):
                raise ValidationError(f"diffuse_mask must have length {m}")
        mask.setflags(write=False)
        for name, value in (("Z", Z), ("T", T), ("H", H), ("Q", Q),
                            ("a1", a1), ("P1", P1), ("diffuse_mask", mask)):
            object.__setattr__(self, name, value)

    @property
    def n_states(self):
        return self.T.shape[0]

    @property
    def n_series(self):
        return self.Z.shape[0]

    @property
    def n_diffuse(self):
        return int(self.diffuse_mask.sum())

    def initial_moments(self, kappa=KAPPA):
        """Prior mean and covariance actually fed to the filter."""
        a1 = self.a1.copy()
        P1 = self.P1.copy()
        d = self.diffuse_mask
        a1[d] = 0.0
        P1[d, :] = 0.0
        P1[:, d] = 0.0
        P1[d, d] = kappa
        return a1, P1

    def replace(self, **changes):
        kw = dict(Z=self.Z, T=self.T, H=self.H, Q=self.Q, a1=self.a1,
                  P1=self.P1, diffuse_mask=self.diffuse_mask)
        kw.update(changes)
        return SsmSpec(**kw)


def monthly_index(n, start="2000-01"):
    return np.arange(np.datetime64(start, "M"), np.datetime64(start, "M") + n)


@dataclass(frozen=True)
class ObservationPanel:
    """Monthly multivariate observations; NaN marks a missing entry."""

    values: np.ndarray
    time_index: np.ndarray = None
    names: tuple = None

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.ndim != 2 or vals.shape[0] == 0:
            raise ValidationError(f"values must be a non-empty T x p matrix, got {vals.shape}")
        if np.any(np.isinf(vals)):
            raise ValidationError("values contain infinities")
        empty = np.where(np.all(np.isnan(vals), axis=0))[0]
        if empty.size:
            raise ValidationError(f"series {empty.tolist()} have no observations")
        if self.time_index is None:
            idx = monthly_index(vals.shape[0])
        else:
            idx = np.asarray(self.time_index).astype("datetime64[M]")
            if idx.shape != (vals.shape[0],):
                raise ValidationError("time_index length does not match values")
            if idx.size > 1 and np.any(np.diff(idx).astype(int) != 1):
                raise ValidationError("time_index must be contiguous monthly and increasing")
        names = tuple(self.names) if self.names is not None else None
        if names is not None and len(names) != vals.shape[1]:
            raise ValidationError("names length does not match number of series")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "time_index", idx)
        object.__setattr__(self, "names", names)

    @property
    def n_obs(self):
        return self.values.shape[0]

    @property
    def n_series(self):
        return self.values.shape[1]


def as_values(data):
    """Return a float (T, p) array from a panel or array-like."""
    if isinstance(data, ObservationPanel):
        return np.array(data.values)
    arr = np.array(data, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValidationError(f"data must be 1-D or 2-D, got shape {arr.shape}")
    return arr


@dataclass
class FilterOutput:
    predicted_mean: np.ndarray
    predicted_cov: np.ndarray
    filtered_mean: np.ndarray
    filtered_cov: np.ndarray
    innovations: np.ndarray
    innovation_cov: np.ndarray
    loglik: float
    n_diffuse_skipped: int
    n_effective: int = 0

    def standardized_innovations(self, drop_diffuse=True):
        """Innovations scaled by their standard deviation (univariate only)."""
        if self.innovations.shape[1] != 1:
            raise ValidationError("standardized innovations are defined for p=1 only")
        v = self.innovations[:, 0] / np.sqrt(self.innovation_cov[:, 0, 0])
        v = v[~np.isnan(v)]
        if drop_diffuse:
            v = v[self.n_diffuse_skipped:]
        return v


@dataclass
class SmootherOutput:
    smoothed_mean: np.ndarray
    smoothed_cov: np.ndarray


def _check_data(spec, y):
    if y.shape[1] != spec.n_series:
        raise ValidationError(
            f"data has {y.shape[1]} series but the model expects {spec.n_series}")


def _run_filter(spec, y, kappa, store):
    _check_data(spec, y)
    a1, P1 = spec.initial_moments(kappa)
    res = _kalman.filter_core(
        np.ascontiguousarray(spec.Z), *_kalman.to_csr(spec.T),
        np.ascontiguousarray(spec.H), np.ascontiguousarray(spec.Q),
        a1, P1, np.ascontiguousarray(y), spec.n_diffuse, COND_LIMIT, store)
    status, bad_t = res[-2], res[-1]
    if status == _kalman.SINGULAR_F:
        raise NumericalError("innovation covariance is numerically singular", time_step=bad_t + 1)
    if status == _kalman.NOT_PD_F:
        raise NumericalError("innovation covariance is not positive definite", time_step=bad_t + 1)
    return res


def kalman_filter(spec, data, kappa=KAPPA):
    """Kalman filter with big-kappa diffuse initialisation.

    Parameters
    ----------
    spec : SsmSpec
    data : ObservationPanel or array-like (T,) / (T, p); NaN = missing

    Returns
    -------
    FilterOutput
    """
    y = as_values(data)
    (a_pred, P_pred, a_filt, P_filt, v, F, loglik,
     skipped, n_used, _, _) = _run_filter(spec, y, kappa, True)
    return FilterOutput(a_pred, P_pred, a_filt, P_filt, v, F,
                        float(loglik), int(skipped), int(n_used))


def loglikelihood(spec, data, kappa=KAPPA):
    """Gaussian log-likelihood from the prediction error decomposition."""
    return float(_run_filter(spec, as_values(data), kappa, False)[6])


class LikelihoodKernel:
    """Repeated log-likelihood evaluation for one system shape and data set.

    Validation, the prior and the sparse transition are prepared once;
    :meth:`loglik` then takes only the noise covariances, which the caller
    guarantees to be PSD (as they are when built from a parameterisation).
    """

    def __init__(self, spec, data, kappa=KAPPA):
        self.y = np.ascontiguousarray(as_values(data))
        _check_data(spec, self.y)
        self.a1, self.P1 = spec.initial_moments(kappa)
        self.Z = np.ascontiguousarray(spec.Z)
        self.csr = _kalman.to_csr(spec.T)
        self.n_skip = spec.n_diffuse

    def loglik(self, H, Q):
        res = _kalman.filter_core(
            self.Z, *self.csr, np.ascontiguousarray(H, dtype=float),
            np.ascontiguousarray(Q, dtype=float), self.a1, self.P1, self.y,
            self.n_skip, COND_LIMIT, False)
        if res[-2] != _kalman.OK:
            raise NumericalError("innovation covariance is singular or not positive definite",
                                 time_step=res[-1] + 1)
        return float(res[6])


def kalman_smoother(spec, data, filt=None):
    """Fixed-interval (Rauch-Tung-Striebel) smoother.

    ``filt`` must come from ``kalman_filter(spec, data)``; it is computed
    when omitted.
    """
    y = as_values(data)
    _check_data(spec, y)
    if filt is None:
        filt = kalman_filter(spec, y)
    n, m = filt.filtered_mean.shape
    if n != y.shape[0] or m != spec.n_states:
        raise ValidationError("filter output does not match spec/data dimensions")

    T = spec.T
    a_s = np.empty((n, m))
    P_s = np.empty((n, m, m))
    a_s[-1] = filt.filtered_mean[-1]
    P_s[-1] = filt.filtered_cov[-1]
    for t in range(n - 2, -1, -1):
        Pf = filt.filtered_cov[t]
        Pp = filt.predicted_cov[t + 1]
        TPf = T @ Pf
        try:
            L = np.linalg.cholesky(Pp)
            Jt = np.linalg.solve(L.T, np.linalg.solve(L, TPf))
        except np.linalg.LinAlgError:
            Jt = np.linalg.pinv(Pp, hermitian=True) @ TPf
        J = Jt.T
        a_s[t] = filt.filtered_mean[t] + J @ (a_s[t + 1] - filt.predicted_mean[t + 1])
        Ps = Pf + J @ (P_s[t + 1] - Pp) @ Jt
        P_s[t] = 0.5 * (Ps + Ps.T)
    return SmootherOutput(a_s, P_s)


@dataclass
class GlsResiduals:
    """Full-sample GLS prediction errors with the diffuse states as regressors.

    ``residuals`` are whitened one-step prediction errors once the diffuse
    initial states are replaced by their GLS estimate ``delta``; ``regressors``
    are the whitened columns those states enter through (one row per scalar
    observation, one column per diffuse state, in state order).
    """

    residuals: np.ndarray
    regressors: np.ndarray
    delta: np.ndarray
    diffuse_states: np.ndarray
    sigma2: float


def gls_residuals(spec, data):
    """Augmented-filter residuals of ``spec`` on ``data``.

    The filter is linear in the data and the initial mean, so the innovation
    sequence under initial value ``delta`` for the diffuse states is
    ``v(y) - X delta`` with ``X[:, k] = -v(0; a1 = e_k)``. Estimating
    ``delta`` by GLS gives exact (not big-kappa) diffuse treatment.
    """
    y = as_values(data)
    _check_data(spec, y)
    idx = np.where(spec.diffuse_mask)[0]
    a1 = spec.a1.copy()
    a1[idx] = 0.0
    P1 = spec.P1.copy()
    P1[idx, :] = 0.0
    P1[:, idx] = 0.0
    v, X, status, bad_t = _kalman.augmented_core(
        np.ascontiguousarray(spec.Z), *_kalman.to_csr(spec.T),
        np.ascontiguousarray(spec.H), np.ascontiguousarray(spec.Q),
        a1, P1, np.ascontiguousarray(y), idx.astype(np.int64), COND_LIMIT)
    if status != _kalman.OK:
        raise NumericalError("innovation covariance is numerically singular", time_step=bad_t + 1)
    if idx.size:
        delta, *_ = np.linalg.lstsq(X, v, rcond=None)
        resid = v - X @ delta
    else:
        delta, resid = np.zeros(0), v
    dof = v.size - np.linalg.matrix_rank(X) if idx.size else v.size
    sigma2 = float(resid @ resid / max(dof, 1))
    return GlsResiduals(resid, X, delta, idx, sigma2)


def _psd_factor(cov):
    w, V = np.linalg.eigh(0.5 * (cov + cov.T))
    return V * np.sqrt(np.clip(w, 0.0, None))


def simulate(spec, n, seed=None, diffuse_start_var=0.0, start="2000-01"):
    """Draw observations and the latent state path.

    Diffuse states start at their ``a1`` entry with variance
    ``diffuse_start_var``.

    Returns
    -------
    panel : ObservationPanel
    states : (n, m) array
    """
    if n < 1:
        raise ValidationError("n must be >= 1")
    rng = np.random.default_rng(seed)
    m, p = spec.n_states, spec.n_series
    P1 = spec.P1.copy()
    d = spec.diffuse_mask
    P1[d, :] = 0.0
    P1[:, d] = 0.0
    P1[d, d] = diffuse_start_var
    LP = _psd_factor(P1)
    LQ = _psd_factor(spec.Q)
    LH = _psd_factor(spec.H)
    states = np.empty((n, m))
    alpha = spec.a1 + LP @ rng.standard_normal(m)
    eta = rng.standard_normal((n, m)) @ LQ.T
    eps = rng.standard_normal((n, p)) @ LH.T
    for t in range(n):
        states[t] = alpha
        alpha = spec.T @ alpha + eta[t]
    y = states @ spec.Z.T + eps
    return ObservationPanel(y, monthly_index(n, start)), states
