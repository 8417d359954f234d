"""
Frequency-specific basic structural model (trend + trigonometric seasonal).

The observation is ``X_t = trend + seasonal + irregular`` with a local
linear trend and six trigonometric harmonics at ``lambda_j = pi j / 6``.
Harmonic 1 has its own disturbance covariance; harmonics 2..6 share one.
The harmonic at ``pi`` has no conjugate state, so the univariate model has
13 states and the bivariate one 26, ordered as::

    mu, beta, g1, g1*, g2, g2*, ..., g5, g5*, g6

with each entry expanded to ``dim`` consecutive states in the bivariate
case. The seasonal states load with ``-1`` on the observation, which is
observationally equivalent to a ``+1`` loading because the rotation
dynamics are invariant to flipping the sign of both states of a pair.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ValidationError
from .statespace import (
    ObservationPanel,
    SsmSpec,
    as_values,
    check_psd,
    kalman_filter,
    kalman_smoother,
)

N_HARMONICS = 6
BAND_Z = 1.96
PARAM_NAMES = ("irregular", "level", "slope", "seasonal_I", "seasonal_II")


def frequencies():
    return np.pi * np.arange(1, N_HARMONICS + 1) / 6.0


def _scalar_layout():
    """Names of the 13 scalar states in order."""
    names = ["level", "slope"]
    for j in range(1, N_HARMONICS):
        names += [f"gamma{j}", f"gamma{j}*"]
    names.append(f"gamma{N_HARMONICS}")
    return names


SCALAR_STATES = tuple(_scalar_layout())


def _as_block(value, dim, name):
    A = np.array(value, dtype=float)
    if A.ndim == 0:
        A = A * np.eye(dim) if dim == 1 else np.diag(np.full(dim, float(A)))
    elif A.ndim == 1:
        A = np.diag(A)
    if A.shape != (dim, dim):
        raise ValidationError(f"{name} must be {dim}x{dim}, got {A.shape}")
    check_psd(A, name)
    A.setflags(write=False)
    return A


@dataclass(frozen=True)
class FsBsmParams:
    """Disturbance covariances of a univariate (dim=1) or bivariate model.

    Scalars are accepted for ``dim=1``; a 1-D value is read as a diagonal.
    """

    irregular: np.ndarray
    level: np.ndarray
    slope: np.ndarray
    seasonal_I: np.ndarray
    seasonal_II: np.ndarray
    dim: int = 1

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValidationError(f"dim must be 1 or 2, got {self.dim}")
        for name in PARAM_NAMES:
            object.__setattr__(self, name, _as_block(getattr(self, name), self.dim, name))

    def block(self, name):
        return getattr(self, name)

    def harmonic_covs(self):
        """Disturbance covariance for each harmonic j = 1..6."""
        return [self.seasonal_I] + [self.seasonal_II] * (N_HARMONICS - 1)

    def replace(self, **changes):
        kw = {name: getattr(self, name) for name in PARAM_NAMES}
        kw.update(changes)
        return FsBsmParams(dim=self.dim, **kw)

    def scaled(self, c):
        return FsBsmParams(dim=self.dim, **{n: c * getattr(self, n) for n in PARAM_NAMES})

    def to_dict(self):
        out = {"dim": self.dim}
        for name in PARAM_NAMES:
            B = getattr(self, name)
            out[name] = float(B[0, 0]) if self.dim == 1 else B.tolist()
        return out

    @classmethod
    def from_dict(cls, d):
        return cls(dim=d.get("dim", 1), **{n: d[n] for n in PARAM_NAMES})


def state_index(name, dim=1):
    """Indices of the ``dim`` states for scalar state ``name``."""
    b = SCALAR_STATES.index(name)
    return np.arange(b * dim, (b + 1) * dim)


def seasonal_state_indices(dim=1, harmonics=range(1, N_HARMONICS + 1)):
    """All state indices (gamma and gamma*) belonging to the given harmonics."""
    idx = []
    for j in harmonics:
        idx.extend(state_index(f"gamma{j}", dim))
        if j < N_HARMONICS:
            idx.extend(state_index(f"gamma{j}*", dim))
    return np.array(sorted(idx), dtype=int)


def _scalar_system():
    m = len(SCALAR_STATES)
    z = np.zeros(m)
    z[0] = 1.0
    T = np.zeros((m, m))
    T[0, 0] = T[0, 1] = T[1, 1] = 1.0
    for j, lam in enumerate(frequencies(), start=1):
        g = SCALAR_STATES.index(f"gamma{j}")
        z[g] = -1.0
        if j < N_HARMONICS:
            c, s = np.cos(lam), np.sin(lam)
            T[g:g + 2, g:g + 2] = [[c, s], [-s, c]]
        else:
            T[g, g] = np.cos(lam)
    return z, T


def fsbsm_system(irregular, level, slope, harmonic_covs, dim=1):
    """Assemble the model from explicit blocks; ``harmonic_covs`` has 6 entries."""
    z, Ts = _scalar_system()
    ms = len(SCALAR_STATES)
    I = np.eye(dim)
    Z = np.kron(z[None, :], I)
    T = np.kron(Ts, I)
    Q = np.zeros((ms * dim, ms * dim))

    def put(name, B):
        i = state_index(name, dim)
        Q[np.ix_(i, i)] = B

    put("level", level)
    put("slope", slope)
    for j, B in enumerate(harmonic_covs, start=1):
        put(f"gamma{j}", B)
        if j < N_HARMONICS:
            put(f"gamma{j}*", B)
    m = ms * dim
    return SsmSpec(Z=Z, T=T, H=np.array(irregular, dtype=float), Q=Q,
                   a1=np.zeros(m), P1=np.zeros((m, m)), diffuse_mask=np.ones(m, dtype=bool))


def _component_masks():
    """0/1 diagonal selectors of the scalar states driven by each block."""
    names = {"level": ["level"], "slope": ["slope"],
             "seasonal_I": ["gamma1", "gamma1*"],
             "seasonal_II": [n for n in SCALAR_STATES if n.startswith("gamma") and n[5] != "1"]}
    return {k: np.diag(np.isin(SCALAR_STATES, v).astype(float)) for k, v in names.items()}


_MASKS = _component_masks()


def fsbsm_noise(blocks):
    """(H, Q) from a mapping of raw covariance blocks, without validation."""
    Q = sum(np.kron(_MASKS[name], np.asarray(blocks[name], dtype=float)) for name in _MASKS)
    return np.asarray(blocks["irregular"], dtype=float), Q


def build_fsbsm(params, zero_harmonics=()):
    """State space form of the model for ``params``.

    ``zero_harmonics`` lists harmonics (1..6) whose disturbance covariance is
    set to zero, which is how single-frequency null models are built.
    """
    if not isinstance(params, FsBsmParams):
        raise ValidationError("params must be FsBsmParams")
    covs = params.harmonic_covs()
    zero = np.zeros((params.dim, params.dim))
    covs = [zero if j in zero_harmonics else B for j, B in enumerate(covs, start=1)]
    return fsbsm_system(params.irregular, params.level, params.slope, covs, params.dim)


def _trend_seasonal_loadings(spec, dim):
    Z_trend = np.zeros_like(spec.Z)
    i = state_index("level", dim)
    Z_trend[:, i] = spec.Z[:, i]
    Z_seas = np.zeros_like(spec.Z)
    s = seasonal_state_indices(dim)
    Z_seas[:, s] = spec.Z[:, s]
    return Z_trend, Z_seas


@dataclass
class ComponentSet:
    """Smoothed components, each (T, dim), with matching standard errors."""

    trend: np.ndarray
    slope: np.ndarray
    seasonal: np.ndarray
    irregular: np.ndarray
    trend_se: np.ndarray
    slope_se: np.ndarray
    seasonal_se: np.ndarray
    irregular_se: np.ndarray
    time_index: np.ndarray = None

    def band(self, name, z=BAND_Z):
        est = getattr(self, name)
        se = getattr(self, f"{name}_se")
        return est - z * se, est + z * se

    def terminal(self):
        """End-of-sample level and slope with standard errors."""
        return {
            "mu_T": self.trend[-1].tolist(),
            "mu_T_se": self.trend_se[-1].tolist(),
            "beta_T": self.slope[-1].tolist(),
            "beta_T_se": self.slope_se[-1].tolist(),
        }


def _diag_quad(Zs, P):
    # diag(Zs P_t Zs') for every t
    return np.einsum("ij,tjk,ik->ti", Zs, P, Zs)


def extract_components(spec, params, data):
    """Smoothed trend, slope, seasonal and irregular with standard errors."""
    y = as_values(data)
    dim = params.dim
    if spec.n_states != len(SCALAR_STATES) * dim:
        raise ValidationError("spec was not built for params of this dimension")
    filt = kalman_filter(spec, y)
    sm = kalman_smoother(spec, y, filt)
    a, P = sm.smoothed_mean, sm.smoothed_cov
    Z_trend, Z_seas = _trend_seasonal_loadings(spec, dim)
    li = state_index("level", dim)
    si = state_index("slope", dim)
    seasonal = a @ Z_seas.T
    irregular = y - a @ spec.Z.T
    se = lambda v: np.sqrt(np.clip(v, 0.0, None))
    time_index = data.time_index if isinstance(data, ObservationPanel) else None
    return ComponentSet(
        trend=a[:, li],
        slope=a[:, si],
        seasonal=seasonal,
        irregular=irregular,
        trend_se=se(P[:, li, li]),
        slope_se=se(P[:, si, si]),
        seasonal_se=se(_diag_quad(Z_seas, P)),
        irregular_se=se(_diag_quad(spec.Z, P)),
        time_index=time_index,
    )


def filtered_seasonal(spec, params, data):
    filt = kalman_filter(spec, data)
    _, Z_seas = _trend_seasonal_loadings(spec, params.dim)
    return filt.filtered_mean @ Z_seas.T


def deseasonalize(data, spec, params):
    """Subtract the filtered (not smoothed) seasonal component."""
    y = as_values(data)
    adj = y - filtered_seasonal(spec, params, y)
    if isinstance(data, ObservationPanel):
        return ObservationPanel(adj, data.time_index, data.names)
    return ObservationPanel(adj)
