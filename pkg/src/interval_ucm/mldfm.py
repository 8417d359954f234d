"""
Multi-level dynamic factor model.

Each series loads on one global factor and on the factor of its own
region::

    y_it = p_gi F_gt + p_ri F_{r(i),t} + eps_it

The global factor is an integrated random walk (level plus a slope driven
by ``xi_t``) or, optionally, a plain random walk; regional factors are
stationary AR(1) processes. Parameters come from a two-step principal
components procedure and the factors are then re-estimated with the
Kalman smoother on the implied state space form.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ValidationError
from .statespace import (
    ObservationPanel,
    SsmSpec,
    as_values,
    kalman_filter,
    kalman_smoother,
    simulate,
)

log = logging.getLogger(__name__)

PHI_LIMIT = 0.999
GLOBAL_DYNAMICS = ("irw", "rw")


def _regions_array(regions, n):
    if isinstance(regions, dict):
        missing = [i for i in range(n) if i not in regions]
        if missing:
            raise ValidationError(f"series {missing} have no region")
        r = np.array([regions[i] for i in range(n)], dtype=int)
    else:
        r = np.asarray(regions, dtype=int).reshape(-1)
    if r.size != n:
        raise ValidationError(f"expected {n} region labels, got {r.size}")
    labels = np.unique(r)
    if labels[0] < 1 or not np.array_equal(labels, np.arange(1, labels.size + 1)):
        raise ValidationError("region labels must be 1..R with every region used")
    return r


@dataclass(frozen=True)
class MlDfmSpec:
    """Loadings, factor dynamics and noise variances of the model.

    ``loadings`` is N x (1 + R): column 0 is global, column ``j`` region ``j``.
    ``center`` and ``scale`` map raw data to the scale the model lives on.
    """

    region_of: np.ndarray
    loadings: np.ndarray
    sigma2_xi: float
    phi: np.ndarray
    sigma2_eta: np.ndarray
    sigma2_eps: np.ndarray
    global_dynamics: str = "irw"
    center: np.ndarray = None
    scale: np.ndarray = None
    phi_clipped: tuple = ()

    def __post_init__(self):
        r = np.asarray(self.region_of, dtype=int)
        n = r.size
        r = _regions_array(r, n)
        R = int(r.max())
        L = np.array(self.loadings, dtype=float)
        if L.shape != (n, 1 + R):
            raise ValidationError(f"loadings must be {n}x{1 + R}, got {L.shape}")
        for i in range(n):
            off = [j for j in range(1, R + 1) if j != r[i]]
            if np.any(L[i, off] != 0):
                raise ValidationError(f"series {i} loads outside its region {r[i]}")
        phi = np.array(self.phi, dtype=float).reshape(-1)
        s_eta = np.array(self.sigma2_eta, dtype=float).reshape(-1)
        s_eps = np.array(self.sigma2_eps, dtype=float).reshape(-1)
        if phi.size != R or s_eta.size != R:
            raise ValidationError(f"need {R} AR coefficients and variances")
        if s_eps.size != n:
            raise ValidationError(f"need {n} idiosyncratic variances")
        if np.any(np.abs(phi) >= 1):
            raise ValidationError("AR coefficients must satisfy |phi| < 1")
        if self.sigma2_xi < 0 or np.any(s_eta < 0) or np.any(s_eps < 0):
            raise ValidationError("variances must be non-negative")
        if self.global_dynamics not in GLOBAL_DYNAMICS:
            raise ValidationError(f"global_dynamics must be one of {GLOBAL_DYNAMICS}")
        center = np.zeros(n) if self.center is None else np.array(self.center, dtype=float)
        scale = np.ones(n) if self.scale is None else np.array(self.scale, dtype=float)
        if center.shape != (n,) or scale.shape != (n,) or np.any(scale <= 0):
            raise ValidationError("center/scale must have one positive entry per series")
        for name, v in (("region_of", r), ("loadings", L), ("phi", phi), ("sigma2_eta", s_eta),
                        ("sigma2_eps", s_eps), ("center", center), ("scale", scale)):
            v.setflags(write=False)
            object.__setattr__(self, name, v)
        object.__setattr__(self, "sigma2_xi", float(self.sigma2_xi))
        object.__setattr__(self, "phi_clipped", tuple(int(j) for j in self.phi_clipped))

    @property
    def n_series(self):
        return self.region_of.size

    @property
    def n_regions(self):
        return int(self.region_of.max())

    @property
    def n_states(self):
        return self.n_regions + (2 if self.global_dynamics == "irw" else 1)

    def standardize(self, data):
        return (as_values(data) - self.center) / self.scale

    def to_dict(self):
        return {
            "region_of": self.region_of.tolist(),
            "loadings": self.loadings.tolist(),
            "sigma2_xi": self.sigma2_xi,
            "phi": self.phi.tolist(),
            "sigma2_eta": self.sigma2_eta.tolist(),
            "sigma2_eps": self.sigma2_eps.tolist(),
            "global_dynamics": self.global_dynamics,
            "center": self.center.tolist(),
            "scale": self.scale.tolist(),
            "phi_clipped": list(self.phi_clipped),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


# ---------------------------------------------------------------- estimation

def pc_extract(Y, standardize=True):
    """First principal component of a complete panel.

    Returns ``(factor, loadings)`` with ``Y - mean ~ outer(factor, loadings)``,
    loadings of unit mean square and a positive mean loading. With
    ``standardize`` the series are also scaled to unit variance first.
    """
    X = as_values(Y)
    if np.any(np.isnan(X)):
        raise ValidationError("principal components need a complete panel; fill gaps first")
    T, N = X.shape
    if N < 2:
        raise ValidationError("principal components need at least 2 series")
    X = X - X.mean(axis=0)
    sd = X.std(axis=0)
    flat = np.where(sd <= 1e-12 * max(1.0, float(np.max(np.abs(X)))))[0]
    if flat.size:
        raise ValidationError(f"series {flat.tolist()} have zero variance")
    if standardize:
        X = X / sd
    U, S, Vt = np.linalg.svd(X, full_matrices=False)
    loadings = Vt[0] * np.sqrt(N)
    factor = U[:, 0] * S[0] / np.sqrt(N)
    m = loadings.mean()
    if m < 0 or (m == 0 and loadings[np.flatnonzero(loadings)[0]] < 0):
        loadings, factor = -loadings, -factor
    return factor, loadings


def _ar1_ols(f):
    """OLS of f_t on (1, f_{t-1}); returns (phi, residual variance)."""
    X = np.column_stack([np.ones(f.size - 1), f[:-1]])
    coef, *_ = np.linalg.lstsq(X, f[1:], rcond=None)
    resid = f[1:] - X @ coef
    return float(coef[1]), float(np.mean(resid ** 2))


def two_step_estimate(Y, regions, global_dynamics="irw", standardize=True):
    """Principal-components estimate of the model parameters.

    Parameters
    ----------
    Y : ObservationPanel or (T, N) array, complete
    regions : length-N labels in 1..R, or a dict series index -> label
    global_dynamics : 'irw' or 'rw'
    standardize : centre and scale every series before extraction

    Returns
    -------
    MlDfmSpec
    """
    X = as_values(Y)
    if np.any(np.isnan(X)):
        raise ValidationError("two-step estimation needs a complete panel; fill gaps first")
    T, N = X.shape
    r = _regions_array(regions, N)
    R = int(r.max())
    for j in range(1, R + 1):
        if np.sum(r == j) < 2:
            raise ValidationError(f"region {j} has fewer than 2 series")
    if global_dynamics not in GLOBAL_DYNAMICS:
        raise ValidationError(f"global_dynamics must be one of {GLOBAL_DYNAMICS}")
    center = X.mean(axis=0)
    scale = X.std(axis=0) if standardize else np.ones(N)
    if np.any(scale <= 0):
        raise ValidationError(f"series {np.where(scale <= 0)[0].tolist()} have zero variance")
    Xs = (X - center) / scale

    f_g, p_g = pc_extract(Xs, standardize=False)
    U = Xs - np.outer(f_g, p_g)
    L = np.zeros((N, 1 + R))
    L[:, 0] = p_g
    F_s = np.zeros((T, R))
    for j in range(1, R + 1):
        idx = np.where(r == j)[0]
        f, p = pc_extract(U[:, idx], standardize=False)
        F_s[:, j - 1] = f
        L[idx, j] = p
    resid = U - np.column_stack([F_s[:, r[i] - 1] * L[i, r[i]] for i in range(N)])
    sigma2_eps = resid.var(axis=0)

    phi = np.zeros(R)
    s_eta = np.zeros(R)
    clipped = []
    for j in range(R):
        ph, s2 = _ar1_ols(F_s[:, j])
        if abs(ph) >= PHI_LIMIT:
            log.warning("region %d: AR coefficient %.4f clipped to +-%.3f", j + 1, ph, PHI_LIMIT)
            ph = float(np.clip(ph, -PHI_LIMIT, PHI_LIMIT))
            clipped.append(j + 1)
        phi[j], s_eta[j] = ph, s2
    order = 2 if global_dynamics == "irw" else 1
    sigma2_xi = float(np.var(np.diff(f_g, n=order)))
    return MlDfmSpec(r, L, sigma2_xi, phi, s_eta, sigma2_eps, global_dynamics,
                     center, scale, tuple(clipped))


def assemble_ssm(spec):
    """State space form with state (F_g, [beta,] F_s1..F_sR)."""
    R, N = spec.n_regions, spec.n_series
    irw = spec.global_dynamics == "irw"
    g = 2 if irw else 1
    m = g + R
    Z = np.zeros((N, m))
    Z[:, 0] = spec.loadings[:, 0]
    for i in range(N):
        Z[i, g + spec.region_of[i] - 1] = spec.loadings[i, spec.region_of[i]]
    T = np.zeros((m, m))
    T[0, 0] = 1.0
    Q = np.zeros((m, m))
    if irw:
        T[0, 1] = T[1, 1] = 1.0
        Q[1, 1] = spec.sigma2_xi
    else:
        Q[0, 0] = spec.sigma2_xi
    T[g:, g:] = np.diag(spec.phi)
    Q[g:, g:] = np.diag(spec.sigma2_eta)
    P1 = np.zeros((m, m))
    P1[g:, g:] = np.diag(spec.sigma2_eta / (1 - spec.phi ** 2))
    mask = np.zeros(m, dtype=bool)
    mask[:g] = True
    return SsmSpec(Z=Z, T=T, H=np.diag(spec.sigma2_eps), Q=Q, a1=np.zeros(m), P1=P1,
                   diffuse_mask=mask)


@dataclass
class FactorEstimate:
    """Smoothed factor paths, standard errors and variance shares.

    ``shares`` is N x 3: global, regional and idiosyncratic share of each
    (standardised) series' sample variance.
    """

    global_factor: np.ndarray
    global_se: np.ndarray
    regional: np.ndarray
    regional_se: np.ndarray
    loadings: np.ndarray
    shares: np.ndarray
    slope: np.ndarray = None
    slope_se: np.ndarray = None
    time_index: np.ndarray = None
    names: tuple = field(default=None)

    def factor_table(self):
        """Column name -> path, in output order."""
        cols = {"global": self.global_factor}
        if self.slope is not None:
            cols["slope"] = self.slope
        for j in range(self.regional.shape[1]):
            cols[f"region_{j + 1}"] = self.regional[:, j]
        return cols

    def to_csv(self, path, digits=10):
        cols = self.factor_table()
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["date"] + list(cols))
            for t in range(self.global_factor.size):
                date = str(self.time_index[t]) if self.time_index is not None else str(t + 1)
                w.writerow([date] + [f"{cols[c][t]:.{digits}g}" for c in cols])

    def to_dict(self):
        return {
            "loadings": self.loadings.tolist(),
            "shares": {"global": self.shares[:, 0].tolist(),
                       "regional": self.shares[:, 1].tolist(),
                       "idiosyncratic": self.shares[:, 2].tolist()},
            "names": list(self.names) if self.names is not None else None,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)


def variance_shares(spec, X, f_global, F_regional):
    """Loading^2 x var(factor path) / var(series), idiosyncratic as the rest."""
    var_x = X.var(axis=0)
    var_x = np.where(var_x > 0, var_x, np.nan)
    r = spec.region_of
    g = spec.loadings[:, 0] ** 2 * np.var(f_global) / var_x
    reg_var = np.var(F_regional, axis=0)
    rg = np.array([spec.loadings[i, r[i]] ** 2 * reg_var[r[i] - 1] for i in range(r.size)]) / var_x
    g = np.clip(np.nan_to_num(g), 0.0, 1.0)
    rg = np.clip(np.nan_to_num(rg), 0.0, 1.0)
    # in-sample correlation between factor paths can push g + rg past 1
    total = g + rg
    over = total > 1.0
    g[over] /= total[over]
    rg[over] /= total[over]
    idio = np.clip(1.0 - g - rg, 0.0, 1.0)
    return np.column_stack([g, rg, idio])


def extract_factors(spec, Y):
    """Kalman-smoothed factors of the assembled model on (raw) data ``Y``."""
    X = spec.standardize(Y)
    ssm = assemble_ssm(spec)
    filt = kalman_filter(ssm, X)
    sm = kalman_smoother(ssm, X, filt)
    a, P = sm.smoothed_mean, sm.smoothed_cov
    g = 2 if spec.global_dynamics == "irw" else 1
    se = np.sqrt(np.clip(np.diagonal(P, axis1=1, axis2=2), 0.0, None))
    Xc = np.where(np.isnan(X), np.nanmean(X, axis=0), X)
    shares = variance_shares(spec, Xc, a[:, 0], a[:, g:])
    idx = Y.time_index if isinstance(Y, ObservationPanel) else None
    names = Y.names if isinstance(Y, ObservationPanel) else None
    return FactorEstimate(
        global_factor=a[:, 0], global_se=se[:, 0],
        regional=a[:, g:], regional_se=se[:, g:],
        loadings=np.array(spec.loadings), shares=shares,
        slope=a[:, 1] if g == 2 else None, slope_se=se[:, 1] if g == 2 else None,
        time_index=idx, names=names,
    )


def simulate_mldfm(spec, n, seed=None, slope0=0.0, start="1930-01"):
    """Simulate the model on its standardised scale, then undo the scaling.

    Returns
    -------
    panel : ObservationPanel
    states : (n, m) true state path
    """
    ssm = assemble_ssm(spec)
    a1 = np.zeros(ssm.n_states)
    if spec.global_dynamics == "irw":
        a1[1] = slope0
    ssm = ssm.replace(a1=a1)
    panel, states = simulate(ssm, n, seed=seed, start=start)
    raw = panel.values * spec.scale + spec.center
    return ObservationPanel(raw, panel.time_index), states
