"""
Maximum likelihood estimation of the structural model.

Variances are optimised as log-variances and cross-correlations as
``atanh(rho)``, so every 2x2 block stays PSD without constraints. Blocks
that are zero in the template stay pinned at zero. The data are rescaled
internally so that log-variances start near zero; the reported
log-likelihood is always recomputed on the original data.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .exceptions import NumericalError, ValidationError
from .statespace import LikelihoodKernel, as_values, loglikelihood
from .structural import PARAM_NAMES, FsBsmParams, build_fsbsm, fsbsm_noise

log = logging.getLogger(__name__)

LOGVAR_BOUNDS = (-40.0, 12.0)
ATANH_BOUNDS = (-6.0, 6.0)
BOUNDARY_RATIO = 1e-8
CONVERGED_GNORM_MAX = 1e-3
# log-likelihood units; below this a further Newton step is immaterial
GAIN_TOL = 1e-6
_PENALTY = 1e10
_FTOL = 1e-13


@dataclass
class FitOptions:
    max_iter: int = 500
    gtol: float = 1e-6
    method: str = "L-BFGS-B"
    fallback: str = "Nelder-Mead"
    n_starts: int = 3
    seed: int = 0
    fd_step: float = 1e-5
    standard_errors: bool = False

    def __post_init__(self):
        if self.max_iter < 1 or self.gtol <= 0 or self.n_starts < 1 or self.fd_step <= 0:
            raise ValidationError("FitOptions bounds must be positive")


@dataclass
class FitResult:
    """Outcome of :func:`fit_ml`.

    ``gradient_norm`` is the infinity norm of the finite-difference gradient
    of the per-observation log-likelihood in the unconstrained coordinates,
    with coordinates sitting on a safeguard bound excluded. ``converged``
    means the norm is below the tolerance, below the resolution of the
    finite-difference gradient at the optimum, or small enough that a Newton
    step along it would gain less than ``GAIN_TOL`` in log-likelihood; it is
    never set with a norm above 1e-3.
    """

    params: FsBsmParams
    loglik: float
    n_iter: int
    converged: bool
    gradient_norm: float
    param_standard_errors: dict = None
    history: list = field(default_factory=list)
    starts: list = field(default_factory=list)
    theta: np.ndarray = None


def model_template(trend="full", seasonal="two-group", dim=1, correlated=False):
    """Template whose zero blocks are pinned during estimation.

    trend : 'full' (level+slope noise), 'rw' (level noise only),
        'irw' (slope noise only) or 'deterministic'
    seasonal : 'two-group' or 'deterministic'
    """
    trends = {"full": (1, 1), "rw": (1, 0), "irw": (0, 1), "deterministic": (0, 0)}
    if trend not in trends:
        raise ValidationError(f"unknown trend variant {trend!r}")
    if seasonal not in ("two-group", "deterministic"):
        raise ValidationError(f"unknown seasonal variant {seasonal!r}")
    lv, sl = trends[trend]
    ss = 1 if seasonal == "two-group" else 0
    if dim == 1:
        return FsBsmParams(1.0, lv, sl, ss, ss)
    off = 0.5 if correlated else 0.0

    def blk(on):
        return np.array([[1.0, off], [off, 1.0]]) * on

    return FsBsmParams(blk(1), blk(lv), blk(sl), blk(ss), blk(ss), dim=2)


class _Coords:
    """Mapping between FsBsmParams and the unconstrained vector."""

    def __init__(self, template):
        self.dim = template.dim
        self.entries = []
        for name in PARAM_NAMES:
            B = template.block(name)
            for i in range(self.dim):
                if B[i, i] != 0:
                    self.entries.append((name, "logvar", i))
            if self.dim == 2 and B[0, 1] != 0 and B[0, 0] != 0 and B[1, 1] != 0:
                self.entries.append((name, "atanh", 0))

    def __len__(self):
        return len(self.entries)

    def bounds(self):
        return [LOGVAR_BOUNDS if kind == "logvar" else ATANH_BOUNDS
                for _, kind, _ in self.entries]

    def to_params(self, theta, scale):
        return FsBsmParams(dim=self.dim, **self.blocks(theta, scale))

    def blocks(self, theta, scale):
        """Raw covariance blocks for ``theta`` (PSD by construction)."""
        d = self.dim
        var = {n: np.zeros(d) for n in PARAM_NAMES}
        rho = {n: 0.0 for n in PARAM_NAMES}
        for x, (name, kind, i) in zip(theta, self.entries):
            if kind == "logvar":
                var[name][i] = np.exp(x)
            else:
                rho[name] = np.tanh(x)
        blocks = {}
        for n in PARAM_NAMES:
            sd = np.sqrt(var[n]) * scale
            C = np.eye(d)
            if d == 2:
                C[0, 1] = C[1, 0] = rho[n]
            blocks[n] = C * np.outer(sd, sd)
        return blocks

    def from_params(self, params, scale):
        theta = []
        for name, kind, i in self.entries:
            B = params.block(name) / np.outer(scale, scale)
            if kind == "logvar":
                theta.append(np.log(max(B[i, i], np.exp(LOGVAR_BOUNDS[0]))))
            else:
                denom = np.sqrt(B[0, 0] * B[1, 1])
                r = B[0, 1] / denom if denom > 0 else 0.0
                theta.append(np.arctanh(np.clip(r, -0.999999, 0.999999)))
        return np.array(theta, dtype=float)


def _data_scale(y):
    """Per-series scale: sd of annual differences over sqrt(2)."""
    s = []
    for col in y.T:
        d = col[12:] - col[:-12]
        d = d[~np.isnan(d)]
        if d.size < 2:
            d = np.diff(col[~np.isnan(col)])
        v = np.var(d) / 2.0 if d.size > 1 else 0.0
        if not np.isfinite(v) or v <= 0:
            v = np.nanvar(col)
        s.append(np.sqrt(v) if v > 0 else 1.0)
    return np.array(s)


def fd_gradient(f, x, step=1e-5):
    """Central differences with step ``step * max(1, |x_i|)``."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        h = step * max(1.0, abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def fd_hessian(f, x, step=1e-4):
    x = np.asarray(x, dtype=float)
    k = x.size
    Hm = np.empty((k, k))
    for i in range(k):
        h = step * max(1.0, abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        Hm[i] = (fd_gradient(f, xp, step) - fd_gradient(f, xm, step)) / (2 * h)
    return 0.5 * (Hm + Hm.T)


def _default_starts(coords, n_starts, seed):
    # in scaled units the irregular variance is O(1)
    profiles = [
        {"irregular": 0.5, "level": 1e-2, "slope": 1e-4, "seasonal_I": 2e-3, "seasonal_II": 2e-3},
        {"irregular": 1.0, "level": 1e-6, "slope": 1e-8, "seasonal_I": 1e-6, "seasonal_II": 1e-6},
        {"irregular": 0.25, "level": 1e-1, "slope": 1e-2, "seasonal_I": 5e-2, "seasonal_II": 5e-2},
    ]
    starts = []
    for prof in profiles[:n_starts]:
        starts.append(np.array([np.log(prof[name]) if kind == "logvar" else 0.0
                                for name, kind, _ in coords.entries]))
    rng = np.random.default_rng(seed)
    while len(starts) < n_starts:
        starts.append(np.array([rng.uniform(-14.0, 0.0) if kind == "logvar" else rng.uniform(-0.5, 0.5)
                                for _, kind, _ in coords.entries]))
    return starts


def _free_gradient_norm(g, theta, bounds):
    free = np.ones(g.size, dtype=bool)
    for i, (lo, hi) in enumerate(bounds):
        if (theta[i] <= lo + 1e-8 and g[i] > 0) or (theta[i] >= hi - 1e-8 and g[i] < 0):
            free[i] = False
    return float(np.max(np.abs(g[free]))) if free.any() else 0.0


def _fd_resolution(f, theta, step, n_probe=6):
    """Smallest gradient a central difference can resolve at ``theta``.

    Estimated from the scatter of ``f`` under perturbations far below the
    difference step; the diffuse prior limits the likelihood's precision.
    """
    rng = np.random.default_rng(0)
    base = f(theta)
    dev = [f(theta + 1e-3 * step * rng.standard_normal(theta.size)) - base
           for _ in range(n_probe)]
    h = step * max(1.0, float(np.max(np.abs(theta))))
    return 4.0 * float(np.std(dev)) / h


def _predicted_gain(f, g, theta, bounds, eps=1e-3):
    """Objective decrease a Newton step along the free gradient would buy."""
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    d = np.where(((theta <= lo + 1e-8) & (g > 0)) | ((theta >= hi - 1e-8) & (g < 0)), 0.0, -g)
    norm = np.linalg.norm(d)
    if norm == 0:
        return 0.0
    u = d / norm
    f0 = f(theta)
    curv = (f(theta + eps * u) + f(theta - eps * u) - 2 * f0) / eps ** 2
    slope = float(g @ u)
    if curv <= 0:
        return np.inf
    return slope ** 2 / (2 * curv)


def fit_ml(template, data, opts=None, starts=None):
    """Maximum likelihood fit of the structural model.

    Parameters
    ----------
    template : FsBsmParams
        Zero blocks (or zero off-diagonals) are pinned at zero; the values of
        non-zero entries are ignored.
    data : ObservationPanel or array-like
    opts : FitOptions
    starts : optional list of FsBsmParams used instead of the default starts

    Returns
    -------
    FitResult
        Non-convergence is reported through ``converged=False``.
    """
    opts = opts or FitOptions()
    y = as_values(data)
    if y.shape[1] != template.dim:
        raise ValidationError(f"data has {y.shape[1]} series, template dim is {template.dim}")
    coords = _Coords(template)
    if len(coords) == 0:
        raise ValidationError("template has no free parameters")
    n_obs = int(np.sum(~np.isnan(y)))
    if y.shape[0] < 5 * len(coords):
        raise ValidationError(
            f"series length {y.shape[0]} is shorter than 5 x {len(coords)} parameters")

    scale = _data_scale(y)
    ys = y / scale
    # loglik(y) = loglik(y / scale) - jacobian; the offset depends on which
    # observations the diffuse prior absorbs, so take it from one evaluation
    theta_ref = np.zeros(len(coords))
    jacobian = (loglikelihood(build_fsbsm(coords.to_params(theta_ref, 1.0)), ys)
                - loglikelihood(build_fsbsm(coords.to_params(theta_ref, scale)), y))
    bounds = coords.bounds()

    kernel = LikelihoodKernel(build_fsbsm(template), ys)

    def objective(theta):
        try:
            ll = kernel.loglik(*fsbsm_noise(coords.blocks(theta, 1.0)))
        except (NumericalError, np.linalg.LinAlgError):
            return _PENALTY
        if not np.isfinite(ll):
            return _PENALTY
        return -ll / n_obs

    def grad(theta):
        return fd_gradient(objective, theta, opts.fd_step)

    if starts is None:
        theta0s = _default_starts(coords, opts.n_starts, opts.seed)
    else:
        theta0s = [coords.from_params(p, scale) for p in starts]

    def converged(gnorm, theta):
        if gnorm < opts.gtol:
            return True
        if gnorm >= CONVERGED_GNORM_MAX:
            return False
        if gnorm < _fd_resolution(objective, theta, opts.fd_step):
            return True
        return _predicted_gain(objective, grad(theta), theta, bounds) * n_obs < GAIN_TOL

    runs = []
    for theta0 in theta0s:
        theta0 = np.clip(theta0, [b[0] for b in bounds], [b[1] for b in bounds])
        f0 = objective(theta0)
        history = [-f0 * n_obs - jacobian]

        def record(intermediate_result):
            history.append(-intermediate_result.fun * n_obs - jacobian)

        theta, fval, nit, gnorm = theta0, f0, 0, np.inf
        # one restart clears a stale curvature model, which is the usual
        # reason for stopping short near variance boundaries
        for _ in range(2):
            res = optimize.minimize(
                objective, theta, jac=grad, method=opts.method, bounds=bounds,
                callback=record,
                options={"maxiter": opts.max_iter, "gtol": opts.gtol, "ftol": _FTOL},
            )
            if res.fun <= fval:
                theta, fval = res.x, res.fun
            nit += res.nit
            gnorm = _free_gradient_norm(grad(theta), theta, bounds)
            if converged(gnorm, theta):
                break
        # the derivative-free fallback is for genuine stalls, not for
        # gradients that sit just above the finite-difference resolution
        if gnorm > CONVERGED_GNORM_MAX and opts.fallback:
            log.debug("quasi-Newton stopped at |g|=%.2e (%s); trying %s",
                      gnorm, res.message, opts.fallback)
            res2 = optimize.minimize(
                objective, theta, method=opts.fallback, bounds=bounds,
                options={"maxiter": opts.max_iter * len(coords), "xatol": 1e-8, "fatol": 1e-14},
            )
            if res2.fun < fval:
                theta, fval = res2.x, res2.fun
                nit += res2.nit
                history.append(-fval * n_obs - jacobian)
                gnorm = _free_gradient_norm(grad(theta), theta, bounds)
        runs.append({"theta0": theta0, "loglik0": -f0 * n_obs - jacobian, "theta": theta,
                     "fun": fval, "nit": nit, "gnorm": gnorm, "history": history,
                     "converged": converged(gnorm, theta)})

    best = min(runs, key=lambda r: r["fun"])
    params = coords.to_params(best["theta"], scale)
    loglik = loglikelihood(build_fsbsm(params), y)

    ses = None
    if opts.standard_errors:
        ses = _standard_errors(objective, best["theta"], coords, scale, n_obs)

    return FitResult(
        params=params,
        loglik=float(loglik),
        n_iter=int(best["nit"]),
        converged=bool(best["converged"]),
        gradient_norm=float(best["gnorm"]),
        param_standard_errors=ses,
        history=best["history"],
        starts=[{"loglik_start": r["loglik0"], "loglik_end": float(-r["fun"] * n_obs - jacobian),
                 "converged": bool(r["converged"])} for r in runs],
        theta=best["theta"],
    )


def _standard_errors(objective, theta, coords, scale, n_obs):
    """Delta-method standard errors from the numerical Hessian.

    Entries on a safeguard bound or with a non-positive curvature get NaN.
    """
    Hm = fd_hessian(lambda th: objective(th) * n_obs, theta)
    try:
        cov = np.linalg.pinv(Hm, hermitian=True)
    except np.linalg.LinAlgError:
        cov = np.full_like(Hm, np.nan)
    var_theta = np.diag(cov)
    out = {}
    for k, (name, kind, i) in enumerate(coords.entries):
        v = var_theta[k]
        se_theta = np.sqrt(v) if v > 0 else np.nan
        if kind == "logvar":
            if theta[k] <= LOGVAR_BOUNDS[0] + 1e-6:
                se_theta = np.nan
            value = np.exp(theta[k]) * scale[i] ** 2
            key = name if coords.dim == 1 else f"{name}[{i}]"
            out[key] = float(value * se_theta)
        else:
            out[f"{name}[rho]"] = float((1 - np.tanh(theta[k]) ** 2) * se_theta)
    return out


def boundary_zeroed(params, ratio=BOUNDARY_RATIO):
    """Copy of ``params`` with variances below ``ratio * irregular`` set to 0."""
    ref = np.diag(params.irregular)
    blocks = {}
    for name in PARAM_NAMES:
        B = params.block(name).copy()
        if name != "irregular":
            for i in range(params.dim):
                if B[i, i] < ratio * ref[i]:
                    B[i, :] = 0.0
                    B[:, i] = 0.0
        blocks[name] = B
    return FsBsmParams(dim=params.dim, **blocks)
