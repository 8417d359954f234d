"""Compiled Kalman filter recursion.

Kept separate from :mod:`interval_ucm.statespace` so the pure-Python layer
owns validation and the compiled layer only sees clean float arrays.

The transition matrix is passed in compressed-row form because the
structural models are block diagonal with a handful of non-zeros per row;
``T P T'`` then costs O(m^2 nnz/m) instead of O(m^3).
"""

import numpy as np
from numba import njit

LOG_2PI = np.log(2.0 * np.pi)

# status codes returned by filter_core
OK = 0
SINGULAR_F = 1
NOT_PD_F = 2


def to_csr(T):
    m = T.shape[0]
    indptr = np.zeros(m + 1, dtype=np.int64)
    indices = []
    data = []
    for i in range(m):
        nz = np.nonzero(T[i])[0]
        indices.extend(nz)
        data.extend(T[i, nz])
        indptr[i + 1] = len(indices)
    return indptr, np.array(indices, dtype=np.int64), np.array(data, dtype=np.float64)


@njit(cache=True)
def _predict(indptr, indices, data, a_f, P_f, Q, a_out, P_out, tmp):
    # a_out = T a_f, P_out = T P_f T' + Q; rows are accumulated so the inner
    # loops run over contiguous memory
    m = a_f.shape[0]
    for i in range(m):
        s = 0.0
        for q in range(indptr[i], indptr[i + 1]):
            s += data[q] * a_f[indices[q]]
        a_out[i] = s
    # tmp = (T P_f)' = P_f T' by symmetry of P_f, stored row-wise as T P_f
    for i in range(m):
        for j in range(m):
            tmp[i, j] = 0.0
        for q in range(indptr[i], indptr[i + 1]):
            d = data[q]
            k = indices[q]
            for j in range(m):
                tmp[i, j] += d * P_f[k, j]
    # P_out = T tmp' : row i is sum_q T[i, k_q] * (column k_q of tmp')
    #       = sum_q T[i, k_q] * tmp[:, k_q]; use symmetry of the result
    #       and fill through W = T tmp' computed as rows of T against tmp rows
    for i in range(m):
        for j in range(m):
            P_out[i, j] = Q[i, j]
    for i in range(m):
        for q in range(indptr[i], indptr[i + 1]):
            d = data[q]
            k = indices[q]
            for j in range(m):
                # (T P T')[j, i] = sum_k T[i, k] (T P)[j, k]
                P_out[j, i] += d * tmp[j, k]
    for i in range(m):
        for j in range(i + 1, m):
            x = 0.5 * (P_out[i, j] + P_out[j, i])
            P_out[i, j] = x
            P_out[j, i] = x


@njit(cache=True)
def filter_core(Z, indptr, indices, data, H, Q, a1, P1, y, n_skip, cond_limit, store=True):
    """Run the filter over ``y`` (n x p, NaN = missing).

    The first ``n_skip`` scalar observations (counted in time order) do not
    contribute to the log-likelihood; a time step is skipped as a whole if
    it starts before that count is reached. With ``store=False`` only the
    log-likelihood is meaningful and the per-step arrays have length 1.

    Returns
    -------
    a_pred, P_pred, a_filt, P_filt, v, F, loglik, n_steps_skipped,
    n_scalar_used, status, bad_t
    """
    n, p = y.shape
    m = a1.shape[0]
    ns = n if store else 1
    a_pred = np.empty((ns, m))
    P_pred = np.empty((ns, m, m))
    a_filt = np.empty((ns, m))
    P_filt = np.empty((ns, m, m))
    v_out = np.full((ns, p), np.nan)
    F_out = np.full((ns, p, p), np.nan)

    a = a1.copy()
    P = 0.5 * (P1 + P1.T)
    a_f = np.empty(m)
    P_f = np.empty((m, m))
    A = np.empty((m, m))
    tmp = np.empty((m, m))
    loglik = 0.0
    seen = 0
    n_steps_skipped = 0
    n_used = 0
    obs = np.empty(p, dtype=np.int64)
    # per-step work arrays, sized for a fully observed step
    Zt = np.empty((p, m))
    Ht = np.empty((p, p))
    vt = np.empty(p)
    u = np.empty((m, p))
    Ft = np.empty((p, p))
    K = np.empty((m, p))
    B = np.empty((m, p))
    KH = np.empty((m, p))
    F1 = np.empty((1, 1))

    for t in range(n):
        if store:
            a_pred[t] = a
            P_pred[t] = P

        k = 0
        for i in range(p):
            if not np.isnan(y[t, i]):
                obs[k] = i
                k += 1

        degenerate = True
        if k > 0:
            for r in range(k):
                for c in range(m):
                    Zt[r, c] = Z[obs[r], c]
                for c in range(k):
                    Ht[r, c] = H[obs[r], obs[c]]
            for r in range(k):
                s = y[t, obs[r]]
                for c in range(m):
                    s -= Zt[r, c] * a[c]
                vt[r] = s
            # u = P Zt'
            for i in range(m):
                for r in range(k):
                    s = 0.0
                    for c in range(m):
                        s += P[i, c] * Zt[r, c]
                    u[i, r] = s
            fmax = 0.0
            for r in range(k):
                for c in range(k):
                    s = Ht[r, c]
                    for i in range(m):
                        s += Zt[r, i] * u[i, c]
                    Ft[r, c] = s
            for r in range(k):
                for c in range(r + 1, k):
                    x = 0.5 * (Ft[r, c] + Ft[c, r])
                    Ft[r, c] = x
                    Ft[c, r] = x
                for c in range(k):
                    if abs(Ft[r, c]) > fmax:
                        fmax = abs(Ft[r, c])
            degenerate = fmax <= 0.0

        if degenerate:
            # nothing observed, or observation fully determined by an exactly known state
            for i in range(m):
                a_f[i] = a[i]
                for j in range(m):
                    P_f[i, j] = P[i, j]
        else:
            logdet = 0.0
            if k == 1:
                Finv = F1
                f = Ft[0, 0]
                if f <= 0.0:
                    status = NOT_PD_F if f < 0.0 else SINGULAR_F
                    return (a_pred, P_pred, a_filt, P_filt, v_out, F_out,
                            loglik, n_steps_skipped, n_used, status, t)
                Finv[0, 0] = 1.0 / f
                logdet = np.log(f)
            else:
                Fk = Ft[:k, :k].copy()
                lam = np.linalg.eigvalsh(Fk)
                lmin = lam[0]
                lmax = lam[-1]
                if lmin <= 0.0:
                    status = SINGULAR_F
                    if lmin < -1e-12 * max(1.0, abs(lmax)):
                        status = NOT_PD_F
                    return (a_pred, P_pred, a_filt, P_filt, v_out, F_out,
                            loglik, n_steps_skipped, n_used, status, t)
                if lmax / lmin > cond_limit:
                    return (a_pred, P_pred, a_filt, P_filt, v_out, F_out,
                            loglik, n_steps_skipped, n_used, SINGULAR_F, t)
                Finv = np.linalg.inv(Fk)
                for r in range(k):
                    for c in range(r + 1, k):
                        x = 0.5 * (Finv[r, c] + Finv[c, r])
                        Finv[r, c] = x
                        Finv[c, r] = x
                for r in range(k):
                    logdet += np.log(lam[r])

            # K = u Finv
            for i in range(m):
                for c in range(k):
                    s = 0.0
                    for r in range(k):
                        s += u[i, r] * Finv[r, c]
                    K[i, c] = s
            for i in range(m):
                s = a[i]
                for r in range(k):
                    s += K[i, r] * vt[r]
                a_f[i] = s
            # Joseph form (I - K Zt) P (I - K Zt)' + K Ht K', using Zt P = u'
            for i in range(m):
                for j in range(m):
                    s = P[i, j]
                    for r in range(k):
                        s -= K[i, r] * u[j, r]
                    A[i, j] = s
            for i in range(m):
                for r in range(k):
                    s = 0.0
                    for c in range(m):
                        s += A[i, c] * Zt[r, c]
                    B[i, r] = s
            for i in range(m):
                for c in range(k):
                    s = 0.0
                    for r in range(k):
                        s += K[i, r] * Ht[r, c]
                    KH[i, c] = s
            for i in range(m):
                for j in range(m):
                    s = A[i, j]
                    for r in range(k):
                        s += -B[i, r] * K[j, r] + KH[i, r] * K[j, r]
                    P_f[i, j] = s
            for i in range(m):
                for j in range(i + 1, m):
                    x = 0.5 * (P_f[i, j] + P_f[j, i])
                    P_f[i, j] = x
                    P_f[j, i] = x

            if store:
                for r in range(k):
                    v_out[t, obs[r]] = vt[r]
                    for c in range(k):
                        F_out[t, obs[r], obs[c]] = Ft[r, c]

            if seen >= n_skip:
                quad = 0.0
                for r in range(k):
                    for c in range(k):
                        quad += vt[r] * Finv[r, c] * vt[c]
                loglik += -0.5 * (k * LOG_2PI + logdet + quad)
                n_used += k
            else:
                n_steps_skipped += 1
            seen += k

        if store:
            a_filt[t] = a_f
            P_filt[t] = P_f
        _predict(indptr, indices, data, a_f, P_f, Q, a, P, tmp)

    return (a_pred, P_pred, a_filt, P_filt, v_out, F_out,
            loglik, n_steps_skipped, n_used, OK, -1)


@njit(cache=True)
def augmented_core(Z, indptr, indices, data, H, Q, a1, P1, y, diffuse_idx, cond_limit):
    """Whitened innovations and diffuse-state regressors in one pass.

    ``a1``/``P1`` must already have the diffuse entries removed. Column 0 of
    the mean recursion carries the data, column 1 + k the response to a unit
    initial value of diffuse state ``diffuse_idx[k]`` with zero data, so the
    innovations for initial value ``delta`` are ``v - X delta``.

    Returns
    -------
    v : (n_rows,) whitened innovations with delta = 0
    X : (n_rows, d) whitened regressors
    status, bad_t
    """
    n, p = y.shape
    m = a1.shape[0]
    d = diffuse_idx.shape[0]
    c = d + 1
    A = np.zeros((m, c))
    A[:, 0] = a1
    for k in range(d):
        A[diffuse_idx[k], k + 1] = 1.0
    P = 0.5 * (P1 + P1.T)
    A_next = np.empty((m, c))
    P_f = np.empty((m, m))
    a_dummy = np.zeros(m)
    a_out = np.empty(m)
    tmp = np.empty((m, m))
    v_rows = np.empty(n * p)
    X_rows = np.empty((n * p, d))
    r = 0
    obs = np.empty(p, dtype=np.int64)
    for t in range(n):
        k = 0
        for i in range(p):
            if not np.isnan(y[t, i]):
                obs[k] = i
                k += 1
        if k > 0:
            Zt = np.empty((k, m))
            Ht = np.empty((k, k))
            for a in range(k):
                Zt[a] = Z[obs[a]]
                for b in range(k):
                    Ht[a, b] = H[obs[a], obs[b]]
            U = P @ Zt.T
            F = Zt @ U + Ht
            F = 0.5 * (F + F.T)
            if np.max(np.abs(F)) > 0.0:
                lam = np.linalg.eigvalsh(F)
                if lam[0] <= 0.0 or lam[-1] / lam[0] > cond_limit:
                    return v_rows[:r], X_rows[:r], SINGULAR_F, t
                V = -(Zt @ A)
                for a in range(k):
                    V[a, 0] += y[t, obs[a]]
                L = np.linalg.cholesky(F)
                W = np.linalg.solve(L, V)
                for a in range(k):
                    v_rows[r] = W[a, 0]
                    for j in range(d):
                        X_rows[r, j] = -W[a, j + 1]
                    r += 1
                Finv = np.linalg.inv(F)
                K = U @ Finv
                A = A + K @ V
                IKZ = np.eye(m) - K @ Zt
                P = IKZ @ P @ IKZ.T + K @ Ht @ K.T
                P = 0.5 * (P + P.T)
        # A = T A via the sparse rows
        for i in range(m):
            for j in range(c):
                A_next[i, j] = 0.0
            for q in range(indptr[i], indptr[i + 1]):
                for j in range(c):
                    A_next[i, j] += data[q] * A[indices[q], j]
        A[:, :] = A_next
        P_f[:, :] = P
        _predict(indptr, indices, data, a_dummy, P_f, Q, a_out, P, tmp)
    return v_rows[:r], X_rows[:r], OK, -1
