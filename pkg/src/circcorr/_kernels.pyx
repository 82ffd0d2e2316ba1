# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops for the Monte-Carlo harness.

Must stay numerically equivalent to ``_fallback.py``; both are exercised by
the test suite.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, fabs, INFINITY, M_PI

cnp.import_array()

cdef double OVERFLOW_BOUND = 700.0


cdef double _logpost(const double[::1] x, int d, int p,
                     const double[:, ::1] C, const double[:, ::1] costab,
                     const double[:, ::1] scat, double n, double c_exp,
                     double[::1] loglam, double[::1] rho) noexcept nogil:
    cdef int i, j, k, s, m
    cdef double acc, quad, sumbeta, mu_m, lp
    for i in range(d):
        if fabs(x[i]) > OVERFLOW_BOUND / p:
            return -INFINITY
    for k in range(p):
        acc = 0.0
        for i in range(d):
            acc += x[i] * C[i, k]
        loglam[k] = acc
    for s in range(p):
        acc = 0.0
        for k in range(p):
            acc += exp(-loglam[k]) * costab[s, k]
        rho[s] = acc / p
    quad = 0.0
    sumbeta = 0.0
    for i in range(p):
        sumbeta += x[d + i]
        for j in range(p):
            s = j - i
            if s < 0:
                s += p
            quad += rho[s] * scat[i, j] * exp(-x[d + i] - x[d + j])
    lp = -n * sumbeta - 0.5 * quad
    if c_exp != 0.0:
        acc = 0.0
        for m in range(p):
            mu_m = 0.0
            for k in range(p):
                s = m - k
                if s < 0:
                    s += p
                mu_m += exp(loglam[k] - loglam[s])
            acc += log(1.0 + mu_m / p)
        lp += 0.5 * c_exp * acc
    return lp


def log_posterior(x, C, costab, scat, double n, double c_exp):
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[:, ::1] Cv = np.ascontiguousarray(C, dtype=np.float64)
    cdef int d = Cv.shape[0]
    cdef int p = Cv.shape[1]
    cdef double[::1] loglam = np.empty(p)
    cdef double[::1] rho = np.empty(p)
    return _logpost(xv, d, p, Cv, np.ascontiguousarray(costab, dtype=np.float64),
                    np.ascontiguousarray(scat, dtype=np.float64), n, c_exp, loglam, rho)


def rwm_run(x0, double lp0, chol, normals, uniforms, C, costab, scat, double n, double c_exp):
    """Random-walk Metropolis with proposal ``x + chol @ z``; returns (chain, logpost, n_accept)."""
    cdef const double[:, ::1] Cv = np.ascontiguousarray(C, dtype=np.float64)
    cdef const double[:, ::1] cost = np.ascontiguousarray(costab, dtype=np.float64)
    cdef const double[:, ::1] sc = np.ascontiguousarray(scat, dtype=np.float64)
    cdef const double[:, ::1] L = np.ascontiguousarray(chol, dtype=np.float64)
    cdef const double[:, ::1] Z = np.ascontiguousarray(normals, dtype=np.float64)
    cdef const double[::1] U = np.ascontiguousarray(uniforms, dtype=np.float64)
    cdef int d = Cv.shape[0]
    cdef int p = Cv.shape[1]
    cdef int dim = d + p
    cdef Py_ssize_t nsteps = Z.shape[0]
    cdef double[::1] cur = np.array(x0, dtype=np.float64)
    cdef double[::1] prop = np.empty(dim)
    cdef double[::1] loglam = np.empty(p)
    cdef double[::1] rho = np.empty(p)
    out = np.empty((nsteps, dim))
    lps = np.empty(nsteps)
    cdef double[:, ::1] outv = out
    cdef double[::1] lpv = lps
    cdef double lp = lp0, lpp, acc
    cdef Py_ssize_t t
    cdef int i, j
    cdef long n_accept = 0
    with nogil:
        for t in range(nsteps):
            for i in range(dim):
                acc = cur[i]
                for j in range(i + 1):
                    acc += L[i, j] * Z[t, j]
                prop[i] = acc
            lpp = _logpost(prop, d, p, Cv, cost, sc, n, c_exp, loglam, rho)
            if log(U[t]) < lpp - lp:
                for i in range(dim):
                    cur[i] = prop[i]
                lp = lpp
                n_accept += 1
            for i in range(dim):
                outv[t, i] = cur[i]
            lpv[t] = lp
    return out, lps, n_accept


def loglik_matrix(Y, theta_draws, beta_draws, C, costab):
    """``out[m, y] = log N(Y[y]; 0, Sigma(theta_m, beta_m))``."""
    cdef const double[:, ::1] Yv = np.ascontiguousarray(Y, dtype=np.float64)
    cdef const double[:, ::1] Th = np.ascontiguousarray(theta_draws, dtype=np.float64)
    cdef const double[:, ::1] Be = np.ascontiguousarray(beta_draws, dtype=np.float64)
    cdef const double[:, ::1] Cv = np.ascontiguousarray(C, dtype=np.float64)
    cdef const double[:, ::1] cost = np.ascontiguousarray(costab, dtype=np.float64)
    cdef int d = Cv.shape[0]
    cdef int p = Cv.shape[1]
    cdef Py_ssize_t M = Th.shape[0]
    cdef Py_ssize_t Ny = Yv.shape[0]
    out = np.empty((M, Ny))
    cdef double[:, ::1] ov = out
    cdef double[::1] loglam = np.empty(p)
    cdef double[::1] rho = np.empty(p)
    cdef double[::1] ainv = np.empty(p)
    cdef double[::1] z = np.empty(p)
    cdef double const0 = -0.5 * p * log(2.0 * M_PI)
    cdef double acc, quad, sumbeta, cross
    cdef Py_ssize_t m, y
    cdef int i, k, s, j
    with nogil:
        for m in range(M):
            sumbeta = 0.0
            for k in range(p):
                acc = 0.0
                for i in range(d):
                    acc += Th[m, i] * Cv[i, k]
                loglam[k] = acc
                ainv[k] = exp(-Be[m, k])
                sumbeta += Be[m, k]
            for s in range(p):
                acc = 0.0
                for k in range(p):
                    acc += exp(-loglam[k]) * cost[s, k]
                rho[s] = acc / p
            for y in range(Ny):
                for i in range(p):
                    z[i] = Yv[y, i] * ainv[i]
                quad = 0.0
                for s in range(p):
                    cross = 0.0
                    for i in range(p):
                        j = i + s
                        if j >= p:
                            j -= p
                        cross += z[i] * z[j]
                    quad += rho[s] * cross
                ov[m, y] = const0 - sumbeta - 0.5 * quad
    return out


def mixture_logpdf(Y, theta_draws, beta_draws, C, costab, log_weights):
    """``out[k, y] = log sum_m exp(log_weights[k, m]) N(Y[y]; 0, Sigma_m)``.

    Rows of ``log_weights`` must already be normalized.
    """
    cdef const double[:, ::1] Yv = np.ascontiguousarray(Y, dtype=np.float64)
    cdef const double[:, ::1] Th = np.ascontiguousarray(theta_draws, dtype=np.float64)
    cdef const double[:, ::1] Be = np.ascontiguousarray(beta_draws, dtype=np.float64)
    cdef const double[:, ::1] Cv = np.ascontiguousarray(C, dtype=np.float64)
    cdef const double[:, ::1] cost = np.ascontiguousarray(costab, dtype=np.float64)
    cdef const double[:, ::1] LW = np.ascontiguousarray(np.atleast_2d(log_weights), dtype=np.float64)
    cdef int d = Cv.shape[0]
    cdef int p = Cv.shape[1]
    cdef Py_ssize_t M = Th.shape[0]
    cdef Py_ssize_t Ny = Yv.shape[0]
    cdef Py_ssize_t K = LW.shape[0]
    out = np.empty((K, Ny))
    cdef double[:, ::1] ov = out
    rho_a = np.empty((M, p))
    ainv_a = np.empty((M, p))
    base_a = np.empty(M)
    cdef double[:, ::1] rho = rho_a
    cdef double[:, ::1] ainv = ainv_a
    cdef double[::1] base = base_a
    cdef double[::1] loglam = np.empty(p)
    cdef double[::1] z = np.empty(p)
    cdef double[::1] ll = np.empty(M)
    lw_arr = np.asarray(LW)
    wmax_a = lw_arr.max(axis=1)
    wexp_a = np.exp(lw_arr - wmax_a[:, None])
    cdef const double[::1] wmax = wmax_a
    cdef const double[:, ::1] wexp = wexp_a
    cdef double const0 = -0.5 * p * log(2.0 * M_PI)
    cdef double acc, quad, sumbeta, cross, mx, tot
    cdef Py_ssize_t m, y, kk
    cdef int i, k, s, j
    with nogil:
        for m in range(M):
            sumbeta = 0.0
            for k in range(p):
                acc = 0.0
                for i in range(d):
                    acc += Th[m, i] * Cv[i, k]
                loglam[k] = acc
                ainv[m, k] = exp(-Be[m, k])
                sumbeta += Be[m, k]
            for s in range(p):
                acc = 0.0
                for k in range(p):
                    acc += exp(-loglam[k]) * cost[s, k]
                rho[m, s] = acc / p
            base[m] = const0 - sumbeta
        for y in range(Ny):
            for m in range(M):
                for i in range(p):
                    z[i] = Yv[y, i] * ainv[m, i]
                quad = 0.0
                for s in range(p):
                    cross = 0.0
                    for i in range(p):
                        j = i + s
                        if j >= p:
                            j -= p
                        cross += z[i] * z[j]
                    quad += rho[m, s] * cross
                ll[m] = base[m] - 0.5 * quad
            # one exp per (m, y): weights enter as precomputed factors
            mx = -INFINITY
            for m in range(M):
                if ll[m] > mx:
                    mx = ll[m]
            for m in range(M):
                ll[m] = exp(ll[m] - mx)
            for kk in range(K):
                tot = 0.0
                for m in range(M):
                    tot += ll[m] * wexp[kk, m]
                ov[kk, y] = mx + wmax[kk] + log(tot)
    return out
