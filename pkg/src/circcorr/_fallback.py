"""Pure-Python/numpy versions of the compiled kernels in ``_kernels.pyx``."""

import numpy as np

OVERFLOW_BOUND = 700.0


def _rinv_row(loglam, costab):
    return costab @ np.exp(-loglam) / loglam.size


def log_posterior(x, C, costab, scat, n, c_exp):
    x = np.asarray(x, dtype=float)
    d, p = C.shape
    theta, beta = x[:d], x[d:]
    if np.any(np.abs(theta) > OVERFLOW_BOUND / p):
        return -np.inf
    loglam = theta @ C
    rho = _rinv_row(loglam, costab)
    idx = (np.arange(p)[None, :] - np.arange(p)[:, None]) % p
    ainv = np.exp(-beta)
    quad = np.sum(rho[idx] * scat * np.outer(ainv, ainv))
    lp = -n * beta.sum() - 0.5 * quad
    if c_exp != 0.0:
        m_idx = (np.arange(p)[:, None] - np.arange(p)[None, :]) % p  # l for (m, k)
        mu = np.exp(loglam[None, :] - loglam[m_idx]).sum(axis=1) / p
        lp += 0.5 * c_exp * np.log1p(mu).sum()
    return float(lp)


def rwm_run(x0, lp0, chol, normals, uniforms, C, costab, scat, n, c_exp):
    cur = np.array(x0, dtype=float)
    lp = float(lp0)
    steps = normals @ np.asarray(chol).T
    out = np.empty((normals.shape[0], cur.size))
    lps = np.empty(normals.shape[0])
    n_accept = 0
    for t in range(normals.shape[0]):
        prop = cur + steps[t]
        lpp = log_posterior(prop, C, costab, scat, n, c_exp)
        if np.log(uniforms[t]) < lpp - lp:
            cur, lp = prop, lpp
            n_accept += 1
        out[t] = cur
        lps[t] = lp
    return out, lps, n_accept


def loglik_matrix(Y, theta_draws, beta_draws, C, costab):
    Y = np.asarray(Y, dtype=float)
    p = C.shape[1]
    loglam = np.asarray(theta_draws) @ C  # (M, p)
    rho = np.exp(-loglam) @ costab.T / p  # (M, p); costab is symmetric
    idx = (np.arange(p)[None, :] - np.arange(p)[:, None]) % p
    rinv = rho[:, idx]  # (M, p, p)
    beta = np.asarray(beta_draws)
    z = Y[None, :, :] * np.exp(-beta)[:, None, :]
    quad = np.einsum("myi,mij,myj->my", z, rinv, z)
    return -0.5 * p * np.log(2 * np.pi) - beta.sum(axis=1)[:, None] - 0.5 * quad


def mixture_logpdf(Y, theta_draws, beta_draws, C, costab, log_weights):
    from scipy.special import logsumexp

    ll = loglik_matrix(Y, theta_draws, beta_draws, C, costab)
    lw = np.atleast_2d(log_weights)
    return np.stack([logsumexp(ll + w[:, None], axis=0) for w in lw])
