"""Power-of-Jeffreys priors and the Laplace-Beltrami operator on theta-only functions.

All priors are improper and handled through unnormalized log densities. A
prior is stored by its Jeffreys exponent ``c`` (pi = pi_J^c); the other
conventions in use are ``t`` (c = 2t + 1), ``gamma`` (c = 4 gamma + 1) and
``a`` (c = a).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .families import ModelFamily, eval_spectrum
from .fisher import g_theta, log_det_g_beta, log_det_g_beta_derivatives

FD_STEP = 1e-4


@dataclass(frozen=True)
class PriorSpec:
    c: float

    @classmethod
    def jeffreys(cls) -> "PriorSpec":
        return cls(1.0)

    @classmethod
    def uniform(cls) -> "PriorSpec":
        return cls(0.0)

    @classmethod
    def from_t(cls, t: float) -> "PriorSpec":
        return cls(2.0 * t + 1.0)

    @classmethod
    def from_gamma(cls, gamma: float) -> "PriorSpec":
        return cls(4.0 * gamma + 1.0)

    @classmethod
    def from_a(cls, a: float) -> "PriorSpec":
        return cls(float(a))

    @property
    def t(self) -> float:
        return (self.c - 1.0) / 2.0

    @property
    def gamma(self) -> float:
        return (self.c - 1.0) / 4.0

    @property
    def a(self) -> float:
        return self.c

    @property
    def kind(self) -> str:
        if self.c == 1.0:
            return "jeffreys"
        if self.c == 0.0:
            return "uniform"
        return "jeffreys_power"

    @property
    def label(self) -> str:
        return self.kind if self.kind != "jeffreys_power" else f"jeffreys^{self.c:g}"


def log_prior(prior: PriorSpec, fam: ModelFamily, theta, beta=None) -> float:
    """Unnormalized log density w.r.t. (theta, beta); ``beta`` is accepted but never read."""
    if prior.c == 0.0:
        fam.check_theta(theta)
        return 0.0
    return 0.5 * prior.c * log_det_g_beta(eval_spectrum(fam, theta))


def _fd_grad_hess(fn: Callable[[np.ndarray], float], x: np.ndarray, h: float):
    n = x.size
    f0 = fn(x)
    grad = np.empty(n)
    hess = np.empty((n, n))
    e = np.eye(n) * h
    for i in range(n):
        fp, fm = fn(x + e[i]), fn(x - e[i])
        grad[i] = (fp - fm) / (2 * h)
        hess[i, i] = (fp - 2 * f0 + fm) / h**2
        for j in range(i):
            hess[i, j] = hess[j, i] = (
                fn(x + e[i] + e[j]) - fn(x + e[i] - e[j]) - fn(x - e[i] + e[j]) + fn(x - e[i] - e[j])
            ) / (4 * h**2)
    return grad, hess


def laplace_beltrami_theta(fam: ModelFamily, log_f: Callable, theta, h: float = FD_STEP) -> float:
    """``f^{-1} Delta f`` for a positive function ``f`` of theta alone.

    ``log_f`` maps a theta vector to ``log f``. Its derivatives are taken by
    central differences; the log-volume term uses the analytic gradient of
    log|g_beta| (log|g| differs from it by a constant because g_theta is constant).
    """
    theta = fam.check_theta(theta)
    ginv = np.linalg.inv(g_theta(fam))
    grad, hess = _fd_grad_hess(lambda x: float(log_f(x)), theta, h)
    _, vol_grad, _ = log_det_g_beta_derivatives(fam, theta)
    return float(np.sum(ginv * (hess + np.outer(grad, grad) + 0.5 * np.outer(vol_grad, grad))))


def f_inv_laplacian_power(fam: ModelFamily, theta, exponent: float) -> float:
    """Analytic ``f^{-1} Delta f`` for ``f = |g_beta|^exponent``.

    Equals ``e tr(g^-1 H) + (e^2 + e/2) G' g^-1 G`` with G, H the gradient and
    Hessian of log|g_beta|.
    """
    _, grad, hess = log_det_g_beta_derivatives(fam, theta)
    ginv = np.linalg.inv(g_theta(fam))
    e = exponent
    return float(e * np.sum(ginv * hess) + (e * e + 0.5 * e) * grad @ ginv @ grad)


def ratio_exponent(numerator: PriorSpec, denominator: PriorSpec, sqrt: bool) -> float:
    """Exponent e with ``(pi_num / pi_den)^{1/2 or 1} = |g_beta|^e`` (up to a constant)."""
    e = 0.5 * (numerator.c - denominator.c)
    return 0.5 * e if sqrt else e


@dataclass(frozen=True)
class SuperharmonicReport:
    points: np.ndarray  # (N, d)
    values: np.ndarray  # f^{-1} Delta f at each point
    exponent: float
    sqrt_convention: bool

    @property
    def max_value(self) -> float:
        return float(self.values.max())

    @property
    def violations(self) -> np.ndarray:
        """Grid points where ``f^{-1} Delta f`` is not strictly negative."""
        return self.points[self.values >= 0]

    @property
    def superharmonic(self) -> bool:
        return bool(np.all(self.values < 0))


def check_superharmonic(
    fam: ModelFamily,
    prior_numerator: PriorSpec,
    prior_denominator: PriorSpec,
    grid,
    sqrt: bool = True,
) -> SuperharmonicReport:
    """Evaluate ``f^{-1} Delta f`` on a grid for f = (pi_num / pi_den)^{1/2} (or the plain ratio).

    ``sqrt=True`` is the convention entering the risk expansion; ``sqrt=False``
    is the plain ratio used for the superharmonic-prior condition.
    """
    pts = np.asarray(grid, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None] if fam.d == 1 else pts[None, :]
    if pts.shape[0] == 0:
        raise ValueError("grid must be nonempty")
    e = ratio_exponent(prior_numerator, prior_denominator, sqrt)
    values = np.array([f_inv_laplacian_power(fam, x, e) for x in pts])
    return SuperharmonicReport(pts, values, e, sqrt)
