"""Leading-order KL risk difference between the Jeffreys predictive and a power prior.

For a prior pi = pi_J^c the difference E[D(p; p_J)] - E[D(p; p_c)] is
``-(2/n^2) f^{-1} Delta f + o(n^-2)`` with ``f = (pi / pi_J)^{1/2} = |g_beta|^{(c-1)/4}``.
Only the 1/n^2 term is computed here.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .families import ModelFamily, eval_spectrum, make_family
from .fisher import g_theta, log_det_g_beta, log_det_g_beta_derivatives
from .priors import PriorSpec, f_inv_laplacian_power, laplace_beltrami_theta

CSV_COLUMNS = ("model", "p", "n", "gamma", "theta", "risk_diff")
STANDARD_P = (2, 3, 10)
STANDARD_GAMMA = (-0.5, -0.25, -0.01)
STANDARD_N = 100
STANDARD_GRID = (-6.0, 6.0, 241)


@dataclass(frozen=True)
class RiskCurvePoint:
    model: str
    p: int
    n: int
    gamma: float
    theta: float | tuple
    risk_diff: float


def asymptotic_risk_diff(fam: ModelFamily, prior: PriorSpec, theta, n: int, method: str = "analytic") -> float:
    """Leading 1/n^2 term of risk(pi_J) - risk(prior) at ``theta``.

    ``method="analytic"`` uses exact derivatives of log|g_beta|; ``"fd"`` runs the
    generic three-term Laplacian with finite-difference derivatives of log f.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    e = 0.25 * (prior.c - 1.0)
    if e == 0.0:
        return 0.0
    if method == "analytic":
        lap = f_inv_laplacian_power(fam, theta, e)
    elif method == "fd":
        lap = laplace_beltrami_theta(fam, lambda x: e * log_det_g_beta(eval_spectrum(fam, x)), theta)
    else:
        raise ValueError(f"unknown method {method!r}")
    return -2.0 / n**2 * lap


def _sech2_tanh(x):
    # sech^2 and tanh without overflow for any finite x
    ax = np.abs(x)
    e = np.exp(-2.0 * ax)
    return 4.0 * e / (1.0 + e) ** 2, np.sign(x) * (1.0 - e) / (1.0 + e)


def exchangeable_log_det_derivatives(p: int, theta):
    """First and second theta-derivatives of log|g| for the exchangeable model.

    Algebraically ``(p-1) 4SC / (4S^2/p + 2)`` and
    ``2p(p-1)((C^2+S^2)(4S^2/p+2) - 8S^2C^2/p) / (4S^2/p+2)^2`` with
    S = sinh(p theta / 2), C = cosh(p theta / 2); both are divided through by C^4
    here so large |p theta| cannot overflow.
    """
    sech2, tanh = _sech2_tanh(0.5 * p * np.asarray(theta, dtype=float))
    t2 = tanh * tanh
    denom = 4.0 * t2 / p + 2.0 * sech2
    d1 = (p - 1) * 4.0 * tanh / denom
    # (C^2+S^2)(4S^2/p+2) - 8S^2C^2/p = 2(C^2+S^2) - 4S^2/p
    d2 = 2.0 * p * (p - 1) * sech2 * (2.0 * (1.0 + t2) - 4.0 * t2 / p) / denom**2
    return d1, d2


def risk_diff_exchangeable_closed_form(p: int, gamma: float, theta, n: int):
    """Closed-form exchangeable-model risk difference for pi_gamma = pi_J^{4 gamma + 1}."""
    d1, d2 = exchangeable_log_det_derivatives(p, theta)
    lap = 2.0 / (p * (p - 1)) * (gamma * d2 + (gamma**2 + 0.5 * gamma) * d1**2)
    out = -2.0 / n**2 * lap
    return float(out) if np.ndim(out) == 0 else out


def exchangeable_limit(p: int, gamma: float, n: int) -> float:
    """theta -> infinity limit: ``-(4/n^2) p (p-1) (gamma^2 + gamma/2)``."""
    return -4.0 / n**2 * p * (p - 1) * (gamma**2 + 0.5 * gamma)


def full_model_limit(fam: ModelFamily, theta0, t: float, n: int, r: float) -> float:
    """Large-ray expression ``-(2/n^2) (1/4)((t+1/2)^2 - 1/4) G' g^-1 G`` at theta = r theta0.

    The Hessian term of log f is dropped, which is exact only as r -> infinity.
    """
    theta = r * np.asarray(theta0, dtype=float)
    _, grad, _ = log_det_g_beta_derivatives(fam, theta)
    ginv = np.linalg.inv(g_theta(fam))
    return -2.0 / n**2 * 0.25 * ((t + 0.5) ** 2 - 0.25) * float(grad @ ginv @ grad)


def best_exponent(values: Iterable[float], risk) -> tuple[float, np.ndarray]:
    """Grid maximizer of ``risk(v)`` over ``values``; returns (argmax, all risks)."""
    values = np.asarray(list(values), dtype=float)
    risks = np.array([risk(v) for v in values])
    return float(values[int(np.argmax(risks))]), risks


def theta_grid(lo: float, hi: float, count: int) -> np.ndarray:
    if count < 1:
        raise ValueError("grid count must be >= 1")
    return np.linspace(lo, hi, int(count))


def standard_risk_curves(p_list=STANDARD_P, gamma_list=STANDARD_GAMMA, n: int = STANDARD_N, grid=None) -> list[RiskCurvePoint]:
    """Exchangeable-model risk-difference curves over a theta grid."""
    grid = theta_grid(*STANDARD_GRID) if grid is None else np.asarray(grid, dtype=float)
    if not len(p_list) or not len(gamma_list) or grid.size == 0:
        raise ValueError("p_list, gamma_list and theta grid must be nonempty")
    rows = []
    for p in p_list:
        make_family("exchangeable", p)  # validates p
        for gamma in gamma_list:
            vals = risk_diff_exchangeable_closed_form(p, gamma, grid, n)
            rows.extend(
                RiskCurvePoint("exchangeable", int(p), int(n), float(gamma), float(th), float(v))
                for th, v in zip(grid, np.atleast_1d(vals))
            )
    return rows


def risk_curve_full(fam: ModelFamily, prior: PriorSpec, n: int, points) -> list[RiskCurvePoint]:
    return [
        RiskCurvePoint(fam.name, fam.p, int(n), prior.gamma, tuple(np.atleast_1d(x)), asymptotic_risk_diff(fam, prior, x, n))
        for x in points
    ]


def format_theta(theta) -> str:
    if isinstance(theta, (tuple, list, np.ndarray)):
        return ";".join(repr(float(v)) for v in theta)
    return repr(float(theta))


def write_risk_csv(rows: Iterable[RiskCurvePoint], fh, header_lines: Iterable[str] = ()) -> None:
    for line in header_lines:
        fh.write(f"# {line}\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([r.model, r.p, r.n, repr(r.gamma), format_theta(r.theta), repr(r.risk_diff)])
