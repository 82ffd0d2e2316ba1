"""Finite-sample KL risk of Bayesian predictive densities, estimated by simulation.

Each replication draws a dataset from the true model, samples the posterior by
random-walk Metropolis in (theta, beta), and estimates the KL divergence from
the true density to the posterior-mixture predictive density with fresh draws
of y. Replications use counter-derived RNG streams ``(seed, rep)``, so results
do not depend on worker count or scheduling.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from . import kernels
from .circulant import CovarianceFactorization, ModelError, ScaleVector, log_density
from .families import ModelFamily, eval_spectrum, make_family
from .fisher import g_theta, log_det_g_beta_batch
from .priors import PriorSpec

log = logging.getLogger(__name__)

TARGET_ACCEPT = 0.3
RESULT_COLUMNS = ("prior", "c", "p", "n", "theta0", "reps", "mean_kl", "se", "accept_rate", "excluded")


@dataclass(frozen=True)
class McmcSettings:
    chain_length: int = 6000
    burn_in: int = 1000
    thin: int = 5
    step_theta: float | None = None  # initial proposal sd; None derives it from the Fisher metric
    step_beta: float | None = None
    adapt_window: int = 100

    def __post_init__(self):
        if min(self.chain_length, self.thin, self.adapt_window) < 1 or self.burn_in < 0:
            raise ValueError("MCMC counts must be positive")
        if self.chain_length <= self.burn_in:
            raise ValueError("chain_length must exceed burn_in")


@dataclass(frozen=True)
class ExperimentConfig:
    family: ModelFamily
    true_theta: np.ndarray
    true_beta: np.ndarray
    n: int = 100
    reps: int = 2000
    mcmc: McmcSettings = field(default_factory=McmcSettings)
    kl_eval_draws: int = 2000
    seed: int = 0
    max_rhat: float = 1.1
    workers: int | None = None

    def __post_init__(self):
        theta = self.family.check_theta(self.true_theta)
        beta = np.atleast_1d(np.asarray(self.true_beta, dtype=float))
        if beta.shape != (self.family.p,):
            raise ModelError(f"true_beta must have length {self.family.p}")
        if min(self.n, self.reps, self.kl_eval_draws) < 1:
            raise ValueError("n, reps and kl_eval_draws must be positive")
        object.__setattr__(self, "true_theta", theta)
        object.__setattr__(self, "true_beta", beta)

    @property
    def truth(self) -> CovarianceFactorization:
        return CovarianceFactorization(ScaleVector(self.true_beta), eval_spectrum(self.family, self.true_theta))


@dataclass
class PosteriorDraws:
    family: ModelFamily
    theta: np.ndarray  # (M, d)
    beta: np.ndarray  # (M, p)
    acceptance_rate: float
    rhat: float

    def __len__(self):
        return self.theta.shape[0]


@dataclass
class RiskEstimate:
    prior: PriorSpec | None  # None for the true-parameter plug-in
    mean_kl: float
    std_error: float
    reps_used: int
    excluded: int
    acceptance_rate: float
    max_rhat: float
    per_rep: np.ndarray = field(repr=False)

    @property
    def label(self) -> str:
        return "oracle" if self.prior is None else self.prior.label


@dataclass
class PairedComparison:
    """Risks of several priors on common datasets, and differences ``risk[0] - risk[j]``."""

    estimates: list[RiskEstimate]
    diff_mean: np.ndarray
    diff_se: np.ndarray


def sample_dataset(f: CovarianceFactorization, n: int, rng: np.random.Generator) -> np.ndarray:
    """n i.i.d. rows from N_p(0, Sigma)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    chol = np.linalg.cholesky(f.sigma())
    return rng.standard_normal((n, f.dim)) @ chol.T


def cos_table(p: int) -> np.ndarray:
    k = np.outer(np.arange(p), np.arange(p)) % p
    return np.cos(2 * np.pi * k / p)


def split_rhat(chain: np.ndarray) -> float:
    """Max over coordinates of the split-chain potential scale reduction."""
    n = chain.shape[0] // 2
    if n < 2:
        return float("nan")
    halves = np.stack([chain[:n], chain[n : 2 * n]])  # (2, n, dim)
    means = halves.mean(axis=1)
    w = halves.var(axis=1, ddof=1).mean(axis=0)
    b = n * means.var(axis=0, ddof=1)
    var_plus = (n - 1) / n * w + b / n
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.sqrt(np.where(w > 0, var_plus / w, 1.0))
    return float(np.max(r))


def _initial_proposal(fam: ModelFamily, n: int, settings: McmcSettings) -> np.ndarray:
    dim = fam.d + fam.p
    base = 2.38**2 / dim / n
    cov = np.zeros((dim, dim))
    if settings.step_theta is None:
        cov[: fam.d, : fam.d] = base * np.linalg.inv(g_theta(fam))
    else:
        cov[: fam.d, : fam.d] = settings.step_theta**2 * np.eye(fam.d)
    # g_beta = 2I at theta = 0
    cov[fam.d :, fam.d :] = (base * 0.5 if settings.step_beta is None else settings.step_beta**2) * np.eye(fam.p)
    return cov


def run_posterior_mcmc(
    prior: PriorSpec, fam: ModelFamily, data: np.ndarray, settings: McmcSettings, rng: np.random.Generator
) -> PosteriorDraws:
    """Random-walk Metropolis on the joint (theta, beta) posterior.

    The proposal covariance is adapted during burn-in (scale by acceptance
    rate, shape by the empirical covariance of the first half of burn-in) and
    frozen afterwards.
    """
    data = np.atleast_2d(np.asarray(data, dtype=float))
    n, p = data.shape
    if n < 1 or p != fam.p:
        raise ModelError(f"data must be (n >= 1, {fam.p}); got {data.shape}")
    if n < p + 1:
        log.warning("n=%d < p+1=%d: posterior under an improper prior may be improper", n, p + 1)
    scat = data.T @ data
    costab = cos_table(p)
    args = (fam.C, costab, scat, float(n), float(prior.c))
    dim = fam.d + p

    rms = np.sqrt(np.mean(data**2, axis=0))
    x = np.concatenate([np.zeros(fam.d), np.log(np.maximum(rms, 1e-300))])
    lp = kernels.log_posterior(x, *args)
    if not np.isfinite(lp):
        raise ModelError("non-finite log posterior at the initial point")

    shape = _initial_proposal(fam, n, settings)
    log_scale = 0.0
    window = settings.adapt_window
    history = []
    done = 0
    while done < settings.burn_in:
        steps = min(window, settings.burn_in - done)
        chol = np.exp(0.5 * log_scale) * np.linalg.cholesky(shape)
        chain, lps, acc = kernels.rwm_run(
            x, lp, chol, rng.standard_normal((steps, dim)), rng.random(steps), *args
        )
        x, lp = chain[-1].copy(), lps[-1]
        history.append(chain)
        done += steps
        log_scale += 2.0 * (acc / steps - TARGET_ACCEPT)
        if len(history) == max(4, (settings.burn_in // window) // 2):
            # covariance of the later part of the first half; the start is transient
            emp = np.cov(np.concatenate(history[len(history) // 2 :]).T)
            if np.all(np.isfinite(emp)) and np.linalg.eigvalsh(emp).min() > 0:
                shape = 2.38**2 / dim * emp
                log_scale = 0.0

    nmain = settings.chain_length - settings.burn_in
    chol = np.exp(0.5 * log_scale) * np.linalg.cholesky(shape)
    chain, _, acc = kernels.rwm_run(x, lp, chol, rng.standard_normal((nmain, dim)), rng.random(nmain), *args)
    kept = chain[settings.thin - 1 :: settings.thin]
    return PosteriorDraws(fam, kept[:, : fam.d].copy(), kept[:, fam.d :].copy(), acc / nmain, split_rhat(chain))


def loglik_matrix(Y: np.ndarray, draws: PosteriorDraws) -> np.ndarray:
    """``out[m, i] = log p(Y[i]; theta_m, beta_m)``."""
    return kernels.loglik_matrix(np.atleast_2d(Y), draws.theta, draws.beta, draws.family.C, cos_table(draws.family.p))


def _normalize(log_weights, m):
    if log_weights is None:
        return np.full(m, -np.log(m))
    lw = np.asarray(log_weights, dtype=float)
    return lw - logsumexp(lw)


def predictive_log_density(y, draws: PosteriorDraws, log_weights=None):
    """log of the (optionally weighted) posterior mixture of Gaussian densities at y."""
    if len(draws) == 0:
        raise ValueError("no posterior draws")
    y = np.asarray(y, dtype=float)
    fam = draws.family
    lw = _normalize(log_weights, len(draws))
    out = kernels.mixture_logpdf(np.atleast_2d(y), draws.theta, draws.beta, fam.C, cos_table(fam.p), lw)[0]
    return float(out[0]) if y.ndim == 1 else out


def _streams(seed: int, rep: int):
    data_ss, mcmc_ss, y_ss = np.random.SeedSequence(seed, spawn_key=(rep,)).spawn(3)
    return np.random.default_rng(data_ss), np.random.default_rng(mcmc_ss), np.random.default_rng(y_ss)


def _replicate(cfg: ExperimentConfig, rep: int, priors: tuple, sampling_c: float | None):
    """One dataset; returns (kl per prior, acceptance, rhat).

    With ``sampling_c`` set, one chain targets pi_J^sampling_c and every prior
    is reached by importance weights |g_beta|^{(c - sampling_c)/2}; otherwise
    the single prior is sampled directly. ``priors == ()`` is plug-in mode.
    """
    rng_data, rng_mcmc, rng_y = _streams(cfg.seed, rep)
    truth = cfg.truth
    data = sample_dataset(truth, cfg.n, rng_data)
    Y = sample_dataset(truth, cfg.kl_eval_draws, rng_y)
    true_ll = log_density(Y, truth)
    fam = cfg.family
    if not priors:
        draws = PosteriorDraws(fam, cfg.true_theta[None, :], cfg.true_beta[None, :], 1.0, 1.0)
        return np.array([np.mean(true_ll - predictive_log_density(Y, draws))]), 1.0, 1.0
    c_chain = priors[0].c if sampling_c is None else sampling_c
    draws = run_posterior_mcmc(PriorSpec(c_chain), fam, data, cfg.mcmc, rng_mcmc)
    logdet = np.zeros(len(draws)) if sampling_c is None else log_det_g_beta_batch(fam, draws.theta)
    lw = np.stack([_normalize(0.5 * (pr.c - c_chain) * logdet, len(draws)) for pr in priors])
    pred = kernels.mixture_logpdf(Y, draws.theta, draws.beta, fam.C, cos_table(fam.p), lw)
    kl = np.mean(true_ll[None, :] - pred, axis=1)
    return kl, draws.acceptance_rate, draws.rhat


def _worker_count(cfg: ExperimentConfig) -> int:
    if cfg.workers is not None:
        return max(1, cfg.workers)
    env = os.environ.get("CIRC_THREADS")
    ncpu = os.cpu_count() or 1
    return max(1, min(int(env), ncpu)) if env else ncpu


def _run_all(cfg: ExperimentConfig, priors: tuple, sampling_c):
    reps = range(cfg.reps)
    workers = min(_worker_count(cfg), cfg.reps)
    if workers == 1:
        results = [_replicate(cfg, r, priors, sampling_c) for r in reps]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(
                ex.map(_replicate, [cfg] * cfg.reps, reps, [priors] * cfg.reps, [sampling_c] * cfg.reps,
                       chunksize=max(1, cfg.reps // (4 * workers)))
            )
    kl = np.array([r[0] for r in results])
    acc = np.array([r[1] for r in results])
    rhat = np.array([r[2] for r in results])
    ok = ~(rhat > cfg.max_rhat)
    excluded = int((~ok).sum())
    if excluded:
        log.warning("%d of %d replications excluded (split R-hat > %.2f)", excluded, cfg.reps, cfg.max_rhat)
    return kl[ok], acc[ok], rhat[ok], excluded


def _summary(prior, kl, acc, rhat, excluded) -> RiskEstimate:
    m = kl.size
    se = float(kl.std(ddof=1) / np.sqrt(m)) if m > 1 else float("nan")
    return RiskEstimate(
        prior, float(kl.mean()), se, m, excluded,
        float(acc.mean()) if m else float("nan"), float(rhat.max()) if m else float("nan"), kl,
    )


def estimate_kl_risk(cfg: ExperimentConfig, prior: PriorSpec | None) -> RiskEstimate:
    """KL risk of the predictive density under ``prior``; ``None`` gives the true-parameter plug-in."""
    priors = () if prior is None else (prior,)
    kl, acc, rhat, excluded = _run_all(cfg, priors, None)
    return _summary(prior, kl[:, 0], acc, rhat, excluded)


def compare_priors(cfg: ExperimentConfig, priors) -> PairedComparison:
    """Paired risks of several priors on identical datasets, y-draws and MCMC chains.

    The chain targets the prior with the mean exponent; each prior's predictive
    density uses importance weights on that chain, so prior-to-prior
    differences carry no independent MCMC noise.
    """
    priors = tuple(priors)
    if len(priors) < 2:
        raise ValueError("need at least two priors to compare")
    sampling_c = float(np.mean([p.c for p in priors]))
    kl, acc, rhat, excluded = _run_all(cfg, priors, sampling_c)
    estimates = [_summary(pr, kl[:, j], acc, rhat, excluded) for j, pr in enumerate(priors)]
    diffs = kl[:, :1] - kl
    m = diffs.shape[0]
    se = diffs.std(axis=0, ddof=1) / np.sqrt(m) if m > 1 else np.full(len(priors), np.nan)
    return PairedComparison(estimates, diffs.mean(axis=0), se)


# --- configuration files -------------------------------------------------

_INT_KEYS = {"p", "n", "reps", "chain_length", "burn_in", "thin", "kl_eval_draws", "seed", "adapt_window", "workers"}
_FLOAT_KEYS = {"step_theta", "step_beta", "max_rhat"}
_VECTOR_KEYS = {"theta", "beta"}
_STR_KEYS = {"model", "priors"}
CONFIG_KEYS = _INT_KEYS | _FLOAT_KEYS | _VECTOR_KEYS | _STR_KEYS


def parse_config_text(text: str) -> dict:
    """Flat ``key=value`` config with ``#`` comments."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in CONFIG_KEYS:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        if key in _INT_KEYS:
            out[key] = int(value)
        elif key in _FLOAT_KEYS:
            out[key] = float(value)
        elif key in _VECTOR_KEYS:
            out[key] = np.array([float(v) for v in value.split(",")])
        else:
            out[key] = value
    return out


def config_from_mapping(m: dict) -> ExperimentConfig:
    fam = make_family(m.get("model", "exchangeable"), m.get("p", 2))
    theta = m.get("theta", np.zeros(fam.d))
    beta = m.get("beta", np.zeros(fam.p))
    mcmc_keys = {k: m[k] for k in ("chain_length", "burn_in", "thin", "step_theta", "step_beta", "adapt_window") if k in m}
    base = ExperimentConfig(fam, theta, beta)
    return replace(
        base,
        mcmc=replace(McmcSettings(), **mcmc_keys),
        **{k: m[k] for k in ("n", "reps", "kl_eval_draws", "seed", "max_rhat", "workers") if k in m},
    )
