import numpy as np
import pytest
from scipy.special import logsumexp

from circcorr.circulant import CovarianceFactorization, ModelError, ScaleVector, log_density
from circcorr.families import eval_spectrum, make_family
from circcorr.montecarlo import (
    ExperimentConfig,
    McmcSettings,
    PosteriorDraws,
    compare_priors,
    config_from_mapping,
    estimate_kl_risk,
    parse_config_text,
    predictive_log_density,
    run_posterior_mcmc,
    sample_dataset,
    split_rhat,
)
from circcorr.priors import PriorSpec

QUICK = McmcSettings(chain_length=1200, burn_in=400, thin=4)


def _truth(fam, theta, beta):
    return CovarianceFactorization(ScaleVector(beta), eval_spectrum(fam, theta))


def test_sample_dataset_covariance():
    fam = make_family("full", 4)
    f = _truth(fam, [0.4, -0.3], [0.1, 0.0, -0.2, 0.3])
    x = sample_dataset(f, 200_000, np.random.default_rng(0))
    assert np.allclose(np.cov(x.T, bias=True), f.sigma(), atol=0.02)


def test_split_rhat_detects_drift():
    rng = np.random.default_rng(0)
    assert split_rhat(rng.normal(size=(2000, 2))) < 1.01
    drifting = rng.normal(size=(2000, 1)) + np.linspace(0, 5, 2000)[:, None]
    assert split_rhat(drifting) > 1.5


def test_posterior_concentrates_near_truth():
    fam = make_family("exchangeable", 3)
    f = _truth(fam, [0.3], [0.5, -0.2, 0.1])
    data = sample_dataset(f, 4000, np.random.default_rng(1))
    draws = run_posterior_mcmc(PriorSpec.uniform(), fam, data, McmcSettings(3000, 1000, 2), np.random.default_rng(2))
    assert 0.15 <= draws.acceptance_rate <= 0.5
    assert draws.rhat < 1.1
    assert abs(draws.theta.mean() - 0.3) < 0.05
    assert np.allclose(draws.beta.mean(axis=0), [0.5, -0.2, 0.1], atol=0.05)


def test_mcmc_rejects_wrong_data_shape():
    with pytest.raises(ModelError):
        run_posterior_mcmc(PriorSpec.uniform(), make_family("full", 4), np.zeros((10, 3)), QUICK, np.random.default_rng())


def test_predictive_density_single_draw_is_plug_in():
    fam = make_family("full", 5)
    theta, beta = np.array([0.2, -0.1]), np.linspace(-0.2, 0.2, 5)
    draws = PosteriorDraws(fam, theta[None], beta[None], 1.0, 1.0)
    y = np.random.default_rng(0).normal(size=(4, 5))
    assert np.allclose(predictive_log_density(y, draws), log_density(y, _truth(fam, theta, beta)), rtol=1e-12)


def test_predictive_density_weighted_mixture():
    fam = make_family("exchangeable", 2)
    rng = np.random.default_rng(3)
    th, be = rng.normal(scale=0.3, size=(5, 1)), rng.normal(scale=0.3, size=(5, 2))
    draws = PosteriorDraws(fam, th, be, 1.0, 1.0)
    y = rng.normal(size=2)
    lw = rng.normal(size=5)
    comps = [log_density(y, _truth(fam, t, b)) for t, b in zip(th, be)]
    ref = logsumexp(np.array(comps) + lw - logsumexp(lw))
    assert predictive_log_density(y, draws, lw) == pytest.approx(ref, rel=1e-12)


def test_oracle_mode_has_zero_risk():
    fam = make_family("exchangeable", 2)
    cfg = ExperimentConfig(fam, [0.5], [0.0, 0.0], reps=3, kl_eval_draws=50, workers=1)
    est = estimate_kl_risk(cfg, None)
    assert est.label == "oracle"
    assert est.mean_kl == pytest.approx(0.0, abs=1e-12)


def test_compare_priors_reproducible_and_paired():
    fam = make_family("exchangeable", 2)
    cfg = ExperimentConfig(fam, [0.0], [0.0, 0.0], n=30, reps=4, mcmc=QUICK, kl_eval_draws=100, seed=5, workers=1)
    a = compare_priors(cfg, [PriorSpec.jeffreys(), PriorSpec.uniform()])
    b = compare_priors(cfg, [PriorSpec.jeffreys(), PriorSpec.uniform()])
    assert np.array_equal(a.estimates[0].per_rep, b.estimates[0].per_rep)
    assert a.diff_mean[0] == 0.0
    per_rep = a.estimates[0].per_rep - a.estimates[1].per_rep
    assert a.diff_mean[1] == pytest.approx(per_rep.mean())
    assert all(e.mean_kl > 0 for e in a.estimates)


def test_compare_priors_needs_two():
    cfg = ExperimentConfig(make_family("exchangeable", 2), [0.0], [0.0, 0.0], reps=1)
    with pytest.raises(ValueError):
        compare_priors(cfg, [PriorSpec.uniform()])


def test_config_validation():
    fam = make_family("full", 4)
    with pytest.raises(ModelError):
        ExperimentConfig(fam, [0.0], np.zeros(4))
    with pytest.raises(ModelError):
        ExperimentConfig(fam, [0.0, 0.0], np.zeros(3))
    with pytest.raises(ValueError):
        ExperimentConfig(fam, [0.0, 0.0], np.zeros(4), reps=0)
    with pytest.raises(ValueError):
        McmcSettings(chain_length=100, burn_in=100)


def test_config_text_parsing():
    text = """
    # small run
    model = full
    p = 4
    theta = 0.5, -0.25
    reps = 10
    burn-in = 200
    chain_length = 800
    """
    cfg = config_from_mapping(parse_config_text(text))
    assert cfg.family.p == 4 and cfg.family.name == "full"
    assert np.array_equal(cfg.true_theta, [0.5, -0.25])
    assert cfg.mcmc.burn_in == 200
    assert cfg.reps == 10
    with pytest.raises(ValueError, match="unknown key"):
        parse_config_text("temperature = 3")
    with pytest.raises(ValueError, match="key=value"):
        parse_config_text("reps 3")


def test_single_observation_runs_with_warning(caplog):
    fam = make_family("exchangeable", 3)
    data = np.array([[0.3, -1.2, 0.8]])
    with caplog.at_level("WARNING"):
        draws = run_posterior_mcmc(PriorSpec.jeffreys(), fam, data, QUICK, np.random.default_rng(0))
    assert "improper" in caplog.text
    assert np.all(np.isfinite(draws.theta)) and np.all(np.isfinite(draws.beta))
    assert draws.beta.std(axis=0).min() > 0.1
