import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from circcorr.circulant import ModelError
from circcorr.families import eval_spectrum, make_family
from circcorr.fisher import log_det_g_beta
from circcorr.priors import (
    PriorSpec,
    check_superharmonic,
    f_inv_laplacian_power,
    laplace_beltrami_theta,
    log_prior,
    ratio_exponent,
)


@given(st.floats(-3, 3, allow_nan=False))
def test_exponent_conventions_round_trip(c):
    prior = PriorSpec(c)
    assert PriorSpec.from_t(prior.t).c == pytest.approx(c)
    assert PriorSpec.from_gamma(prior.gamma).c == pytest.approx(c)
    assert PriorSpec.from_a(prior.a).c == pytest.approx(c)


def test_named_priors():
    assert PriorSpec.jeffreys().kind == "jeffreys"
    assert PriorSpec.uniform().gamma == -0.25
    assert PriorSpec.uniform().t == -0.5
    assert PriorSpec(0.5).label == "jeffreys^0.5"


def test_log_prior_ignores_beta_and_scales_with_c():
    fam = make_family("full", 5)
    theta = np.array([0.3, -0.7])
    base = log_det_g_beta(eval_spectrum(fam, theta))
    assert log_prior(PriorSpec(2.0), fam, theta) == pytest.approx(base)
    assert log_prior(PriorSpec(2.0), fam, theta, beta=np.arange(5.0)) == log_prior(PriorSpec(2.0), fam, theta)
    assert log_prior(PriorSpec.uniform(), fam, theta) == 0.0
    with pytest.raises(ModelError):
        log_prior(PriorSpec.uniform(), fam, [0.1])


def test_ratio_exponent():
    pj, ps = PriorSpec.jeffreys(), PriorSpec.uniform()
    assert ratio_exponent(ps, pj, sqrt=False) == -0.5
    assert ratio_exponent(ps, pj, sqrt=True) == -0.25


@pytest.mark.parametrize("p", [2, 3, 7])
@pytest.mark.parametrize("e", [-0.5, -0.25, 0.3])
def test_exchangeable_laplacian_at_origin(p, e):
    # gradient of log|g| vanishes at 0 and its second derivative equals 2 g_thetatheta
    assert f_inv_laplacian_power(make_family("exchangeable", p), [0.0], e) == pytest.approx(2 * e, rel=1e-12)


@pytest.mark.parametrize("kind,p,theta", [("exchangeable", 3, [0.8]), ("full", 4, [0.5, -0.2]), ("full", 7, [0.1, 0.4, -0.3])])
def test_generic_laplacian_matches_analytic(kind, p, theta):
    fam = make_family(kind, p)
    e = -0.37
    generic = laplace_beltrami_theta(fam, lambda x: e * log_det_g_beta(eval_spectrum(fam, x)), theta)
    assert generic == pytest.approx(f_inv_laplacian_power(fam, theta, e), rel=1e-5, abs=1e-8)


def test_laplacian_of_constant_is_zero():
    fam = make_family("full", 5)
    assert laplace_beltrami_theta(fam, lambda x: 0.0, [0.2, 0.1]) == 0.0


def test_superharmonic_report_full_model():
    fam = make_family("full", 5)
    grid = np.random.default_rng(0).uniform(-3, 3, (30, fam.d))
    rep = check_superharmonic(fam, PriorSpec.uniform(), PriorSpec.jeffreys(), grid, sqrt=False)
    assert rep.superharmonic
    assert rep.exponent == -0.5
    assert rep.violations.shape == (0, fam.d)


@settings(max_examples=25, deadline=None)
@given(p=st.integers(2, 8), seed=st.integers(0, 2**32 - 1))
def test_uniform_over_jeffreys_is_superharmonic(p, seed):
    fam = make_family("full", p)
    theta = np.random.default_rng(seed).uniform(-4, 4, fam.d)
    assert f_inv_laplacian_power(fam, theta, -0.5) < 0


def test_positive_exponent_is_not_superharmonic():
    fam = make_family("exchangeable", 3)
    rep = check_superharmonic(fam, PriorSpec(2.0), PriorSpec.jeffreys(), np.linspace(-2, 2, 9))
    assert not rep.superharmonic
    assert rep.max_value > 0


def test_empty_grid_rejected():
    with pytest.raises(ValueError):
        check_superharmonic(make_family("full", 4), PriorSpec.uniform(), PriorSpec.jeffreys(), np.empty((0, 2)))
